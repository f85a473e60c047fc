"""Acceptance checks shared by the CLI (``--check``) and the test-suite.

Every check returns a :class:`CheckResult`; ``detail`` holds the numbers behind the
verdict so that a failure can be read without re-running anything.
"""
from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .control import ControlSchedule, fourier_data, is_effective
from .generators import (bb_dephasing_rate, channel_rates, coarse_grained_lindbladian,
                         commutative_generator, finite_eps_generator, iso_dephasing_rate,
                         oscillator_generators, to_coarse, white_noise_generator)
from .linalg import (ad, group_eigenvalues, is_completely_positive, spin_operators,
                     superop_exp, superop_spectrum, vec)
from .montecarlo import SimConfig, compare, evolve_generator, fit_decay_rate, run_ensemble
from .noise import NoiseModel, factor_kernel, gamma_of_t, spectral_density


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  ({self.seconds:.1f}s)"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "seconds": self.seconds,
                "detail": _plain(self.detail)}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _timed(name):
    def wrap(fn):
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            passed, detail = fn(*args, **kwargs)
            return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


# closed forms for the spin super-operator spectra

def closed_form_spectra(spin) -> dict[str, Counter]:
    """Eigenvalue multisets of ``ad(Sz)``, ``sum_xyz ad(S)^2`` and ``sum_xy ad(S)^2``.

    The operator space of spin ``S`` splits into ranks ``l = 0..2S``; ``sum_xyz ad^2``
    is ``l(l+1)`` there and ``ad(Sz)`` acts as ``m = -l..l``.
    """
    two_s = int(Fraction(spin) * 2)
    adz, cas, planar = Counter(), Counter(), Counter()
    for k in range(-two_s, two_s + 1):
        adz[k] += two_s + 1 - abs(k)
    for l in range(two_s + 1):
        cas[l * (l + 1)] += 2 * l + 1
        for m in range(-l, l + 1):
            planar[l * (l + 1) - m * m] += 1
    return {"ad_z": adz, "sum_xyz": cas, "sum_xy": planar}


def computed_spectra(spin) -> dict[str, list]:
    sx, sy, sz = (ad(s) for s in spin_operators(spin))
    ops = {"ad_z": sz, "sum_xyz": sx @ sx + sy @ sy + sz @ sz, "sum_xy": sx @ sx + sy @ sy}
    return {k: group_eigenvalues(superop_spectrum(v), tol=1e-6) for k, v in ops.items()}


@_timed("1 spin super-operator spectra")
def check_spectra(spins=(0.5, 1, 1.5)):
    detail = {}
    ok = True
    for spin in spins:
        expected = closed_form_spectra(spin)
        got = computed_spectra(spin)
        for key, groups in got.items():
            err = max(abs(v.imag) + min(abs(v.real - e) for e in expected[key]) for v, _ in groups)
            mult = Counter()
            for v, m in groups:
                mult[min(expected[key], key=lambda e: abs(v.real - e))] += m
            good = err < 1e-9 and mult == expected[key]
            ok &= good
            detail[f"S={spin} {key}"] = {"max_error": err, "multiplicities_match": mult == expected[key]}
    return ok, detail


@_timed("2 bang-bang rate closure and decay")
def check_bb_rates():
    c = 0.7
    white = NoiseModel("white", sigma=np.sqrt(c))
    closure = [bb_dephasing_rate(white, w, n_max=10**6).value for w in (0.3, 1.0, 5.0)]
    lorentz = NoiseModel("ou", sigma=np.sqrt(0.5), tau=1.0)  # J~ = 1/(1 + w^2)
    grid = np.linspace(0.5, 8.0, 151)
    rates = np.array([bb_dephasing_rate(lorentz, w).value for w in grid])
    j0 = spectral_density(lorentz, 0.0)
    closure_err = max(abs(r - c) for r in closure)
    decreasing = bool(np.all(np.diff(rates) < 0))
    ok = closure_err < 1e-6 and decreasing and rates[-1] < 0.05 * j0
    return ok, {"closure_error": closure_err, "strictly_decreasing": decreasing,
                "gamma_b(8)/J(0)": rates[-1] / j0}


@_timed("3 twelve-pulse rate vs direct construction")
def check_iso12(omegas=(1.0, 2.0, 4.0), n_max=400):
    ops = spin_operators(0.5)
    model = NoiseModel("ou", sigma=np.sqrt(0.5), tau=1.0, channels=3)
    detail = {}
    ok = True
    for w in omegas:
        ref = iso_dephasing_rate(model, w, n_max=n_max).value
        fd = fourier_data(ControlSchedule.iso12(w, 0.5), ops, n_harmonics=n_max)
        parts = coarse_grained_lindbladian(fd, model)
        rates = channel_rates(parts, ops)
        A = [ad(s) for s in ops]
        iso = -0.5 * rates.mean() * (A[0] @ A[0] + A[1] @ A[1] + A[2] @ A[2])
        rel = float(np.max(np.abs(rates - ref)) / ref)
        spread = float(np.ptp(rates))
        ham = parts.hamiltonian_part.norm()
        resid = (parts.total - iso).norm()
        good = rel < 1e-6 and spread < 1e-9 and ham < 1e-9 and resid < 1e-9
        ok &= good
        detail[f"omega_tau={w}"] = {"rate": ref, "relative_error": rel, "rate_spread": spread,
                                    "hamiltonian_norm": ham, "isotropy_residual": resid}
    return ok, detail


def gamma_closed_form(t):
    """``gamma(t)`` for ``J(t) = exp(-|t|) cos 4t``."""
    t = np.asarray(t, dtype=float)
    return 2 / 17 * (1 + np.exp(-t) * (4 * np.sin(4 * t) - np.cos(4 * t)))


@_timed("4 gamma(t) sign structure and complete positivity")
def check_gamma_t():
    model = NoiseModel("damped-cosine", sigma=1.0, tau=1.0, omega0=4.0)
    t = np.linspace(0.0, 3.0, 301)
    quad_vals = np.array([gamma_of_t(model, x) for x in t])
    err = float(np.max(np.abs(quad_vals - gamma_closed_form(t))))
    k = int(np.argmin(quad_vals))
    sz = spin_operators(0.5)[2]
    short = superop_exp(commutative_generator(model, sz, t[k]), 1.0)
    limit = -0.5 * spectral_density(model, 0.0) * (ad(sz) @ ad(sz))
    long_cp = all(is_completely_positive(superop_exp(limit, s)) for s in (0.1, 1.0, 10.0))
    short_cp = is_completely_positive(short)
    ok = err < 1e-8 and quad_vals[k] < 0 and 0 < t[k] < 3 and not short_cp and long_cp
    return ok, {"max_quadrature_error": err, "t_min": t[k], "gamma_min": quad_vals[k],
                "short_time_cp": short_cp, "limit_cp": long_cp}


def generator_catalogue() -> dict:
    """Lab-time generators from every regime on the example systems."""
    out = {}
    X, Y, Z = spin_operators(0.5)
    ou = NoiseModel("ou", sigma=1.0, tau=1.0)
    ou3 = NoiseModel("ou", sigma=1.0, tau=1.0, channels=3)
    dc = NoiseModel("damped-cosine", sigma=1.0, tau=1.0, omega0=4.0)
    grid = np.arange(0, 161) * 0.05
    box = NoiseModel("tabulated", tau=1.0, table=(grid, np.exp(-grid**2)))
    white = NoiseModel("white", sigma=0.5)
    w = np.pi / 2
    scheds = {
        "none": ControlSchedule.none(),
        "constant": ControlSchedule.constant(w * Z),
        "bangbang": ControlSchedule.bangbang_pi(w, 0.5),
        "iso12": ControlSchedule.iso12(w, 0.5),
    }
    noise_op = {"none": Z, "constant": X, "bangbang": Z, "iso12": Z}
    for name, sch in scheds.items():
        for nname, model in (("ou", ou), ("damped-cosine", dc), ("tabulated", box)):
            # tabulated support ends at its Nyquist frequency (2 pi / 0.1 here)
            fd = fourier_data(sch, [0.1 * noise_op[name]], 21 if nname == "tabulated" else 41)
            out[f"coarse-grained/{name}/{nname}"] = ("coarse-grained", coarse_grained_lindbladian(fd, model).total)
        for t in (0.0, 0.7, 2.9):
            out[f"white/{name}/t={t}"] = ("white", white_noise_generator(white, sch, [noise_op[name]], t).total)
        if name != "iso12":
            ker = factor_kernel(ou)
            out[f"finite-eps/{name}"] = ("finite-eps", finite_eps_generator(ou, sch, [0.1 * noise_op[name]], 0.3, ker).total)
    out["coarse-grained/iso12/isotropic"] = ("coarse-grained", coarse_grained_lindbladian(
        fourier_data(scheds["iso12"], [X, Y, Z]), ou3).total)
    out["coarse-grained/none/isotropic"] = ("coarse-grained", coarse_grained_lindbladian(
        fourier_data(scheds["none"], [X, Y, Z]), ou3).total)
    for t in (0.3, 1.2, 5.0):
        out[f"commutative/t={t}"] = ("commutative", commutative_generator(dc, Z, t))
    S1 = spin_operators(1)
    out["coarse-grained/iso12/spin1"] = ("coarse-grained", coarse_grained_lindbladian(
        fourier_data(ControlSchedule.iso12(w, 1), S1), ou3).total)
    for kind in ("linear", "frequency"):
        out[f"oscillator/{kind}"] = ("coarse-grained", oscillator_generators(kind, 10, ou, 1.0).total)
    return out


DEPOLARIZING = ("coarse-grained/iso12/isotropic", "coarse-grained/none/isotropic", "coarse-grained/iso12/spin1")


def acc_commutator() -> float:
    """``||[H-part, D-part]||`` of the constant-control qubit Lindbladian."""
    X, _, Z = spin_operators(0.5)
    parts = coarse_grained_lindbladian(fourier_data(ControlSchedule.constant(Z), [X]),
                                       NoiseModel("ou", tau=1.0))
    h, d = parts.hamiltonian_part.matrix, parts.dissipative_part.matrix
    return float(np.linalg.norm(h @ d - d @ h))


@_timed("5 structural invariants of all generators")
def check_structure():
    detail = {}
    ok = True
    for name, (regime, L) in generator_catalogue().items():
        d = L.dim
        one = vec(np.eye(d))
        scale = max(L.norm(), 1.0)
        unital = float(np.linalg.norm(L.matrix @ one)) / scale
        trace = float(np.linalg.norm(one.conj() @ L.matrix)) / scale
        entry = {"unitality": unital, "trace": trace}
        good = unital < 1e-10 and trace < 1e-10
        if regime in ("coarse-grained", "white") and d <= 3:
            cp = all(is_completely_positive(superop_exp(L, s)) for s in (0.1, 1.0, 10.0))
            entry["cp"] = cp
            good &= cp
        if name in DEPOLARIZING:
            zeros = sum(m for v, m in group_eigenvalues(superop_spectrum(L), 1e-8) if abs(v) < 1e-8)
            entry["zero_multiplicity"] = zeros
            good &= zeros == 1
        ok &= good
        detail[name] = entry
    comm = acc_commutator()
    detail["constant-control part commutator"] = comm
    return ok and comm < 1e-10, detail


# Monte-Carlo checks

MC_SETUP = {"eps": 0.15, "tau": 20.0, "dt": 1.0, "omega_c_tau": np.pi / 2, "n_traj": 500,
        "horizon": 2.0, "n_points": 9}


def mc_cases(omega_c: float) -> dict:
    X, _, Z = spin_operators(0.5)
    return {
        "none": (ControlSchedule.none(), Z),
        "constant": (ControlSchedule.constant(omega_c * Z), X),
        "bangbang": (ControlSchedule.bangbang_pi(omega_c, 0.5), Z),
    }


def mc_runs(seed: int = 0, n_traj: int | None = None, **overrides) -> dict:
    """Ensembles and coarse-grained predictions for the three controls."""
    p = {**MC_SETUP, **overrides}
    tau = p["tau"]
    noise = NoiseModel("ou", sigma=1.0, tau=tau)
    out = {}
    for name, (sched, op) in mc_cases(p["omega_c_tau"] / tau).items():
        cfg = SimConfig(noise=noise, control=sched, ops=(op,), eps=p["eps"], dt=p["dt"],
                        n_traj=n_traj or p["n_traj"], horizon=p["horizon"],
                        n_points=p["n_points"], seed=seed)
        ens = run_ensemble(cfg)
        parts = to_coarse(coarse_grained_lindbladian(fourier_data(sched, [cfg.g * op], 81), noise),
                          cfg.eps, tau)
        pred = evolve_generator(parts, cfg.rho0, ens.s)
        out[name] = (cfg, ens, pred, compare(ens, pred))
    return out


@_timed("6 Monte-Carlo vs coarse-grained Lindbladian")
def check_mc_vs_lindblad(seed: int = 0):
    runs = mc_runs(seed)
    detail = {}
    ok = True
    for name, (_, ens, _, rep) in runs.items():
        detail[name] = {"max_log_purity_z": rep["max_log_z"], "max_purity_gap": rep["max_gap"]}
        ok &= rep["max_log_z"] <= 3.0
    # fit window s <= 1 keeps |r| well above the MC noise floor
    r_none, se_none = fit_decay_rate(runs["none"][1], s_max=1.0)
    r_bb, se_bb = fit_decay_rate(runs["bangbang"][1], s_max=1.0)
    sep = (r_none - r_bb) / np.hypot(se_none, se_bb)
    detail["decay_rates"] = {"none": [r_none, se_none], "bangbang": [r_bb, se_bb], "separation_se": sep}
    return ok and sep > 3.0, detail


@_timed("7 white-noise exactness")
def check_white(seed: int = 0, n_traj: int = 2000):
    X, _, Z = spin_operators(0.5)
    white = NoiseModel("white", sigma=1.0)
    detail = {}
    ok = True
    cases = {"constant": (ControlSchedule.constant(1.0 * Z), X, 2 * np.pi),
             "bangbang": (ControlSchedule.bangbang_pi(0.2, 0.5), Z, 2 * np.pi / 0.2)}
    for name, (sched, op, period) in cases.items():
        cfg = SimConfig(noise=white, control=sched, ops=(op,), eps=0.3, dt=0.1, n_traj=n_traj,
                        horizon=2.0, n_points=9, seed=seed)
        ens = run_ensemble(cfg)
        h = cfg.g * op

        def gen(t, sched=sched, h=h):
            return white_noise_generator(white, sched, [h], t)

        pred = evolve_generator(gen, cfg.rho0, ens.t, step=cfg.dt, period=period)
        rep = compare(ens, pred)
        detail[name] = {"max_log_purity_z": rep["max_log_z"]}
        ok &= rep["max_log_z"] <= 3.0
    bb = cases["bangbang"][0]
    spectra = [np.sort_complex(superop_spectrum(white_noise_generator(white, bb, [Z], t).total))
               for t in np.linspace(0, bb.period, 13)]
    iso = float(max(np.max(np.abs(s - spectra[0])) for s in spectra))
    detail["bangbang_isospectral_error"] = iso
    return ok and iso < 1e-9, detail


EPS_SWEEP = (0.08, 0.15, 0.3)


def eps_sweep_gaps(control: str = "none", n_traj: int = 16000, seed: int = 0,
                   eps_values=EPS_SWEEP) -> np.ndarray:
    """Max purity gap between MC and the finite-eps generator on ``s in [0, 1]``."""
    tau = MC_SETUP["tau"]
    noise = NoiseModel("ou", sigma=1.0, tau=tau)
    wc = MC_SETUP["omega_c_tau"] / tau
    sched, op = mc_cases(wc)[control]
    period = 2 * np.pi / wc if control != "none" else None
    ker = factor_kernel(noise)
    gaps = []
    for eps in eps_values:
        cfg = SimConfig(noise=noise, control=sched, ops=(op,), eps=eps, dt=MC_SETUP["dt"], n_traj=n_traj,
                        horizon=1.0, n_points=11, seed=seed)
        ens = run_ensemble(cfg)
        h = cfg.g * op

        def gen(t, h=h):
            return finite_eps_generator(noise, sched, [h], t, kernel=ker)

        pred = evolve_generator(gen, cfg.rho0, ens.t, step=tau / 20, period=period)
        gaps.append(compare(ens, pred)["max_gap"])
    return np.array(gaps)


@_timed("8 finite-eps gap scales as eps^2")
def check_eps_scaling(n_traj: int = 16000, seed: int = 0, controls=("none", "constant")):
    detail = {}
    ok = True
    for control in controls:
        gaps = eps_sweep_gaps(control, n_traj, seed)
        slope = float(np.polyfit(np.log(EPS_SWEEP), np.log(gaps), 1)[0])
        detail[control] = {"gaps": gaps, "slope": slope}
        ok &= abs(slope - 2.0) <= 0.7
    return ok, detail


@_timed("9 effectiveness oracle")
def check_effectiveness(n_random: int = 20, seed: int = 0):
    X, Y, Z = spin_operators(0.5)
    expect_true = {
        "Sz noise, pi bang-bang": is_effective(ControlSchedule.bangbang_pi(1.0, 0.5), [Z])[0],
        "Sx noise, constant Sz": is_effective(ControlSchedule.constant(Z), [X])[0],
        "isotropic noise, iso12": is_effective(ControlSchedule.iso12(1.0, 0.5), [X, Y, Z])[0],
    }
    rng = np.random.default_rng(seed)
    rand = []
    for _ in range(n_random):
        n = rng.normal(size=3)
        hc = rng.uniform(0.1, 5.0) * (n[0] * X + n[1] * Y + n[2] * Z) / np.linalg.norm(n)
        rand.append(is_effective(ControlSchedule.constant(hc), [X, Y, Z])[0])
    ok = all(expect_true.values()) and not any(rand)
    return ok, {**expect_true, "isotropic noise, random constant controls": rand}


FAST_CHECKS = (check_spectra, check_bb_rates, check_iso12, check_gamma_t, check_structure,
               check_effectiveness)
MC_CHECKS = (check_mc_vs_lindblad, check_white, check_eps_scaling)


def run_all(include_slow: bool = True) -> list[CheckResult]:
    checks = FAST_CHECKS + (MC_CHECKS if include_slow else MC_CHECKS[:2])
    results = [c() for c in checks]
    return sorted(results, key=lambda r: int(r.name.split()[0]))
