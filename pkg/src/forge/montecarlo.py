"""Brute-force averaging of stochastic unitary trajectories.

Each trajectory integrates ``U_{k+1} = exp(-i H^I_xi(t_k + dt/2) dt) U_k`` with the
noise sampled at step midpoints. Per-trajectory random streams come from
``SeedSequence([master_seed, index])`` so the ensemble is independent of batching
and thread count; the reduction is a plain mean over a fixed trajectory order.

Statistics of the mean state (purity, Bloch norm) are nonlinear, so their errors
are leave-one-out jackknife estimates over trajectories, and the ``*_bc`` fields
carry the jackknife bias correction ``n theta - (n-1) mean(theta_i)``.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .control import ControlSchedule, interaction_hamiltonians
from .generators import LindbladParts, coarse_time, coupling_for_eps, lab_time
from .linalg import SuperOperator, density_matrix, hermitian, pauli, superop_exp, unvec, vec
from .noise import NoiseModel, factor_kernel, kernel_paths, ou_paths

REUNITARIZE_EVERY = 1000
BATCH = 500


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("FORGE_THREADS", "1")))
    except ValueError:
        return 1


def plus_state(dim: int = 2) -> np.ndarray:
    psi = np.ones(dim) / np.sqrt(dim)
    return np.outer(psi, psi.conj()).astype(complex)


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Monte-Carlo setup. ``ops`` are unit-strength noise operators; the coupling is
    fixed by ``eps`` (see :func:`forge.generators.coupling_for_eps`)."""

    noise: NoiseModel
    control: ControlSchedule
    ops: tuple
    eps: float = 0.15
    dt: float = 1.0
    n_traj: int = 500
    horizon: float = 2.0  # coarse time s
    n_points: int = 9
    seed: int = 0
    rho0: np.ndarray | None = None
    coupling: float | None = None  # override the eps-derived coupling
    times: tuple | None = None  # explicit lab-time record grid, replaces the s grid
    _ops: tuple = field(init=False, repr=False, default=())

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps out of (0,1)")
        if int(self.n_traj) < 1:
            raise ValueError("n_traj must be >= 1")
        if not self.dt > 0 or not self.horizon > 0 or self.n_points < 2:
            raise ValueError("dt, horizon must be positive and n_points >= 2")
        if self.noise.kind != "white" and self.noise.tau / self.dt < 10:
            raise ValueError(f"dt={self.dt} does not resolve tau={self.noise.tau} (tau/dt < 10)")
        if self.control.omega_c * self.dt > 0.3 + 1e-12:
            raise ValueError(f"omega_c*dt = {self.control.omega_c * self.dt:.3g} exceeds 0.3")
        ops = tuple(np.asarray(hermitian(h)) for h in self.ops)
        if len(ops) != self.noise.channels and self.noise.channels != 1:
            raise ValueError(f"{len(ops)} noise operators for {self.noise.channels} channels")
        d = ops[0].shape[0]
        rho0 = plus_state(d) if self.rho0 is None else self.rho0
        object.__setattr__(self, "rho0", density_matrix(rho0))
        object.__setattr__(self, "_ops", ops)

    @property
    def dim(self) -> int:
        return self._ops[0].shape[0]

    @property
    def g(self) -> float:
        if self.coupling is not None:
            return float(self.coupling)
        return coupling_for_eps(self.eps, self.noise, self._ops)

    @property
    def physical_ops(self) -> tuple:
        return tuple(self.g * h for h in self._ops)

    @property
    def tau(self) -> float:
        return self.noise.tau

    def s_grid(self) -> np.ndarray:
        if self.times is not None:
            return coarse_time(np.asarray(self.times, dtype=float), self.eps, self.tau)
        return np.linspace(0.0, self.horizon, self.n_points)

    def record_steps(self) -> np.ndarray:
        t = lab_time(self.s_grid(), self.eps, self.tau)
        steps = np.round(t / self.dt).astype(int)
        if np.any(np.diff(steps) < 0) or steps[0] < 0:
            raise ValueError("record times must be non-negative and non-decreasing")
        return steps


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    t: np.ndarray
    s: np.ndarray
    states: np.ndarray = field(repr=False)  # (n_traj, n_points, d, d)
    mean_rho: np.ndarray = field(init=False, repr=False)
    stats: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "mean_rho", self.states.mean(axis=0))
        object.__setattr__(self, "stats", _ensemble_stats(self.states))

    @property
    def n_traj(self) -> int:
        return self.states.shape[0]

    def __getattr__(self, name):
        stats = self.__dict__.get("stats")
        if stats is not None and name in stats:
            return stats[name]
        raise AttributeError(name)

    def to_csv(self, path) -> None:
        cols = ["s", "t", "purity", "purity_se", "bloch_lognorm", "bloch_se"]
        data = np.column_stack([self.s, self.t, self.purity, self.purity_se,
                                self.bloch_lognorm, self.bloch_se])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.12g")


def _jackknife(theta_full: np.ndarray, theta_loo: np.ndarray):
    n = theta_loo.shape[0]
    mean_loo = theta_loo.mean(axis=0)
    se = np.sqrt((n - 1) / n * np.sum((theta_loo - mean_loo) ** 2, axis=0))
    return se, n * theta_full - (n - 1) * mean_loo


def _ensemble_stats(states: np.ndarray) -> dict:
    n, _, d, _ = states.shape
    mean = states.mean(axis=0)
    pur = np.einsum("pij,pji->p", mean, mean).real
    out = {"purity": pur, "log_purity": np.log(pur)}
    if n > 1:
        # Tr(m_i^2) for the leave-one-out means m_i = (n M - rho_i)/(n-1)
        cross = np.einsum("pij,npji->np", mean, states).real
        self_ = np.einsum("npij,npji->np", states, states).real
        loo = (n * n * pur[None] - 2 * n * cross + self_) / (n - 1) ** 2
        se, bc = _jackknife(pur, loo)
        # The jackknife is first order; near a maximally mixed mean the quadratic
        # term 2 ||Cov||_F^2 / (n(n-1)) of the U-statistic dominates, so add it.
        dev = (states - mean[None]).reshape(n, states.shape[1], d * d)
        cov = np.einsum("npk,npl->pkl", dev, dev.conj()) / (n - 1)
        second = 2 * np.sum(np.abs(cov) ** 2, axis=(1, 2)) / (n * (n - 1))
        se = np.sqrt(se**2 + second)
        lse, lbc = _jackknife(np.log(pur), np.log(loo))
        lse = np.sqrt(lse**2 + second / pur**2)
    else:
        loo = None
        se, bc, lse, lbc = np.zeros_like(pur), pur, np.zeros_like(pur), np.log(pur)
    out.update(purity_se=se, purity_bc=bc, log_purity_se=lse, log_purity_bc=lbc)
    if d == 2:
        r2 = np.clip(2 * pur - 1, 1e-300, None)
        out["bloch_lognorm"] = np.log(r2)
        sig = pauli()
        bloch = np.stack([np.einsum("pij,ji->p", mean, s).real for s in sig], axis=-1)
        out["bloch"] = bloch
        if loo is not None:
            bse, bbc = _jackknife(np.log(r2), np.log(np.clip(2 * loo - 1, 1e-300, None)))
            with np.errstate(divide="ignore", invalid="ignore"):
                bse = np.sqrt(bse**2 + 4 * second / r2**2)
            per = np.stack([np.einsum("npij,ji->np", states, s).real for s in sig], axis=-1)
            out["bloch_vec_se"] = per.std(axis=0, ddof=1) / np.sqrt(n)
        else:
            bse, bbc = np.zeros_like(pur), np.log(r2)
            out["bloch_vec_se"] = np.zeros_like(bloch)
        out.update(bloch_se=bse, bloch_lognorm_bc=bbc)
    else:
        out.update(bloch_lognorm=np.full_like(pur, np.nan), bloch_se=np.full_like(pur, np.nan))
    return out


def _noise_paths(config: SimConfig, index: int, n_steps: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), int(index)]))
    n_ch = len(config._ops)
    sig = [config.noise.sigma[a if config.noise.channels > 1 else 0] for a in range(n_ch)]
    if config.noise.kind == "white":
        return np.stack([rng.standard_normal(n_steps) * s / np.sqrt(config.dt) for s in sig])
    if config.noise.kind == "ou":
        return np.stack([ou_paths(rng, s, config.noise.tau, config.dt, n_steps)[0] for s in sig])
    kernels = _kernels(config)
    return np.stack([kernel_paths(rng, kernels[a], n_steps)[0] for a in range(n_ch)])


def _kernels(config: SimConfig) -> list:
    cached = config.__dict__.get("_kernel_cache")
    if cached is None:
        chans = range(len(config._ops))
        cached = [factor_kernel(config.noise, channel=a if config.noise.channels > 1 else 0,
                                step=config.dt) for a in chans]
        object.__setattr__(config, "_kernel_cache", cached)
    return cached


def _step_hamiltonians(config: SimConfig, n_steps: int) -> np.ndarray:
    mid = (np.arange(n_steps) + 0.5) * config.dt
    return np.stack([interaction_hamiltonians(config.control, h, mid) for h in config.physical_ops])


def _polar(u: np.ndarray) -> np.ndarray:
    w, _, vh = np.linalg.svd(u)
    return w @ vh


def _propagate(config: SimConfig, indices: Sequence[int], hi: np.ndarray, record: np.ndarray,
               noise: np.ndarray | None = None) -> np.ndarray:
    """States at the recorded steps for a batch of trajectories: ``(B, n_rec, d, d)``."""
    n_steps = hi.shape[1]
    d = config.dim
    B = len(indices)
    if noise is None:
        noise = np.stack([_noise_paths(config, i, n_steps) for i in indices])  # (B, ch, n)
    single = hi.shape[0] == 1
    if single:
        evals, evecs = np.linalg.eigh(hi[0])
    u = np.broadcast_to(np.eye(d, dtype=complex), (B, d, d)).copy()
    out = np.empty((B, len(record), d, d), dtype=complex)
    rho0 = config.rho0
    rec_pos = 0
    while rec_pos < len(record) and record[rec_pos] == 0:
        out[:, rec_pos] = rho0
        rec_pos += 1
    dt = config.dt
    for k in range(n_steps):
        if single:
            ph = np.exp(-1j * dt * noise[:, 0, k, None] * evals[k][None, :])  # (B, d)
            v = evecs[k]
            step = np.einsum("ij,bj,kj->bik", v, ph, v.conj())
        else:
            h = np.einsum("bc,cij->bij", noise[:, :, k], hi[:, k])
            w, v = np.linalg.eigh(h)
            step = np.einsum("bij,bj,bkj->bik", v, np.exp(-1j * dt * w), v.conj())
        u = step @ u
        if (k + 1) % REUNITARIZE_EVERY == 0:
            u = _polar(u)
        while rec_pos < len(record) and record[rec_pos] == k + 1:
            out[:, rec_pos] = u @ rho0 @ np.swapaxes(u, -1, -2).conj()
            rec_pos += 1
    return out


def run_trajectory(config: SimConfig, seed: int, noise: np.ndarray | None = None):
    """Single trajectory ``index = seed``; returns ``(t, states)`` on the record grid.

    ``noise`` (shape ``(channels, n_steps)``) overrides the sampled path.
    """
    record = config.record_steps()
    n_steps = int(record[-1])
    hi = _step_hamiltonians(config, n_steps)
    if noise is not None:
        noise = np.asarray(noise, dtype=float)[None]
        if not np.all(np.isfinite(noise)):
            raise ValueError("noise sample has non-finite values")
    states = _propagate(config, [seed], hi, record, noise)[0]
    return record * config.dt, states


def run_ensemble(config: SimConfig, threads: int | None = None) -> EnsembleResult:
    record = config.record_steps()
    n_steps = int(record[-1])
    hi = _step_hamiltonians(config, n_steps)
    batches = [list(range(i, min(i + BATCH, config.n_traj))) for i in range(0, config.n_traj, BATCH)]
    threads = threads or thread_count()
    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda b: _propagate(config, b, hi, record), batches))
    else:
        parts = [_propagate(config, b, hi, record) for b in batches]
    states = np.concatenate(parts, axis=0)
    t = record * config.dt
    return EnsembleResult(t, coarse_time(t, config.eps, config.tau), states)


def _superop(gen) -> SuperOperator:
    return gen.total if isinstance(gen, LindbladParts) else gen


def evolve_generator(generator, rho0, times, step: float | None = None,
                     period: float | None = None, check_step: bool = False,
                     step_tol: float = 1e-6) -> np.ndarray:
    """Evolve ``rho0`` to each of ``times`` under a generator.

    ``generator`` is a :class:`SuperOperator` / :class:`LindbladParts` (constant, exact
    exponential) or a callable ``t -> generator`` (ordered product of midpoint
    propagators with the given ``step``). With ``period`` an integer multiple of
    ``step``, full-step propagators are reused across periods.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    times = np.asarray(times, dtype=float)
    d = rho0.shape[0]
    if not callable(generator):
        L = _superop(generator)
        if L.dim != d:
            raise ValueError(f"generator acts on dimension {L.dim}, state has {d}")
        out = np.stack([unvec(superop_exp(L, t).matrix @ vec(rho0), d) for t in times])
        return _check_states(out)
    if step is None:
        raise ValueError("time-dependent generators need a step")
    out = _ordered_evolution(generator, rho0, times, step, period)
    if check_step and times.size:
        probe = times[times <= times[0] + max(50 * step, period or 0)]
        probe = probe if probe.size else times[:1]
        fine = _ordered_evolution(generator, rho0, probe, step / 2, period)
        gap = np.max(np.abs(fine - out[: probe.size]))
        if gap > step_tol:
            raise ValueError(f"step-halving discrepancy {gap:.2e} > {step_tol:g}; reduce the step")
    return _check_states(out)


def _ordered_evolution(generator: Callable, rho0, times, step, period):
    d = rho0.shape[0]
    cache: dict = {}
    m = None
    if period is not None:
        ratio = period / step
        if abs(ratio - round(ratio)) < 1e-9:
            m = int(round(ratio))

    def propagator(t0, h, k=None):
        if m is not None and k is not None and abs(h - step) < 1e-12 * step:
            key = k % m
            if key not in cache:
                cache[key] = superop_exp(_superop(generator(t0 + 0.5 * h)), h).matrix
            return cache[key]
        return superop_exp(_superop(generator(t0 + 0.5 * h)), h).matrix

    v = vec(rho0)
    t = 0.0
    k = 0
    out = []
    for target in times:
        if target < t - 1e-12:
            raise ValueError("times must be non-decreasing and start at >= 0")
        while t + step <= target + 1e-9 * step:
            v = propagator(k * step, step, k) @ v
            k += 1
            t = k * step
        if target - t > 1e-9 * step:
            # partial step to land exactly on target; the clock stays on the full-step grid
            out.append(unvec(propagator(t, target - t) @ v, d))
        else:
            out.append(unvec(v, d))
    return np.stack(out) if out else np.empty((0, d, d), dtype=complex)


def _check_states(states: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    tr = np.einsum("nii->n", states)
    herm = np.max(np.abs(states - np.swapaxes(states, -1, -2).conj()), initial=0.0)
    if np.max(np.abs(tr - 1), initial=0.0) > tol or herm > tol:
        raise ArithmeticError(f"evolution lost trace/Hermiticity (trace err "
                              f"{np.max(np.abs(tr - 1), initial=0.0):.2e}, herm err {herm:.2e})")
    return 0.5 * (states + np.swapaxes(states, -1, -2).conj())


def trace_distance(a, b) -> np.ndarray:
    diff = np.asarray(a) - np.asarray(b)
    return 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum(axis=-1)


def compare(ensemble: EnsembleResult, predicted: np.ndarray, s: np.ndarray | None = None,
            z_limit: float = 3.0) -> dict:
    """Per-time gaps between the ensemble and predicted states on a common grid.

    Gaps use the bias-corrected ensemble estimates. ``z`` is ``|gap| / se``; gaps below
    1e-9 count as zero (e.g. at ``s = 0``).
    """
    predicted = np.asarray(predicted)
    if predicted.shape[0] != ensemble.s.size or (s is not None and not np.allclose(s, ensemble.s)):
        raise ValueError("prediction and ensemble grids differ")
    pp = np.einsum("pij,pji->p", predicted, predicted).real
    gap = ensemble.purity_bc - pp
    se = ensemble.purity_se

    def _z(g, e):
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(e > 0, np.abs(g) / e, np.inf)
        return np.where(np.abs(g) < 1e-9, 0.0, z)

    z = _z(gap, se)
    log_gap = ensemble.log_purity_bc - np.log(pp)
    log_z = _z(log_gap, ensemble.log_purity_se)
    report = {
        "s": ensemble.s,
        "purity_gap": gap,
        "purity_z": z,
        "log_purity_gap": log_gap,
        "log_purity_z": log_z,
        "trace_distance": trace_distance(ensemble.mean_rho, predicted),
    }
    if ensemble.mean_rho.shape[-1] == 2:
        r2 = np.clip(2 * pp - 1, 1e-300, None)
        bgap = ensemble.bloch_lognorm_bc - np.log(r2)
        report["bloch_gap"] = bgap
        report["bloch_z"] = _z(bgap, ensemble.bloch_se)
    report.update(
        max_gap=float(np.max(np.abs(gap))),
        max_z=float(np.max(z)),
        max_log_z=float(np.max(log_z)),
        chi2=float(np.mean(np.where(np.isfinite(z), z, 0.0) ** 2)),
        within=bool(np.all(log_z <= z_limit)),
    )
    return report


def fit_decay_rate(ensemble: EnsembleResult, s_min: float = 0.0,
                   s_max: float = np.inf) -> tuple[float, float]:
    """Slope ``-d log|r| / ds`` of the mean Bloch norm (qubits) with a jackknife error."""
    mask = (ensemble.s >= s_min) & (ensemble.s <= s_max)
    s = ensemble.s[mask]
    states = ensemble.states[:, mask]
    n = states.shape[0]
    mean = states.mean(axis=0)

    def slope(m):
        pur = np.einsum("...pij,...pji->...p", m, m).real
        y = 0.5 * np.log(np.clip(2 * pur - 1, 1e-300, None))
        sc = s - s.mean()
        return -(y - y.mean(axis=-1, keepdims=True)) @ sc / (sc @ sc)

    full = float(slope(mean))
    loo = slope((n * mean[None] - states) / (n - 1))
    se, _ = _jackknife(np.array(full), loo)
    return full, float(se)
