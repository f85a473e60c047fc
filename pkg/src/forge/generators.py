"""Generators of the averaged evolution for controlled stochastic Hamiltonians.

Everything here is built in laboratory time ``t`` from the *physical* noise operators
(coupling included) and the unfactored Fourier amplitudes ``C_a(w)`` of
``H^I_a(t) = sum_w C_a(w) exp(i w t)``. The stationary-control Lindbladian reads

    L rho = sum_a (i/4) sum_w K~_a(w) [[C, C^*], rho]  -  (1/2) sum_w J~_a(w) [C, [C^*, rho]]

with ``C = C_a(w)``. Writing ``C = eps * H~`` and multiplying by ``tau/eps^2`` gives the
same operator in coarse time ``s = eps^2 t / tau`` (see :func:`to_coarse`).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize

from .control import (ControlSchedule, StationaryFourierData, fourier_data,
                      interaction_hamiltonians)
from .linalg import SuperOperator, ad, commutator, hermitian, ladder_operators, matrix_to_json
from .noise import (POSITIVITY_TOL, Kernel, NoiseModel, NoiseModelError, factor_kernel,
                    gamma_of_t, k_tilde, spectral_density)

REGIMES = ("white", "commutative", "finite-eps", "coarse-grained")


@dataclass(frozen=True, eq=False)
class LindbladParts:
    """``total = hamiltonian_part + dissipative_part``; the dissipative part is ``-D``."""

    hamiltonian_part: SuperOperator
    dissipative_part: SuperOperator
    components: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def total(self) -> SuperOperator:
        return self.hamiltonian_part + self.dissipative_part

    @property
    def dim(self) -> int:
        return self.hamiltonian_part.dim

    def scaled(self, factor: float) -> "LindbladParts":
        return LindbladParts(
            factor * self.hamiltonian_part,
            factor * self.dissipative_part,
            {k: factor * v for k, v in self.components.items()},
            dict(self.metadata),
        )

    def to_json(self, **metadata) -> str:
        meta = {**self.metadata, **metadata}
        return json.dumps({
            "hilbert_dim": self.dim,
            "metadata": meta,
            "parts": {
                "hamiltonian": matrix_to_json(self.hamiltonian_part.matrix),
                "dissipative": matrix_to_json(self.dissipative_part.matrix),
                "total": matrix_to_json(self.total.matrix),
                **{k: matrix_to_json(v.matrix) for k, v in self.components.items()},
            },
        })


def coarse_time(t, eps: float, tau: float):
    return eps**2 * np.asarray(t) / tau


def lab_time(s, eps: float, tau: float):
    return tau * np.asarray(s) / eps**2


def to_coarse(parts: LindbladParts, eps: float, tau: float) -> LindbladParts:
    """Rescale a lab-time generator to coarse time: ``L_s = (tau/eps^2) G``."""
    if not 0 < eps:
        raise ValueError("eps must be positive")
    out = parts.scaled(tau / eps**2)
    out.metadata.update(eps=eps, tau=tau, time="coarse")
    return out


def coupling_for_eps(eps: float, model: NoiseModel, ops: Sequence) -> float:
    """Coupling ``g`` with ``eps^2 = tau * max J~ * max_a ||g H_a||^2`` (operator norm)."""
    jsup = max(model.spectral_sup(c) for c in range(model.channels))
    hmax = max(np.linalg.norm(np.asarray(h), 2) for h in ops)
    return eps / np.sqrt(model.tau * jsup * hmax**2)


def _channel(model: NoiseModel, a: int) -> int:
    if model.channels == 1:
        return 0
    if a >= model.channels:
        raise NoiseModelError(f"noise model has {model.channels} channels, operator index {a}")
    return a


def white_noise_generator(model: NoiseModel, schedule: ControlSchedule, ops: Sequence,
                          t: float) -> LindbladParts:
    """Exact generator for white noise: ``-(1/2) sum_a J_a ad(H^I_a(t))^2``."""
    if model.kind != "white":
        raise NoiseModelError(f"white-noise generator needs a white model, got {model.kind!r}")
    d = np.asarray(ops[0]).shape[0]
    diss = SuperOperator.zero(d)
    for a, h in enumerate(ops):
        hi = interaction_hamiltonians(schedule, h, [t])[0]
        A = ad(hi)
        diss = diss - 0.5 * model.variance(_channel(model, a)) * (A @ A)
    return LindbladParts(SuperOperator.zero(d), diss, metadata={"regime": "white", "t": t})


def commutative_generator(model: NoiseModel, h0, t: float) -> SuperOperator:
    """``-(gamma(t)/2) ad(h0)^2`` for a single noise with fixed direction ``h0``."""
    A = ad(hermitian(h0))
    return -0.5 * gamma_of_t(model, t) * (A @ A)


def check_commutative(schedule: ControlSchedule, h, times, atol: float = 1e-10) -> bool:
    """Whether ``H^I(t)`` commutes with itself at all pairs of the given times."""
    hs = interaction_hamiltonians(schedule, h, times)
    return all(np.max(np.abs(commutator(a, b))) < atol for a in hs for b in hs)


def finite_eps_generator(model: NoiseModel, schedule: ControlSchedule, ops: Sequence, t: float,
                         kernel: Kernel | None = None) -> LindbladParts:
    """Time-dependent weak-coupling generator ``i ad(H_ren(t)) - (1/2) sum_a ad(D_a(t))^2``.

    ``D_a(t) = int j(u) H^I_a(t+u) du`` and
    ``H_ren(t) = (i/4) sum_a int int j(u) j(v) sgn(u-v) [H^I_a(t+u), H^I_a(t+v)] du dv``,
    both by trapezoid sums on the kernel grid. The double sum is evaluated as
    ``(i/2) sum_k [x_k, sum_{l<k} x_l]`` with ``x_k = h j_k H^I(t+u_k)``, which is the
    same tensor-grid sum with the diagonal ``u = v`` dropped.
    """
    d = np.asarray(ops[0]).shape[0]
    h_ren = np.zeros((d, d), dtype=complex)
    diss = SuperOperator.zero(d)
    ds = []
    for a, h in enumerate(ops):
        ker = kernel if kernel is not None else factor_kernel(model, channel=_channel(model, a))
        w = ker.values * ker.step
        x =interaction_hamiltonians(schedule, h, t + ker.times) * w[:, None, None]
        D = x.sum(axis=0)
        prefix = np.cumsum(x, axis=0) - x
        h_ren += 0.5j * np.einsum("kab,kbc->ac", x, prefix) - 0.5j * np.einsum("kab,kbc->ac", prefix, x)
        for name, m in (("D", D), ("H_ren", h_ren)):
            dev = np.max(np.abs(m - m.conj().T))
            if dev > 1e-10 * max(1.0, np.max(np.abs(m))):
                raise ArithmeticError(f"{name} lost Hermiticity ({dev:.2e}); refine the kernel grid")
        D = 0.5 * (D + D.conj().T)
        ds.append(D)
        A = ad(D)
        diss = diss - 0.5 * (A @ A)
    h_ren = 0.5 * (h_ren + h_ren.conj().T)
    return LindbladParts(1j * ad(h_ren), diss,
                         metadata={"regime": "finite-eps", "t": t, "H_ren": h_ren, "D": ds})


def _checked_spectrum(model: NoiseModel, channel: int, freqs) -> np.ndarray:
    jt = np.atleast_1d(spectral_density(model, freqs, channel))
    if np.any(jt < -POSITIVITY_TOL * max(model.spectral_sup(channel), 1.0)):
        k = int(np.argmin(jt))
        raise NoiseModelError(f"negative spectral density {jt[k]:.3e} at omega={freqs[k]:.6g}")
    return np.clip(jt, 0.0, None)


def coarse_grained_lindbladian(fourier: StationaryFourierData, model: NoiseModel,
                               eps: float | None = None) -> LindbladParts:
    """Stationary-control Lindbladian from the Fourier data of ``H^I``.

    Returned in lab time, or in coarse time when ``eps`` is given (``tau`` taken
    from ``model``). Per-channel pieces are in ``components`` as ``H[a]`` / ``D[a]``
    (``D[a]`` holds ``-D_a``).
    """
    d = fourier.dim
    F = fourier.frequencies
    ham = SuperOperator.zero(d)
    diss = SuperOperator.zero(d)
    comps = {}
    for a in range(fourier.channels):
        c = _channel(model, a)
        jt = _checked_spectrum(model, c, F)
        kt = np.atleast_1d(k_tilde(model, F, c))
        ha = SuperOperator.zero(d)
        da = SuperOperator.zero(d)
        for k in range(len(F)):
            C = fourier.coeffs[a, k]
            Cd = C.conj().T
            if kt[k] != 0.0:
                ha = ha + (0.25j * kt[k]) * ad(commutator(C, Cd))
            if jt[k] != 0.0:
                da = da - (0.5 * jt[k]) * (ad(C) @ ad(Cd))
        comps[f"H[{a}]"] = ha
        comps[f"D[{a}]"] = da
        ham = ham + ha
        diss = diss + da
    parts = LindbladParts(ham, diss, comps, {"regime": "coarse-grained", "noise_kind": model.kind})
    return to_coarse(parts, eps, model.tau) if eps is not None else parts


def channel_rates(parts: LindbladParts, ops: Sequence) -> np.ndarray:
    """``gamma_a`` such that ``D[a] = -(gamma_a/2) ad(op_a)^2`` (least squares)."""
    out = []
    for a, h in enumerate(ops):
        A = ad(h)
        basis = -0.5 * (A @ A).matrix
        comp = parts.components[f"D[{a}]"].matrix
        out.append((np.vdot(basis, comp) / np.vdot(basis, basis)).real)
    return np.array(out)


class Rate(NamedTuple):
    value: float
    tail_bound: float


def bb_dephasing_rate(model: NoiseModel, omega: float, n_max: int = 200, channel: int = 0) -> Rate:
    """``gamma_b = (8/pi^2) sum_{n>=0} J~((2n+1) w)/(2n+1)^2`` truncated at ``n <= n_max``."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    odd = 2 * np.arange(n_max + 1) + 1
    val = 8 / np.pi**2 * np.sum(spectral_density(model, odd * omega, channel) / odd**2)
    tail = 8 / np.pi**2 * model.spectral_sup(channel) / (2 * (2 * n_max + 1))
    return Rate(float(val), float(tail))


def iso_weight(n) -> np.ndarray:
    """``|c_n|^2`` of the 12-part waveform: ``(8/pi^2) sin^4(n pi/12) p(n) / n^2``."""
    n = np.asarray(n, dtype=float)
    p = (5 + 4 * np.cos(n * np.pi / 6) + 2 * np.cos(4 * n * np.pi / 3)
         + (-1.0) ** n * (1 + 4 * np.cos(n * np.pi / 2) + 2 * np.cos(2 * n * np.pi / 3)))
    return 8 / np.pi**2 * np.sin(n * np.pi / 12) ** 4 * p / n**2


def iso_dephasing_rate(model: NoiseModel, omega: float, n_max: int = 200, channel: int = 0) -> Rate:
    """Depolarizing rate of the 12-part bang-bang, summed over ``0 < |n| <= n_max``."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    n = np.arange(1, n_max + 1)
    terms = spectral_density(model, n * omega, channel) * iso_weight(n)
    val = 2 * float(np.sum(terms))  # J~ even: n and -n contribute equally
    tail = 2 * 18 * 8 / np.pi**2 * model.spectral_sup(channel) / n_max
    return Rate(val, float(tail))


def oscillator_generators(kind: str, n_fock: int, model: NoiseModel, omega_c: float,
                          eps: float | None = None) -> LindbladParts:
    """Coarse-grained Lindbladians of a noisy oscillator ``H_0 = w_c (p^2 + x^2)/2``.

    ``kind="linear"``: noise operators ``x`` and ``p``.
    ``kind="frequency"``: noise operators ``p^2`` and ``x^2``; components are labelled
    ``unitary``, ``dephasing`` (``w = 0``) and ``parametric`` (``w = +-2 w_c``).
    Truncation at ``n_fock`` corrupts the top of the Fock ladder; only the lowest
    ``n_fock // 2`` levels are meaningful.
    """
    if n_fock < 8:
        raise ValueError("n_fock must be at least 8")
    x, p = ladder_operators(n_fock)
    h0 = 0.5 * omega_c * (p @ p + x @ x)
    sched = ControlSchedule.constant(h0)
    if kind == "linear":
        ops = [x, p]
    elif kind == "frequency":
        ops = [p @ p, x @ x]
    else:
        raise ValueError(f"unknown oscillator noise kind {kind!r}")
    fd = fourier_data(sched, ops)
    parts = coarse_grained_lindbladian(fd, model)
    comps = dict(parts.components)
    if kind == "frequency":
        d = n_fock
        unitary = parts.hamiltonian_part
        deph = SuperOperator.zero(d)
        para = SuperOperator.zero(d)
        for a in range(fd.channels):
            jt = _checked_spectrum(model, _channel(model, a), fd.frequencies)
            for k, w in enumerate(fd.frequencies):
                C = fd.coeffs[a, k]
                term = -(0.5 * jt[k]) * (ad(C) @ ad(C.conj().T))
                if abs(w) < 1e-9:
                    deph = deph + term
                else:
                    para = para + term
        comps.update(unitary=unitary, dephasing=deph, parametric=para)
    out = LindbladParts(parts.hamiltonian_part, parts.dissipative_part, comps,
                        {"regime": "coarse-grained", "oscillator": kind, "n_fock": n_fock,
                         "omega_c": omega_c, "fourier": fd})
    return to_coarse(out, eps, model.tau) if eps is not None else out


def linear_noise_gamma(parts: LindbladParts, n_fock: int, block: int | None = None) -> np.ndarray:
    """Fit ``-2 L = Gx ad(x)^2 + Gp ad(p)^2 + 2 Gxp {ad x, ad p}``; return ``[[Gx, Gxp], [Gxp, Gp]]``.

    The fit uses matrix elements between Fock states in the lowest ``block`` levels.
    """
    block = block or n_fock // 2
    x, p = ladder_operators(n_fock)
    X, P = ad(x).matrix, ad(p).matrix
    idx = _block_indices(n_fock, block)
    sub = np.ix_(idx, idx)
    basis = [(X @ X)[sub], (P @ P)[sub], 2 * (X @ P + P @ X)[sub]]
    target = (-2 * parts.total.matrix)[sub]
    A = np.stack([b.ravel() for b in basis], axis=1)
    coef, *_ = np.linalg.lstsq(A, target.ravel(), rcond=None)
    gx, gp, gxp = coef.real
    return np.array([[gx, gxp], [gxp, gp]])


def _block_indices(n: int, block: int) -> np.ndarray:
    """Column-stacked indices of ``|i><j|`` with ``i, j < block``."""
    i, j = np.meshgrid(np.arange(block), np.arange(block), indexing="ij")
    return (i + n * j).ravel()


def restrict(op: SuperOperator, block: int) -> np.ndarray:
    idx = _block_indices(op.dim, block)
    return op.matrix[np.ix_(idx, idx)]


class MeasurementTime(NamedTuple):
    t_star: float
    s_star: float
    grid: np.ndarray
    sensitivity: np.ndarray


def sensitivity(gamma: float, t):
    """``S(t) = sqrt(t p (1-p)) / |dp/dgamma|`` with ``p = (1 - exp(-gamma t))/2``."""
    t = np.asarray(t, dtype=float)
    p = 0.5 * (1 - np.exp(-gamma * t))
    dp = 0.5 * t * np.exp(-gamma * t)
    return np.sqrt(t * p * (1 - p)) / np.abs(dp)


def optimal_measurement_time(gamma: float, t_min: float, t_max: float, n_grid: int = 201,
                             xtol: float = 1e-8) -> MeasurementTime:
    """Minimize :func:`sensitivity` on ``[t_min, t_max]`` (bounded Brent search)."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not (0 < t_min < t_max):
        raise ValueError(f"empty or invalid interval [{t_min}, {t_max}]")
    res = optimize.minimize_scalar(lambda t: float(sensitivity(gamma, t)), bounds=(t_min, t_max),
                                   method="bounded", options={"xatol": xtol})
    candidates = [(float(sensitivity(gamma, t)), t) for t in (t_min, float(res.x), t_max)]
    s_star, t_star = min(candidates)
    grid = np.linspace(t_min, t_max, n_grid)
    return MeasurementTime(t_star, s_star, grid, sensitivity(gamma, grid))


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """Bundle of inputs for :func:`build_generator`; ``ops`` are physical (coupled) operators."""

    regime: str
    noise: NoiseModel
    control: ControlSchedule
    ops: tuple
    eps: float = 0.1
    n_harmonics: int = 41

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.regime == "commutative":
            if len(self.ops) != 1:
                raise ValueError("commutative regime needs a single noise operator")
            probe = np.linspace(0, 4 * self.noise.tau, 9)
            if not check_commutative(self.control, self.ops[0], probe):
                raise ValueError("H^I(t) does not commute at different times")

    def build(self, t: float | None = None):
        if self.regime == "white":
            return white_noise_generator(self.noise, self.control, self.ops, t or 0.0)
        if self.regime == "commutative":
            return commutative_generator(self.noise, self.ops[0], t or 0.0)
        if self.regime == "finite-eps":
            return finite_eps_generator(self.noise, self.control, self.ops, t or 0.0)
        fd = fourier_data(self.control, self.ops, self.n_harmonics)
        return coarse_grained_lindbladian(fd, self.noise)


def build_generator(spec: GeneratorSpec, t: float | None = None):
    return spec.build(t)
