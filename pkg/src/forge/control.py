"""Control schedules and the interaction-picture noise operators they induce.

Sign convention: a control Hamiltonian ``H_c`` generates ``V(t) = exp(-i H_c t)`` (so
that ``H_c = i dV/dt V^*``) and noise operators are rotated as ``H^I(t) = V^* H V``.
For ``H_c = w S_z`` this gives ``S_x -> S_x cos(wt) - S_y sin(wt)``, and
``H^I(t) = sum_w C(w) exp(i w t)`` with ``C(+-w) = (S_x +- i S_y)/2``.

Piecewise schedules are periodic in the phase ``theta = omega_c t mod 2 pi``; segment
``j`` covers ``[2 pi F_j, 2 pi F_{j+1})`` where ``F`` are cumulative fractions, and the
pulses between segments are instantaneous.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .linalg import hermitian, is_unitary, spin_operators

KINDS = ("none", "constant", "bangbang-pi", "bangbang-iso12", "custom-piecewise")
PRUNE_TOL = 1e-12
FREQ_TOL = 1e-9

# w_1 on the 12 equal parts of one period
ISO12_W1 = (+1, -1, -1, +1, -1, -1, +1, +1, -1, +1, -1, +1)
# index of the rotation R_k = exp(i pi S_k) used on each part (0 means identity)
ISO12_SEQUENCE = (1, 2, 3, 0, 2, 3, 1, 0, 3, 1, 2, 0)


class ControlError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    kind: str = "none"
    omega_c: float = 0.0
    segments: tuple = ()
    hc: np.ndarray | None = None
    _cum: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ControlError(f"unknown control kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "constant":
            if self.hc is None:
                raise ControlError("constant control needs hc")
            object.__setattr__(self, "hc", hermitian(self.hc))
        if self.kind in ("bangbang-pi", "bangbang-iso12", "custom-piecewise"):
            if not self.omega_c > 0:
                raise ControlError("piecewise controls need omega_c > 0")
            if not self.segments:
                raise ControlError("piecewise controls need segments")
            fracs = np.array([float(f) for f, _ in self.segments])
            if np.any(fracs <= 0) or abs(fracs.sum() - 1.0) > 1e-12:
                raise ControlError(f"segment fractions must be positive and sum to 1, got {fracs.sum()!r}")
            segs = []
            for i, (f, u) in enumerate(self.segments):
                u = np.array(u, dtype=complex)
                if not is_unitary(u, atol=1e-12):
                    raise ControlError(f"segment {i} unitary fails U^*U = 1")
                u.setflags(write=False)
                segs.append((float(f), u))
            object.__setattr__(self, "segments", tuple(segs))
            object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(fracs)]))

    # constructors

    @classmethod
    def none(cls) -> "ControlSchedule":
        return cls("none")

    @classmethod
    def constant(cls, hc) -> "ControlSchedule":
        hc = hermitian(hc)
        e = np.linalg.eigvalsh(hc)
        gaps = np.abs(np.subtract.outer(e, e))
        gaps = gaps[gaps > FREQ_TOL]
        return cls("constant", omega_c=float(gaps.min()) if gaps.size else 0.0, hc=hc)

    @classmethod
    def bangbang_pi(cls, omega_c: float, spin=0.5, axis: str = "x") -> "ControlSchedule":
        """Identity on the first half period, ``exp(i pi S_axis)`` on the second."""
        s = dict(zip("xyz", spin_operators(spin)))[axis]
        r = scipy.linalg.expm(1j * np.pi * s)
        return cls("bangbang-pi", omega_c, segments=((0.5, np.eye(len(s))), (0.5, r)))

    @classmethod
    def iso12(cls, omega_c: float, spin=0.5) -> "ControlSchedule":
        """Twelve equal parts with rotations ``R_k = exp(i pi S_k)`` (``sigma_k`` up to phase)."""
        ops = spin_operators(spin)
        rot = [np.eye(len(ops[0]))] + [scipy.linalg.expm(1j * np.pi * s) for s in ops]
        return cls("bangbang-iso12", omega_c,
                   segments=tuple((1.0 / 12, rot[k]) for k in ISO12_SEQUENCE))

    @classmethod
    def piecewise(cls, omega_c: float, segments: Sequence) -> "ControlSchedule":
        return cls("custom-piecewise", omega_c, segments=tuple(segments))

    # evaluation

    @property
    def is_piecewise(self) -> bool:
        return self.kind in ("bangbang-pi", "bangbang-iso12", "custom-piecewise")

    @property
    def period(self) -> float | None:
        if self.is_piecewise:
            return 2 * np.pi / self.omega_c
        return None

    def segment_index(self, t) -> np.ndarray:
        frac = np.mod(np.asarray(t, dtype=float) * self.omega_c / (2 * np.pi), 1.0)
        idx = np.searchsorted(self._cum, frac, side="right") - 1
        return np.clip(idx, 0, len(self.segments) - 1)

    def unitary(self, t) -> np.ndarray:
        """``V(t)``."""
        if self.kind == "none":
            raise ControlError("schedule 'none' has no intrinsic dimension; V(t) is the identity")
        if self.kind == "constant":
            return scipy.linalg.expm(-1j * self.hc * t)
        return self.segments[int(self.segment_index(t))][1]


def interaction_hamiltonian(schedule: ControlSchedule, h, t: float) -> np.ndarray:
    """``H^I(t) = V(t)^* h V(t)``."""
    return interaction_hamiltonians(schedule, h, np.array([t]))[0]


def interaction_hamiltonians(schedule: ControlSchedule, h, times) -> np.ndarray:
    """Vectorized :func:`interaction_hamiltonian`; returns shape ``(len(times), d, d)``."""
    h = np.asarray(hermitian(h))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if schedule.kind == "none":
        return np.broadcast_to(h, (times.size,) + h.shape).copy()
    if schedule.kind == "constant":
        e, q = np.linalg.eigh(schedule.hc)
        hq = q.conj().T @ h @ q
        # e^{i Hc t} h e^{-i Hc t} = q [hq_jk e^{i (e_j - e_k) t}] q^*
        phase = np.exp(1j * np.subtract.outer(e, e)[None] * times[:, None, None])
        out = q @ (hq * phase) @ q.conj().T
    else:
        conj = np.stack([u.conj().T @ h @ u for _, u in schedule.segments])
        out = conj[schedule.segment_index(times)]
    return 0.5 * (out + np.swapaxes(out, -1, -2).conj())


@dataclass(frozen=True, eq=False)
class StationaryFourierData:
    """``H^I_a(t) = sum_{w in F} coeffs[a, k] exp(i F[k] t)`` (unfactored amplitudes)."""

    frequencies: np.ndarray
    coeffs: np.ndarray  # (channels, len(F), d, d)

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        c = np.asarray(self.coeffs, dtype=complex)
        order = np.argsort(f)
        f, c = f[order], c[:, order]
        if not np.allclose(np.sort(-f), f, atol=FREQ_TOL, rtol=0):
            raise ControlError("frequency set is not closed under negation")
        partner = c[:, ::-1]
        if np.max(np.abs(c - np.swapaxes(partner, -1, -2).conj()), initial=0.0) > 1e-10:
            raise ControlError("Fourier coefficients violate C(w) = C(-w)^*")
        f.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "coeffs", c)

    @property
    def channels(self) -> int:
        return self.coeffs.shape[0]

    @property
    def dim(self) -> int:
        return self.coeffs.shape[-1]

    def coefficient(self, channel: int, omega: float) -> np.ndarray:
        k = np.nonzero(np.abs(self.frequencies - omega) < FREQ_TOL)[0]
        if k.size == 0:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return self.coeffs[channel, k[0]]

    def evaluate(self, channel: int, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ph = np.exp(1j * np.outer(t, self.frequencies))
        return np.einsum("tk,kij->tij", ph, self.coeffs[channel])


def _assemble(freq_maps: list[dict]) -> StationaryFourierData:
    """Merge per-channel ``{omega: matrix}`` maps onto a shared, pruned frequency set."""
    keys: list[float] = []
    for fm in freq_maps:
        for w in fm:
            if not any(abs(w - k) < FREQ_TOL for k in keys):
                keys.append(w)
    keys = sorted(keys)
    d = next(iter(freq_maps[0].values())).shape[0]
    c = np.zeros((len(freq_maps), len(keys), d, d), dtype=complex)
    for a, fm in enumerate(freq_maps):
        for w, m in fm.items():
            k = min(range(len(keys)), key=lambda i: abs(keys[i] - w))
            c[a, k] += m
    keep = [k for k in range(len(keys)) if np.max(np.linalg.norm(c[:, k], axis=(1, 2))) >= PRUNE_TOL]
    if not keep:
        keep = [min(range(len(keys)), key=lambda i: abs(keys[i]))] if keys else []
    return StationaryFourierData(np.array(keys)[keep], c[:, keep])


def fourier_data(schedule: ControlSchedule, ops: Sequence, n_harmonics: int = 41) -> StationaryFourierData:
    """Fourier decomposition of ``H^I_a(t)`` for every noise operator in ``ops``.

    Constant controls are decomposed exactly through the spectral projections of
    ``H_c`` (``F`` = eigenvalue differences); piecewise schedules use closed-form
    segment integrals at harmonics ``|k| <= n_harmonics`` of ``omega_c``.
    """
    if n_harmonics < 1:
        raise ValueError("n_harmonics must be >= 1")
    ops = [np.asarray(hermitian(h)) for h in ops]
    maps = []
    if schedule.kind == "none":
        maps = [{0.0: h} for h in ops]
    elif schedule.kind == "constant":
        e, q = np.linalg.eigh(schedule.hc)
        groups = _eigen_groups(e)
        projs = [q[:, g] @ q[:, g].conj().T for g in groups]
        levels = [float(np.mean(e[g])) for g in groups]
        for h in ops:
            fm: dict[float, np.ndarray] = {}
            for j, pj in enumerate(projs):
                for k, pk in enumerate(projs):
                    w = levels[j] - levels[k]
                    key = next((x for x in fm if abs(x - w) < FREQ_TOL), w)
                    fm[key] = fm.get(key, 0) + pj @ h @ pk
            maps.append(fm)
    else:
        cum = schedule._cum * 2 * np.pi
        conj_ops = [[u.conj().T @ h @ u for _, u in schedule.segments] for h in ops]
        ks = np.arange(-n_harmonics, n_harmonics + 1)
        for conj in conj_ops:
            fm = {}
            for k in ks:
                if k == 0:
                    weights = np.diff(schedule._cum)
                else:
                    weights = (np.exp(-1j * k * cum[1:]) - np.exp(-1j * k * cum[:-1])) / (-2j * np.pi * k)
                fm[float(k * schedule.omega_c)] = np.einsum("j,jab->ab", weights, np.stack(conj))
            maps.append(fm)
    return _assemble(maps)


def fourier_data_quadrature(schedule: ControlSchedule, ops: Sequence, n_harmonics: int = 41,
                            n_points: int = 4096, period: float | None = None) -> StationaryFourierData:
    """Period-averaged trapezoid estimate of the same coefficients (cross-check)."""
    period = period or schedule.period
    if period is None:
        raise ControlError("schedule is aperiodic; pass an explicit period")
    if n_points < 4096:
        raise ValueError("use at least 4096 points per period")
    t = (np.arange(n_points) + 0.5) * period / n_points
    base = 2 * np.pi / period
    maps = []
    for h in ops:
        samples = interaction_hamiltonians(schedule, h, t)
        fm = {}
        for k in range(-n_harmonics, n_harmonics + 1):
            # periodic trapezoid = plain mean of equispaced samples
            fm[float(k * base)] = np.tensordot(np.exp(-1j * k * base * t), samples, axes=1) / n_points
        maps.append(fm)
    return _assemble(maps)


def _eigen_groups(e, tol: float = FREQ_TOL) -> list[list[int]]:
    groups: list[list[int]] = [[0]]
    for i in range(1, len(e)):
        if abs(e[i] - e[groups[-1][0]]) < tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def is_effective(schedule: ControlSchedule, ops: Sequence, tol: float = 1e-10) -> tuple[bool, dict]:
    """True iff the zero-frequency coefficient of every ``H^I_a`` vanishes.

    Diagnostics carry the per-channel norms of ``C_a(0)`` and the averaging
    residual: ``sum_j P_j H_a P_j`` over spectral projections of ``H_c`` for constant
    controls, ``sum_j (t_{j+1} - t_j)/T V_j^* H_a V_j`` for piecewise ones.
    """
    ops = [np.asarray(hermitian(h)) for h in ops]
    fd = fourier_data(schedule, ops, n_harmonics=1)
    norms = [float(np.linalg.norm(fd.coefficient(a, 0.0))) for a in range(len(ops))]
    diag: dict = {"zero_frequency_norms": norms}
    if schedule.kind == "constant":
        e, q = np.linalg.eigh(schedule.hc)
        residuals = []
        for h in ops:
            r = sum(q[:, g] @ q[:, g].conj().T @ h @ q[:, g] @ q[:, g].conj().T
                    for g in _eigen_groups(e))
            residuals.append(r)
        diag["block_residuals"] = residuals
    elif schedule.is_piecewise:
        diag["segment_averages"] = [
            sum(f * (u.conj().T @ h @ u) for f, u in schedule.segments) for h in ops
        ]
    else:
        diag["segment_averages"] = ops
    return all(n < tol for n in norms), diag


def iso12_waveforms() -> np.ndarray:
    """``w_1, w_2, w_3`` on the 12 parts, shape ``(3, 12)``.

    ``w_1(t) = w_2(t + 2pi/3) = w_3(t - 2pi/3)``: a shift of 2pi/3 is four parts.
    """
    w1 = np.array(ISO12_W1, dtype=float)
    j = np.arange(12)
    return np.stack([w1, w1[(j - 4) % 12], w1[(j + 4) % 12]])


def iso12_conjugation_signs(spin=0.5) -> np.ndarray:
    """Signs ``s`` with ``V_j^* S_a V_j = s[a, j] S_a``, from explicit conjugation."""
    ops = spin_operators(spin)
    sched = ControlSchedule.iso12(1.0, spin)
    signs = np.zeros((3, 12))
    for a, s in enumerate(ops):
        for j, (_, u) in enumerate(sched.segments):
            c = u.conj().T @ s @ u
            signs[a, j] = np.real(np.trace(c @ s) / np.trace(s @ s))
    return signs
