"""Dense operators and super-operators on small Hilbert spaces.

Density matrices are vectorized by column stacking, ``vec(rho) = rho.ravel(order="F")``.
Under this convention ``vec(A X B) = (B^T kron A) vec(X)``, so the adjoint action is

    ad(H) = 1 kron H - H^T kron 1.

Hermitian operators and density matrices are plain read-only ``numpy`` arrays that
have passed :func:`hermitian` / :func:`density_matrix`. Super-operators are wrapped in
:class:`SuperOperator` so that the Hilbert-space dimension travels with the matrix.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np
import scipy.linalg

HERMITIAN_ATOL = 1e-12
NORMALITY_ATOL = 1e-10


class DimensionError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def _square(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def hermitian(a, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Validate ``a`` as a Hermitian operator and return a frozen copy.

    Deviations up to ``atol`` (absolute, entrywise) are symmetrized away; anything
    larger raises ``ValueError``.
    """
    a = _square(a, "operator")
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if dev > atol:
        raise ValueError(f"operator is not Hermitian (max deviation {dev:.3e})")
    return _frozen(0.5 * (a + a.conj().T))


def density_matrix(rho, atol: float = HERMITIAN_ATOL, eig_tol: float = 1e-10) -> np.ndarray:
    rho = hermitian(rho, atol)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > atol:
        raise ValueError(f"density matrix trace is {tr!r}, expected 1")
    lo = np.linalg.eigvalsh(rho).min()
    if lo < -eig_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")
    return rho


def is_unitary(u, atol: float = 1e-12) -> bool:
    u = np.asarray(u, dtype=complex)
    return bool(np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=atol, rtol=0))


def commutator(a, b) -> np.ndarray:
    return a @ b - b @ a


def vec(rho) -> np.ndarray:
    return np.asarray(rho, dtype=complex).ravel(order="F")


def unvec(v, dim: int) -> np.ndarray:
    return np.asarray(v).reshape((dim, dim), order="F")


def spin_operators(spin) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(Sx, Sy, Sz)`` for angular momentum ``spin`` (1/2, 1, 3/2, ...).

    ``Sz`` is diagonal with entries ``S, S-1, ..., -S``.
    """
    two_s = Fraction(spin) * 2
    if two_s.denominator != 1 or two_s < 1:
        raise ValueError(f"spin must be a positive half-integer, got {spin!r}")
    s = float(spin)
    m = s - np.arange(int(two_s) + 1)
    # <m+1|S+|m> = sqrt(s(s+1) - m(m+1))
    sp = np.diag(np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    sx = 0.5 * (sp + sp.conj().T)
    sy = -0.5j * (sp - sp.conj().T)
    sz = np.diag(m).astype(complex)
    return hermitian(sx), hermitian(sy), hermitian(sz)


def pauli() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sx, sy, sz = spin_operators(0.5)
    return tuple(_frozen(2 * s) for s in (sx, sy, sz))


def ladder_operators(n_fock: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncated oscillator quadratures ``(x, p)`` with ``a = (x + i p)/sqrt(2)``."""
    a = np.diag(np.sqrt(np.arange(1, n_fock)), k=1).astype(complex)
    x = (a + a.conj().T) / np.sqrt(2)
    p = 1j * (a.conj().T - a) / np.sqrt(2)
    return hermitian(x), hermitian(p)


@dataclass(frozen=True, eq=False)
class SuperOperator:
    """Linear map on ``dim x dim`` matrices, stored as a ``dim**2 x dim**2`` matrix."""

    matrix: np.ndarray
    dim: int

    def __post_init__(self):
        m = _square(self.matrix, "super-operator")
        if m.shape[0] != self.dim**2:
            raise DimensionError(
                f"super-operator of shape {m.shape} does not act on dimension {self.dim}"
            )
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def zero(cls, dim: int) -> "SuperOperator":
        return cls(np.zeros((dim**2, dim**2)), dim)

    @classmethod
    def identity(cls, dim: int) -> "SuperOperator":
        return cls(np.eye(dim**2), dim)

    @classmethod
    def from_map(cls, fn, dim: int) -> "SuperOperator":
        """Tabulate a linear map ``fn(rho) -> rho'`` on the matrix-unit basis."""
        cols = []
        for k in range(dim**2):
            e = np.zeros(dim**2, dtype=complex)
            e[k] = 1.0
            cols.append(vec(fn(unvec(e, dim))))
        return cls(np.stack(cols, axis=1), dim)

    def _check(self, other: "SuperOperator"):
        if not isinstance(other, SuperOperator):
            return NotImplemented
        if other.dim != self.dim:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return None

    def __matmul__(self, other):
        if isinstance(other, SuperOperator):
            self._check(other)
            return SuperOperator(self.matrix @ other.matrix, self.dim)
        return NotImplemented

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SuperOperator(self.matrix + other.matrix, self.dim)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SuperOperator(self.matrix - other.matrix, self.dim)

    def __neg__(self):
        return SuperOperator(-self.matrix, self.dim)

    def __mul__(self, c):
        if np.ndim(c) != 0:
            return NotImplemented
        return SuperOperator(complex(c) * self.matrix, self.dim)

    __rmul__ = __mul__

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (self.dim, self.dim):
            raise DimensionError(f"state of shape {rho.shape} for dimension {self.dim}")
        return unvec(self.matrix @ vec(rho), self.dim)

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def is_normal(self, atol: float = NORMALITY_ATOL) -> bool:
        m = self.matrix
        return float(np.linalg.norm(m @ m.conj().T - m.conj().T @ m)) < atol

    def __repr__(self):
        return f"SuperOperator(dim={self.dim}, norm={self.norm():.4g})"


def ad(h) -> SuperOperator:
    """Adjoint action ``rho -> [h, rho]``.

    ``h`` need not be Hermitian; non-Hermitian arguments are used for Fourier
    coefficients of interaction-picture operators.
    """
    h = _square(h)
    d = h.shape[0]
    eye = np.eye(d)
    return SuperOperator(np.kron(eye, h) - np.kron(h.T, eye), d)


def superop_compose(*ops: SuperOperator) -> SuperOperator:
    """Product ``ops[0] @ ops[1] @ ...`` (rightmost acts first)."""
    if not ops:
        raise ValueError("need at least one super-operator")
    out = ops[0]
    for op in ops[1:]:
        out = out @ op
    return out


def superop_exp(op: SuperOperator, t: float = 1.0) -> SuperOperator:
    """``exp(t * op)``.

    Normal super-operators go through an eigen-decomposition, everything else
    through Pade scaling-and-squaring (``scipy.linalg.expm``).
    """
    with np.errstate(invalid="ignore", over="ignore"):
        m = t * op.matrix
    if not np.all(np.isfinite(m)):
        raise ValueError("super-operator has non-finite entries")
    if op.is_normal():
        # normal => unitarily diagonalizable; Schur form is diagonal
        tri, q = scipy.linalg.schur(m, output="complex")
        return SuperOperator((q * np.exp(np.diag(tri))) @ q.conj().T, op.dim)
    return SuperOperator(scipy.linalg.expm(m), op.dim)


def superop_spectrum(op: SuperOperator) -> np.ndarray:
    """All ``dim**2`` eigenvalues with multiplicity, sorted by (real, imag)."""
    if op.is_normal() and np.allclose(op.matrix, op.matrix.conj().T, atol=NORMALITY_ATOL):
        return np.linalg.eigvalsh(op.matrix).astype(complex)
    ev = np.linalg.eigvals(op.matrix)
    return ev[np.lexsort((ev.imag, ev.real))]


def group_eigenvalues(values: Iterable[complex], tol: float = 1e-8) -> list[tuple[complex, int]]:
    """Cluster eigenvalues closer than ``tol`` and count multiplicities."""
    vals = sorted(np.asarray(list(values), dtype=complex), key=lambda z: (z.real, z.imag))
    groups: list[list[complex]] = []
    for z in vals:
        if groups and abs(z - np.mean(groups[-1])) < tol:
            groups[-1].append(z)
        else:
            groups.append([z])
    return [(complex(np.mean(g)), len(g)) for g in groups]


def choi_matrix(op: SuperOperator) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| kron M(|i><j|)`` of the map ``op``."""
    d = op.dim
    # column-stacked matrix units: column k = j*d + i holds M(|i><j|)
    blocks = op.matrix.reshape(d, d, d, d, order="F")  # [out_r, out_c, in_i, in_j]
    choi = np.transpose(blocks, (2, 0, 3, 1)).reshape(d * d, d * d)
    return 0.5 * (choi + choi.conj().T)


def is_completely_positive(op: SuperOperator, tol: float = 1e-9) -> bool:
    return bool(np.linalg.eigvalsh(choi_matrix(op)).min() >= -tol)


def matrix_to_json(a) -> dict:
    """``{"dim": n, "entries": [re, im, re, im, ...]}`` in row-major order."""
    a = _square(a)
    flat = np.stack([a.real, a.imag], axis=-1).ravel()
    return {"dim": int(a.shape[0]), "entries": [float(x) for x in flat]}


def matrix_from_json(obj) -> np.ndarray:
    if isinstance(obj, str):
        obj = json.loads(obj)
    n = int(obj["dim"])
    entries = np.asarray(obj["entries"], dtype=float)
    if entries.size != 2 * n * n:
        raise ValueError(f"expected {2 * n * n} numbers for a {n}x{n} matrix, got {entries.size}")
    pairs = entries.reshape(n, n, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]
