"""Stationary Gaussian noise: correlations, spectral densities and samplers.

Conventions
-----------
``J(t)`` is the autocorrelation of one noise channel, ``J~(w) = int exp(i w t) J(t) dt``
its spectral density and ``K~(w) = int exp(i w t) i sgn(t) J(t) dt`` the transform of
the antisymmetric partner. For real even ``J`` one has

    int_0^inf J(u) exp(i w u) du = J~(w)/2 - i K~(w)/2,

which is how both transforms enter the weak-coupling generators.

Channels are independent (diagonal correlation matrix) and share the shape of
``J``; ``sigma`` may differ per channel.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, interpolate, signal

KINDS = ("ou", "damped-cosine", "white", "tabulated")
POSITIVITY_TOL = 1e-7  # relative; tabulated transforms are quadratures at rtol 1e-8
QUAD_RTOL = 1e-8


class NoiseModelError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Stationary Gaussian noise.

    kind
        ``"ou"``: ``J(t) = sigma^2 exp(-|t|/tau)``;
        ``"damped-cosine"``: ``J(t) = sigma^2 exp(-|t|/tau) cos(omega0 t)``;
        ``"white"``: ``J(t) = sigma^2 delta(t)`` (``tau`` only sets time units);
        ``"tabulated"``: ``J(t) = sigma^2 f(t)`` with ``f`` sampled on ``table``.
    """

    kind: str = "ou"
    sigma: float | Sequence[float] = 1.0
    tau: float = 1.0
    omega0: float = 0.0
    channels: int = 1
    table: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise NoiseModelError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        if not self.tau > 0:
            raise NoiseModelError(f"tau must be positive, got {self.tau!r}")
        if int(self.channels) < 1:
            raise NoiseModelError("channels must be >= 1")
        sig = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if sig.size not in (1, self.channels):
            raise NoiseModelError(f"sigma has {sig.size} entries for {self.channels} channels")
        if np.any(sig < 0) or not np.all(np.isfinite(sig)):
            raise NoiseModelError("sigma must be finite and non-negative")
        object.__setattr__(self, "sigma", tuple(float(s) for s in np.broadcast_to(sig, (self.channels,))))
        if self.kind == "tabulated":
            if self.table is None:
                raise NoiseModelError("tabulated noise needs a table of (t, J) samples")
            t, f = (np.asarray(c, dtype=float) for c in self.table)
            if t.ndim != 1 or t.shape != f.shape or t.size < 4:
                raise NoiseModelError("table must be two equal-length 1-D sequences (>= 4 points)")
            if t[0] != 0 or np.any(np.diff(t) <= 0):
                raise NoiseModelError("table times must start at 0 and increase")
            if not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=0):
                raise NoiseModelError("table times must be uniformly spaced")
            object.__setattr__(self, "table", (tuple(t), tuple(f)))
            object.__setattr__(self, "_spline", interpolate.CubicSpline(t, f, bc_type="not-a-knot"))
        bad = positivity_violation(self)
        if bad is not None:
            raise NoiseModelError(
                f"spectral density is negative at omega={bad[0]:.6g} (J~={bad[1]:.3e}); "
                "the correlation function is not positive definite"
            )

    def variance(self, channel: int = 0) -> float:
        return self.sigma[channel] ** 2

    def correlation(self, t, channel: int = 0):
        """``J(t)``; white noise returns 0 away from ``t = 0`` and ``inf`` at 0."""
        t = np.abs(np.asarray(t, dtype=float))
        s2 = self.variance(channel)
        if self.kind == "ou":
            return s2 * np.exp(-t / self.tau)
        if self.kind == "damped-cosine":
            return s2 * np.exp(-t / self.tau) * np.cos(self.omega0 * t)
        if self.kind == "white":
            return np.where(t == 0, np.inf, 0.0)
        tmax = self.table[0][-1]
        return s2 * np.where(t <= tmax, self._spline(np.minimum(t, tmax)), 0.0)

    @property
    def nyquist(self) -> float:
        if self.kind != "tabulated":
            return np.inf
        return np.pi / (self.table[0][1] - self.table[0][0])

    def spectral_sup(self, channel: int = 0) -> float:
        """``max_w J~(w)`` (used for the weak-coupling parameter)."""
        if self.kind in ("ou", "white"):
            return float(spectral_density(self, 0.0, channel))
        grid = _positivity_grid(self)
        return float(np.max(spectral_density(self, grid, channel)))


def _positivity_grid(model: NoiseModel) -> np.ndarray:
    if model.kind == "tabulated":
        return np.linspace(0.0, 0.999 * model.nyquist, 400)
    top = 40.0 / model.tau + 2 * abs(model.omega0)
    return np.linspace(0.0, top, 801)


def positivity_violation(model: NoiseModel, grid=None):
    """First ``(omega, J~)`` on the scan grid with ``J~ < -tol``, or ``None``."""
    if model.kind in ("ou", "white"):
        return None
    grid = _positivity_grid(model) if grid is None else np.asarray(grid, dtype=float)
    for c in range(model.channels):
        vals = np.atleast_1d(spectral_density(model, grid, c))
        scale = max(float(np.max(np.abs(vals))), 1e-300)
        bad = np.nonzero(vals < -POSITIVITY_TOL * max(scale, 1.0))[0]
        if bad.size:
            return float(grid[bad[0]]), float(vals[bad[0]])
    return None


def _tabulated_transform(model: NoiseModel, omega: float, weight: str) -> float:
    if abs(omega) > model.nyquist:
        raise NoiseModelError(
            f"omega={omega:.6g} is beyond the tabulated support (Nyquist {model.nyquist:.6g})"
        )
    tmax = model.table[0][-1]
    if omega == 0.0:
        if weight == "sin":
            return 0.0
        val, _ = integrate.quad(model._spline, 0.0, tmax, epsrel=QUAD_RTOL, limit=400)
        return 2.0 * val
    val, _ = integrate.quad(
        model._spline, 0.0, tmax, weight=weight, wvar=omega, epsrel=QUAD_RTOL, limit=400
    )
    return 2.0 * val if weight == "cos" else -2.0 * val


def spectral_density(model: NoiseModel, omega, channel: int = 0):
    """``J~(omega) = int exp(i omega t) J(t) dt`` (real, even, >= 0)."""
    w = np.asarray(omega, dtype=float)
    s2 = model.variance(channel)
    tau = model.tau
    if model.kind == "ou":
        out = 2 * s2 * tau / (1 + (w * tau) ** 2)
    elif model.kind == "damped-cosine":
        w0 = model.omega0
        out = s2 * (tau / (1 + ((w - w0) * tau) ** 2) + tau / (1 + ((w + w0) * tau) ** 2))
    elif model.kind == "white":
        out = np.full_like(w, s2)
    else:
        out = s2 * np.vectorize(lambda x: _tabulated_transform(model, float(x), "cos"))(w)
    return out if np.ndim(out) else float(out)


def k_tilde(model: NoiseModel, omega, channel: int = 0):
    """``K~(omega) = int exp(i omega t) i sgn(t) J(t) dt`` (real, odd)."""
    w = np.asarray(omega, dtype=float)
    s2 = model.variance(channel)
    tau = model.tau
    if model.kind == "ou":
        out = -2 * s2 * w * tau**2 / (1 + (w * tau) ** 2)
    elif model.kind == "damped-cosine":
        wp, wm = w + model.omega0, w - model.omega0
        out = -s2 * tau**2 * (wp / (1 + (wp * tau) ** 2) + wm / (1 + (wm * tau) ** 2))
    elif model.kind == "white":
        out = np.zeros_like(w)
    else:
        out = s2 * np.vectorize(lambda x: _tabulated_transform(model, float(x), "sin"))(w)
    return out if np.ndim(out) else float(out)


def gamma_of_t(model: NoiseModel, t: float, channel: int = 0) -> float:
    """Dephasing rate ``gamma(t) = 2 int_0^t J(u) du`` of a fixed-direction noise."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return 0.0
    if model.kind == "white":
        return float(spectral_density(model, 0.0, channel))
    val, _ = integrate.quad(
        lambda u: model.correlation(u, channel), 0.0, t, epsrel=QUAD_RTOL, epsabs=0.0, limit=400
    )
    return 2.0 * val


@dataclass(frozen=True)
class Kernel:
    """Tabulated square-root kernel ``j`` with ``j * j = J`` and ``j~ = sqrt(J~) >= 0``."""

    times: np.ndarray
    values: np.ndarray

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    def fourier(self, omega) -> np.ndarray:
        """Trapezoid estimate of ``j~(omega) = int exp(i omega t) j(t) dt``."""
        w = np.atleast_1d(np.asarray(omega, dtype=float))
        phase = np.exp(1j * np.outer(w, self.times))
        return (phase @ self.values).real * self.step


def factor_kernel(model: NoiseModel, n_points: int = 1025, extent: float = 8.0,
                  channel: int = 0, step: float | None = None) -> Kernel:
    """Tabulate ``j`` on a uniform symmetric grid of half-width ``extent * tau``.

    The grid spectrum of the sampled ``J`` is clipped at zero (within tolerance),
    square-rooted and transformed back, so the discrete self-convolution reproduces
    the sampled ``J`` up to truncation at the grid edge. ``step`` fixes the grid
    spacing instead of ``n_points`` (the grid still has at least 513 points).
    """
    if step is not None:
        n_points = max(513, 2 * int(np.ceil(extent * model.tau / step)) + 1)
    if n_points < 512:
        raise ValueError("kernel grid needs at least 512 points")
    if n_points % 2 == 0:
        n_points += 1
    half = extent * model.tau if step is None else (n_points // 2) * step
    t = np.linspace(-half, half, n_points)
    h = t[1] - t[0]
    if model.kind == "white":
        j = np.zeros(n_points)
        j[n_points // 2] = np.sqrt(model.variance(channel)) / h
        return Kernel(t, j)
    J = np.asarray(model.correlation(t, channel), dtype=float)
    spec = np.fft.fft(np.fft.ifftshift(J)).real
    floor = -POSITIVITY_TOL * max(np.max(np.abs(spec)), 1.0) - 1e-6 * np.max(np.abs(spec))
    if spec.min() < floor:
        raise NoiseModelError(
            f"sampled spectral density is negative ({spec.min():.3e}); not positive definite"
        )
    j = np.fft.fftshift(np.fft.ifft(np.sqrt(np.clip(spec, 0.0, None) / h)).real)
    j = 0.5 * (j + j[::-1])
    return Kernel(t, j)


@dataclass(frozen=True)
class NoiseSample:
    dt: float
    values: np.ndarray  # shape (channels, n_steps)

    @property
    def horizon(self) -> float:
        return self.dt * self.values.shape[-1]


def _check_steps(dt: float, horizon: float) -> int:
    if not dt > 0 or not horizon > 0:
        raise ValueError("dt and horizon must be positive")
    return int(round(horizon / dt))


def ou_paths(rng: np.random.Generator, sigma: float, tau: float, dt: float, n_steps: int,
             n_paths: int = 1) -> np.ndarray:
    """Exact-discretization OU recursion started from the stationary law.

    Returns an array of shape ``(n_paths, n_steps)``.
    """
    a = np.exp(-dt / tau)
    z = rng.standard_normal((n_paths, n_steps))
    z[:, 0] *= sigma
    z[:, 1:] *= sigma * np.sqrt(1 - a * a)
    # xi_k = a xi_{k-1} + z_k
    return signal.lfilter([1.0], [1.0, -a], z, axis=1)


def sample_ou(model: NoiseModel, dt: float, horizon: float, seed: int) -> NoiseSample:
    """Sample every channel of an OU model on ``n = horizon/dt`` points."""
    if model.kind != "ou":
        raise NoiseModelError(f"sample_ou needs an OU model, got {model.kind!r}")
    n = _check_steps(dt, horizon)
    if dt > model.tau / 10:
        warnings.warn(f"dt={dt} does not resolve tau={model.tau} (dt > tau/10)", stacklevel=2)
    rng = np.random.default_rng(seed)
    vals = np.vstack([ou_paths(rng, s, model.tau, dt, n)[0] for s in model.sigma])
    return NoiseSample(dt, vals)


def sample_white(model: NoiseModel, dt: float, horizon: float, seed: int) -> NoiseSample:
    """Independent steps with ``Var(xi_k dt) = J~ dt``, i.e. ``xi_k ~ N(0, J~/dt)``."""
    n = _check_steps(dt, horizon)
    rng = np.random.default_rng(seed)
    vals = np.vstack([rng.standard_normal(n) * s / np.sqrt(dt) for s in model.sigma])
    return NoiseSample(dt, vals)


def kernel_paths(rng: np.random.Generator, kernel: Kernel, n_steps: int, n_paths: int = 1) -> np.ndarray:
    """Stationary Gaussian paths ``xi = j * w`` sampled on the kernel grid spacing.

    ``w`` is discrete white noise of variance ``1/h``, so the path covariance is the
    discrete self-convolution of ``j``. Returns shape ``(n_paths, n_steps)``.
    """
    h = kernel.step
    m = kernel.values.size
    z = rng.standard_normal((n_paths, n_steps + m - 1))
    return np.sqrt(h) * signal.fftconvolve(z, kernel.values[None, :], mode="valid", axes=1)
