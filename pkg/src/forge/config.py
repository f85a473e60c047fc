"""JSON experiment configuration.

A config is one JSON object::

    {
      "experiment": "fig-compare",
      "seed": 0,
      "output": "out/fig-compare",
      "system": {"spin": 0.5, "noise_ops": ["z"]},
      "noise": {"kind": "ou", "sigma": 1.0, "tau": 20.0},
      "control": {"kind": "bangbang-pi", "omega_c_tau": 1.5708},
      "sim": {"eps": 0.15, "dt": 1.0, "n_traj": 500, "horizon": 2.0, "n_points": 9},
      "params": {}
    }

Frequencies are given as the dimensionless ``omega_c_tau``. Noise operators are spin
components (``"x"``, ``"y"``, ``"z"``, or ``"iso"`` for all three) or explicit
matrices in the ``{"dim", "entries"}`` form of :func:`forge.linalg.matrix_to_json`.
Errors carry a dotted field path such as ``sim.eps``.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .control import KINDS as CONTROL_KINDS
from .control import ControlError, ControlSchedule
from .linalg import density_matrix, hermitian, matrix_from_json, spin_operators
from .noise import KINDS as NOISE_KINDS
from .noise import NoiseModel, NoiseModelError, positivity_violation

EXPERIMENTS = ("gamma-of-t", "rates-vs-omega", "fig-compare", "spectra", "iso12", "oscillator",
               "custom", "acceptance")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class ExperimentConfig:
    experiment: str
    raw: dict
    seed: int = 0
    output: str = "out"
    spin: float = 0.5
    ops: tuple = ()
    noise: NoiseModel | None = None
    control: ControlSchedule | None = None
    sim: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def tau(self) -> float:
        return self.noise.tau if self.noise is not None else 1.0


def load_json(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(obj, dict):
        raise ConfigError("", "top level must be a JSON object")
    return obj


def _get(d: dict, key: str, path: str, kind, default: Any = ...):
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}".lstrip("."), "missing required field")
        return default
    val = d[key]
    ok = isinstance(val, kind) and not (kind in ((int, float), int, float) and isinstance(val, bool))
    if not ok:
        name = getattr(kind, "__name__", None) or "/".join(k.__name__ for k in kind)
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected {name}, got {type(val).__name__}")
    return val


NUM = (int, float)


def _operators(spec, spin: float, path: str) -> tuple:
    named = dict(zip("xyz", spin_operators(spin)))
    if spec == "iso":
        return tuple(named[k] for k in "xyz")
    if not isinstance(spec, list) or not spec:
        raise ConfigError(path, 'expected "iso" or a non-empty list of operators')
    out = []
    for i, item in enumerate(spec):
        if isinstance(item, str):
            if item not in named:
                raise ConfigError(f"{path}[{i}]", f"unknown operator {item!r}; use x, y or z")
            out.append(named[item])
        elif isinstance(item, dict):
            try:
                out.append(hermitian(matrix_from_json(item)))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"{path}[{i}]", str(exc))
        else:
            raise ConfigError(f"{path}[{i}]", "expected an axis name or a matrix object")
    dims = {h.shape[0] for h in out}
    if len(dims) != 1:
        raise ConfigError(path, f"operators have different dimensions {sorted(dims)}")
    return tuple(out)


def _noise(d: dict, n_ops: int) -> NoiseModel:
    kind = _get(d, "kind", "noise", str)
    if kind not in NOISE_KINDS:
        raise ConfigError("noise.kind", f"unknown kind {kind!r}; expected one of {NOISE_KINDS}")
    sigma = d.get("sigma", 1.0)
    if not (isinstance(sigma, NUM) or (isinstance(sigma, list) and all(isinstance(s, NUM) for s in sigma))):
        raise ConfigError("noise.sigma", "expected a number or a list of numbers")
    tau = _get(d, "tau", "noise", NUM, 1.0)
    omega0 = _get(d, "omega0", "noise", NUM, 0.0)
    channels = _get(d, "channels", "noise", int, len(sigma) if isinstance(sigma, list) else 1)
    if channels not in (1, n_ops):
        raise ConfigError("noise.channels", f"{channels} channels for {n_ops} noise operators")
    table = None
    if kind == "tabulated":
        tab = _get(d, "table", "noise", dict)
        table = (_get(tab, "t", "noise.table", list), _get(tab, "J", "noise.table", list))
    try:
        return NoiseModel(kind, sigma, float(tau), float(omega0), channels, table)
    except NoiseModelError as exc:
        raise ConfigError("noise", str(exc))


def _control(d: dict, spin: float, tau: float) -> ControlSchedule:
    kind = _get(d, "kind", "control", str, "none")
    if kind not in CONTROL_KINDS:
        raise ConfigError("control.kind", f"unknown kind {kind!r}; expected one of {CONTROL_KINDS}")
    try:
        if kind == "none":
            return ControlSchedule.none()
        if kind == "constant" and "hc" in d:
            return ControlSchedule.constant(matrix_from_json(d["hc"]))
        wct = _get(d, "omega_c_tau", "control", NUM)
        if not wct > 0:
            raise ConfigError("control.omega_c_tau", "must be positive")
        wc = wct / tau
        axis = _get(d, "axis", "control", str, "z" if kind == "constant" else "x")
        if axis not in ("x", "y", "z"):
            raise ConfigError("control.axis", f"unknown axis {axis!r}")
        if kind == "constant":
            return ControlSchedule.constant(wc * spin_operators(spin)["xyz".index(axis)])
        if kind == "bangbang-pi":
            return ControlSchedule.bangbang_pi(wc, spin, axis)
        if kind == "bangbang-iso12":
            return ControlSchedule.iso12(wc, spin)
        segs = _get(d, "segments", "control", list)
        parsed = []
        for i, seg in enumerate(segs):
            p = f"control.segments[{i}]"
            if not isinstance(seg, dict):
                raise ConfigError(p, "expected an object with fraction and unitary")
            parsed.append((_get(seg, "fraction", p, NUM), matrix_from_json(_get(seg, "unitary", p, dict))))
        return ControlSchedule.piecewise(wc, parsed)
    except (ControlError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("control", str(exc))


def default_dt(tau: float, omega_c: float) -> float:
    dt = tau / 20
    if omega_c > 0:
        dt = min(dt, 0.3 / omega_c)
    return dt


def _rho0(spec, dim: int) -> np.ndarray:
    if spec == "plus":
        psi = np.ones(dim) / np.sqrt(dim)
        return np.outer(psi, psi)
    if spec == "mixed":
        return np.eye(dim) / dim
    if spec == "up":
        r = np.zeros((dim, dim))
        r[0, 0] = 1
        return r
    if isinstance(spec, dict):
        return matrix_from_json(spec)
    raise ConfigError("sim.rho0", 'expected "plus", "mixed", "up" or a matrix object')


def _sim(d: dict, noise: NoiseModel, control: ControlSchedule, dim: int) -> dict:
    eps = _get(d, "eps", "sim", NUM, 0.15)
    if not 0 < eps < 1:
        raise ConfigError("sim.eps", "eps out of (0,1)")
    tau = noise.tau
    dt = float(_get(d, "dt", "sim", NUM, default_dt(tau, control.omega_c)))
    if not dt > 0:
        raise ConfigError("sim.dt", "must be positive")
    if noise.kind != "white" and tau / dt < 10 - 1e-12:
        raise ConfigError("sim.dt", f"dt={dt:g} does not resolve tau={tau:g} (need tau/dt >= 10)")
    if control.omega_c * dt > 0.3 + 1e-12:
        raise ConfigError("sim.dt", f"omega_c*dt = {control.omega_c * dt:.3g} exceeds 0.3")
    n_traj = _get(d, "n_traj", "sim", int, 500)
    if n_traj < 1:
        raise ConfigError("sim.n_traj", "must be >= 1")
    horizon = float(_get(d, "horizon", "sim", NUM, 2.0))
    n_points = _get(d, "n_points", "sim", int, 9)
    if not horizon > 0 or n_points < 2:
        raise ConfigError("sim", "horizon must be positive and n_points >= 2")
    try:
        rho0 = density_matrix(_rho0(d.get("rho0", "plus"), dim))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("sim.rho0", str(exc))
    return {"eps": float(eps), "dt": dt, "n_traj": n_traj, "horizon": horizon,
            "n_points": n_points, "rho0": rho0}


def parse_config(obj: dict) -> ExperimentConfig:
    """Structural and physical validation; returns the parsed config or raises ConfigError."""
    exp = _get(obj, "experiment", "", str)
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {exp!r}; expected one of {EXPERIMENTS}")
    seed = _get(obj, "seed", "", int, 0)
    output = _get(obj, "output", "", str, os.path.join("out", exp))
    params = _get(obj, "params", "", dict, {})
    system = _get(obj, "system", "", dict, {})
    spin = _get(system, "spin", "system", NUM, 0.5)
    if (2 * spin) % 1 != 0 or spin <= 0:
        raise ConfigError("system.spin", "must be a positive half-integer")
    cfg = ExperimentConfig(exp, obj, seed, output, float(spin), params=params)
    if "noise" in obj:
        cfg.ops = _operators(system.get("noise_ops", ["z"]), spin, "system.noise_ops")
        cfg.noise = _noise(_get(obj, "noise", "", dict), len(cfg.ops))
        cfg.control = _control(_get(obj, "control", "", dict, {}), spin, cfg.noise.tau)
        if cfg.control.kind == "constant" and cfg.control.hc.shape[0] != cfg.ops[0].shape[0]:
            raise ConfigError("control.hc", "dimension differs from the noise operators")
        if "sim" in obj or exp in ("fig-compare", "custom"):
            cfg.sim = _sim(_get(obj, "sim", "", dict, {}), cfg.noise, cfg.control, cfg.ops[0].shape[0])
    elif exp not in ("spectra", "acceptance"):
        raise ConfigError("noise", "missing required field")
    return cfg


def validate_config(path) -> dict:
    """``{"valid": bool, "errors": [...], "warnings": [...]}`` without running anything."""
    report = {"valid": True, "errors": [], "warnings": []}
    try:
        cfg = parse_config(load_json(path))
    except ConfigError as exc:
        report["valid"] = False
        report["errors"].append({"path": exc.path, "message": str(exc)})
        return report
    except OSError as exc:
        report["valid"] = False
        report["errors"].append({"path": "", "message": str(exc)})
        return report
    if cfg.noise is not None and cfg.noise.kind in ("damped-cosine", "tabulated"):
        # the constructor already scanned; a finer scan catches narrow dips
        top = cfg.noise.nyquist * 0.999 if math.isfinite(cfg.noise.nyquist) else 80.0 / cfg.noise.tau
        bad = positivity_violation(cfg.noise, np.linspace(0, top, 8001))
        if bad is not None:
            report["valid"] = False
            report["errors"].append({"path": "noise",
                                     "message": f"spectral density negative at omega={bad[0]:.6g}"})
    out = Path(cfg.output)
    parent = next((p for p in (out, *out.parents) if p.exists()), Path("."))
    if not os.access(parent, os.W_OK):
        report["valid"] = False
        report["errors"].append({"path": "output", "message": f"{out} is not writable"})
    return report
