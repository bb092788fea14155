"""
Paths, controls and model coefficients
======================================

Grid paths live on the uniform grid ``t_i = i*T/N``. State paths ``phi``
and their Lamperti images ``psi = phi**(1 - gamma)`` share the same type;
controls are stored through their derivative, one value per grid interval
(piecewise-constant convention), with ``h_0 = 0``.

Discrete derivatives are forward differences with coefficients evaluated
at the left node of each interval. Derivatives of state paths are taken in
Lamperti coordinates, where the diffusion coefficient is constant and the
expression ``(phi' - beta*phi) / phi**gamma`` becomes
``(psi' - beta*(1 - gamma)*psi) / (1 - gamma)`` without any division by a
vanishing state.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DomainError, ParameterError

ZERO_RTOL = 1e-14


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TabulatedAlpha:
    """Piecewise-linear drift intercept ``alpha(x)`` given by a table.

    Values outside the table are extended as constants, so the function is
    bounded. The declared Lipschitz bound is checked against the table
    slopes, and the function must be nonnegative on ``[0, nonneg_radius]``.
    """

    x: np.ndarray
    values: np.ndarray
    lipschitz: float
    nonneg_radius: float

    def __post_init__(self):
        x = _readonly(self.x)
        v = _readonly(self.values)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)
        if x.ndim != 1 or x.shape != v.shape or x.size < 2:
            raise ParameterError("alpha table needs matching 1-d x and values with >= 2 nodes")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ParameterError("alpha table must be finite")
        if np.any(np.diff(x) <= 0):
            raise ParameterError("alpha table nodes must be strictly increasing")
        slopes = np.abs(np.diff(v) / np.diff(x))
        if slopes.max() > self.lipschitz * (1 + 1e-12):
            raise ParameterError(
                f"alpha table slope {slopes.max():g} exceeds the declared Lipschitz bound {self.lipschitz:g}"
            )
        if self.nonneg_radius <= 0:
            raise ParameterError("alpha must be nonnegative on a neighbourhood of 0 (nonneg_radius > 0)")
        probe = np.concatenate(([0.0, self.nonneg_radius], x[(x >= 0) & (x <= self.nonneg_radius)]))
        if np.any(self(probe) < 0):
            raise ParameterError("alpha must be >= 0 on [0, nonneg_radius]")

    def __call__(self, y):
        return np.interp(y, self.x, self.values)

    @property
    def bound(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "values": self.values.tolist(),
            "lipschitz": self.lipschitz,
            "nonneg_radius": self.nonneg_radius,
        }


Alpha = Union[float, TabulatedAlpha]


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of ``dX = (alpha(X) + beta*X) dt + sigma*X**gamma dB``, ``X_0 = x0``."""

    gamma: float = 0.5
    sigma: float = 1.0
    beta: float = 0.0
    alpha: Alpha = 0.0
    x0: float = 1.0

    def __post_init__(self):
        if not (0.5 <= self.gamma < 1.0):
            raise ParameterError(f"gamma must lie in [1/2, 1), got {self.gamma}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ParameterError(f"sigma must be > 0, got {self.sigma}")
        if not (self.x0 > 0 and math.isfinite(self.x0)):
            raise ParameterError(f"x0 must be > 0, got {self.x0}")
        if not math.isfinite(self.beta):
            raise ParameterError("beta must be finite")
        if isinstance(self.alpha, TabulatedAlpha):
            return
        try:
            a = float(self.alpha)
        except (TypeError, ValueError):
            raise ParameterError("alpha must be a constant or a TabulatedAlpha") from None
        if not (a >= 0 and math.isfinite(a)):
            raise ParameterError(f"constant alpha must be finite and >= 0, got {self.alpha}")
        object.__setattr__(self, "alpha", a)

    @property
    def alpha_is_constant(self) -> bool:
        return not isinstance(self.alpha, TabulatedAlpha)

    def alpha_at(self, y):
        """Evaluate ``alpha`` at the state(s) ``y``."""
        if self.alpha_is_constant:
            return np.full(np.shape(y), self.alpha) if np.ndim(y) else self.alpha
        return self.alpha(y)

    def scaled_alpha(self, eps: float) -> Callable:
        """Drift intercept of ``eps**(1/(1-gamma)) * X``.

        For a constant this is ``eps**p * alpha``; for a state-dependent
        intercept it is ``eps**p * alpha(x / eps**p)``, which keeps the
        rescaling exact path by path.
        """
        scale = eps ** (1.0 / (1.0 - self.gamma))
        if self.alpha_is_constant:
            a = scale * self.alpha
            return lambda y: a
        tab = self.alpha
        return lambda y: scale * tab(y / scale)

    @property
    def lamperti_power(self) -> float:
        return 1.0 - self.gamma

    @property
    def zero_threshold(self) -> float:
        return ZERO_RTOL * max(1.0, self.x0)

    def with_(self, **changes) -> "ModelParams":
        d = {k: getattr(self, k) for k in ("gamma", "sigma", "beta", "alpha", "x0")}
        d.update(changes)
        return ModelParams(**d)

    def to_dict(self) -> dict:
        alpha = self.alpha.to_dict() if isinstance(self.alpha, TabulatedAlpha) else self.alpha
        return {"gamma": self.gamma, "sigma": self.sigma, "beta": self.beta, "alpha": alpha, "x0": self.x0}


@dataclass(frozen=True)
class GridPath:
    """A real path sampled at ``t_i = i*horizon/N``, ``i = 0..N``."""

    horizon: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = _readonly(self.values)
        object.__setattr__(self, "values", v)
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ParameterError(f"horizon must be > 0, got {self.horizon}")
        if v.ndim != 1 or v.size < 2:
            raise ParameterError("a grid path needs at least two samples (N >= 1)")
        if not np.all(np.isfinite(v)):
            raise ParameterError("grid path samples must be finite")

    @classmethod
    def from_function(cls, f: Callable, horizon: float, n: int) -> "GridPath":
        t = np.linspace(0.0, horizon, n + 1)
        return cls(horizon, np.broadcast_to(f(t), t.shape))

    @property
    def n(self) -> int:
        return self.values.size - 1

    @property
    def dt(self) -> float:
        return self.horizon / self.n

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n + 1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            for t, v in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "GridPath":
        t, v = _read_two_columns(path, ("t", "value"))
        return cls(_horizon_from_nodes(t, len(t) - 1), v)


@dataclass(frozen=True)
class ControlPath:
    """A Cameron-Martin control ``h`` stored through ``hdot`` on each grid interval."""

    horizon: float
    hdot: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = _readonly(self.hdot)
        object.__setattr__(self, "hdot", v)
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ParameterError(f"horizon must be > 0, got {self.horizon}")
        if v.ndim != 1 or v.size < 1:
            raise ParameterError("a control needs at least one interval")
        if not np.all(np.isfinite(v)):
            raise ParameterError("control derivative must be finite")

    @classmethod
    def constant(cls, value: float, horizon: float, n: int) -> "ControlPath":
        return cls(horizon, np.full(n, float(value)))

    @classmethod
    def from_function(cls, f: Callable, horizon: float, n: int) -> "ControlPath":
        """Sample ``hdot = f(t)`` at the left node of every interval."""
        t = np.arange(n) * (horizon / n)
        return cls(horizon, np.broadcast_to(f(t), t.shape))

    @classmethod
    def from_values(cls, h, horizon: float) -> "ControlPath":
        """Build the control whose running integral passes through ``h_1..h_N`` (``h_0`` is 0)."""
        h = np.asarray(h, dtype=float)
        n = h.size - 1
        return cls(horizon, np.diff(np.concatenate(([0.0], h[1:]))) / (horizon / n))

    @property
    def n(self) -> int:
        return self.hdot.size

    @property
    def dt(self) -> float:
        return self.horizon / self.n

    @property
    def times(self) -> np.ndarray:
        """Left nodes of the grid intervals."""
        return np.arange(self.n) * self.dt

    def values(self) -> np.ndarray:
        """Running integral ``h_i``, ``i = 0..N``, starting from ``h_0 = 0``."""
        return np.concatenate(([0.0], np.cumsum(self.hdot) * self.dt))

    def matches(self, horizon: float, n: int) -> bool:
        return self.n == n and math.isclose(self.horizon, horizon, rel_tol=1e-12)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "hdot"])
            for t, v in zip(self.times, self.hdot):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "ControlPath":
        t, v = _read_two_columns(path, ("t", "hdot"))
        return cls(_horizon_from_nodes(t, len(t)), v)


def _read_two_columns(path, header):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(line for line in fh if not line.startswith("#")):
            if row:
                rows.append(row)
    if not rows or tuple(c.strip() for c in rows[0]) != header:
        raise ParameterError(f"{path}: expected CSV header {','.join(header)}")
    data = np.array([[float(c) for c in r] for r in rows[1:]])
    return data[:, 0], data[:, 1]


def _horizon_from_nodes(t, n_intervals):
    if len(t) < 2:
        raise ParameterError("need at least two grid nodes")
    step = t[1] - t[0]
    if not np.allclose(np.diff(t), step, rtol=1e-9, atol=0):
        raise ParameterError("grid must be uniform")
    return float(step * n_intervals)


def lamperti(path: GridPath, gamma: float, direction: str = "forward") -> GridPath:
    """Pointwise ``phi**(1-gamma)`` (forward) or ``psi**(1/(1-gamma))`` (inverse)."""
    if not (0.5 <= gamma < 1.0):
        raise ParameterError(f"gamma must lie in [1/2, 1), got {gamma}")
    v = path.values
    neg = np.flatnonzero(v < 0)
    if neg.size:
        i = int(neg[0])
        raise DomainError(f"negative sample {v[i]!r} at index {i}")
    if direction == "forward":
        out = v ** (1.0 - gamma)
    elif direction == "inverse":
        out = v ** (1.0 / (1.0 - gamma))
    else:
        raise ParameterError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return GridPath(path.horizon, out)


def _drift_residual(phi: GridPath, params: ModelParams) -> np.ndarray:
    """``(psi' - beta*(1-gamma)*psi) / (1-gamma)`` on each interval, ``psi = phi**(1-gamma)``.

    Equals ``(phi' - beta*phi) / phi**gamma`` for smooth positive paths.
    """
    q = params.lamperti_power
    psi = lamperti(phi, params.gamma).values
    return (np.diff(psi) / phi.dt - params.beta * q * psi[:-1]) / q


def control_from_path(phi: GridPath, params: ModelParams) -> ControlPath:
    """Minimal-norm control steering the degenerate ODE along ``phi``.

    ``hdot = (phi' - beta*phi) / (sigma*phi**gamma)`` where ``phi > 0`` and 0 on
    the zero set (left node below the zero threshold).
    """
    hdot = _drift_residual(phi, params) / params.sigma
    hdot[phi.values[:-1] <= params.zero_threshold] = 0.0
    return ControlPath(phi.horizon, hdot)


def cameron_martin_energy(h: ControlPath) -> float:
    """``0.5 * sum(hdot**2) * dt``."""
    return 0.5 * float(np.dot(h.hdot, h.hdot)) * h.dt


def holder_norm(path: GridPath, eta: float) -> float:
    """Discrete eta-Hoelder seminorm: max over node pairs of ``|w_i - w_j| / |t_i - t_j|**eta``."""
    if not (0.0 < eta < 0.5):
        raise ParameterError(f"eta must lie in (0, 1/2), got {eta}")
    v = path.values
    best = 0.0
    for lag in range(1, v.size):
        inc = np.max(np.abs(v[lag:] - v[:-lag]))
        best = max(best, inc / (lag * path.dt) ** eta)
    return float(best)
