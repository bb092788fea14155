"""
Tail constants and minimisers of the rate function.

Closed forms live in Lamperti coordinates ``psi = phi**(1-gamma)``, where the
rate function is the quadratic action

    (1/(2 sigma^2 (1-gamma)^2)) int (psi' - beta(1-gamma) psi)^2 dt,

so the terminal problem is solved by a ``sinh`` profile and the time-average
problem (``gamma = 1/2``) by a Sturm-Liouville eigenfunction.

:func:`minimize_rate` handles the general constrained problem numerically. It
works with the control ``u`` (the minimal-norm ``hdot``) as unknown: ``psi``
follows from ``u`` by a first-order recursion and the discrete action equals
``0.5 * sum(u**2) * dt`` exactly, which keeps the problem well conditioned
at any grid size.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, signal

from .errors import ParameterError, UnsupportedCaseError
from .paths import GridPath, ModelParams, lamperti


@dataclass(frozen=True)
class VariationalConstants:
    c_T: float
    nu_T: Optional[float] = None
    omega: Optional[float] = None

    def __post_init__(self):
        if not self.c_T > 0:
            raise ParameterError("c_T must be positive")


def _check_T(T):
    if not (math.isfinite(T) and T > 0):
        raise ParameterError(f"horizon T must be positive, got {T}")


def constant_cT(params: ModelParams, T: float) -> float:
    """Leading-order tail constant ``c_T``.

    Evaluated as ``x / expm1(x) / (2 sigma^2 (1-gamma)^2 T)`` with
    ``x = 2 beta (1-gamma) T``, which is free of cancellation for small beta.
    """
    _check_T(T)
    q = params.lamperti_power
    x = 2.0 * params.beta * q * T
    if abs(x) < 1e-8:
        ratio = 1.0 - x / 2.0 + x * x / 12.0
    else:
        ratio = x / math.expm1(x) if x < 700 else x * math.exp(-x)
    return ratio / (2.0 * params.sigma**2 * q**2 * T)


def _sinh_profile(t, a, T):
    """``sinh(a t) / sinh(a T)``, overflow-free; the ramp ``t/T`` at ``a = 0``."""
    t = np.asarray(t, dtype=float)
    a = abs(a)
    if a * T < 1e-8:
        return t / T
    # e^{a(t-T)} (1 - e^{-2at}) / (1 - e^{-2aT})
    return np.exp(a * (t - T)) * (-np.expm1(-2 * a * t)) / (-math.expm1(-2 * a * T))


def _omega_b(beta, T, gamma):
    return T * beta * (1.0 - gamma)


def omega_root(beta: float, T: float, gamma: float = 0.5) -> float:
    """Frequency ``omega`` of the time-average minimiser.

    With ``b = T beta (1-gamma)`` (``T beta / 2`` for the square-root case):
    the root of ``omega cos(omega) = b sin(omega)`` in ``(0, pi)`` if ``b < 1``,
    0 if ``b = 1``, and the root of ``omega cosh(omega) = b sinh(omega)`` in
    ``(0, b)`` if ``b > 1``.
    """
    _check_T(T)
    b = _omega_b(beta, T, gamma)
    if b == 1.0:
        return 0.0
    if b < 1.0:
        # divide by omega so the root stays bracketed as b -> 1
        f = lambda w: math.cos(w) - b * np.sinc(w / math.pi)
        return float(optimize.brentq(f, 0.0, math.pi, xtol=1e-14, rtol=1e-15))
    g = lambda w: 1.0 - b * (math.tanh(w) / w if w > 0 else 1.0)
    if g(b) <= 0.0:  # tanh(b) == 1 in double precision
        return float(b)
    return float(optimize.brentq(g, 0.0, b, xtol=1e-14, rtol=1e-15))


def constant_nuT(params: ModelParams, T: float) -> float:
    """Time-average tail constant ``nu_T`` (square-root diffusion only)."""
    if params.gamma != 0.5:
        raise UnsupportedCaseError(
            "nu_T has a closed form only for gamma = 1/2; use minimize_rate with a time-average constraint"
        )
    w = omega_root(params.beta, T, 0.5)
    sign = 1.0 if T * params.beta / 2.0 < 1.0 else -1.0
    return (T * params.beta**2 + sign * 4.0 * w * w / T) / (2.0 * params.sigma**2)


def variational_constants(params: ModelParams, T: float) -> VariationalConstants:
    nu = w = None
    if params.gamma == 0.5:
        nu, w = constant_nuT(params, T), omega_root(params.beta, T)
    return VariationalConstants(constant_cT(params, T), nu, w)


class ConstraintKind(str, enum.Enum):
    TERMINAL = "terminal"
    RUNNING_SUP = "running-sup"
    TIME_AVERAGE = "time-average"
    WEIGHTED_AVERAGE = "weighted-average"


@dataclass(frozen=True)
class ConstraintSpec:
    """Event ``{functional(phi) >= level}`` for the variational problem.

    For ``weighted-average`` the functional is ``sum_i weights[i] * phi_i`` over
    the N+1 grid nodes, so quadrature weights are part of ``weights``.
    """

    kind: ConstraintKind
    level: float = 1.0
    T: float = 1.0
    weights: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        if not (math.isfinite(self.level) and self.level > 0):
            raise ParameterError(f"constraint level must be positive, got {self.level}")
        _check_T(self.T)
        if self.kind is ConstraintKind.WEIGHTED_AVERAGE:
            if self.weights is None:
                raise ParameterError("weighted-average constraint needs weights")
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 1 or not np.all(np.isfinite(w)):
                raise ParameterError("weights must be a finite 1-d sequence")
            if not np.any(w > 0):
                raise ParameterError("weights must have a positive entry for the event to be reachable")
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise ParameterError(f"weights are only used by the weighted-average kind, not {self.kind.value}")


@dataclass(frozen=True)
class VariationalResult:
    """Minimiser (state space) of a variational problem and its value.

    ``quadrature_tolerance`` bounds ``|rate_I(minimizer) - value|`` on the
    grid of ``minimizer``.
    """

    minimizer: GridPath
    value: float
    converged: bool
    iterations: int
    psi: Optional[GridPath] = None
    quadrature_tolerance: float = 0.0

    def to_dict(self, inline: bool = True, path_ref: Optional[str] = None) -> dict:
        out = {
            "value": self.value,
            "converged": self.converged,
            "iterations": self.iterations,
            "quadrature_tolerance": self.quadrature_tolerance,
        }
        if inline:
            out["minimizer"] = {"T": self.minimizer.horizon, "values": self.minimizer.values.tolist()}
        else:
            out["minimizer"] = path_ref
        return out

    def to_json(self, fh, inline: bool = True, path_ref: Optional[str] = None) -> None:
        json.dump(self.to_dict(inline, path_ref), fh, indent=2)


def _psi_action(psi, params, dt):
    """Discrete action of a psi path with every interval counted."""
    q = params.lamperti_power
    r = np.diff(psi) / dt - params.beta * q * psi[:-1]
    return dt / (2 * params.sigma**2 * q * q) * float(np.dot(r, r))


def terminal_minimizer(y: float, params: ModelParams, T: float, n: int = 1000) -> VariationalResult:
    """Closed-form minimiser of the rate function under ``phi_T >= y``.

    ``psi*_t = y**(1-gamma) sinh(a t) / sinh(a T)``, ``a = beta (1-gamma)``
    (the ramp when ``beta = 0``), with value ``y**(2(1-gamma)) c_T``.
    """
    if not y > 0:
        raise ParameterError("y must be positive")
    _check_T(T)
    q = params.lamperti_power
    a = params.beta * q
    t = np.linspace(0.0, T, n + 1)
    psi = y**q * _sinh_profile(t, a, T)
    psi[-1] = y**q
    value = y ** (2 * q) * constant_cT(params, T)
    # a-posteriori bound: the grid action (first interval excised, as in
    # rate_I) is O(dt) off; Richardson against the doubled grid.
    t2 = np.linspace(0.0, T, 2 * n + 1)
    coarse = _psi_action(psi, params, T / n)
    fine = _psi_action(y**q * _sinh_profile(t2, a, T), params, T / (2 * n))
    first = (psi[1] - (1 + a * T / n) * psi[0]) ** 2 / (T / n) / (2 * params.sigma**2 * q * q)
    tol = 4.0 * abs(coarse - fine) + first + 1e-12 * value
    psi_path = GridPath(T, psi)
    return VariationalResult(
        minimizer=lamperti(psi_path, params.gamma, "inverse"),
        value=value,
        converged=True,
        iterations=0,
        psi=psi_path,
        quadrature_tolerance=tol,
    )


# --- numerical minimisation ------------------------------------------------


class _ControlMap:
    """Linear map ``u -> psi`` of the Euler recursion and its adjoint.

    ``psi_0 = 0``, ``psi_{i+1} = (1 + a dt) psi_i + sigma (1-gamma) dt u_i``.
    """

    def __init__(self, params: ModelParams, T: float, n: int):
        self.n, self.dt = n, T / n
        self.rho = 1.0 + params.beta * params.lamperti_power * self.dt
        self.k = params.sigma * params.lamperti_power * self.dt

    def psi(self, u):
        out = np.empty(self.n + 1)
        out[0] = 0.0
        out[1:] = signal.lfilter([self.k], [1.0, -self.rho], u)
        return out

    def adjoint(self, v):
        # (J^T v)_i = k sum_{m > i} rho^{m-1-i} v_m
        return signal.lfilter([self.k], [1.0, -self.rho], v[1:][::-1])[::-1]

    def control(self, psi):
        return (psi[1:] - self.rho * psi[:-1]) / self.k


class _Constraint:
    """``G(psi) >= target`` with G positively homogeneous of degree ``deg``."""

    def __init__(self, spec: ConstraintSpec, params: ModelParams, n: int):
        q = params.lamperti_power
        self.kind = spec.kind
        self.p = 1.0 / q
        dt = spec.T / n
        if spec.kind in (ConstraintKind.TERMINAL, ConstraintKind.RUNNING_SUP):
            self.deg, self.target = 1.0, spec.level**q
            self.w = None
        else:
            self.deg, self.target = self.p, spec.level
            if spec.kind is ConstraintKind.TIME_AVERAGE:
                w = np.full(n + 1, dt / spec.T)
                w[-1] = 0.0
            else:
                w = spec.weights
                if w.shape != (n + 1,):
                    raise ParameterError(f"weights must have N+1 = {n + 1} entries, got {w.shape[0]}")
            self.w = w

    def value(self, psi):
        if self.kind is ConstraintKind.TERMINAL:
            return psi[-1]
        if self.kind is ConstraintKind.RUNNING_SUP:
            return psi.max()
        return float(np.dot(self.w, np.maximum(psi, 0.0) ** self.p))

    def grad(self, psi):
        g = np.zeros_like(psi)
        if self.kind is ConstraintKind.TERMINAL:
            g[-1] = 1.0
        elif self.kind is ConstraintKind.RUNNING_SUP:
            g[int(np.argmax(psi))] = 1.0
        else:
            g = self.w * self.p * np.maximum(psi, 0.0) ** (self.p - 1.0)
        return g


def _starts(spec: ConstraintSpec, params: ModelParams, t):
    T = spec.T
    s = t / T
    a = params.beta * params.lamperti_power
    shapes = [s, _sinh_profile(t, a, T)]
    if spec.kind in (ConstraintKind.TIME_AVERAGE, ConstraintKind.WEIGHTED_AVERAGE):
        shapes += [
            np.sin(0.5 * math.pi * s),
            np.sqrt(s),
            s**2,
            1.0 - (1.0 - s) ** 2,
            np.tanh(4.0 * s),
            np.sin(0.5 * math.pi * s) ** 2,
        ]
    return shapes


def _solve_one(start_psi, cmap, con, T, max_iter, tol):
    """Projected gradient on the PHR augmented Lagrangian, control metric."""
    dt = cmap.dt
    u = cmap.control(start_psi)
    target = con.target
    # least-squares multiplier estimate from the stationarity condition
    v = cmap.adjoint(con.grad(start_psi)) / (target * dt)
    lam = max(0.0, float(np.dot(u, v)) / max(float(np.dot(v, v)), 1e-300))
    rho = 10.0 * max(lam, 1.0)
    it = 0
    step = 1.0

    def lagrangian(u):
        psi = cmap.psi(u)
        g = con.value(psi) / target - 1.0
        m = max(0.0, lam - rho * g)
        return 0.5 * float(np.dot(u, u)) * dt + (m * m - lam * lam) / (2 * rho), psi, g, m

    def project(u):
        psi = np.maximum(cmap.psi(u), 0.0)
        return cmap.control(psi)

    prev_value = math.inf
    prev_viol = math.inf
    converged = False
    while it < max_iter:
        L, psi, g, m = lagrangian(u)
        # inner loop
        while it < max_iter:
            it += 1
            grad = u - m * cmap.adjoint(con.grad(psi)) / (target * dt)
            gnorm2 = float(np.dot(grad, grad)) * dt
            if gnorm2 == 0.0:
                break
            step = min(2.0 * step, 1e3)
            while True:
                u_new = project(u - step * grad)
                L_new, psi_new, g_new, m_new = lagrangian(u_new)
                d = u - u_new
                if L_new <= L - 1e-4 / step * float(np.dot(d, d)) * dt or step < 1e-14:
                    break
                step *= 0.5
            done = abs(L - L_new) <= tol * max(abs(L_new), 1e-300)
            u, L, psi, g, m = u_new, L_new, psi_new, g_new, m_new
            if done:
                break
        value = 0.5 * float(np.dot(u, u)) * dt
        viol = max(0.0, -g)
        lam = max(0.0, lam - rho * g)
        if viol < 1e-8 and abs(value - prev_value) <= 1e-9 * max(value, 1e-300):
            converged = True
            break
        if viol > 0.25 * prev_viol:
            rho = min(10.0 * rho, 1e10)
        prev_value, prev_viol = value, viol

    # rescale onto the constraint (homogeneity)
    psi = np.maximum(cmap.psi(u), 0.0)
    gv = con.value(psi)
    if gv > 0:
        psi = psi * (target / gv) ** (1.0 / con.deg)
    u = cmap.control(psi)
    return psi, u, converged, it


def minimize_rate(
    spec: ConstraintSpec,
    params: ModelParams,
    N: int,
    *,
    max_iter: int = 100_000,
    tol: float = 1e-10,
) -> VariationalResult:
    """Minimise the discrete rate function over paths from 0 satisfying ``spec``.

    Parameters
    ----------
    spec : ConstraintSpec
        Constraint kind, level ``y`` and horizon ``T``.
    params : ModelParams
        Only ``gamma``, ``sigma`` and ``beta`` enter.
    N : int
        Number of grid intervals, at least 100.
    max_iter : int
        Budget of gradient steps per start.
    tol : float
        Relative change of the augmented Lagrangian that ends an inner loop.

    Returns
    -------
    VariationalResult
        ``value`` is ``0.5 * sum(u**2) dt`` of the best start, which is the
        grid action with every interval counted; ``rate_I`` of the returned
        path drops the first interval (its left node is 0), and that term is
        the reported ``quadrature_tolerance``.

    The time-average constraint is nonconvex when ``gamma != 1/2``, so
    those kinds run from several deterministic starts and keep the lowest
    value (ties go to the earliest start).
    """
    if int(N) != N or N < 100:
        raise ParameterError(f"N must be an integer >= 100, got {N}")
    N = int(N)
    cmap = _ControlMap(params, spec.T, N)
    con = _Constraint(spec, params, N)
    t = np.linspace(0.0, spec.T, N + 1)
    best = None
    total = 0
    for shape in _starts(spec, params, t):
        psi0 = shape * (con.target / max(con.value(shape), 1e-300)) ** (1.0 / con.deg)
        psi, u, conv, it = _solve_one(psi0, cmap, con, spec.T, max_iter, tol)
        total += it
        value = 0.5 * float(np.dot(u, u)) * cmap.dt
        if best is None or value < best[0]:
            best = (value, psi, u, conv)
    value, psi, u, conv = best
    zero = psi[:-1] <= params.zero_threshold
    tol_q = 0.5 * cmap.dt * float(np.dot(u[zero], u[zero])) + 1e-12 * value
    psi_path = GridPath(spec.T, psi)
    return VariationalResult(
        minimizer=lamperti(psi_path, params.gamma, "inverse"),
        value=value,
        converged=conv,
        iterations=total,
        psi=psi_path,
        quadrature_tolerance=tol_q,
    )
