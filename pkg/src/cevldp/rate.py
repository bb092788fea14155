"""
Rate functionals on grid paths.

``rate_I`` evaluates the state-space rate function, ``rate_script_I`` its
Lamperti-space counterpart, and ``functional_F`` the exponent of the
exponential martingale whose supremum over controls recovers ``rate_I``.
All quadratures are left-endpoint rectangle rules.

A grid path is read as its interpolant, which is absolutely continuous, so
the only source of an infinite rate at the discrete level is a nonzero
starting point.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .paths import ControlPath, GridPath, ModelParams, _drift_residual


class RateReason(str, enum.Enum):
    FINITE = "finite"
    NONZERO_START = "nonzero-start"
    NOT_ABSOLUTELY_CONTINUOUS = "not-absolutely-continuous-proxy"


@dataclass(frozen=True)
class RateValue:
    """A rate value that is either finite or an explicit infinity with its reason."""

    value: float
    reason: RateReason = RateReason.FINITE

    def __post_init__(self):
        if self.reason is RateReason.FINITE:
            if not (math.isfinite(self.value) and self.value >= 0):
                raise ValueError(f"finite rate must be a nonnegative real, got {self.value}")
        elif self.value != math.inf:
            raise ValueError("an infinite rate must carry value=inf")

    @classmethod
    def infinite(cls, reason: RateReason) -> "RateValue":
        return cls(math.inf, RateReason(reason))

    @property
    def is_finite(self) -> bool:
        return self.reason is RateReason.FINITE

    def __float__(self) -> float:
        return self.value


def rate_I(phi: GridPath, params: ModelParams) -> RateValue:
    """Discrete rate function of a nonnegative state path.

    The integrand ``((phi' - beta*phi)/phi**gamma)**2`` is evaluated through the
    chain rule in Lamperti coordinates and excised on intervals whose left node
    is zero.
    """
    if phi.values[0] > params.zero_threshold:
        return RateValue.infinite(RateReason.NONZERO_START)
    r = _drift_residual(phi, params)
    r[phi.values[:-1] <= params.zero_threshold] = 0.0
    return RateValue(phi.dt / (2.0 * params.sigma**2) * float(np.dot(r, r)))


def rate_script_I(psi: GridPath, params: ModelParams) -> RateValue:
    """Rate function of the Lamperti-transformed path ``psi``."""
    if psi.values[0] > params.zero_threshold:
        return RateValue.infinite(RateReason.NONZERO_START)
    q = params.lamperti_power
    v = psi.values
    r = np.diff(v) / psi.dt - params.beta * q * v[:-1]
    return RateValue(psi.dt / (2.0 * params.sigma**2 * q**2) * float(np.dot(r, r)))


def functional_F(phi: GridPath, h: ControlPath, eps: float, params: ModelParams) -> float:
    r"""Discrete exponent ``F^eps(phi, h)`` of the exponential martingale.

    .. math::

        F = h_T\phi_T - h_0\phi_0 - h_T\int_0^T b(\phi)\,ds
            - \int_0^T \Big(\phi_s - \int_0^s b(\phi_r)\,dr\Big)\dot h_s\,ds
            - \frac{\sigma^2}{2}\int_0^T h_s^2\phi_s^{2\gamma}\,ds

    with ``b(y) = alpha^eps(y) + beta*y`` and ``b = beta*y`` at ``eps = 0``.
    ``h`` is the running integral of ``h.hdot`` from ``h_0 = 0``.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if not h.matches(phi.horizon, phi.n):
        raise ValueError("control and path grids differ")
    dt = phi.dt
    v = phi.values
    if np.any(v < 0):
        raise ValueError("phi must be nonnegative")
    b = params.beta * v[:-1]
    if eps > 0:
        b = b + params.scaled_alpha(eps)(v[:-1])
    hv = h.values()
    drift_int = np.concatenate(([0.0], np.cumsum(b) * dt))  # int_0^{t_i} b, i = 0..N
    out = hv[-1] * v[-1] - hv[0] * v[0] - hv[-1] * drift_int[-1]
    out -= float(np.dot(v[:-1] - drift_int[:-1], h.hdot)) * dt
    out -= 0.5 * params.sigma**2 * float(np.dot(hv[:-1] ** 2, v[:-1] ** (2 * params.gamma))) * dt
    return float(out)


def dual_optimal_control(phi: GridPath, params: ModelParams) -> ControlPath:
    """Control maximising ``functional_F(phi, ., 0)``.

    Its running integral takes the values ``udot / (sigma * phi**gamma)`` on
    ``{phi > 0}`` and 0 on the zero set, with ``udot`` the minimal-norm control
    of ``phi``; ``h_0 = 0`` is free because ``phi_0 = 0``.
    """
    v = phi.values
    pos = v > params.zero_threshold
    udot = np.zeros_like(v)
    udot[:-1] = _drift_residual(phi, params) / params.sigma
    # right-continuous extension to the last node
    udot[-1] = udot[-2]
    hv = np.zeros_like(v)
    hv[pos] = udot[pos] / (params.sigma * v[pos] ** params.gamma)
    return ControlPath.from_values(hv, phi.horizon)

