"""
Analytic reference values: modified Bessel functions in log space, the
transition density of the pure CEV diffusion, and the critical exponent of
the integrated square-root process.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln, logsumexp
from scipy.stats import linregress

from .errors import ParameterError, UnsupportedCaseError
from .paths import ModelParams
from .variational import constant_cT, constant_nuT, omega_root

# absolute half-width of the band around the series/asymptotic switch in
# which both expansions are evaluated and compared
CROSSCHECK_BAND = 1.0
CROSSCHECK_TOL = 1e-9


def _switch(nu):
    return 30.0 + nu * nu


def _log_bessel_series(nu, z):
    # terms (z/2)^{2k+nu} / (k! Gamma(k+nu+1)); past k ~ z the ratio of
    # consecutive terms is below 1/4, so 60 extra terms are far below ulp
    k = np.arange(int(z) + 60, dtype=float)
    logs = (2 * k + nu) * math.log(z / 2) - gammaln(k + 1) - gammaln(k + nu + 1)
    return float(logsumexp(logs))


def _log_bessel_hankel(nu, z):
    # I_nu(z) ~ e^z / sqrt(2 pi z) sum_k (-1)^k a_k(nu) / z^k,
    # a_k = prod_{j<=k} (mu - (2j-1)^2) / (k! 8^k), mu = 4 nu^2
    mu = 4.0 * nu * nu
    total, term = 1.0, 1.0
    for j in range(1, 200):
        nxt = -term * (mu - (2 * j - 1) ** 2) / (j * 8.0 * z)
        if abs(nxt) >= abs(term):  # asymptotic series started diverging
            break
        total += nxt
        term = nxt
        if abs(term) < 1e-17 * abs(total):
            break
    return z - 0.5 * math.log(2 * math.pi * z) + math.log(total)


def log_bessel_I(nu: float, z: float) -> float:
    """``log I_nu(z)`` for ``nu >= 0``, ``z >= 0``.

    Power series summed in log space for ``z <= 30 + nu**2``, large-argument
    expansion beyond. Returns ``-inf`` at ``z = 0`` when ``nu > 0``.
    """
    if nu < 0 or z < 0 or not (math.isfinite(nu) and math.isfinite(z)):
        raise ParameterError(f"log_bessel_I needs nu >= 0 and finite z >= 0, got nu={nu}, z={z}")
    if z == 0.0:
        return 0.0 if nu == 0 else -math.inf
    s = _switch(nu)
    if abs(z - s) <= CROSSCHECK_BAND:
        a, b = _log_bessel_series(nu, z), _log_bessel_hankel(nu, z)
        if abs(a - b) > CROSSCHECK_TOL:
            warnings.warn(f"Bessel expansions disagree by {abs(a - b):.2e} at nu={nu}, z={z}", RuntimeWarning)
        return a if z <= s else b
    return _log_bessel_series(nu, z) if z <= s else _log_bessel_hankel(nu, z)


@dataclass(frozen=True)
class DensityPoint:
    y: float
    log_density: float


def _require_pure_cev(params):
    if not (params.alpha_is_constant and params.alpha == 0.0):
        raise UnsupportedCaseError("the explicit density needs alpha = 0 (pure CEV)")


def cev_scale(params: ModelParams, T: float) -> float:
    """``d(T) = (1-gamma) sigma^2 (1 - exp(-2 beta (1-gamma) T)) / (2 beta)``.

    Equal to ``(1-gamma)^2 sigma^2 T`` at ``beta = 0``.
    """
    q = params.lamperti_power
    x = 2.0 * params.beta * q * T
    ratio = 1.0 - x / 2.0 + x * x / 6.0 if abs(x) < 1e-8 else -math.expm1(-x) / x
    return q * q * params.sigma**2 * T * ratio


def _cev_log_density(y, params, T):
    q = params.lamperti_power
    g = params.gamma
    beta = params.beta
    x = params.x0
    d = cev_scale(params, T)
    nu = 1.0 / (2.0 * q)
    decay = math.exp(-beta * q * T)
    z = x**q * y**q * decay / d
    return (
        math.log(q)
        - math.log(d)
        + beta * T * (2.0 * g - 1.5)
        - (x ** (2 * q) + y ** (2 * q) * decay * decay) / (2.0 * d)
        + 0.5 * math.log(x)
        + (0.5 - 2.0 * g) * math.log(y)
        + log_bessel_I(nu, z)
    )


def cev_log_density(y: float, params: ModelParams, T: float) -> DensityPoint:
    """Log density of ``X_T`` at ``y > 0`` for ``dX = beta X dt + sigma X^gamma dB``, ``X_0 = x0``.

    The law also has an atom at 0, so the density integrates to less than 1.
    """
    _require_pure_cev(params)
    if not (y > 0 and math.isfinite(y)):
        raise ParameterError(f"y must be positive and finite, got {y}")
    if not T > 0:
        raise ParameterError("T must be positive")
    return DensityPoint(float(y), _cev_log_density(float(y), params, T))


def density_table(ys, params: ModelParams, T: float) -> list:
    return [cev_log_density(float(y), params, T) for y in ys]


def write_density_csv(points, fh) -> None:
    fh.write("y,log_density\n")
    for p in points:
        fh.write(f"{float(p.y)!r},{float(p.log_density)!r}\n")


@dataclass(frozen=True)
class SurvivalEstimate:
    log_survival: float
    truncation_bound: float  # bound on the neglected mass beyond 10 y, relative to the estimate


def cev_log_survival(y: float, params: ModelParams, T: float) -> SurvivalEstimate:
    """``log P(X_T >= y)`` by quadrature of the density over ``[y, 10 y]``.

    The neglected mass past ``10 y`` is bounded by ``f(10y) / |(log f)'(10y)|``,
    valid once ``log f`` is concave there (always true far in the tail).
    """
    _require_pure_cev(params)
    g0 = _cev_log_density(y, params, T)
    f = lambda s: math.exp(_cev_log_density(s, params, T) - g0)
    # the tail decays on the scale 1 / (c y^{1-2gamma}); help quad with breakpoints
    pts = np.geomspace(y, 10 * y, 12)[1:-1]
    mass, _ = integrate.quad(f, y, 10 * y, points=pts, limit=400, epsabs=0.0, epsrel=1e-11)
    log_s = g0 + math.log(mass)
    hi = 10 * y
    h = 1e-6 * hi
    slope = (_cev_log_density(hi + h, params, T) - _cev_log_density(hi - h, params, T)) / (2 * h)
    rel = math.exp(_cev_log_density(hi, params, T) - log_s) / abs(slope) if slope < 0 else math.inf
    return SurvivalEstimate(log_s, rel)


@dataclass(frozen=True)
class CriticalExponentResult:
    u_star: float
    always_finite_below: float
    gamma_star: float
    omega_star: float

    def to_json(self, fh) -> None:
        json.dump(asdict(self), fh, indent=2)


def cir_critical_exponent(params: ModelParams, T: float) -> CriticalExponentResult:
    """Critical exponent of ``E exp((u/T) int_0^T X dt)`` for the mean-reverting square-root diffusion.

    ``g*`` is the root of ``pi + arctan(g / beta) = T g / 2`` on ``(0, 2 pi / T)``
    and ``u* = T (beta^2 + g*^2) / (2 sigma^2)``.
    """
    if params.gamma != 0.5:
        raise UnsupportedCaseError("the critical exponent is only implemented for gamma = 1/2")
    beta = params.beta
    if not beta < 0:
        raise UnsupportedCaseError("the critical exponent is only implemented for beta < 0")
    if not T > 0:
        raise ParameterError("T must be positive")
    f = lambda g: math.pi + math.atan(g / beta) - 0.5 * T * g
    g_star = float(optimize.brentq(f, 0.0, 2 * math.pi / T, xtol=1e-14, rtol=1e-15))
    s2 = 2.0 * params.sigma**2
    return CriticalExponentResult(
        u_star=T * (beta**2 + g_star**2) / s2,
        always_finite_below=T * beta**2 / s2,
        gamma_star=g_star,
        omega_star=0.5 * T * g_star,
    )


# --- cross-checks between closed forms and oracles ---------------------------

SLOPE_GRID = np.linspace(100.0, 1000.0, 50)
# small start so the subleading Bessel and power terms do not bias the
# slope fit over the finite range y in [100, 1000]
SLOPE_X0 = 1e-4


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    passed: bool
    detail: str


def density_tail_slope(params: ModelParams, T: float, ys=SLOPE_GRID) -> float:
    """Least-squares slope of ``log f(y)`` against ``-y**(2(1-gamma))``."""
    ys = np.asarray(ys, dtype=float)
    lf = [cev_log_density(float(y), params, T).log_density for y in ys]
    return float(linregress(-(ys ** (2 * params.lamperti_power)), lf).slope)


def consistency_suite(T: float = 1.0) -> list:
    """Omega/arctan duality, ``u* = nu_T`` and density slope against ``c_T``."""
    out = []
    for beta in (-0.25, -1.0, -4.0):
        for t in (0.5, 1.0, 2.0):
            w = omega_root(beta, t)
            ws = cir_critical_exponent(ModelParams(beta=beta), t).omega_star
            out.append(CheckOutcome(f"omega-duality beta={beta} T={t}", abs(w - ws) <= 1e-9, f"|diff|={abs(w - ws):.2e}"))
    for beta in (-0.25, -1.0, -4.0):
        p = ModelParams(beta=beta)
        u, nu = cir_critical_exponent(p, T).u_star, constant_nuT(p, T)
        out.append(CheckOutcome(f"u*=nu_T beta={beta}", abs(u - nu) <= 1e-6, f"u*={u:.12g} nu_T={nu:.12g}"))
    for g in (0.5, 0.75):
        for beta in (-1.0, 0.0, 1.0):
            p = ModelParams(gamma=g, beta=beta, x0=SLOPE_X0)
            s, c = density_tail_slope(p, T), constant_cT(p, T)
            rel = abs(s / c - 1)
            out.append(CheckOutcome(f"density-slope gamma={g} beta={beta}", rel <= 0.02, f"slope={s:.6g} c_T={c:.6g} rel={rel:.2%}"))
    return out
