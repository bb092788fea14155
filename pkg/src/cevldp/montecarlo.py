"""
Tail probabilities by plain and importance-sampled Monte Carlo.

The tail event ``{F(X) >= R}`` for a functional ``F`` that is positively
homogeneous of degree one (terminal value, running maximum, weighted sums)
equals ``{F(X^eps) >= 1}`` with ``eps = R**-(1-gamma)``. Both forms are
supported; under the shared-seed contract they give the same paths up to
the factor ``R``.
"""
from __future__ import annotations

import csv
import enum
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ParameterError, WeightDegeneracyWarning
from .paths import ControlPath, ModelParams, cameron_martin_energy, control_from_path
from .sde import SimConfig, simulate_functionals
from .variational import ConstraintKind, ConstraintSpec, minimize_rate, terminal_minimizer

LEDGER_COLUMNS = ["kind", "R", "eps", "n_paths", "prob", "log_prob", "stderr", "entropy", "ess", "seed"]
ESS_WARN_FRACTION = 0.1


class Estimator(str, enum.Enum):
    PLAIN = "plain"
    IMPORTANCE = "importance-sampled"


@dataclass(frozen=True)
class TailQuery:
    """Event ``{F(X) >= level}`` and the estimator used for it.

    ``h`` is the control of the rescaled problem (level 1 at
    ``eps = level**-(1-gamma)``); it is required for the importance-sampled
    estimator. ``weights`` are the N+1 node weights of the weighted average.
    """

    kind: ConstraintKind
    level: float
    estimator: Estimator = Estimator.PLAIN
    h: Optional[ControlPath] = None
    weights: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        if not (math.isfinite(self.level) and self.level > 0):
            raise ParameterError(f"tail level must be positive, got {self.level}")
        if self.estimator is Estimator.IMPORTANCE and self.h is None:
            raise ParameterError("the importance-sampled estimator needs a control h")
        if self.kind is ConstraintKind.WEIGHTED_AVERAGE:
            if self.weights is None:
                raise ParameterError("weighted-average queries need weights")
            w = np.asarray(self.weights, dtype=float)
            if not np.all(np.isfinite(w)):
                raise ParameterError("weights must be finite")
            object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class TailEstimate:
    """Estimate of a tail probability.

    ``std_error`` is the standard error of ``probability``;
    ``log_std_error = std_error / probability`` its delta-method image on the
    log scale. ``upper_bound`` is the one-sided 95% Clopper-Pearson bound
    reported when no path hits the event. ``shifted_frequency`` is the event
    frequency under the sampling measure.
    """

    probability: float
    log_probability: float
    std_error: float
    n_paths: int
    entropy: float = 0.0
    effective_sample_size: float = 0.0
    log_std_error: float = math.inf
    upper_bound: Optional[float] = None
    shifted_frequency: float = 0.0
    kind: str = "terminal"
    level: float = 1.0
    epsilon: float = 1.0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, fh) -> None:
        json.dump(self.to_dict(), fh, indent=2)

    def ledger_row(self) -> dict:
        return {
            "kind": self.kind,
            "R": self.level,
            "eps": self.epsilon,
            "n_paths": self.n_paths,
            "prob": self.probability,
            "log_prob": self.log_probability,
            "stderr": self.std_error,
            "entropy": self.entropy,
            "ess": self.effective_sample_size,
            "seed": self.seed,
        }


def append_ledger(path, estimates: Sequence[TailEstimate]) -> None:
    """Append estimates to a CSV ledger, writing the header for a new file."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LEDGER_COLUMNS)
        if new:
            w.writeheader()
        for e in estimates:
            w.writerow(e.ledger_row())


def girsanov_entropy(h: ControlPath, eps: float) -> float:
    """Relative entropy of the shifted law: ``(1/(2 eps^2)) int hdot^2 dt``."""
    if not eps > 0:
        raise ParameterError("eps must be positive")
    return cameron_martin_energy(h) / eps**2


def entropy_lower_bound(q_of_A: float, entropy: float) -> float:
    """Lower bound ``log Q(A) - (1/e + H) / Q(A)`` for ``log P(A)``."""
    if not 0 <= q_of_A <= 1:
        raise ParameterError("q_of_A must be a probability")
    if entropy < 0:
        raise ParameterError("entropy must be >= 0")
    if q_of_A == 0:
        return -math.inf
    return math.log(q_of_A) - (math.exp(-1.0) + entropy) / q_of_A


def fit_tail_slope(levels, log_probs, gamma: float):
    """Least-squares slope (with intercept) of ``-log_probs`` against ``levels**(2(1-gamma))``.

    Returns ``(slope, stderr)``.
    """
    r = np.asarray(levels, dtype=float)
    lp = np.asarray(log_probs, dtype=float)
    if r.shape != lp.shape or r.size < 3:
        raise ParameterError("need at least 3 matching levels and log-probabilities")
    if not np.all(np.isfinite(lp)):
        raise ParameterError("log_probs must be finite")
    fit = stats.linregress(r ** (2 * (1 - gamma)), -lp)
    return float(fit.slope), float(fit.stderr)


def importance_control(
    kind, params: ModelParams, T: float, N: int, weights=None
) -> ControlPath:
    """Shift for the rescaled event ``{F(X^eps) >= 1}`` from its rate minimiser."""
    kind = ConstraintKind(kind)
    if kind is ConstraintKind.TERMINAL:
        res = terminal_minimizer(1.0, params, T, N)
    else:
        res = minimize_rate(ConstraintSpec(kind, 1.0, T, weights), params, N)
    return control_from_path(res.minimizer, params)


def _functional(query: TailQuery, summary, config: SimConfig):
    if query.kind is ConstraintKind.TERMINAL:
        return summary.terminal
    if query.kind is ConstraintKind.RUNNING_SUP:
        return summary.running_max
    return summary.weighted


def _node_weights(query: TailQuery, config: SimConfig):
    n = config.steps
    if query.kind is ConstraintKind.TIME_AVERAGE:
        w = np.full(n + 1, config.dt / config.horizon)
        w[-1] = 0.0
        return w
    if query.kind is ConstraintKind.WEIGHTED_AVERAGE:
        if query.weights.shape != (n + 1,):
            raise ParameterError(f"weights must have N+1 = {n + 1} entries")
        return query.weights
    return None


def estimate_tail(
    query: TailQuery,
    params: ModelParams,
    T: float,
    config: SimConfig,
    *,
    rescaled: bool = True,
    workers: int = 1,
) -> TailEstimate:
    """Estimate ``P(F(X) >= R)`` for the process started at ``params.x0``.

    Parameters
    ----------
    query : TailQuery
    params : ModelParams
    T : float
        Horizon; must equal ``config.horizon``.
    config : SimConfig
        Grid, path count, scheme and seed. Its ``epsilon`` is ignored: the
        run uses ``eps = R**-(1-gamma)`` with level 1 when ``rescaled`` is
        true, and ``eps = 1`` with level ``R`` otherwise.
    """
    if not math.isclose(T, config.horizon, rel_tol=1e-12):
        raise ParameterError(f"T = {T} differs from the simulation horizon {config.horizon}")
    R = query.level
    scale_eps = R ** -(1.0 - params.gamma)
    h = query.h
    if rescaled:
        cfg, level = config.replace(epsilon=scale_eps), 1.0
    else:
        cfg, level = config.replace(epsilon=1.0), R
        if h is not None:
            h = ControlPath(h.horizon, np.asarray(h.hdot) / scale_eps)
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="epsilon = .* > 1")
        s = simulate_functionals(params, cfg, h, _node_weights(query, cfg), workers=workers)
    hit = _functional(query, s, cfg) >= level
    n = cfg.n_paths
    common = dict(n_paths=n, kind=query.kind.value, level=R, epsilon=scale_eps, seed=cfg.seed)

    if query.estimator is Estimator.PLAIN:
        k = int(np.count_nonzero(hit))
        p = k / n
        if k == 0:
            return TailEstimate(
                probability=0.0,
                log_probability=-math.inf,
                std_error=0.0,
                effective_sample_size=float(n),
                upper_bound=1.0 - 0.05 ** (1.0 / n),
                **common,
            )
        se = math.sqrt(p * (1 - p) / n)
        return TailEstimate(
            probability=p,
            log_probability=math.log(p),
            std_error=se,
            effective_sample_size=float(n),
            log_std_error=se / p,
            shifted_frequency=p,
            **common,
        )

    # importance sampling: contributions 1_A exp(log w), reduced with fsum
    # so the result does not depend on chunking
    lw = s.log_weights[hit]
    entropy = girsanov_entropy(query.h, scale_eps)
    q_hit = hit.mean()
    if lw.size == 0:
        return TailEstimate(
            probability=0.0,
            log_probability=-math.inf,
            std_error=0.0,
            entropy=entropy,
            upper_bound=None,
            **common,
        )
    shift = float(lw.max())
    c = np.exp(lw - shift)  # scaled contributions on the event
    s1 = math.fsum(c)
    s2 = math.fsum(c * c)
    mean_scaled = s1 / n
    var_scaled = max(s2 / n - mean_scaled**2, 0.0) * n / (n - 1)
    log_p = shift + math.log(mean_scaled)
    rel_se = math.sqrt(var_scaled / n) / mean_scaled
    p = math.exp(log_p)
    ess = s1 * s1 / s2
    if ess < ESS_WARN_FRACTION * n:
        warnings.warn(
            f"effective sample size {ess:.0f} is below {ESS_WARN_FRACTION:.0%} of {n} paths",
            WeightDegeneracyWarning,
            stacklevel=2,
        )
    return TailEstimate(
        probability=p,
        log_probability=log_p,
        std_error=p * rel_se,
        entropy=entropy,
        effective_sample_size=ess,
        log_std_error=rel_se,
        shifted_frequency=float(q_hit),
        **common,
    )
