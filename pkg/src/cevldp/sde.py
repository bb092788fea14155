"""
Simulation of the rescaled and Girsanov-shifted diffusions
==========================================================

The rescaled process ``X^eps = eps**(1/(1-gamma)) X`` solves

    dX = (alpha^eps(X) + beta X + sigma X^gamma hdot) dt + eps sigma X^gamma dW,

with ``X_0 = eps**(1/(1-gamma)) x0`` and ``hdot = 0`` for the unshifted
process. Two schemes are available:

``full-truncation-euler``
    coefficients evaluated at ``max(X, 0)``; the iterate itself is not
    clamped, the reported state is ``max(X, 0)``.
``cir-exact``
    exact transition of the square-root diffusion (``gamma = 1/2``,
    constant ``alpha``, no shift) through its Poisson mixture of gamma laws.

Random numbers come from counter-based Philox substreams keyed by
``(seed, block)``, each block holding ``BLOCK_SIZE`` consecutive paths. A
path therefore sees the same increments whatever ``n_paths``, the chunking
or the number of workers, and the shifted and unshifted processes share
their Brownian increments.
"""
from __future__ import annotations

import json
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    NegativeControlWarning,
    ParameterError,
    SimulationError,
    WeakConvergenceWarning,
)
from .paths import ControlPath, GridPath, ModelParams

BLOCK_SIZE = 1024
CHUNK_BLOCKS = 8
SCHEMES = ("full-truncation-euler", "cir-exact")


@dataclass(frozen=True)
class SimConfig:
    epsilon: float = 1.0
    steps: int = 500
    n_paths: int = 1000
    scheme: str = "full-truncation-euler"
    seed: int = 0
    horizon: float = 1.0

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ParameterError(f"steps must be a positive integer, got {self.steps}")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ParameterError(f"n_paths must be a positive integer, got {self.n_paths}")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not (0 <= int(self.seed) < 2**64) or int(self.seed) != self.seed:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ParameterError(f"horizon must be > 0, got {self.horizon}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "steps": self.steps,
            "n_paths": self.n_paths,
            "scheme": self.scheme,
            "seed": self.seed,
            "horizon": self.horizon,
        }

    def replace(self, **changes) -> "SimConfig":
        d = self.to_dict()
        d.update(changes)
        return SimConfig(**d)


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated state paths (rows) on a uniform grid, with importance log-weights."""

    horizon: float
    paths: np.ndarray = field(repr=False)
    log_weights: np.ndarray = field(repr=False)
    config: Optional[SimConfig] = None
    params: Optional[ModelParams] = None

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def n(self) -> int:
        return self.paths.shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n + 1)

    def path(self, k: int) -> GridPath:
        return GridPath(self.horizon, self.paths[k])

    def header(self) -> dict:
        return {
            "config": self.config.to_dict() if self.config else None,
            "params": self.params.to_dict() if self.params else None,
        }

    def to_csv(self, fh) -> None:
        """Write ``path_id,t,value`` rows, preceded by a ``#`` header with the run configuration."""
        fh.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
        fh.write("path_id,t,value\n")
        t = self.times
        for k in range(self.n_paths):
            for ti, v in zip(t, self.paths[k]):
                fh.write(f"{k},{float(ti)!r},{float(v)!r}\n")

    def to_binary(self, fh) -> None:
        """Compact little-endian layout.

        ``b"CEVENS01"``, then ``<QQdQQ``: N, n_paths, T, seed, length of a
        UTF-8 JSON header; the JSON header; ``n_paths*(N+1)`` float64 states
        (path-major); ``n_paths`` float64 log-weights.
        """
        head = json.dumps(self.header(), sort_keys=True).encode()
        seed = self.config.seed if self.config else 0
        fh.write(MAGIC)
        fh.write(struct.pack("<QQdQQ", self.n, self.n_paths, self.horizon, seed, len(head)))
        fh.write(head)
        fh.write(np.ascontiguousarray(self.paths, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(self.log_weights, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, fh) -> "PathEnsemble":
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError("not a path ensemble file")
        n, n_paths, horizon, _seed, hlen = struct.unpack("<QQdQQ", fh.read(40))
        head = json.loads(fh.read(hlen).decode())
        paths = np.frombuffer(fh.read(8 * n_paths * (n + 1)), dtype="<f8").reshape(n_paths, n + 1)
        lw = np.frombuffer(fh.read(8 * n_paths), dtype="<f8")
        cfg = SimConfig(**head["config"]) if head.get("config") else None
        return cls(horizon, paths.copy(), lw.copy(), cfg, None)


MAGIC = b"CEVENS01"


@dataclass(frozen=True)
class EnsembleSummary:
    """Per-path functionals of a simulated ensemble (no stored trajectories)."""

    terminal: np.ndarray
    running_max: np.ndarray
    weighted: Optional[np.ndarray]
    log_weights: np.ndarray


def _block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _validate(params: ModelParams, config: SimConfig, h: Optional[ControlPath]) -> Optional[np.ndarray]:
    if config.scheme == "cir-exact":
        if params.gamma != 0.5 or not params.alpha_is_constant:
            raise ParameterError("cir-exact requires gamma = 1/2 and a constant alpha")
        if h is not None:
            raise ParameterError("cir-exact does not support a Girsanov shift; use full-truncation-euler")
    if config.epsilon > 1:
        warnings.warn(f"epsilon = {config.epsilon} > 1: the rescaled start exceeds x0", stacklevel=3)
    if h is None:
        return None
    if not h.matches(config.horizon, config.steps):
        raise ParameterError(
            f"control grid (T={h.horizon}, N={h.n}) does not match the simulation grid "
            f"(T={config.horizon}, N={config.steps})"
        )
    return np.asarray(h.hdot)


def _run_chunk(params, config, hdot, first_block, n_blocks, keep_paths, weights):
    """Simulate the paths of blocks ``first_block .. first_block + n_blocks - 1``.

    Every block is simulated in full and truncated to the live paths, so the
    draws of a path never depend on ``n_paths``.
    """
    eps, n, dt = config.epsilon, config.steps, config.dt
    start = first_block * BLOCK_SIZE
    live = min(config.n_paths, (first_block + n_blocks) * BLOCK_SIZE) - start
    m = n_blocks * BLOCK_SIZE
    p = 1.0 / (1.0 - params.gamma)
    alpha_eps = params.scaled_alpha(eps)
    gens = [_block_generator(config.seed, b) for b in range(first_block, first_block + n_blocks)]

    x = np.full(m, eps**p * params.x0)
    pos = x.copy()
    paths = np.empty((m, n + 1)) if keep_paths else None
    if keep_paths:
        paths[:, 0] = pos
    running_max = pos.copy()
    acc = weights[0] * pos if weights is not None else None
    shift_noise = np.zeros(m)

    def record(i, pos):
        if keep_paths:
            paths[:, i] = pos
        np.maximum(running_max, pos, out=running_max)
        if acc is not None:
            np.add(acc, weights[i] * pos, out=acc)

    if config.scheme == "full-truncation-euler":
        dw = np.concatenate([g.standard_normal((n, BLOCK_SIZE)) for g in gens], axis=1)
        dw *= math.sqrt(dt)
        for i in range(n):
            vol = params.sigma * pos**params.gamma
            drift = alpha_eps(pos) + params.beta * pos
            if hdot is not None:
                drift = drift + vol * hdot[i]
                shift_noise += hdot[i] * dw[i]
            x = x + drift * dt + eps * vol * dw[i]
            _check_finite(x[:live], i + 1, start)
            pos = np.maximum(x, 0.0)
            record(i + 1, pos)
    else:
        # X_{t+dt} = c * chi2'(df, X_t e^{beta dt} / c), df = 4 alpha / sigma^2,
        # sampled as 2c * Gamma(df/2 + K), K ~ Poisson(X_t e^{beta dt} / (2c))
        sig = eps * params.sigma
        beta = params.beta
        c = sig**2 * (math.expm1(beta * dt) / beta if beta != 0 else dt) / 4.0
        half_df = 2.0 * eps**p * params.alpha / sig**2
        growth = math.exp(beta * dt)
        for i in range(n):
            lam = 0.5 * x * growth / c
            for j, g in enumerate(gens):
                blk = slice(j * BLOCK_SIZE, (j + 1) * BLOCK_SIZE)
                k = g.poisson(lam[blk])
                x[blk] = 2.0 * c * g.standard_gamma(half_df + k)
            _check_finite(x[:live], i + 1, start)
            pos = x
            record(i + 1, pos)

    if hdot is not None:
        energy = float(np.dot(hdot, hdot)) * dt
        log_w = -shift_noise / eps - energy / (2.0 * eps**2)
    else:
        log_w = np.zeros(m)
    cut = slice(0, live)
    return (
        paths[cut] if keep_paths else None,
        pos[cut].copy(),
        running_max[cut],
        acc[cut] if acc is not None else None,
        log_w[cut],
    )


def _check_finite(x, step, offset):
    if not np.isfinite(x).all():
        k = int(np.flatnonzero(~np.isfinite(x))[0])
        raise SimulationError(
            f"non-finite state on path {offset + k} at step {step}", path_index=offset + k, step=step
        )


def _chunks(config):
    n_blocks = -(-config.n_paths // BLOCK_SIZE)
    return [(b, min(CHUNK_BLOCKS, n_blocks - b)) for b in range(0, n_blocks, CHUNK_BLOCKS)]


def _map_chunks(fn, chunks, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, chunks))
    return [fn(c) for c in chunks]


def simulate(
    params: ModelParams,
    config: SimConfig,
    h: Optional[ControlPath] = None,
    *,
    workers: int = 1,
) -> PathEnsemble:
    """Simulate ``config.n_paths`` trajectories of the rescaled (or shifted) process.

    With a control ``h`` the process carries the extra drift
    ``sigma * X**gamma * hdot`` and each path gets the log-likelihood ratio
    ``-(1/eps) sum hdot dW - (1/(2 eps**2)) sum hdot**2 dt`` that reweights
    the shifted law back to the unshifted one.
    """
    hdot = _validate(params, config, h)
    parts = _map_chunks(
        lambda c: _run_chunk(params, config, hdot, c[0], c[1], True, None), _chunks(config), workers
    )
    paths = np.concatenate([p[0] for p in parts])
    log_w = np.concatenate([p[4] for p in parts])
    return PathEnsemble(config.horizon, paths, log_w, config, params)


def simulate_functionals(
    params: ModelParams,
    config: SimConfig,
    h: Optional[ControlPath] = None,
    weights=None,
    *,
    workers: int = 1,
) -> EnsembleSummary:
    """Terminal value, running maximum and ``sum_i weights_i X_i`` of every path.

    Same trajectories as :func:`simulate`, without storing them.
    """
    hdot = _validate(params, config, h)
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (config.steps + 1,) or not np.all(np.isfinite(weights)):
            raise ParameterError("weights must be N+1 finite values on the simulation grid")
    parts = _map_chunks(
        lambda c: _run_chunk(params, config, hdot, c[0], c[1], False, weights), _chunks(config), workers
    )
    weighted = np.concatenate([p[3] for p in parts]) if weights is not None else None
    return EnsembleSummary(
        terminal=np.concatenate([p[1] for p in parts]),
        running_max=np.concatenate([p[2] for p in parts]),
        weighted=weighted,
        log_weights=np.concatenate([p[4] for p in parts]),
    )


def solve_controlled_ode(y0: float, h: ControlPath, params: ModelParams) -> GridPath:
    """Solve ``psi' = beta(1-gamma) psi + sigma(1-gamma) hdot``, ``psi_0 = y0``.

    Variation of constants, with the integral of the piecewise-constant
    ``hdot`` against ``exp(-a s)`` computed exactly on every interval.
    """
    q = params.lamperti_power
    a = params.beta * q
    t = np.concatenate((h.times, [h.horizon]))
    if a == 0.0:
        kernel = np.full(h.n, h.dt)
    else:
        # int_{t_i}^{t_{i+1}} e^{-a s} ds
        kernel = -np.exp(-a * t[:-1]) * np.expm1(-a * h.dt) / a
    integral = np.concatenate(([0.0], np.cumsum(kernel * h.hdot)))
    psi = np.exp(a * t) * (y0 + params.sigma * q * integral)
    return GridPath(h.horizon, psi)


def particular_solution(h: ControlPath, params: ModelParams) -> GridPath:
    """The positive solution of the degenerate control ODE selected by vanishing noise.

    ``phi*_t = exp(beta t) (sigma (1-gamma) int_0^t exp(-beta(1-gamma) s) hdot_s ds)**(1/(1-gamma))``;
    negative values of the inner integral are clamped to 0 with a
    :class:`NegativeControlWarning`.
    """
    psi = solve_controlled_ode(0.0, h, params).values
    if np.any(psi < 0):
        warnings.warn(
            "the controlled ODE went negative; clamped at zero (use hdot >= 0)",
            NegativeControlWarning,
            stacklevel=2,
        )
        psi = np.maximum(psi, 0.0)
    return GridPath(h.horizon, psi ** (1.0 / params.lamperti_power))


def check_weak_convergence_conditions(h: ControlPath, params: ModelParams, *, window: float = 0.05) -> bool:
    """Check that ``S_0(h) > 0`` on ``(0, T]`` and ``hdot`` is bounded away from 0 near 0.

    Warns with :class:`WeakConvergenceWarning` when either fails; the
    convergence still holds for limits of controls satisfying them.
    """
    psi = solve_controlled_ode(0.0, h, params).values
    ok = True
    if np.any(psi[1:] <= 0):
        warnings.warn("S_0(h) is not strictly positive on (0, T]", WeakConvergenceWarning, stacklevel=2)
        ok = False
    near = h.hdot[: max(1, int(math.ceil(window * h.n)))]
    if np.min(near) <= 0:
        warnings.warn("hdot is not bounded away from 0 near t = 0", WeakConvergenceWarning, stacklevel=2)
        ok = False
    return ok


@dataclass(frozen=True)
class LadderRung:
    epsilon: float
    mean_path: np.ndarray
    phi_star: np.ndarray
    sup_distance: float  # sup_t |mean_path - phi_star|


def mean_path_ladder(params: ModelParams, h: ControlPath, eps_values, n_paths: int, *, seed: int = 0, workers: int = 1):
    """Ensemble means of the shifted process along decreasing ``eps``.

    The means approach the positive solution ``phi*`` of the control ODE
    as ``eps -> 0``; every rung reuses the same seed.
    """
    phi = particular_solution(h, params).values
    out = []
    for eps in eps_values:
        cfg = SimConfig(epsilon=float(eps), steps=h.n, n_paths=n_paths, seed=seed, horizon=h.horizon)
        s = simulate(params, cfg, h, workers=workers)
        m = s.paths.mean(axis=0)
        out.append(LadderRung(float(eps), m, phi, float(np.max(np.abs(m - phi)))))
    return out
