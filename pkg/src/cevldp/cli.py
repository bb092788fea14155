"""
Command-line entry point ``cevldp``.

Every artifact carries the fully resolved configuration (model, simulation
settings, seed) in its header: a leading ``# {json}`` line for CSV output
and a ``"config"`` member for JSON output. Relative ``--output`` paths are
resolved against ``$CEVLDP_OUTPUT_DIR`` when it is set.

Exit status: 0 on success, 2 when an input violates an invariant (bad flag,
invalid parameter, unwritable output), 3 on a numerical failure at run time
(non-finite simulation state, failed consistency check).
"""
from __future__ import annotations

import argparse
import contextlib
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .errors import SimulationError
from .montecarlo import (
    LEDGER_COLUMNS,
    Estimator,
    TailQuery,
    estimate_tail,
    fit_tail_slope,
    importance_control,
)
from .oracles import consistency_suite
from .paths import ControlPath, GridPath, ModelParams, lamperti
from .rate import rate_I, rate_script_I
from .sde import SimConfig, mean_path_ladder, simulate
from .variational import (
    ConstraintSpec,
    constant_cT,
    constant_nuT,
    minimize_rate,
    omega_root,
)

OUTPUT_DIR_ENV = "CEVLDP_OUTPUT_DIR"
EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3


class ValidationError(Exception):
    pass


def _float_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _model_flags(p, x0_default=1.0, alpha_default=0.0, sigma_default=1.0):
    g = p.add_argument_group("model (dX = (alpha + beta X) dt + sigma X^gamma dB)")
    g.add_argument("--gamma", type=float, default=0.5, help="elasticity exponent gamma in [1/2, 1) (dimensionless)")
    g.add_argument("--sigma", type=float, default=sigma_default, help="volatility sigma > 0 (state^(1-gamma) / time^(1/2))")
    g.add_argument("--beta", type=float, default=0.0, help="linear drift slope beta (1 / time)")
    g.add_argument("--alpha", type=float, default=alpha_default, help="constant drift intercept alpha >= 0 (state / time)")
    g.add_argument("--x0", type=float, default=x0_default, help="initial state x0 > 0 (state units)")


def _horizon_flag(p):
    p.add_argument("--T", type=float, default=1.0, help="time horizon T > 0 (time units)")


def _sim_flags(p, steps=500, paths=1000, eps=True):
    g = p.add_argument_group("simulation")
    if eps:
        g.add_argument("--eps", type=float, default=1.0, help="noise scale epsilon > 0 (dimensionless)")
    g.add_argument("--steps", type=int, default=steps, help="number of time steps N (count)")
    g.add_argument("--paths", type=int, default=paths, help="number of simulated paths (count)")
    g.add_argument(
        "--scheme",
        choices=("full-truncation-euler", "cir-exact"),
        default="full-truncation-euler",
        help="discretisation scheme",
    )
    g.add_argument("--seed", type=int, default=0, help="root seed of the Philox substreams (integer)")
    g.add_argument("--workers", type=int, default=1, help="threads used for path generation (count)")


def _output_flags(p, formats=("csv", "json"), default="json"):
    p.add_argument("--output", "-o", default=None, help="output file (stdout if omitted)")
    p.add_argument("--format", choices=formats, default=default, help="output format")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cevldp",
        description="Small-noise and tail large deviations of CEV / CIR diffusions.",
        epilog=f"Relative --output paths are placed under ${OUTPUT_DIR_ENV} when set. "
        "Exit codes: 0 ok, 2 invalid input, 3 numerical failure.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="tail constants c_T, nu_T and omega")
    _model_flags(p)
    _horizon_flag(p)
    _output_flags(p)

    p = sub.add_parser("simulate", help="simulate the rescaled (optionally shifted) process")
    _model_flags(p)
    _horizon_flag(p)
    _sim_flags(p, paths=10)
    p.add_argument("--hdot", type=float, default=None, help="constant shift control hdot (1 / time^(1/2))")
    p.add_argument("--control", default=None, help="CSV file t,hdot with a piecewise-constant shift control")
    _output_flags(p, default="csv")

    p = sub.add_parser("rate", help="rate function of a path stored as CSV t,value")
    _model_flags(p)
    p.add_argument("--path", required=True, help="CSV file t,value on a uniform grid starting at t=0")
    p.add_argument("--lamperti", action="store_true", help="the file holds psi = phi^(1-gamma) instead of phi")
    _output_flags(p)

    p = sub.add_parser("minimize", help="numerically minimise the rate function under a tail constraint")
    _model_flags(p)
    _horizon_flag(p)
    p.add_argument(
        "--kind",
        choices=("terminal", "running-sup", "time-average", "weighted-average"),
        default="terminal",
        help="constrained functional",
    )
    p.add_argument("--level", type=float, default=1.0, help="constraint level y > 0 (state units)")
    p.add_argument("--N", type=int, default=2000, help="grid intervals (count, >= 100)")
    p.add_argument("--weights", default=None, help="CSV file t,value with N+1 node weights (weighted-average)")
    _output_flags(p)

    p = sub.add_parser("tails", help="Monte Carlo tail probabilities over a list of levels")
    _model_flags(p, alpha_default=1.0, sigma_default=2.0)
    _horizon_flag(p)
    _sim_flags(p, steps=1000, paths=100_000, eps=False)
    p.add_argument("--kind", choices=("terminal", "running-sup", "time-average"), default="terminal", help="tail event")
    p.add_argument("--R", type=_float_list, default=[20.0, 40.0, 60.0, 80.0, 100.0], help="comma-separated levels R (state units)")
    p.add_argument("--estimator", choices=("plain", "importance-sampled"), default="importance-sampled", help="estimator")
    p.add_argument("--direct", action="store_true", help="simulate at eps=1 with level R instead of the rescaled problem")
    p.add_argument("--parallel", action="store_true", help="run the levels concurrently (output order is unchanged)")
    _output_flags(p, default="csv")

    p = sub.add_parser("figure1", help="ensemble means of the shifted process along an eps ladder")
    _model_flags(p, x0_default=1e-8, alpha_default=1.0, sigma_default=2.0)
    _horizon_flag(p)
    p.add_argument("--hdot", type=float, default=1.0, help="constant shift control hdot (1 / time^(1/2))")
    p.add_argument("--eps", type=_float_list, default=[0.4, 0.2, 0.1, 0.05], help="comma-separated noise scales (dimensionless)")
    p.add_argument("--paths", type=int, default=2000, help="paths per noise scale (count)")
    p.add_argument("--steps", type=int, default=1000, help="number of time steps N (count)")
    p.add_argument("--seed", type=int, default=0, help="root seed (integer)")
    p.add_argument("--workers", type=int, default=1, help="threads used for path generation (count)")
    _output_flags(p, default="csv")

    p = sub.add_parser("check", help="run a consistency suite; exit 0 iff every check passes")
    p.add_argument("--suite", choices=("oracle-consistency",), required=True, help="suite name")
    _horizon_flag(p)
    _output_flags(p)
    return ap


def _params(a) -> ModelParams:
    return ModelParams(gamma=a.gamma, sigma=a.sigma, beta=a.beta, alpha=a.alpha, x0=a.x0)


def _resolve_output(path):
    if path is None:
        return None
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(path):
        path = os.path.join(base, path)
    d = os.path.dirname(path) or "."
    if not os.path.isdir(d) or not os.access(d, os.W_OK):
        raise ValidationError(f"output directory {d!r} does not exist or is not writable")
    return path


@contextlib.contextmanager
def _sink(path):
    if path is None:
        yield sys.stdout
        return
    buf = io.StringIO()
    yield buf
    try:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise ValidationError(f"cannot write {path!r}: {exc}") from None


def _csv_row(*values):
    # repr round-trips doubles exactly
    return ",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in values) + "\n"


def _header(fh, config):
    fh.write("# " + json.dumps(config, sort_keys=True) + "\n")


def _emit_json(fh, config, payload):
    json.dump({"config": config, **payload}, fh, indent=2, allow_nan=True)
    fh.write("\n")


def _cmd_constants(a, out):
    params = _params(a)
    config = {"command": "constants", "model": params.to_dict(), "T": a.T}
    row = {"c_T": constant_cT(params, a.T)}
    if params.gamma == 0.5:
        row["nu_T"] = constant_nuT(params, a.T)
        row["omega"] = omega_root(params.beta, a.T)
    with _sink(out) as fh:
        if a.format == "json":
            _emit_json(fh, config, row)
        else:
            _header(fh, config)
            fh.write(",".join(row) + "\n")
            fh.write(_csv_row(*row.values()))
    return EXIT_OK


def _cmd_simulate(a, out):
    params = _params(a)
    cfg = SimConfig(epsilon=a.eps, steps=a.steps, n_paths=a.paths, scheme=a.scheme, seed=a.seed, horizon=a.T)
    h = None
    if a.hdot is not None and a.control is not None:
        raise ValidationError("give at most one of --hdot and --control")
    if a.hdot is not None:
        h = ControlPath.constant(a.hdot, a.T, a.steps)
    elif a.control is not None:
        h = ControlPath.from_csv(a.control)
    ens = simulate(params, cfg, h, workers=a.workers)
    with _sink(out) as fh:
        if a.format == "csv":
            ens.to_csv(fh)
        else:
            _emit_json(
                fh,
                ens.header(),
                {"times": ens.times.tolist(), "paths": ens.paths.tolist(), "log_weights": ens.log_weights.tolist()},
            )
    return EXIT_OK


def _cmd_rate(a, out):
    params = _params(a)
    path = GridPath.from_csv(a.path)
    if a.lamperti:
        r = rate_script_I(path, params)
    else:
        r = rate_I(path, params)
        lamperti(path, params.gamma)  # domain check on the state path
    config = {"command": "rate", "model": params.to_dict(), "path": a.path, "lamperti": a.lamperti, "N": path.n}
    row = {"rate": r.value, "reason": r.reason.value}
    with _sink(out) as fh:
        if a.format == "json":
            _emit_json(fh, config, row)
        else:
            _header(fh, config)
            fh.write("rate,reason\n" + f"{r.value!r},{r.reason.value}\n")
    return EXIT_OK


def _cmd_minimize(a, out):
    params = _params(a)
    weights = None
    if a.weights is not None:
        weights = GridPath.from_csv(a.weights).values
    spec = ConstraintSpec(a.kind, a.level, a.T, weights)
    res = minimize_rate(spec, params, a.N)
    config = {"command": "minimize", "model": params.to_dict(), "kind": a.kind, "level": a.level, "T": a.T, "N": a.N}
    with _sink(out) as fh:
        if a.format == "json":
            _emit_json(fh, config, res.to_dict())
        else:
            config.update(value=res.value, converged=res.converged, iterations=res.iterations)
            _header(fh, config)
            fh.write("t,phi,psi\n")
            for t, v, s in zip(res.minimizer.times, res.minimizer.values, res.psi.values):
                fh.write(_csv_row(t, v, s))
    return EXIT_OK if res.converged else EXIT_RUNTIME


def _cmd_tails(a, out):
    params = _params(a)
    cfg = SimConfig(steps=a.steps, n_paths=a.paths, scheme=a.scheme, seed=a.seed, horizon=a.T)
    h = None
    if a.estimator == "importance-sampled":
        h = importance_control(a.kind, params, a.T, a.steps)

    def one(R):
        q = TailQuery(a.kind, R, Estimator(a.estimator), h)
        return estimate_tail(q, params, a.T, cfg, rescaled=not a.direct, workers=a.workers)

    if a.parallel:
        with ThreadPoolExecutor() as ex:
            results = list(ex.map(one, a.R))
    else:
        results = [one(R) for R in a.R]
    config = {
        "command": "tails",
        "model": params.to_dict(),
        "sim": cfg.to_dict(),
        "kind": a.kind,
        "estimator": a.estimator,
        "rescaled": not a.direct,
    }
    finite = [e for e in results if math.isfinite(e.log_probability)]
    fit = None
    if len(finite) >= 3 and params.alpha_is_constant:
        fit = fit_tail_slope([e.level for e in finite], [e.log_probability for e in finite], params.gamma)
    with _sink(out) as fh:
        if a.format == "json":
            payload = {"estimates": [e.to_dict() for e in results]}
            if fit is not None:
                payload["slope"] = {"value": fit[0], "stderr": fit[1], "c_T": constant_cT(params, a.T)}
            _emit_json(fh, config, payload)
        else:
            if fit is not None:
                config["slope"] = fit[0]
                config["slope_stderr"] = fit[1]
            _header(fh, config)
            fh.write(",".join(LEDGER_COLUMNS) + "\n")
            for e in results:
                row = e.ledger_row()
                fh.write(_csv_row(*(row[c] for c in LEDGER_COLUMNS)))
    return EXIT_OK


def _cmd_figure1(a, out):
    params = _params(a)
    h = ControlPath.constant(a.hdot, a.T, a.steps)
    rungs = mean_path_ladder(params, h, a.eps, a.paths, seed=a.seed, workers=a.workers)
    config = {
        "command": "figure1",
        "model": params.to_dict(),
        "hdot": a.hdot,
        "T": a.T,
        "steps": a.steps,
        "paths": a.paths,
        "seed": a.seed,
        "sup_distance": {repr(r.epsilon): r.sup_distance for r in rungs},
    }
    times = h.times.tolist() + [a.T]
    with _sink(out) as fh:
        if a.format == "json":
            _emit_json(
                fh,
                config,
                {"t": times, "rungs": [{"eps": r.epsilon, "mean_path": r.mean_path.tolist(), "phi_star": r.phi_star.tolist()} for r in rungs]},
            )
        else:
            _header(fh, config)
            fh.write("eps,t,mean_path,phi_star\n")
            for r in rungs:
                for t, m, p in zip(times, r.mean_path, r.phi_star):
                    fh.write(_csv_row(r.epsilon, t, m, p))
    return EXIT_OK


def _cmd_check(a, out):
    outcomes = consistency_suite(a.T)
    ok = all(c.passed for c in outcomes)
    config = {"command": "check", "suite": a.suite, "T": a.T}
    with _sink(out) as fh:
        if a.format == "json":
            _emit_json(fh, config, {"passed": ok, "checks": [c.__dict__ for c in outcomes]})
        else:
            _header(fh, config)
            fh.write("name,passed,detail\n")
            for c in outcomes:
                fh.write(f"{c.name},{c.passed},{c.detail}\n")
    for c in outcomes:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_RUNTIME


COMMANDS = {
    "constants": _cmd_constants,
    "simulate": _cmd_simulate,
    "rate": _cmd_rate,
    "minimize": _cmd_minimize,
    "tails": _cmd_tails,
    "figure1": _cmd_figure1,
    "check": _cmd_check,
}


def run(argv=None) -> int:
    """Parse ``argv``, run the command and return the exit status."""
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    try:
        out = _resolve_output(a.output)
        if hasattr(a, "gamma"):
            _params(a)  # validate the model before any work
        return COMMANDS[a.command](a, out)
    # ParameterError, DomainError and UnsupportedCaseError are ValueErrors
    except (ValidationError, ValueError, OSError) as exc:
        print(f"cevldp: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SimulationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"cevldp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
