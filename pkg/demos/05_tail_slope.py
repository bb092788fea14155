"""Importance-sampled tail probabilities of the square-root diffusion and the fitted decay rate."""
import warnings

from cevldp import (
    ModelParams,
    SimConfig,
    TailQuery,
    WeightDegeneracyWarning,
    constant_cT,
    estimate_tail,
    fit_tail_slope,
    importance_control,
)

p = ModelParams(gamma=0.5, alpha=1.0, sigma=2.0)
levels = (20.0, 40.0, 60.0, 80.0, 100.0)
h = importance_control("terminal", p, 1.0, 500)
rows = []
with warnings.catch_warnings():
    warnings.simplefilter("ignore", WeightDegeneracyWarning)
    for R in levels:
        e = estimate_tail(TailQuery("terminal", R, "importance-sampled", h), p, 1.0, SimConfig(steps=500, n_paths=20000, seed=1))
        rows.append(e)
        print(f"R={R:5.0f}  P={e.probability:.3e}  rel.se={e.log_std_error:.3f}  ESS={e.effective_sample_size:.0f}")
slope, se = fit_tail_slope(levels, [e.log_probability for e in rows], p.gamma)
print(f"fitted slope {slope:.4f} +- {se:.4f}; c_T = {constant_cT(p, 1.0)}")
