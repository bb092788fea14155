"""Discrete rate of the path t**2 and its dual representation through controls."""
from cevldp import GridPath, ModelParams, dual_optimal_control, functional_F, rate_I

p = ModelParams(gamma=0.5, sigma=2.0)
for n in (250, 500, 1000, 2000, 4000):
    phi = GridPath.from_function(lambda t: t**2, 1.0, n)
    r = rate_I(phi, p).value
    f0 = functional_F(phi, dual_optimal_control(phi, p), 0.0, p)
    print(f"N={n:5d}  rate={r:.6f}  error={0.5 - r:.2e}  F0(dual control)={f0:.6f}")

# a path that does not start at zero has infinite rate
print(rate_I(GridPath.from_function(lambda t: 1 + t, 1.0, 10), p))
