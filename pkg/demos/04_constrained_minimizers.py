"""Numerical rate minimisers under terminal, running-maximum and time-average constraints."""
from cevldp import ConstraintSpec, ModelParams, constant_cT, constant_nuT, minimize_rate

for beta in (-1.0, 0.0, 1.0):
    p = ModelParams(gamma=0.5, beta=beta)
    c, nu = constant_cT(p, 1.0), constant_nuT(p, 1.0)
    for kind, ref in (("terminal", c), ("running-sup", c), ("time-average", nu)):
        res = minimize_rate(ConstraintSpec(kind, 1.0, 1.0), p, 1000)
        print(f"beta={beta:+.0f} {kind:13s} value={res.value:.6f}  closed form={ref:.6f}  iterations={res.iterations}")
