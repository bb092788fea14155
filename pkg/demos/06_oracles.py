"""Analytic references: CEV density tail, Bessel values and the critical exponent."""
import numpy as np

from cevldp import ModelParams, cir_critical_exponent, constant_cT, constant_nuT, log_bessel_I
from cevldp.oracles import SLOPE_X0, density_tail_slope

print("log I_nu(z):", [round(log_bessel_I(nu, z), 10) for nu, z in ((0.0, 1.0), (1.0, 50.0), (2.5, 700.0))])

for g in (0.5, 0.75):
    p = ModelParams(gamma=g, beta=0.0, x0=SLOPE_X0)
    print(f"gamma={g}: density slope {density_tail_slope(p, 1.0):.5f} vs c_T {constant_cT(p, 1.0):.5f}")

for beta in (-0.25, -1.0, -4.0):
    p = ModelParams(beta=beta)
    r = cir_critical_exponent(p, 1.0)
    print(f"beta={beta}: u*={r.u_star:.10f} nu_T={constant_nuT(p, 1.0):.10f}")
