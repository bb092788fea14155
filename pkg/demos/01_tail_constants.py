"""Closed-form tail constants and how they move with the drift slope."""
from cevldp import ModelParams, constant_cT, constant_nuT, omega_root

for beta in (-2.0, -1.0, 0.0, 1.0, 2.0):
    p = ModelParams(gamma=0.5, sigma=2.0, beta=beta)
    print(f"beta={beta:+.1f}  c_T={constant_cT(p, 1.0):.6f}  nu_T={constant_nuT(p, 1.0):.6f}  omega={omega_root(beta, 1.0):.6f}")

# c_T has a closed form for every gamma, nu_T only for gamma = 1/2
for g in (0.5, 0.6, 0.75, 0.9):
    print(f"gamma={g}: c_T={constant_cT(ModelParams(gamma=g), 1.0):.6f}")
