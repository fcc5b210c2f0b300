"""Numerical tolerances used across the package."""
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    row_sum: float = 1e-12          # transition rows, rho0, simplex rows
    mass: float = 1e-10             # state-distribution mass per step
    policy_norm: float = 1e-9       # distributions emitted during rollout
    sigma_min: float = 1e-3         # gaussian std floor
    eg_argmin_residual: float = 1e-10
    cg_tolerance: float = 1e-10
    damping: float = 1e-3


TOL = Tolerances()
