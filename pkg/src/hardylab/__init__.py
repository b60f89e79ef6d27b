"""Numerical lab for the boundary-singular operator -Lap - lam/|x|^2.

Polar discretizations of the half-disk (N=2) and the axisymmetric
half-ball (N=3): Hardy constants, Pohozaev and multiplier identities,
conservative wave and Schrodinger evolution, and HUM boundary control.
"""
from .bessel import bessel_zero, besselj, besselj_derivative
from .control import (
    ControlResult,
    hum_operator,
    hum_solve,
    schrodinger_hum_solve,
    verify_control,
    verify_schrodinger_control,
)
from .elliptic import (
    ground_state,
    nonlinear_balance,
    pohozaev_report,
    solve_dirichlet,
    trace_inequality_ratio,
)
from .evolution import (
    EvolutionTrace,
    SampleSpec,
    hidden_regularity_ratio,
    multiplier_report,
    observability_scan,
    schrodinger_evolve,
    wave_evolve,
)
from .grid import Grid, build_grid, critical_constant
from .operators import (
    OperatorSet,
    assemble,
    boundary_quadrature,
    normal_derivative,
    quadratic_form,
    regularized_hardy_form,
)
from .spectral import (
    ConvergenceError,
    best_hardy_constant,
    critical_profile_diagnostic,
    refined_log_constant,
    smallest_generalized_eigenpairs,
    tu8_constant,
)

__all__ = [
    "ControlResult", "ConvergenceError", "EvolutionTrace", "Grid", "OperatorSet",
    "SampleSpec", "assemble", "bessel_zero", "besselj", "besselj_derivative",
    "best_hardy_constant", "boundary_quadrature", "build_grid", "critical_constant",
    "critical_profile_diagnostic", "ground_state", "hidden_regularity_ratio",
    "hum_operator", "hum_solve", "multiplier_report", "nonlinear_balance",
    "normal_derivative", "observability_scan", "pohozaev_report", "quadratic_form",
    "refined_log_constant", "regularized_hardy_form", "schrodinger_evolve",
    "schrodinger_hum_solve", "smallest_generalized_eigenpairs", "solve_dirichlet",
    "trace_inequality_ratio", "tu8_constant", "verify_control",
    "verify_schrodinger_control", "wave_evolve",
]
