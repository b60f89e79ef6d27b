"""Elliptic problems for -Lap - lam/|x|^2: linear solves, the Pohozaev
identity, trace bounds, and positive ground states of the Lane-Emden problem.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as sla

from .grid import Grid
from .operators import (
    OperatorSet,
    boundary_quadrature,
    dilation,
    mass_diagonal,
    normal_derivative,
    quadratic_form,
)
from .spectral import ConvergenceError, smallest_generalized_eigenpairs

log = logging.getLogger(__name__)


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    critical: bool


def solve_dirichlet(
    ops: OperatorSet,
    f: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 5000,
    allow_critical: bool = False,
    return_info: bool = False,
):
    """Solve ``A_lam u = f`` with homogeneous Dirichlet data.

    Weak form ``K_lambda u = M f`` by conjugate gradients with an incomplete
    LU preconditioner.  At ``lam = N^2/4`` the form is coercive only in the
    weighted sense and iteration counts grow; pass ``allow_critical=True``.
    """
    f = ops.grid.check_field(f)
    critical = abs(ops.lam - ops.critical) <= 1e-12
    if critical and not allow_critical:
        raise ValueError(
            "lam equals the critical constant N^2/4; pass allow_critical=True "
            "to accept slow conditioning"
        )
    b = ops.m * f
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        u = np.zeros_like(f, dtype=float)
        info = SolveInfo(0, 0.0, critical)
        return (u, info) if return_info else u
    A = ops.K_lambda.tocsc()
    ilu = sla.spilu(A, drop_tol=1e-5, fill_factor=20)
    pre = sla.LinearOperator(A.shape, ilu.solve)
    count = [0]

    def cb(_):
        count[0] += 1

    u, flag = sla.cg(A, b, rtol=tol, atol=0.0, maxiter=max_iter, M=pre, callback=cb)
    res = float(np.linalg.norm(A @ u - b) / bnorm)
    if flag != 0 or res > tol * 10:
        raise ConvergenceError(
            f"CG stopped after {count[0]} iterations with residual {res:.2e}",
            iterations=count[0],
            residual=res,
        )
    if critical:
        log.info("critical solve: %d CG iterations", count[0])
    info = SolveInfo(count[0], res, critical)
    return (u, info) if return_info else u


@dataclass
class PohozaevReport:
    boundary_term: float
    volume_term: float
    norm_term: float
    residual: float


def pohozaev_report(grid: Grid, ops: OperatorSet, u: np.ndarray, f: np.ndarray) -> PohozaevReport:
    """Both sides of the Pohozaev identity for ``A_lam u = f``.

    ``boundary = 1/2 int (x.nu) (du/dnu)^2``,
    ``volume = -int f (x.grad u)``, ``norm = -(N-2)/2 B_lam[u]``;
    ``residual = (boundary - volume - norm) / max(|terms|)``.
    """
    if ops.grid is not grid:
        raise ValueError("operator set was assembled on a different grid")
    u = grid.check_field(u)
    f = grid.check_field(f)
    if not np.isfinite(quadratic_form(ops, f, "mass")):
        warnings.warn("right-hand side has non-finite L2 norm", RuntimeWarning)
    N = grid.dimension
    boundary = 0.5 * boundary_quadrature(grid, normal_derivative(grid, u), "x_dot_nu")
    volume = -float(np.sum(ops.m * f * dilation(grid, u)))
    norm = -0.5 * (N - 2) * quadratic_form(ops, u, "hardy")
    scale = max(abs(boundary), abs(volume), abs(norm))
    residual = 0.0 if scale == 0 else (boundary - volume - norm) / scale
    return PohozaevReport(boundary, volume, norm, residual)


def trace_inequality_ratio(grid: Grid, ops: OperatorSet, u: np.ndarray, f: np.ndarray) -> float:
    """``int_Gamma (du/dnu)^2 |x|^2 / (B_lam[u] + ||f||^2)``; 0 when both vanish."""
    u = grid.check_field(u)
    f = grid.check_field(f)
    num = boundary_quadrature(grid, normal_derivative(grid, u), "abs_x_squared")
    den = quadratic_form(ops, u, "hardy") + quadratic_form(ops, f, "mass")
    if den <= 0:
        if num == 0:
            return 0.0
        raise ZeroDivisionError("energy and source both vanish but the trace does not")
    return num / den


def critical_exponent(dimension: int) -> float:
    """Sobolev exponent (N+2)/(N-2); infinite for N=2."""
    return np.inf if dimension == 2 else (dimension + 2) / (dimension - 2)


@dataclass
class GroundState:
    u: np.ndarray
    I_value: float
    alpha: float
    iterations: int
    fixed_point_residual: float
    converged: bool = True
    objective_history: list[float] = field(default_factory=list, repr=False)


def lp_norm(ops: OperatorSet, u: np.ndarray, p: float) -> float:
    return float(np.sum(ops.m * np.abs(u) ** p) ** (1.0 / p))


def ground_state(
    ops: OperatorSet,
    alpha: float,
    max_iter: int = 500,
    tol: float = 1e-10,
    strict: bool = True,
    initial: np.ndarray | None = None,
) -> GroundState:
    """Positive solution of ``-Lap u - lam u/|x|^2 = |u|^(alpha-1) u``.

    Normalized inverse iteration ``u <- A^-1(|u|^(alpha-1) u)`` rescaled to
    unit L^(alpha+1) norm, which decreases ``B_lam[u] / ||u||^2_(alpha+1)``.
    The limit is rescaled by ``I^(1/(alpha-1))`` so the equation holds.

    With ``strict=True`` supercritical exponents (no solutions in the
    continuum, star-shaped domain) are refused; otherwise the iteration runs
    and a non-converged result is returned instead of raising.
    """
    g = ops.grid
    alpha = float(alpha)
    if alpha <= 1:
        raise ValueError("alpha must exceed 1 (alpha = 1 is the linear eigenproblem)")
    crit = critical_exponent(g.dimension)
    if strict and alpha >= crit:
        raise ValueError(
            f"alpha = {alpha:g} >= (N+2)/(N-2) = {crit:g}: no nontrivial solutions "
            "exist on star-shaped domains; use strict=False to explore"
        )
    p = alpha + 1.0
    solve = sla.factorized(ops.K_lambda.tocsc())
    if initial is None:
        initial = np.abs(smallest_generalized_eigenpairs(ops.K_lambda, ops.M, 1)[0].vector)
    u = np.asarray(initial, dtype=float)
    u = u / lp_norm(ops, u, p)
    history = [quadratic_form(ops, u, "hardy")]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        v = solve(ops.m * np.abs(u) ** (alpha - 1) * u)
        nv = lp_norm(ops, v, p)
        if not np.isfinite(nv) or nv < 1e-300:
            raise ConvergenceError("iterate collapsed to zero; restart from a positive guess", it)
        v /= nv
        step = np.sqrt(np.sum(ops.m * (v - u) ** 2) / np.sum(ops.m * u**2))
        u = v
        history.append(quadratic_form(ops, u, "hardy"))
        if step <= tol:
            converged = True
            break
    I_value = history[-1]
    U = I_value ** (1.0 / (alpha - 1.0)) * u
    rhs = ops.m * np.abs(U) ** (alpha - 1) * U
    fpr = float(np.linalg.norm(ops.K_lambda @ U - rhs) / np.linalg.norm(rhs))
    if not converged:
        msg = f"ground state iteration not converged after {it} steps (step {step:.2e})"
        if strict:
            raise ConvergenceError(msg, iterations=it, residual=fpr)
        log.warning(msg)
    return GroundState(U, I_value, alpha, it, fpr, converged, history)


@dataclass
class NonlinearBalance:
    balance_factor: float
    boundary_term: float
    predicted: float
    relative_gap: float


def balance_factor(dimension: int, alpha: float) -> float:
    """``N/(alpha+1) - (N-2)/2``; positive exactly for subcritical alpha."""
    return dimension / (alpha + 1.0) - 0.5 * (dimension - 2)


def nonlinear_balance(grid: Grid, gs: GroundState) -> NonlinearBalance:
    """Pohozaev balance of a ground state.

    For ``A_lam u = |u|^(alpha-1) u`` the identity reduces to
    ``1/2 int (x.nu)(du/dnu)^2 = (N/(alpha+1) - (N-2)/2) ||u||^(alpha+1)``.
    """
    if not gs.converged:
        raise ValueError("ground state did not converge")
    U = grid.check_field(gs.u)
    m = mass_diagonal(grid)
    factor = balance_factor(grid.dimension, gs.alpha)
    predicted = factor * float(np.sum(m * np.abs(U) ** (gs.alpha + 1)))
    boundary = 0.5 * boundary_quadrature(grid, normal_derivative(grid, U), "x_dot_nu")
    gap = abs(boundary - predicted) / abs(predicted) if predicted != 0 else np.inf
    return NonlinearBalance(factor, boundary, predicted, gap)
