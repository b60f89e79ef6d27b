"""Generalized eigenvalue engine and estimates of the Hardy-type constants."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .bessel import Z01, besselj, besselj_derivative
from .grid import Grid, build_grid, critical_constant
from .operators import assemble, regularized_hardy_form

log = logging.getLogger(__name__)

COARSE_NODES = 32


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, iterations: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray
    residual: float


@dataclass
class ConstantEstimate:
    value: float
    resolution: tuple[int, int]
    minimizer: np.ndarray = field(repr=False)
    refinement_trend: list[tuple[tuple[int, int], float]] = field(default_factory=list)
    coarse: bool = False


def negative_inertia(A) -> int:
    """Number of negative eigenvalues of the symmetric matrix ``A``.

    Read off the pivots of an LU factorization with symmetric ordering and
    no row pivoting (Sylvester's law of inertia).
    """
    lu = sla.splu(
        sp.csc_matrix(A),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options=dict(SymmetricMode=True),
    )
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise RuntimeError("factorization did not keep a symmetric ordering")
    return int(np.count_nonzero(lu.U.diagonal() < 0))


def _is_symmetric(A) -> bool:
    A = sp.csr_matrix(A)
    scale = abs(A).max() if A.nnz else 1.0
    diff = A - A.T
    return diff.nnz == 0 or abs(diff).max() <= 1e-12 * scale


def _shift_below_spectrum(A, B) -> float:
    """A shift sigma with A - sigma B positive definite.

    Doubles a negative shift until the inertia count reaches zero, so that
    sigma is within a factor ~2 of the bottom of the spectrum.
    """
    sigma = 0.0
    for _ in range(200):
        try:
            if negative_inertia(A - sigma * B) == 0:
                return sigma
        except RuntimeError:
            pass
        sigma = 2.0 * sigma - 1.0
    raise ConvergenceError("could not bracket the bottom of the spectrum")


def smallest_generalized_eigenpairs(A, B, k: int = 1, tol: float = 1e-10) -> list[EigenResult]:
    """k smallest eigenpairs of the symmetric pencil (A, B), B positive definite.

    Shift-invert Lanczos with the shift placed just below the spectrum and a
    seeded start vector, so repeated calls give identical output.  Vectors
    are B-normalized with their largest entry positive; ``residual`` is
    ``||A v - mu B v|| / (|mu| ||B v|| + ||A v||)``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    A = sp.csc_matrix(A)
    B = sp.csc_matrix(B)
    n = A.shape[0]
    if A.shape != B.shape or A.shape != (n, n):
        raise ValueError("A and B must be square and of equal shape")
    if not (_is_symmetric(A) and _is_symmetric(B)):
        raise ValueError("pencil must be symmetric")
    if negative_inertia(B) > 0 or np.any(B.diagonal() <= 0):
        raise ValueError("B must be positive definite")
    if k >= n:
        raise ValueError(f"k = {k} must be smaller than the dimension {n}")

    sigma = _shift_below_spectrum(A, B)
    # shift strictly below so (A - sigma B) is invertible even for A = B
    sigma -= 1e-3 * max(1.0, abs(sigma))
    try:
        v0 = np.random.default_rng(0).uniform(0.5, 1.5, n)
        vals, vecs = sla.eigsh(A, k=k, M=B, sigma=sigma, which="LM", tol=tol * 1e-2, v0=v0)
    except sla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"Lanczos did not converge: {exc}") from exc
    order = np.argsort(vals)
    out = []
    for idx in order:
        mu, v = float(vals[idx]), vecs[:, idx]
        v = v / np.sqrt(v @ (B @ v))
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        Av, Bv = A @ v, B @ v
        res = np.linalg.norm(Av - mu * Bv) / (abs(mu) * np.linalg.norm(Bv) + np.linalg.norm(Av))
        if res > tol:
            raise ConvergenceError(
                f"eigenpair residual {res:.2e} above tolerance {tol:.1e}", residual=res
            )
        out.append(EigenResult(mu, v, float(res)))
    return out


def _resolutions(grid: Grid, resolutions) -> list[tuple[int, int]]:
    if resolutions is None:
        return [(grid.n_r, grid.n_theta)]
    out = []
    for res in resolutions:
        out.append((int(res), int(res)) if np.isscalar(res) else (int(res[0]), int(res[1])))
    if any(a[0] * a[1] > b[0] * b[1] for a, b in zip(out, out[1:])):
        raise ValueError("resolutions must be ascending")
    return out


def _trend_estimate(grid: Grid, resolutions, pencil) -> ConstantEstimate:
    trend = []
    for n_r, n_t in _resolutions(grid, resolutions):
        g = build_grid(grid.dimension, n_r, n_t, grid.radius)
        value, vec = pencil(g)
        trend.append(((n_r, n_t), value))
    res, value = trend[-1]
    return ConstantEstimate(
        value=value,
        resolution=res,
        minimizer=vec,
        refinement_trend=trend,
        coarse=min(res) < COARSE_NODES,
    )


def best_hardy_constant(grid: Grid, resolutions: Sequence | None = None) -> ConstantEstimate:
    """Discrete optimal constant in ``int |grad u|^2 >= C int u^2/|x|^2``.

    The continuum constant N^2/4 is not attained, so the estimate decreases
    slowly (logarithmically) with refinement; the full trend is returned.
    """

    def pencil(g):
        ops = assemble(g, 0.0)
        eig = smallest_generalized_eigenpairs(ops.K, ops.P, 1)[0]
        return eig.value, eig.vector

    return _trend_estimate(grid, resolutions, pencil)


def refined_log_constant(grid: Grid, resolutions: Sequence | None = None) -> ConstantEstimate:
    """Best constant of the log-weight remainder at critical coupling."""

    def pencil(g):
        ops = assemble(g, critical_constant(g.dimension))
        eig = smallest_generalized_eigenpairs(ops.K_lambda, ops.W_log, 1)[0]
        return eig.value, eig.vector

    return _trend_estimate(grid, resolutions, pencil)


def tu8_constant(grid: Grid, resolutions: Sequence | None = None) -> ConstantEstimate:
    """Smallest C in the radially weighted gradient bound at critical coupling.

    ``int |x|^2 |grad v|^2 <= R^2 (int |grad v|^2 - N^2/4 int v^2/|x|^2) + C int v^2``;
    C is the largest eigenvalue of ``(K_rad - R^2 K_crit, M)``.  Defaults to
    the grid and its half-resolution coarsening.
    """
    if resolutions is None:
        resolutions = [
            (max(4, grid.n_r // 2), max(4, grid.n_theta // 2)),
            (grid.n_r, grid.n_theta),
        ]

    def pencil(g):
        ops = assemble(g, critical_constant(g.dimension))
        A = g.radius**2 * ops.K_lambda - ops.K_rad
        eig = smallest_generalized_eigenpairs(A, ops.M, 1)[0]
        return -eig.value, eig.vector

    return _trend_estimate(grid, resolutions, pencil)


def tu8_slack(ops, v: np.ndarray, C: float) -> float:
    """RHS minus LHS of the weighted gradient bound for one field (>= 0 if it holds)."""
    R2 = ops.grid.radius**2
    lhs = float(v @ (ops.K_rad @ v))
    crit = ops.with_lambda(ops.critical)
    rhs = R2 * float(v @ (crit.K_lambda @ v)) + C * float(v @ (ops.m * v))
    return rhs - lhs


def critical_profile(grid: Grid) -> np.ndarray:
    """Samples of ``x_N |x|^(-N/2) J_0(z_{0,1} |x| / R)`` for N=2."""
    if grid.dimension != 2:
        raise ValueError("the critical profile diagnostic is defined for N=2")
    R = grid.radius
    return grid.sample(lambda r, t: np.sin(t) * besselj(0, Z01 * r / R))


class CriticalRow(NamedTuple):
    epsilon: float
    truncated_hardy: float
    truncated_dirichlet: float
    regularized_value: float


def _truncated_energies(grid: Grid, u: np.ndarray, eps: float) -> tuple[float, float, float]:
    """(gradient, potential) discrete integrals over {r >= eps}."""
    g = grid
    U = g.full(u)
    dr, dt = g.delta_r, g.delta_theta
    cols = np.arange(g.j_start, g.n_theta)
    r_mid = (np.arange(g.n_r) + 0.5) * dr
    keep_r = r_mid >= eps
    rad = np.sum(r_mid[keep_r, None] * dt * dr * ((U[1:, cols] - U[:-1, cols])[keep_r] / dr) ** 2)
    keep_i = g.r >= eps
    Ui = U[1:-1][keep_i]
    ri = g.r[keep_i][:, None]
    ang = np.sum(dr * dt / ri * ((Ui[:, 1:] - Ui[:, :-1]) / dt) ** 2)
    pot = np.sum(dr * dt / ri * Ui[:, cols] ** 2)
    return rad + ang, pot


def critical_profile_diagnostic(grid: Grid, epsilons: Sequence[float]) -> list[CriticalRow]:
    """Annulus-truncated energies of the critical profile e_1.

    The Hardy functional at lam = N^2/4 converges as eps -> 0 while the
    Dirichlet energy alone diverges like |log eps|.
    """
    eps = [float(e) for e in epsilons]
    if any(a <= b for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly descending")
    if any(e <= grid.delta_r for e in eps):
        raise ValueError(f"every epsilon must exceed delta_r = {grid.delta_r:g}")
    lam = critical_constant(grid.dimension)
    e1 = critical_profile(grid)
    reg = regularized_hardy_form(grid, lam, e1)
    rows = []
    for e in eps:
        grad, pot = _truncated_energies(grid, e1, e)
        rows.append(CriticalRow(e, grad - lam * pot, grad, reg))
    return rows


def dirichlet_log_slope(rows: Sequence[CriticalRow]) -> float:
    """Least-squares slope of truncated Dirichlet energy against |log eps|."""
    x = -np.log([row.epsilon for row in rows])
    y = np.array([row.truncated_dirichlet for row in rows])
    return float(np.polyfit(x, y, 1)[0])


def critical_profile_regularized_exact(radius: float = 1.0) -> float:
    """Closed form of the regularized critical form of e_1 (N=2).

    Only the radial component survives: ``(pi/4) z^2 J_1(z)^2`` with
    ``z = z_{0,1}``; independent of the radius by scaling.
    """
    return float(np.pi / 4 * Z01**2 * besselj_derivative(0, Z01) ** 2)
