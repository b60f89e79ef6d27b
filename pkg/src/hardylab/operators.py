"""Discrete quadratic forms of the boundary-singular operator -Lap - lam/|x|^2.

All forms are assembled in conservative flux form on the polar grid, with
the meridian measure ``c_N r^(N-1) sin^(N-2)(theta) dr dtheta``.  Diagonal
weights (mass, inverse-square potential, log weight) are lumped at nodes.
Fields are plain 1-D arrays in :meth:`Grid.interior_index` order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import ARC, Grid, critical_constant

FORMS = ("dirichlet", "mass", "potential", "log_weight", "radial", "hardy")
BOUNDARY_WEIGHTS = ("one", "abs_x_squared", "x_dot_nu")

# Slack allowed when checking lam <= N^2/4 on float input.
_LAMBDA_SLACK = 1e-12


def check_lambda(lam: float, dimension: int) -> float:
    lam = float(lam)
    crit = critical_constant(dimension)
    if not np.isfinite(lam):
        raise ValueError("lambda must be finite")
    if lam > crit + _LAMBDA_SLACK:
        raise ValueError(
            f"lambda = {lam:g} exceeds the critical Hardy constant "
            f"lambda({dimension}) = N^2/4 = {crit:g}"
        )
    return lam


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """Assembled forms for one grid and one coupling ``lam``.

    ``m``, ``p`` and ``w_log`` are the diagonals of the mass, potential and
    log-weight forms.  ``boundary`` couples unknowns to the arc Dirichlet
    nodes listed in ``control_faces`` (indices into ``grid.faces``).
    """

    grid: Grid
    lam: float
    K: sp.csr_matrix
    K_rad: sp.csr_matrix
    m: np.ndarray
    p: np.ndarray
    w_log: np.ndarray
    boundary: sp.csr_matrix
    control_faces: np.ndarray

    @property
    def M(self) -> sp.dia_matrix:
        return sp.diags(self.m)

    @property
    def P(self) -> sp.dia_matrix:
        return sp.diags(self.p)

    @property
    def W_log(self) -> sp.dia_matrix:
        return sp.diags(self.w_log)

    @property
    def K_lambda(self) -> sp.csr_matrix:
        return (self.K - self.lam * sp.diags(self.p)).tocsr()

    @property
    def critical(self) -> float:
        return critical_constant(self.grid.dimension)

    def with_lambda(self, lam: float) -> "OperatorSet":
        """Same forms with a different coupling (no reassembly)."""
        lam = check_lambda(lam, self.grid.dimension)
        return OperatorSet(
            self.grid, lam, self.K, self.K_rad, self.m, self.p, self.w_log,
            self.boundary, self.control_faces,
        )

    def energy(self, v: np.ndarray) -> float:
        """Hardy energy ``v^T K_lambda v`` (real part for complex v)."""
        return float(np.real(np.vdot(v, self.K_lambda @ v)))

    def mass(self, v: np.ndarray) -> float:
        return float(np.real(np.vdot(v, self.m * v)))


def _edges(g: Grid, radial_power: int):
    """Edge list (a, b, coefficient) over the full node array.

    Node ids are flattened full-array indices; the coefficient multiplies
    ``(u_a - u_b)^2`` in the discrete integral of ``r^radial_power |grad u|^2``.
    """
    N, c = g.dimension, g.measure_constant
    dr, dt = g.delta_r, g.delta_theta
    nt1 = g.n_theta + 1
    w = g.angular_weights()
    cols = np.arange(g.j_start, g.n_theta)

    # radial edges (i, j) - (i+1, j)
    i = np.arange(g.n_r)
    ii, jj = np.meshgrid(i, cols, indexing="ij")
    r_mid = (ii + 0.5) * dr
    coef_r = c * r_mid ** (N - 1 + radial_power) * w[jj] / dr
    a_r = ii * nt1 + jj
    b_r = (ii + 1) * nt1 + jj

    # angular edges (i, j) - (i, j+1)
    i = np.arange(1, g.n_r)
    j = np.arange(0, g.n_theta)
    ii, jj = np.meshgrid(i, j, indexing="ij")
    t_mid = (jj + 0.5) * dt
    s_mid = np.ones_like(t_mid) if N == 2 else np.sin(t_mid)
    coef_t = c * (ii * dr) ** (N - 3 + radial_power) * s_mid * dr / dt
    a_t = ii * nt1 + jj
    b_t = ii * nt1 + jj + 1

    return (
        np.concatenate([a_r.ravel(), a_t.ravel()]),
        np.concatenate([b_r.ravel(), b_t.ravel()]),
        np.concatenate([coef_r.ravel(), coef_t.ravel()]),
    )


def _full_to_interior(g: Grid) -> np.ndarray:
    """Map from full-array node id to interior index (-1 for boundary nodes)."""
    out = -np.ones((g.n_r + 1, g.n_theta + 1), dtype=np.int64)
    out[1 : g.n_r, g.j_start : g.n_theta] = np.arange(g.size).reshape(g.shape)
    return out.ravel()


def _stiffness(g: Grid, radial_power: int) -> sp.csr_matrix:
    a, b, coef = _edges(g, radial_power)
    idx = _full_to_interior(g)
    ia, ib = idx[a], idx[b]
    rows, cols, vals = [], [], []
    for p, q in ((ia, ib), (ib, ia)):
        keep = p >= 0
        rows.append(p[keep])
        cols.append(p[keep])
        vals.append(coef[keep])
        both = keep & (q >= 0)
        rows.append(p[both])
        cols.append(q[both])
        vals.append(-coef[both])
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(g.size, g.size),
    ).tocsr()
    K.sum_duplicates()
    return K


def _boundary_coupling(g: Grid) -> tuple[sp.csr_matrix, np.ndarray]:
    """Coupling of unknowns to arc Dirichlet nodes (off-diagonal K block)."""
    cols = np.arange(g.j_start, g.n_theta)
    w = g.angular_weights()
    r_mid = (g.n_r - 0.5) * g.delta_r
    coef = g.measure_constant * r_mid ** (g.dimension - 1) * w[cols] / g.delta_r
    rows = g.interior_index(np.full_like(cols, g.n_r - 1), cols)
    B = sp.csr_matrix(
        (-coef, (rows, np.arange(len(cols)))), shape=(g.size, len(cols))
    )
    arc = np.flatnonzero(g.faces.mask(ARC))
    faces = arc[np.searchsorted(g.faces.node[arc, 1], cols)]
    return B, faces


def mass_diagonal(grid: Grid) -> np.ndarray:
    """Lumped measure of every unknown."""
    g = grid
    w = g.angular_weights()[g.j_start : g.n_theta]
    return (
        g.measure_constant
        * (g.r[:, None] ** (g.dimension - 1) * w[None, :] * g.delta_r).ravel()
    )


def assemble(grid: Grid, lam: float = 0.0) -> OperatorSet:
    """Assemble every form for ``grid`` at coupling ``lam <= N^2/4``."""
    if not isinstance(grid, Grid):
        raise TypeError("assemble expects a Grid")
    lam = check_lambda(lam, grid.dimension)
    g = grid
    r, _ = g.node_coords()
    m = mass_diagonal(g)
    p = m / r**2
    w_log = p / np.log(g.radius / r) ** 2
    B, faces = _boundary_coupling(g)
    return OperatorSet(
        grid=g,
        lam=lam,
        K=_stiffness(g, 0),
        K_rad=_stiffness(g, 2),
        m=m,
        p=p,
        w_log=w_log,
        boundary=B,
        control_faces=faces,
    )


def quadratic_form(ops: OperatorSet, u: np.ndarray, which: str = "hardy") -> float:
    """Value of one of the discrete quadratic forms at ``u``.

    ``hardy`` is the Hardy functional ``dirichlet - lam * potential``.
    """
    u = ops.grid.check_field(u)
    if which == "dirichlet":
        return float(np.real(np.vdot(u, ops.K @ u)))
    if which == "mass":
        return float(np.real(np.vdot(u, ops.m * u)))
    if which == "potential":
        return float(np.real(np.vdot(u, ops.p * u)))
    if which == "log_weight":
        return float(np.real(np.vdot(u, ops.w_log * u)))
    if which == "radial":
        return float(np.real(np.vdot(u, ops.K_rad @ u)))
    if which == "hardy":
        return quadratic_form(ops, u, "dirichlet") - ops.lam * quadratic_form(
            ops, u, "potential"
        )
    raise ValueError(f"unknown form {which!r}; choose from {FORMS}")


def regularized_hardy_form(grid: Grid, lam: float, u: np.ndarray) -> float:
    """Sum-of-squares form of the Hardy functional.

    Integrates ``|grad u + (N/2) x/|x|^2 u - e_N/x_N u|^2`` plus
    ``(N^2/4 - lam) u^2/|x|^2``.  In polar components the modified gradient
    is ``(u_r + (N-2)/2 u/r, (u_theta - kappa(theta) u)/r)`` with
    ``kappa = cot(theta)`` for N=2 and ``kappa = -tan(theta)`` for N=3
    (angle from the x_3 axis).  Both are evaluated at edge midpoints, so
    the singular ``kappa`` term cancels against the difference quotient
    next to the flat boundary.
    """
    lam = check_lambda(lam, grid.dimension)
    g = grid
    U = np.real_if_close(g.full(u))
    N, c = g.dimension, g.measure_constant
    dr, dt = g.delta_r, g.delta_theta
    w = g.angular_weights()
    cols = np.arange(g.j_start, g.n_theta)

    ua, ub = U[:-1, cols], U[1:, cols]
    r_mid = (np.arange(g.n_r) + 0.5)[:, None] * dr
    G_r = (ub - ua) / dr + 0.5 * (N - 2) * (ua + ub) / (2 * r_mid)
    total = np.sum(c * r_mid ** (N - 1) * w[cols] * dr * np.abs(G_r) ** 2)

    ua, ub = U[1:-1, :-1], U[1:-1, 1:]
    r_i = g.r[:, None]
    t_mid = (np.arange(g.n_theta) + 0.5)[None, :] * dt
    if N == 2:
        kappa, s_mid = 1.0 / np.tan(t_mid), np.ones_like(t_mid)
    else:
        kappa, s_mid = -np.tan(t_mid), np.sin(t_mid)
    G_t = ((ub - ua) / dt - kappa * 0.5 * (ua + ub)) / r_i
    total += np.sum(c * r_i ** (N - 1) * s_mid * dt * dr * np.abs(G_t) ** 2)

    r, _ = g.node_coords()
    total += (critical_constant(N) - lam) * np.sum(mass_diagonal(g) / r**2 * np.abs(u) ** 2)
    return float(total)


def normal_derivative(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Outward normal derivative at every boundary face.

    Second-order one-sided differences using the zero boundary value.
    The origin-limit face reports 0.
    """
    g = grid
    U = g.full(u)
    faces = g.faces
    out = np.zeros(len(faces), dtype=U.dtype)
    n, nt = g.n_r, g.n_theta
    for k in np.flatnonzero(faces.mask(ARC)):
        j = faces.node[k, 1]
        out[k] = (-4 * U[n - 1, j] + U[n - 2, j]) / (2 * g.delta_r)
    for k in np.flatnonzero(faces.mask("flat")):
        i, j = faces.node[k]
        inner = (1, 2) if j == 0 else (nt - 1, nt - 2)
        out[k] = (-4 * U[i, inner[0]] + U[i, inner[1]]) / (
            2 * i * g.delta_r * g.delta_theta
        )
    return out


def boundary_quadrature(grid: Grid, b: np.ndarray, weight: str = "one") -> float:
    """``sum_faces weight * |b|^2 * surface_weight``."""
    faces = grid.faces
    b = np.asarray(b)
    if b.shape != (len(faces),):
        raise ValueError(f"expected {len(faces)} face values, got shape {b.shape}")
    if weight == "one":
        wt = np.ones(len(faces))
    elif weight == "abs_x_squared":
        wt = faces.r**2
    elif weight == "x_dot_nu":
        wt = faces.x_dot_nu
    else:
        raise ValueError(f"unknown weight {weight!r}; choose from {BOUNDARY_WEIGHTS}")
    return float(np.sum(wt * np.abs(b) ** 2 * faces.surface_weight))


def dilation(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Multiplier ``x . grad u = r u_r`` by centered radial differences."""
    g = grid
    U = g.full(u)
    cols = slice(g.j_start, g.n_theta)
    d = (U[2:, cols] - U[:-2, cols]) / (2 * g.delta_r)
    return (g.r[:, None] * d).ravel()
