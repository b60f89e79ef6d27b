"""Polar tensor grids for the unit half-disk and the axisymmetric half-ball.

For ``dimension == 2`` the angle runs over ``[0, pi]`` and both rays
``theta = 0`` and ``theta = pi`` lie on the flat boundary ``x_2 = 0``.

For ``dimension == 3`` only azimuth-independent functions are represented.
The angle is the polar angle measured from the ``x_3`` axis, which points
into the half-ball, so the meridian quarter-disk is ``theta in [0, pi/2]``;
the flat boundary ``x_3 = 0`` is the ray ``theta = pi/2`` and the axis
``theta = 0`` carries a symmetry (zero angular flux) condition.

Node ``(i, j)`` sits at ``r = i * delta_r`` and ``theta = j * delta_theta``.
Ring ``i = 0`` (the origin) and ring ``i = n_r`` (the arc) are Dirichlet.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ARC, FLAT, ORIGIN = "arc", "flat", "origin-limit"


def critical_constant(dimension: int) -> float:
    """Optimal Hardy constant N**2/4 for a boundary singularity."""
    return dimension**2 / 4.0


@dataclass(frozen=True)
class BoundaryFaces:
    """Boundary sample points, one per Dirichlet face.

    ``node`` holds the (i, j) index of the boundary node the face sits on.
    """

    location: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    node: np.ndarray
    x_dot_nu: np.ndarray
    surface_weight: np.ndarray

    def __len__(self) -> int:
        return len(self.location)

    def mask(self, location: str) -> np.ndarray:
        return self.location == location


@dataclass(frozen=True, eq=False)
class Grid:
    dimension: int
    n_r: int
    n_theta: int
    radius: float
    delta_r: float = field(init=False)
    delta_theta: float = field(init=False)
    faces: BoundaryFaces = field(init=False, repr=False)

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dimension}")
        if int(self.n_r) != self.n_r or int(self.n_theta) != self.n_theta:
            raise ValueError("node counts must be integers")
        if self.n_r < 4 or self.n_theta < 4:
            raise ValueError(
                f"need n_r >= 4 and n_theta >= 4, got ({self.n_r}, {self.n_theta})"
            )
        if not np.isfinite(self.radius) or self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        set_ = object.__setattr__
        set_(self, "delta_r", self.radius / self.n_r)
        set_(self, "delta_theta", self.theta_max / self.n_theta)
        set_(self, "faces", _build_faces(self))

    # -- geometry ---------------------------------------------------------
    @property
    def theta_max(self) -> float:
        return np.pi if self.dimension == 2 else np.pi / 2

    @property
    def axis_symmetry(self) -> bool:
        return self.dimension == 3

    @property
    def measure_constant(self) -> float:
        """Azimuthal factor c_N of the meridian measure."""
        return 1.0 if self.dimension == 2 else 2.0 * np.pi

    @property
    def j_start(self) -> int:
        """First angular column holding unknowns (the axis is one for N=3)."""
        return 0 if self.axis_symmetry else 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r - 1, self.n_theta - self.j_start)

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def r(self) -> np.ndarray:
        """Radii of the interior rings."""
        return np.arange(1, self.n_r) * self.delta_r

    @property
    def theta(self) -> np.ndarray:
        """Angles of the unknown columns."""
        return np.arange(self.j_start, self.n_theta) * self.delta_theta

    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """(r, theta) of every unknown, flattened in ``interior_index`` order."""
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        return rr.ravel(), tt.ravel()

    def cartesian(self) -> np.ndarray:
        """Cartesian coordinates of the unknowns in the meridian plane.

        Columns are ``(x_1, x_N)``: the tangential and normal coordinates
        with respect to the flat boundary.
        """
        r, t = self.node_coords()
        if self.dimension == 2:
            return np.column_stack([r * np.cos(t), r * np.sin(t)])
        return np.column_stack([r * np.sin(t), r * np.cos(t)])

    def angular_weights(self) -> np.ndarray:
        """Angular quadrature weight of every column 0..n_theta.

        For N=3 this is the sin(theta) measure; column 0 gets the polar cap
        ``1 - cos(delta_theta / 2)`` since sin vanishes there.
        """
        t = np.arange(self.n_theta + 1) * self.delta_theta
        if self.dimension == 2:
            w = np.full(t.shape, self.delta_theta)
        else:
            w = np.sin(t) * self.delta_theta
            w[0] = 1.0 - np.cos(0.5 * self.delta_theta)
        return w

    # -- indexing ---------------------------------------------------------
    def interior_index(self, i, j):
        """Linear index of node (i, j); i in 1..n_r-1, j in j_start..n_theta-1."""
        i = np.asarray(i)
        j = np.asarray(j)
        if np.any((i < 1) | (i > self.n_r - 1)) or np.any(
            (j < self.j_start) | (j > self.n_theta - 1)
        ):
            raise IndexError("node is not an interior unknown")
        return (i - 1) * self.shape[1] + (j - self.j_start)

    def node_of(self, k):
        """Inverse of :meth:`interior_index`."""
        k = np.asarray(k)
        if np.any((k < 0) | (k >= self.size)):
            raise IndexError("linear index out of range")
        i, j = np.divmod(k, self.shape[1])
        return i + 1, j + self.j_start

    def full(self, u: np.ndarray) -> np.ndarray:
        """Embed an interior vector in the (n_r+1, n_theta+1) node array.

        Dirichlet nodes hold zero.
        """
        u = self.check_field(u)
        out = np.zeros((self.n_r + 1, self.n_theta + 1), dtype=u.dtype)
        out[1 : self.n_r, self.j_start : self.n_theta] = u.reshape(self.shape)
        return out

    def sample(self, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
        """Evaluate ``func(r, theta)`` at every unknown."""
        r, t = self.node_coords()
        return np.asarray(func(r, t))

    def check_field(self, u) -> np.ndarray:
        u = np.asarray(u)
        if u.shape != (self.size,):
            raise ValueError(
                f"field has shape {u.shape}, grid expects ({self.size},)"
            )
        return u

    def refine(self) -> "Grid":
        return Grid(self.dimension, 2 * self.n_r, 2 * self.n_theta, self.radius)


def build_grid(dimension: int, n_r: int, n_theta: int, radius: float = 1.0) -> Grid:
    return Grid(int(dimension), int(n_r), int(n_theta), float(radius))


def _build_faces(g: Grid) -> BoundaryFaces:
    R, c = g.radius, g.measure_constant
    jt = np.arange(g.n_theta + 1)
    w = g.angular_weights()
    w_arc = w.copy()
    w_arc[-1] *= 0.5
    if g.dimension == 2:
        w_arc[0] *= 0.5
    arc_weight = c * R ** (g.dimension - 1) * w_arc

    ri = np.arange(1, g.n_r)
    r_flat = ri * g.delta_r
    flat_weight = c * r_flat ** (g.dimension - 2) * g.delta_r
    if g.dimension == 2:
        flat_j = [np.zeros_like(ri), np.full_like(ri, g.n_theta)]
    else:
        flat_j = [np.full_like(ri, g.n_theta)]
    n_flat = len(flat_j) * len(ri)

    location = np.array([ARC] * len(jt) + [FLAT] * n_flat + [ORIGIN], dtype=object)
    r = np.concatenate([np.full(len(jt), R), np.tile(r_flat, len(flat_j)), [0.0]])
    theta = np.concatenate(
        [jt * g.delta_theta, np.concatenate(flat_j) * g.delta_theta, [0.0]]
    )
    node = np.concatenate(
        [
            np.column_stack([np.full(len(jt), g.n_r), jt]),
            *[np.column_stack([ri, j]) for j in flat_j],
            [[0, 0]],
        ]
    )
    x_dot_nu = np.concatenate([np.full(len(jt), R), np.zeros(n_flat + 1)])
    weight = np.concatenate([arc_weight, np.tile(flat_weight, len(flat_j)), [0.0]])
    return BoundaryFaces(location, r, theta, node, x_dot_nu, weight)
