import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hardylab import build_grid, critical_constant
from hardylab.grid import ARC, FLAT, ORIGIN


def test_critical_constant():
    assert critical_constant(2) == 1.0
    assert critical_constant(3) == 2.25


@pytest.mark.parametrize(
    "dim,n_r,n_t,size",
    [(2, 8, 8, 7 * 7), (3, 8, 8, 7 * 8), (2, 5, 9, 4 * 8)],
)
def test_unknown_counts(dim, n_r, n_t, size):
    # N=3 keeps the symmetry axis as unknowns, N=2 has Dirichlet rays on both sides
    g = build_grid(dim, n_r, n_t)
    assert g.size == size
    assert len(g.node_coords()[0]) == size


@pytest.mark.parametrize(
    "args",
    [(4, 8, 8), (2, 3, 8), (2, 8, 3), (2, 8, 8, 0.0), (2, 8, 8, -1.0), (2, 8, 8, np.inf)],
)
def test_invalid_grids(args):
    with pytest.raises(ValueError):
        build_grid(*args)


@settings(max_examples=40, deadline=None)
@given(
    dim=st.sampled_from([2, 3]),
    n_r=st.integers(4, 30),
    n_t=st.integers(4, 30),
    data=st.data(),
)
def test_index_roundtrip(dim, n_r, n_t, data):
    g = build_grid(dim, n_r, n_t)
    k = data.draw(st.integers(0, g.size - 1))
    i, j = g.node_of(k)
    assert g.interior_index(i, j) == k


def test_index_errors():
    g = build_grid(2, 6, 6)
    with pytest.raises(IndexError):
        g.interior_index(0, 1)
    with pytest.raises(IndexError):
        g.interior_index(1, 0)
    with pytest.raises(IndexError):
        g.node_of(g.size)


def test_full_embeds_with_zero_boundary():
    g = build_grid(2, 6, 6)
    U = g.full(np.ones(g.size))
    assert U.shape == (7, 7)
    assert U[0].sum() == 0 and U[-1].sum() == 0
    assert U[:, 0].sum() == 0 and U[:, -1].sum() == 0
    assert U.sum() == g.size


def test_check_field_shape():
    g = build_grid(3, 6, 6)
    with pytest.raises(ValueError):
        g.check_field(np.zeros(g.size + 1))


def test_face_locations():
    g = build_grid(2, 10, 12)
    f = g.faces
    assert np.count_nonzero(f.mask(ARC)) == 13
    assert np.count_nonzero(f.mask(FLAT)) == 2 * 9
    assert np.count_nonzero(f.mask(ORIGIN)) == 1
    g3 = build_grid(3, 10, 12)
    assert np.count_nonzero(g3.faces.mask(FLAT)) == 9


@pytest.mark.parametrize("radius", [1.0, 2.5])
def test_surface_weights(radius):
    # arc length pi R and flat segment 2R for the half-disk; hemisphere 2 pi R^2
    # and flat disk pi R^2 for the half-ball
    n = 400
    g = build_grid(2, n, n, radius)
    f = g.faces
    assert np.isclose(f.surface_weight[f.mask(ARC)].sum(), np.pi * radius, rtol=1e-12)
    assert np.isclose(f.surface_weight[f.mask(FLAT)].sum(), 2 * radius, rtol=2 / n)
    g3 = build_grid(3, n, n, radius)
    f3 = g3.faces
    assert np.isclose(f3.surface_weight[f3.mask(ARC)].sum(), 2 * np.pi * radius**2, rtol=1e-4)
    assert np.isclose(f3.surface_weight[f3.mask(FLAT)].sum(), np.pi * radius**2, rtol=2 / n)


def test_x_dot_nu_only_on_arc():
    g = build_grid(2, 8, 8, 1.5)
    f = g.faces
    assert np.all(f.x_dot_nu[f.mask(ARC)] == 1.5)
    assert np.all(f.x_dot_nu[~f.mask(ARC)] == 0)


def test_cartesian_orientation():
    # second column is the distance to the flat boundary, non-negative
    for dim in (2, 3):
        xy = build_grid(dim, 8, 8).cartesian()
        assert np.all(xy[:, 1] >= -1e-15)
        assert np.allclose(np.hypot(xy[:, 0], xy[:, 1]), build_grid(dim, 8, 8).node_coords()[0])


def test_refine():
    g = build_grid(3, 6, 7, 2.0).refine()
    assert (g.n_r, g.n_theta, g.radius, g.dimension) == (12, 14, 2.0, 3)
