import numpy as np
import pytest
import scipy.linalg as sl
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hardylab import (
    assemble,
    best_hardy_constant,
    build_grid,
    critical_profile_diagnostic,
    refined_log_constant,
    smallest_generalized_eigenpairs,
    tu8_constant,
)
from hardylab.spectral import (
    ConvergenceError,
    critical_profile,
    critical_profile_regularized_exact,
    dirichlet_log_slope,
    negative_inertia,
    tu8_slack,
)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**20), n=st.integers(3, 25))
def test_negative_inertia_matches_dense(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A = A + A.T + np.diag(rng.uniform(0.1, 1.0, n))
    evals = np.linalg.eigvalsh(A)
    if np.min(np.abs(evals)) < 1e-8:
        return
    assert negative_inertia(sp.csc_matrix(A)) == np.count_nonzero(evals < 0)


def test_eigenpairs_match_dense_solver(ops2):
    A, B = ops2.K_lambda, ops2.M
    ref = sl.eigh(A.toarray(), B.toarray(), eigvals_only=True, subset_by_index=[0, 4])
    pairs = smallest_generalized_eigenpairs(A, B, 5)
    assert np.allclose([p.value for p in pairs], ref, rtol=1e-9)
    for p in pairs:
        assert np.isclose(p.vector @ (B @ p.vector), 1.0)
        assert p.residual < 1e-10


def test_eigenpairs_indefinite_pencil():
    # shift placement must handle a spectrum that starts far below zero
    A = sp.diags([-50.0, -3.0, 2.0, 7.0, 9.0, 11.0])
    pairs = smallest_generalized_eigenpairs(A, sp.identity(6), 2)
    assert np.allclose([p.value for p in pairs], [-50.0, -3.0])


def test_eigenpairs_validation():
    B = sp.identity(4)
    with pytest.raises(ValueError):
        smallest_generalized_eigenpairs(sp.csr_matrix(np.triu(np.ones((4, 4)))), B)
    with pytest.raises(ValueError):
        smallest_generalized_eigenpairs(B, -B)
    with pytest.raises(ValueError):
        smallest_generalized_eigenpairs(B, B, k=4)
    with pytest.raises(ValueError):
        smallest_generalized_eigenpairs(B, B, k=0)


def test_convergence_error_carries_info():
    err = ConvergenceError("stalled", iterations=3, residual=0.5)
    assert err.iterations == 3 and err.residual == 0.5
    assert isinstance(err, RuntimeError)


def test_eigenvalue_first_order_in_lambda():
    # mu(lam) decreases as lam grows: the potential form is positive
    g = build_grid(2, 32, 32)
    ops = assemble(g)
    mus = [
        smallest_generalized_eigenpairs(ops.with_lambda(l).K_lambda, ops.M, 1)[0].value
        for l in (0.0, 0.5, 1.0)
    ]
    assert mus[0] > mus[1] > mus[2] > 0


def test_best_hardy_constant_trend():
    est = best_hardy_constant(build_grid(2, 16, 16), [16, 32])
    vals = [v for _, v in est.refinement_trend]
    assert vals[1] <= vals[0] and vals[1] >= 1.0
    assert est.resolution == (32, 32)
    assert est.coarse is False
    assert best_hardy_constant(build_grid(2, 16, 16)).coarse is True
    with pytest.raises(ValueError):
        best_hardy_constant(build_grid(2, 16, 16), [32, 16])


def test_refined_log_constant_positive():
    est = refined_log_constant(build_grid(3, 24, 24))
    assert est.value > 0.2


def test_tu8_constant_and_slack():
    g = build_grid(2, 32, 32)
    est = tu8_constant(g)
    assert [r for r, _ in est.refinement_trend] == [(16, 16), (32, 32)]
    ops = assemble(g, 0.0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.standard_normal(g.size)
        assert tu8_slack(ops, v, est.value) >= -1e-9 * abs(quadratic_scale(ops, v))
    # equality at the extremal field
    assert abs(tu8_slack(ops, est.minimizer, est.value)) < 1e-8


def quadratic_scale(ops, v):
    return float(v @ (ops.K @ v))


def test_tu8_constant_is_scale_invariant():
    a = tu8_constant(build_grid(2, 24, 24, 1.0)).value
    b = tu8_constant(build_grid(2, 24, 24, 2.0)).value
    assert np.isclose(a, b, rtol=1e-8)


def test_critical_profile_diagnostic_rows():
    g = build_grid(2, 64, 64)
    rows = critical_profile_diagnostic(g, [0.2, 0.1, 0.05])
    assert [r.epsilon for r in rows] == [0.2, 0.1, 0.05]
    assert dirichlet_log_slope(rows) > 0
    assert all(np.isfinite(r.regularized_value) for r in rows)
    with pytest.raises(ValueError):
        critical_profile_diagnostic(g, [0.05, 0.1])
    with pytest.raises(ValueError):
        critical_profile_diagnostic(g, [0.2, 0.01])
    with pytest.raises(ValueError):
        critical_profile(build_grid(3, 16, 16))


def test_regularized_exact_value():
    # (pi/4) z^2 J_1(z)^2 with z the first zero of J_0
    import mpmath

    z = mpmath.besseljzero(0, 1)
    ref = float(mpmath.pi / 4 * z**2 * mpmath.besselj(1, z) ** 2)
    assert abs(critical_profile_regularized_exact() - ref) < 1e-12
    assert critical_profile_regularized_exact(3.0) == critical_profile_regularized_exact(1.0)


def test_eigenpairs_are_reproducible(ops2):
    a = smallest_generalized_eigenpairs(ops2.K_lambda, ops2.M, 3)
    b = smallest_generalized_eigenpairs(ops2.K_lambda, ops2.M, 3)
    for p, q in zip(a, b):
        assert p.value == q.value and np.array_equal(p.vector, q.vector)
        assert p.vector[np.argmax(np.abs(p.vector))] > 0
