import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hardylab import (
    assemble,
    build_grid,
    ground_state,
    nonlinear_balance,
    pohozaev_report,
    solve_dirichlet,
    trace_inequality_ratio,
)
from hardylab.elliptic import balance_factor, critical_exponent
from hardylab.spectral import ConvergenceError


def half_order_mode(r, t):
    return np.sin(t) * np.sin(np.pi * r) / np.sqrt(r)


def test_manufactured_solution_second_order():
    # -Lap[(r - r^2) sin t] = 3 sin t on the half-disk
    errs = []
    for n in (32, 64):
        g = build_grid(2, n, n)
        u = solve_dirichlet(assemble(g, 0.0), g.sample(lambda r, t: 3 * np.sin(t)))
        exact = g.sample(lambda r, t: (r - r * r) * np.sin(t))
        errs.append(np.max(np.abs(u - exact)) / np.max(np.abs(exact)))
    assert errs[1] < 2e-3
    assert errs[1] < errs[0] / 3


def test_singular_solution_in_energy_norm():
    g = build_grid(2, 128, 128)
    ops = assemble(g, 0.75)
    exact = g.sample(half_order_mode)
    u, info = solve_dirichlet(ops, np.pi**2 * exact, return_info=True)
    err = np.sqrt(ops.mass(u - exact) / ops.mass(exact))
    assert err <= 0.02
    assert info.residual <= 1e-9 and not info.critical


def test_critical_solve_needs_opt_in(grid2):
    ops = assemble(grid2, 1.0)
    f = np.ones(grid2.size)
    with pytest.raises(ValueError, match="critical"):
        solve_dirichlet(ops, f)
    u, info = solve_dirichlet(ops, f, allow_critical=True, return_info=True)
    assert info.critical
    assert np.linalg.norm(ops.K_lambda @ u - ops.m * f) <= 1e-8 * np.linalg.norm(ops.m * f)


def test_zero_source_gives_zero(ops2):
    u, info = solve_dirichlet(ops2, np.zeros(ops2.grid.size), return_info=True)
    assert not np.any(u) and info.iterations == 0


def test_iteration_cap_raises():
    g = build_grid(2, 64, 64)
    with pytest.raises(ConvergenceError) as exc:
        solve_dirichlet(assemble(g, 0.5), np.ones(g.size), tol=1e-14, max_iter=1)
    assert exc.value.iterations is not None


def test_solve_rejects_wrong_shape(ops2):
    with pytest.raises(ValueError):
        solve_dirichlet(ops2, np.ones(3))


def test_pohozaev_residual_decreases():
    res = []
    for n in (32, 64):
        g = build_grid(2, n, n)
        u = g.sample(half_order_mode)
        rep = pohozaev_report(g, assemble(g, 0.75), u, np.pi**2 * u)
        res.append(abs(rep.residual))
    assert res[1] < res[0] < 0.05


def test_pohozaev_grid_mismatch(ops2):
    other = build_grid(2, 24, 24)
    with pytest.raises(ValueError):
        pohozaev_report(other, ops2, np.zeros(other.size), np.zeros(other.size))


def test_pohozaev_zero_field(grid2, ops2):
    z = np.zeros(grid2.size)
    assert pohozaev_report(grid2, ops2, z, z).residual == 0.0


def test_trace_ratio_zero_and_scaling(grid2, ops2):
    z = np.zeros(grid2.size)
    assert trace_inequality_ratio(grid2, ops2, z, z) == 0.0
    u = grid2.sample(half_order_mode)
    a = trace_inequality_ratio(grid2, ops2, u, np.pi**2 * u)
    b = trace_inequality_ratio(grid2, ops2, 3 * u, 3 * np.pi**2 * u)
    assert np.isclose(a, b, rtol=1e-12)


def test_critical_exponent():
    assert critical_exponent(2) == np.inf
    assert critical_exponent(3) == 5.0


@given(alpha=st.floats(1.0001, 20.0))
def test_balance_factor_sign(alpha):
    f3 = balance_factor(3, alpha)
    assert (f3 > 0) == (alpha < 5.0)
    assert balance_factor(2, alpha) > 0


def test_balance_factor_exact_values():
    assert balance_factor(3, 2.0) == 0.5
    assert balance_factor(3, 5.0) == 0.0


def test_ground_state_refuses_supercritical(ops3):
    with pytest.raises(ValueError, match="star-shaped"):
        ground_state(ops3, 5.0)
    with pytest.raises(ValueError):
        ground_state(ops3, 1.0)


def test_ground_state_properties():
    g = build_grid(3, 32, 32)
    ops = assemble(g, 2.0)
    gs = ground_state(ops, 2.0)
    assert gs.converged
    assert np.all(gs.u >= -1e-12 * np.max(gs.u))
    assert np.all(np.diff(gs.objective_history) <= 1e-10 * gs.objective_history[0])
    assert gs.fixed_point_residual < 1e-8
    bal = nonlinear_balance(g, gs)
    assert bal.relative_gap < 0.05 and bal.balance_factor == 0.5


def test_ground_state_n2_any_exponent():
    g = build_grid(2, 24, 24)
    gs = ground_state(assemble(g, 0.5), 7.0)
    assert gs.converged and gs.u.max() > 0


def test_supercritical_exploration_returns_result():
    g = build_grid(3, 16, 16)
    gs = ground_state(assemble(g, 1.0), 6.0, max_iter=3, strict=False)
    assert gs.iterations <= 3
    if not gs.converged:
        with pytest.raises(ValueError):
            nonlinear_balance(g, gs)


def test_trace_ratio_manufactured():
    # u = x_2 (1 - r), -Lap u = 3 sin t: boundary integral pi/2 + 1/15,
    # Dirichlet energy pi/8, source norm 9 pi/4
    exact = (np.pi / 2 + 1 / 15) / (np.pi / 8 + 9 * np.pi / 4)
    g = build_grid(2, 64, 64)
    ops = assemble(g, 0.0)
    u = g.sample(lambda r, t: (r - r * r) * np.sin(t))
    f = g.sample(lambda r, t: 3 * np.sin(t))
    assert abs(trace_inequality_ratio(g, ops, u, f) / exact - 1) <= 0.02
