import numpy as np
import pytest

from hardylab import assemble, build_grid, smallest_generalized_eigenpairs


@pytest.fixture(scope="session")
def grid2():
    return build_grid(2, 24, 24)


@pytest.fixture(scope="session")
def grid3():
    return build_grid(3, 20, 20)


@pytest.fixture(scope="session")
def ops2(grid2):
    return assemble(grid2, 0.75)


@pytest.fixture(scope="session")
def ops3(grid3):
    return assemble(grid3, 2.0)


@pytest.fixture(scope="session")
def wave_setup():
    """Small critical half-disk with its first eigenmode."""
    g = build_grid(2, 20, 20)
    ops = assemble(g, 1.0)
    phi = smallest_generalized_eigenpairs(ops.K_lambda, ops.M, 1)[0].vector
    return g, ops, phi


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter, config):
    # filled by test_acceptance.py: (number, title, passed, detail)
    results = getattr(config, "acceptance_results", [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(results):
        terminalreporter.write_line(
            f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        )
