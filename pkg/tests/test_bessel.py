import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hardylab import bessel_zero, besselj, besselj_derivative
from hardylab.bessel import SWITCH


@settings(max_examples=80, deadline=None)
@given(
    nu=st.sampled_from([0.0, 0.5, 1.0, 1.5, 2.0, 3.0]),
    x=st.floats(0.0, 60.0, allow_nan=False),
)
def test_besselj_matches_mpmath(nu, x):
    assert abs(besselj(nu, x) - float(mpmath.besselj(nu, x))) < 1e-11


def test_switch_is_continuous():
    # series and asymptotic branches agree to their documented 1e-11 accuracy
    for nu in (0, 1, 2.5):
        lo, hi = besselj(nu, SWITCH * (1 - 1e-12)), besselj(nu, SWITCH * (1 + 1e-12))
        assert abs(lo - hi) < 1e-11


def test_half_order_closed_form():
    x = np.linspace(0.1, 30, 50)
    assert np.allclose(besselj(0.5, x), np.sqrt(2 / (np.pi * x)) * np.sin(x), atol=1e-13)


def test_integer_parity():
    x = np.array([0.7, 3.2, 15.0])
    assert np.allclose(besselj(1, -x), -besselj(1, x))
    assert np.allclose(besselj(2, -x), besselj(2, x))
    with pytest.raises(ValueError):
        besselj(0.5, -1.0)
    with pytest.raises(ValueError):
        besselj(-1.0, 1.0)


def test_derivative_recurrence():
    x = np.linspace(0.5, 20, 30)
    for nu in (0, 1, 2.5):
        ref = np.array([float(mpmath.besselj(nu, t, derivative=1)) for t in x])
        assert np.allclose(besselj_derivative(nu, x), ref, atol=1e-12)


@pytest.mark.parametrize("nu,k", [(0, 1), (0, 2), (0.5, 1), (1, 1), (1, 3), (2, 2)])
def test_zeros_match_mpmath(nu, k):
    assert abs(bessel_zero(nu, k) - float(mpmath.besseljzero(nu, k))) < 1e-10


def test_half_order_zeros_are_multiples_of_pi():
    for k in (1, 2, 3):
        assert abs(bessel_zero(0.5, k) - k * np.pi) < 1e-12


def test_zero_index_validated():
    with pytest.raises(ValueError):
        bessel_zero(0, 0)
