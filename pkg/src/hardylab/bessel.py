"""Bessel functions of the first kind and their positive zeros.

Power series below ``|x| = 12``, Hankel asymptotic expansion above.
Absolute accuracy is about 1e-12 near the origin and 1e-11 at the switch.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

SWITCH = 12.0
_SERIES_TERMS = 60
_ASYMPTOTIC_TERMS = 24


def _series(nu: float, x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    term = half**nu / math.gamma(nu + 1.0)
    total = term.copy()
    q = -(half**2)
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * (k + nu))
        total += term
    return total


def _asymptotic(nu: float, x: np.ndarray) -> np.ndarray:
    mu = 4.0 * nu * nu
    P = np.ones_like(x)
    Q = np.zeros_like(x)
    a = 1.0
    best = np.full_like(x, np.inf)
    done = np.zeros(x.shape, dtype=bool)
    for k in range(1, _ASYMPTOTIC_TERMS):
        a *= (mu - (2 * k - 1) ** 2) / (k * 8.0)
        term = a / x**k
        # stop each entry at its smallest term (optimal truncation)
        done |= np.abs(term) > best
        term = np.where(done, 0.0, term)
        best = np.where(done, best, np.abs(term))
        sign = (-1) ** (k // 2)
        if k % 2 == 0:
            P += sign * term
        else:
            Q += sign * term
    chi = x - (0.5 * nu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (P * np.cos(chi) - Q * np.sin(chi))


def besselj(nu: float, x):
    """J_nu(x) for real order ``nu >= 0`` and real ``x >= 0``.

    Integer orders also accept negative ``x``.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    integer = float(nu).is_integer()
    if np.any(x < 0) and not integer:
        raise ValueError("non-integer order needs x >= 0")
    if nu < 0:
        raise ValueError("order must be non-negative")
    ax = np.abs(x)
    out = np.empty_like(ax)
    small = ax < SWITCH
    out[small] = _series(nu, ax[small])
    out[~small] = _asymptotic(nu, ax[~small])
    if integer and int(nu) % 2 == 1:
        out = np.where(x < 0, -out, out)
    return float(out[0]) if scalar else out


def besselj_derivative(nu: float, x):
    """dJ_nu/dx via the three-term recurrence."""
    if nu == 0:
        return -np.asarray(besselj(1, x)) if np.ndim(x) else -besselj(1, x)
    return 0.5 * (np.asarray(besselj(nu - 1, x)) - np.asarray(besselj(nu + 1, x)))


def bessel_zero(nu: float, k: int = 1, step: float = 0.05) -> float:
    """k-th positive zero of J_nu, found by a sign-change scan then Brent."""
    if k < 1:
        raise ValueError("k must be >= 1")
    a = max(nu, step)
    fa = besselj(nu, a)
    found = 0
    while True:
        b = a + step
        fb = besselj(nu, b)
        if fa == 0.0:
            found += 1
            if found == k:
                return a
        elif fa * fb < 0:
            found += 1
            if found == k:
                return brentq(lambda t: besselj(nu, t), a, b, xtol=1e-15, rtol=1e-15)
        a, fa = b, fb


Z01 = bessel_zero(0, 1)
Z11 = bessel_zero(1, 1)
