"""Boundary null control by the Hilbert Uniqueness Method.

Everything is discrete and exact with respect to the time steppers.  For the
midpoint wave step, the symplectic pairing ``w(X, Y) = u_X.M w_Y - w_X.M u_Y``
between a controlled state X and a free adjoint state Y changes in one step
by ``c_n . O_n Y`` with ``O_n Y = dt B^T ybar_{n+1/2}`` (the midpoint flux).
Driving X to zero with ``c_n = W^-1 O_n a`` then gives a symmetric positive
semidefinite Gramian ``G a = (M u_t(0), -M u(0))``.  The weight
``W = dt sigma / (x.nu)`` makes ``c_n ~ (x.nu) dv/dnu`` and
``a.G a ~ int_0^T int (x.nu)(dv/dnu)^2``.

Crank-Nicolson Schrodinger steps satisfy the analogous identity for
``y^H M u`` with a factor ``i``, so ``c_n = i W^-1 O_n a`` yields a
Hermitian Gramian ``G a = M u(0)``.

Two standard devices keep the discrete problem well posed.  The
observation carries a smooth time weight ``rho(t)`` that vanishes at
``t = 0`` and ``t = T`` (``ramp`` is the fraction of T spent switching on
or off), so controls start and end at zero instead of jumping.  Adjoint
data are restricted to modes with frequency ``sqrt(mu) <= ratio * 2/dr``;
finite differences propagate the modes above that cutoff with vanishing
group velocity, which leaves a numerical kernel in the unfiltered Gramian.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
import scipy.sparse.linalg as sla

from .evolution import SchrodingerStepper, WaveStepper, observation_ratio, time_grid
from .operators import OperatorSet
from .spectral import negative_inertia, smallest_generalized_eigenpairs

log = logging.getLogger(__name__)


@dataclass
class ControlResult:
    """Outcome of a HUM solve.

    ``control_trace[n]`` holds the Dirichlet values on the faces
    ``control_faces`` (indices into ``grid.faces``) at the midpoint time
    ``control_times[n] = (n + 1/2) dt``.  ``reduction_factor`` is the
    energy ratio E(0)/E(T) of the verification run (mass ratio for
    Schrodinger); ``filtered_modes`` is the adjoint search dimension per
    slot, 0 when unfiltered.
    """

    kind: str
    control_trace: np.ndarray
    control_times: np.ndarray
    control_faces: np.ndarray
    minimizer: tuple
    cg_iterations: int
    cg_residual: float
    J_value: float
    reduction_factor: float
    converged: bool
    T: float
    dt: float
    J_history: list = field(default_factory=list, repr=False)
    residual_history: list = field(default_factory=list, repr=False)
    filtered_modes: int = 0
    weak_reduction_factor: float = np.nan
    ops: OperatorSet | None = field(default=None, repr=False)


DEFAULT_RAMP = 0.2
DEFAULT_FILTER = 0.75


def _weights(ops: OperatorSet, dt: float) -> np.ndarray:
    """``(x.nu) / (dt sigma)`` on the control faces, i.e. ``W^-1``."""
    f = ops.grid.faces
    idx = ops.control_faces
    return f.x_dot_nu[idx] / (dt * f.surface_weight[idx])


def time_weight(t: np.ndarray, T: float, ramp: float) -> np.ndarray:
    """Smooth on/off weight: ``sin^2`` ramps of length ``ramp * T`` at both ends."""
    if not 0 <= ramp <= 0.5:
        raise ValueError("ramp must lie in [0, 1/2]")
    t = np.asarray(t, dtype=float)
    if ramp == 0:
        return np.ones_like(t)
    s = np.clip(np.minimum(t, T - t) / (ramp * T), 0.0, 1.0)
    return np.sin(0.5 * np.pi * s) ** 2


@dataclass
class SpectralFilter:
    """Lowest eigenpairs of ``(K_lambda, M)`` below a frequency cutoff."""

    values: np.ndarray
    vectors: np.ndarray
    cutoff: float

    def __len__(self):
        return len(self.values)

    def h_riesz(self, r):
        """Projected ``K_lambda^-1 r``."""
        return self.vectors @ ((self.vectors.T @ r) / self.values)

    def l2_riesz(self, r):
        """Projected ``M^-1 r``."""
        return self.vectors @ (self.vectors.T @ r)


_DENSE_LIMIT = 5000


def spectral_filter(ops: OperatorSet, ratio: float) -> SpectralFilter:
    """Modes with ``sqrt(mu) <= ratio * 2 / delta_r``.

    ``2 / delta_r`` is the top frequency of the radial difference stencil,
    where its group velocity vanishes.
    """
    if not ratio > 0:
        raise ValueError("filter ratio must be positive")
    cutoff = ratio * 2.0 / ops.grid.delta_r
    A, M = ops.K_lambda, ops.M
    if ops.grid.size <= _DENSE_LIMIT:
        mu, V = sl.eigh(A.toarray(), np.diag(ops.m), subset_by_value=(-np.inf, cutoff**2))
    else:
        k = negative_inertia(A - cutoff**2 * M)
        if k == 0:
            raise ValueError("no mode below the filter cutoff")
        pairs = smallest_generalized_eigenpairs(A, M, min(k, ops.grid.size - 1), tol=1e-8)
        mu = np.array([p.value for p in pairs])
        V = np.column_stack([p.vector for p in pairs])
    if len(mu) == 0:
        raise ValueError("no mode below the filter cutoff")
    return SpectralFilter(mu, V, cutoff)


class WaveHUM:
    """Discrete HUM machinery for one operator set and time grid.

    ``ramp`` sets the time weight of the observation (0 for none).
    """

    def __init__(self, ops: OperatorSet, T: float, dt: float, ramp: float = DEFAULT_RAMP):
        self.ops = ops
        self.n_steps, self.dt = time_grid(T, dt)
        self.T = T
        self.forward = WaveStepper(ops, self.dt)
        self.backward = WaveStepper(ops, -self.dt)
        self.winv = _weights(ops, self.dt)
        self.times = (np.arange(self.n_steps) + 0.5) * self.dt
        self.rho = time_weight(self.times, T, ramp)
        self._Bt = ops.boundary.T.tocsr()
        self._Ksolve = None

    def split(self, a):
        n = self.ops.grid.size
        return a[:n], a[n:]

    def controls(self, a) -> np.ndarray:
        """``c_n = rho_n W^-1 O_n a`` from the free run started at a = (v0, v1)."""
        v, w = self.split(np.asarray(a, dtype=float))
        out = np.empty((self.n_steps, len(self.winv)))
        for k in range(self.n_steps):
            v, w, mid = self.forward.step(v, w)
            out[k] = self.rho[k] * self.winv * (self.dt * (self._Bt @ mid))
        return out

    def backward_state(self, controls) -> tuple[np.ndarray, np.ndarray]:
        """Initial state that the control sequence steers to rest at T."""
        n = self.ops.grid.size
        u, w = np.zeros(n), np.zeros(n)
        for k in range(self.n_steps - 1, -1, -1):
            u, w, _ = self.backward.step(u, w, controls[k])
        return u, w

    def gram(self, a) -> np.ndarray:
        """``G a``: the symmetric PSD Gramian applied to a = (v0, v1)."""
        u, w = self.backward_state(self.controls(a))
        m = self.ops.m
        return np.concatenate([m * w, -m * u])

    def rhs(self, u0, u1) -> np.ndarray:
        m = self.ops.m
        return np.concatenate([m * u1, -m * u0])

    def energy_inner(self, a, b) -> float:
        """``<a, b>_E = a0.K_lambda b0 + a1.M b1``."""
        a0, a1 = self.split(a)
        b0, b1 = self.split(b)
        return float(a0 @ (self.ops.K_lambda @ b0) + a1 @ (self.ops.m * b1))

    def riesz(self, g) -> np.ndarray:
        """``E^-1 g`` (dual slots identified through the mass pivot)."""
        if self._Ksolve is None:
            self._Ksolve = sla.factorized(self.ops.K_lambda.tocsc())
        g0, g1 = self.split(g)
        return np.concatenate([self._Ksolve(g0), g1 / self.ops.m])

    def filtered_riesz(self, filt: SpectralFilter):
        def apply(g):
            g0, g1 = self.split(g)
            return np.concatenate([filt.h_riesz(g0), filt.l2_riesz(g1)])

        return apply

    def apply(self, a) -> np.ndarray:
        """HUM operator ``Lambda = E^-1 G``, self-adjoint in the energy product."""
        return self.riesz(self.gram(a))


def hum_operator(ops: OperatorSet, v_data, T: float, dt: float, ramp: float = DEFAULT_RAMP):
    """Apply the HUM operator to adjoint data ``(v0, v1)``.

    Returns ``Lambda(v0, v1)`` as a pair; ``<Lambda a, b>_E`` equals the
    weighted observation pairing ``sum_n rho_n (O_n a).W^-1 (O_n b)``.
    """
    hum = WaveHUM(ops, T, dt, ramp)
    v0, v1 = (np.asarray(ops.grid.check_field(x), dtype=float) for x in v_data)
    return hum.split(hum.apply(np.concatenate([v0, v1])))


def _pcg(apply_G, b, precond, inner, tol, max_iter):
    """Preconditioned CG; returns (x, iterations, residual, converged, J, res).

    ``residual`` is the relative dual norm ``sqrt(r.P r) / sqrt(b.P b)``;
    ``J`` records ``1/2 x.Gx - Re b.x``, non-increasing by construction.
    """
    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r)
    rz = inner(r, z)
    J_hist, res_hist = [0.0], [1.0]
    if rz <= 0:
        return x, 0, 0.0, True, J_hist, [0.0]
    bnorm = np.sqrt(rz)
    p = z.copy()
    J = 0.0
    for it in range(1, max_iter + 1):
        Gp = apply_G(p)
        pGp = inner(p, Gp)
        if pGp <= 0:
            log.warning("Gramian lost positivity at iteration %d", it)
            return x, it, res_hist[-1], False, J_hist, res_hist
        alpha = rz / pGp
        x = x + alpha * p
        r = r - alpha * Gp
        J -= 0.5 * rz**2 / pGp
        z = precond(r)
        rz_new = inner(r, z)
        res = np.sqrt(max(rz_new, 0.0)) / bnorm
        J_hist.append(J)
        res_hist.append(res)
        if res <= tol:
            return x, it, res, True, J_hist, res_hist
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, max_iter, res_hist[-1], False, J_hist, res_hist


def _real_inner(a, b):
    return float(np.real(np.vdot(a, b)))


def _check_horizon(ops: OperatorSet, T: float):
    if T < 2 * ops.grid.radius:
        warnings.warn(
            f"T = {T:g} is below 2 R = {2 * ops.grid.radius:g}; the wave Gramian is "
            "poorly conditioned and CG may stall",
            RuntimeWarning,
            stacklevel=3,
        )


def _filter_or_none(ops, filter_ratio):
    if filter_ratio is None:
        return None
    filt = spectral_filter(ops, filter_ratio)
    log.info("HUM filter keeps %d of %d modes", len(filt), ops.grid.size)
    return filt


def hum_solve(
    ops: OperatorSet,
    target_data,
    T: float,
    dt: float,
    tol: float = 1e-8,
    max_iter: int = 500,
    final_state=None,
    ramp: float = DEFAULT_RAMP,
    filter_ratio: float | None = DEFAULT_FILTER,
    verify: bool = True,
) -> ControlResult:
    """Dirichlet control on the arc steering ``(u0, u1) = target_data`` to rest.

    CG minimizes ``J(a) = 1/2 a.G a - b.a`` with ``b = (M u1, -M u0)``,
    preconditioned by the energy Riesz map, so the residual is the
    ``L^2 x H_lambda'`` distance between the state steered to rest and the
    data.  ``filter_ratio=None`` searches the full adjoint space.

    With ``final_state = (ubar0, ubar1)`` the state is steered there instead:
    the free solution ending at the target is run backward and the
    difference is null-controlled.
    """
    _check_horizon(ops, T)
    g = ops.grid
    u0, u1 = (np.asarray(g.check_field(x), dtype=float) for x in target_data)
    hum = WaveHUM(ops, T, dt, ramp)
    if final_state is not None:
        z0, z1 = _free_backward_wave(hum, final_state)
        d0, d1 = u0 - z0, u1 - z1
    else:
        d0, d1 = u0, u1
    b = hum.rhs(d0, d1)
    filt = _filter_or_none(ops, filter_ratio) if np.any(b) else None
    precond = hum.riesz if filt is None else hum.filtered_riesz(filt)
    a, its, res, ok, J_hist, res_hist = _pcg(hum.gram, b, precond, _real_inner, tol, max_iter)
    if not ok:
        log.warning("HUM CG not converged: %d iterations, residual %.2e", its, res)
    controls = hum.controls(a) if its else np.zeros((hum.n_steps, len(hum.winv)))
    result = ControlResult(
        kind="wave",
        control_trace=controls,
        control_times=hum.times,
        control_faces=ops.control_faces.copy(),
        minimizer=hum.split(a),
        cg_iterations=its,
        cg_residual=res,
        J_value=J_hist[-1],
        reduction_factor=np.nan,
        converged=ok,
        T=T,
        dt=hum.dt,
        J_history=J_hist,
        residual_history=res_hist,
        filtered_modes=0 if filt is None else len(filt),
        ops=ops,
    )
    if verify:
        if final_state is None:
            rep = verify_control(ops, (u0, u1), result, T, dt)
        else:
            rep = verify_control(ops, (u0, u1), result, T, dt, final_state=final_state)
        result.reduction_factor = rep.reduction_factor
        result.weak_reduction_factor = rep.weak_reduction_factor
    return result


def _free_backward_wave(hum: WaveHUM, final_state):
    g = hum.ops.grid
    u, w = (np.asarray(g.check_field(x), dtype=float) for x in final_state)
    for _ in range(hum.n_steps):
        u, w, _ = hum.backward.step(u, w)
    return u, w


def _check_match(ops, control: ControlResult, T, dt, kind):
    if control.kind != kind:
        raise ValueError(f"expected a {kind} control, got {control.kind}")
    if control.ops is not None and control.ops.grid is not ops.grid:
        raise ValueError("control was computed on a different grid")
    n, dt_eff = time_grid(T, dt)
    if control.control_trace.shape != (n, len(ops.control_faces)):
        raise ValueError(
            f"control trace shape {control.control_trace.shape} does not match "
            f"{n} steps on {len(ops.control_faces)} faces"
        )
    if abs(dt_eff - control.dt) > 1e-12 * dt_eff:
        raise ValueError("time step differs from the one used to compute the control")
    return n, dt_eff


@dataclass
class Verification:
    """Energies of a controlled run: ``E = 1/2 (w.M w + u.K_lambda u)`` and
    the transposition-level ``E' = 1/2 (u.M u + (M w).K_lambda^-1 (M w))``."""

    initial_energy: float
    final_energy: float
    reduction_factor: float
    weak_initial: float
    weak_final: float
    weak_reduction_factor: float

    def __iter__(self):
        # unpacks as (final_energy, reduction_factor)
        return iter((self.final_energy, self.reduction_factor))


def _ratio(e0, eT):
    if e0 == 0:
        return 1.0
    return np.inf if eT == 0 else e0 / eT


def verify_control(
    ops: OperatorSet, initial_data, control: ControlResult, T: float, dt: float, final_state=None
) -> Verification:
    """Forward controlled run from ``initial_data``.

    Energies are measured on the deviation from the free trajectory ending
    at ``final_state`` when one is given (zero otherwise).  Unpacks as
    ``(final_energy, reduction_factor)``; a zero initial energy gives 1.
    """
    n, dt = _check_match(ops, control, T, dt, "wave")
    st = WaveStepper(ops, dt)
    g = ops.grid
    u, w = (np.asarray(g.check_field(x), dtype=float) for x in initial_data)
    if final_state is None:
        z, zw = np.zeros_like(u), np.zeros_like(w)
        z0, zw0 = z, zw
    else:
        z, zw = (np.asarray(g.check_field(x), dtype=float) for x in final_state)
        back = WaveStepper(ops, -dt)
        z0, zw0 = z, zw
        for _ in range(n):
            z0, zw0, _ = back.step(z0, zw0)
    Ksolve = sla.factorized(ops.K_lambda.tocsc())

    def weak(a, b):
        mb = ops.m * b
        return 0.5 * float(a @ (ops.m * a) + mb @ Ksolve(mb))

    E0, W0 = st.energy(u - z0, w - zw0), weak(u - z0, w - zw0)
    for k in range(n):
        u, w, _ = st.step(u, w, control.control_trace[k])
    ET, WT = st.energy(u - z, w - zw), weak(u - z, w - zw)
    return Verification(E0, ET, _ratio(E0, ET), W0, WT, _ratio(W0, WT))


class SchrodingerHUM:
    """Hermitian Gramian ``G a = M u(0)`` for Crank-Nicolson steps."""

    def __init__(self, ops: OperatorSet, T: float, dt: float, ramp: float = DEFAULT_RAMP):
        self.ops = ops
        self.n_steps, self.dt = time_grid(T, dt)
        self.T = T
        self.forward = SchrodingerStepper(ops, self.dt)
        self.backward = SchrodingerStepper(ops, -self.dt)
        self.winv = _weights(ops, self.dt)
        self.times = (np.arange(self.n_steps) + 0.5) * self.dt
        self.rho = time_weight(self.times, T, ramp)
        self._Bt = ops.boundary.T.tocsr()
        self._Ksolve = None

    def controls(self, a) -> np.ndarray:
        y = np.asarray(a, dtype=complex)
        out = np.empty((self.n_steps, len(self.winv)), dtype=complex)
        for k in range(self.n_steps):
            y, mid = self.forward.step(y)
            out[k] = 1j * self.rho[k] * self.winv * (self.dt * (self._Bt @ mid))
        return out

    def backward_state(self, controls) -> np.ndarray:
        u = np.zeros(self.ops.grid.size, dtype=complex)
        for k in range(self.n_steps - 1, -1, -1):
            u, _ = self.backward.step(u, controls[k])
        return u

    def gram(self, a) -> np.ndarray:
        return self.ops.m * self.backward_state(self.controls(a))

    def riesz(self, g) -> np.ndarray:
        """``K_lambda^-1 g``: identifies H' with H."""
        if self._Ksolve is None:
            self._Ksolve = sla.factorized(self.ops.K_lambda.tocsc())
        return self._Ksolve(g.real) + 1j * self._Ksolve(g.imag)


def schrodinger_hum_solve(
    ops: OperatorSet,
    u0: np.ndarray,
    T: float,
    dt: float,
    tol: float = 1e-8,
    max_iter: int = 500,
    ramp: float = DEFAULT_RAMP,
    filter_ratio: float | None = DEFAULT_FILTER,
    verify: bool = True,
) -> ControlResult:
    """Dirichlet control on the arc steering ``u0`` to zero at time T.

    Any ``T > 0`` is admissible.  The CG residual is the ``H_lambda'``
    distance of the steered state; ``reduction_factor`` is the mass ratio
    ``|u(0)|_M^2 / |u(T)|_M^2`` of the verification run.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    u0 = np.asarray(ops.grid.check_field(u0), dtype=complex)
    hum = SchrodingerHUM(ops, T, dt, ramp)
    b = ops.m * u0
    filt = _filter_or_none(ops, filter_ratio) if np.any(b) else None
    if filt is None:
        precond = hum.riesz
    else:
        def precond(r):
            return filt.h_riesz(r.real) + 1j * filt.h_riesz(r.imag)
    a, its, res, ok, J_hist, res_hist = _pcg(hum.gram, b, precond, _real_inner, tol, max_iter)
    if not ok:
        log.warning("Schrodinger HUM CG not converged: %d iterations, residual %.2e", its, res)
    controls = (
        hum.controls(a) if its else np.zeros((hum.n_steps, len(hum.winv)), dtype=complex)
    )
    result = ControlResult(
        kind="schrodinger",
        control_trace=controls,
        control_times=hum.times,
        control_faces=ops.control_faces.copy(),
        minimizer=(a,),
        cg_iterations=its,
        cg_residual=res,
        J_value=J_hist[-1],
        reduction_factor=np.nan,
        converged=ok,
        T=T,
        dt=hum.dt,
        J_history=J_hist,
        residual_history=res_hist,
        filtered_modes=0 if filt is None else len(filt),
        ops=ops,
    )
    if verify:
        _, result.reduction_factor = verify_schrodinger_control(ops, u0, result, T, dt)
    return result


def verify_schrodinger_control(ops: OperatorSet, u0, control: ControlResult, T: float, dt: float):
    """Forward controlled run; returns (final_mass, initial/final mass)."""
    n, dt = _check_match(ops, control, T, dt, "schrodinger")
    st = SchrodingerStepper(ops, dt)
    u = np.asarray(ops.grid.check_field(u0), dtype=complex)
    m0 = ops.mass(u)
    for k in range(n):
        u, _ = st.step(u, control.control_trace[k])
    mT = ops.mass(u)
    return mT, _ratio(m0, mT)


def gramian_power_refine(ops: OperatorSet, datum, T: float, dt: float, iterations: int, scale_hint: float):
    """Power steps on ``sigma - Lambda`` toward the least-observed datum.

    Uses the unweighted Gramian.  ``sigma`` exceeds the top of its spectrum
    (estimated by a few power steps on Lambda, floored by ``scale_hint``),
    so each step lowers the Rayleigh quotient.  Every iterate is re-scored
    with the standard observation ratio; returns ``[(ratio, (v0, v1))]``.
    """
    hum = WaveHUM(ops, T, dt, ramp=0.0)
    n = ops.grid.size
    rng = np.random.default_rng(0)
    x = rng.standard_normal(2 * n)
    top = 0.0
    for _ in range(5):
        x = x / np.sqrt(hum.energy_inner(x, x))
        y = hum.apply(x)
        top = max(top, hum.energy_inner(x, y))
        x = y
    sigma = 1.1 * max(top, scale_hint)
    a = np.concatenate([np.asarray(d, dtype=float) for d in datum])
    a = a / np.sqrt(hum.energy_inner(a, a))
    out = []
    for _ in range(iterations):
        a = sigma * a - hum.apply(a)
        a = a / np.sqrt(hum.energy_inner(a, a))
        v0, v1 = hum.split(a)
        rho = observation_ratio(ops, v0, v1, T, dt)
        if rho is not None:
            out.append((rho, (v0.copy(), v1.copy())))
    return out
