"""Conservative time stepping for the singular wave and Schrodinger equations.

Wave: implicit midpoint on ``v' = w, M w' = -(K_lambda v + B g)``.
Schrodinger: Crank-Nicolson on ``M u' = i (K_lambda u + B g)``, i.e.
``i u_t - Lap u - lam u/|x|^2 = 0``.  ``B`` couples unknowns to the arc
Dirichlet nodes; ``g`` is boundary data held at step midpoints (zero for
the free equations).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as sla

from .grid import Grid
from .operators import OperatorSet, boundary_quadrature, dilation, normal_derivative
from .spectral import smallest_generalized_eigenpairs

log = logging.getLogger(__name__)


def time_grid(T: float, dt: float) -> tuple[int, float]:
    """Number of steps and the step that exactly covers [0, T]."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not T >= dt:
        raise ValueError(f"T = {T} must be at least dt = {dt}")
    n = max(1, int(round(T / dt)))
    return n, T / n


class WaveStepper:
    """One implicit-midpoint step; a single factorization of M + dt^2/4 K."""

    def __init__(self, ops: OperatorSet, dt: float):
        self.ops, self.dt = ops, dt
        self.K = ops.K_lambda.tocsr()
        self.m = ops.m
        self.B = ops.boundary
        self._solve = sla.factorized((ops.M + 0.25 * dt * dt * self.K).tocsc())

    def step(self, v, w, c=None):
        """Advance (v, w) by dt; ``c`` is the arc boundary value at mid-step."""
        dt, m = self.dt, self.m
        rhs = 2 * m * v + dt * m * w
        if c is not None:
            Bc = self.B @ c
            rhs = rhs - 0.5 * dt * dt * Bc
        s = self._solve(rhs)
        force = self.K @ s
        if c is not None:
            force = force + 2 * Bc
        return s - v, w - 0.5 * dt * force / m, 0.5 * s

    def energy(self, v, w) -> float:
        return 0.5 * float(w @ (self.m * w) + v @ (self.K @ v))


class SchrodingerStepper:
    """One Crank-Nicolson step; a single complex factorization."""

    def __init__(self, ops: OperatorSet, dt: float):
        self.ops, self.dt = ops, dt
        self.K = ops.K_lambda.tocsr()
        self.m = ops.m
        self.B = ops.boundary
        self._solve = sla.factorized((ops.M - 0.5j * dt * self.K).tocsc())

    def step(self, u, c=None):
        """Advance u by dt; returns (u_next, midpoint value)."""
        dt = self.dt
        rhs = self.m * u + 0.5j * dt * (self.K @ u)
        if c is not None:
            rhs = rhs + 1j * dt * (self.B @ c)
        un = self._solve(rhs)
        return un, 0.5 * (u + un)


@dataclass
class EvolutionTrace:
    kind: str
    times: np.ndarray
    energy_series: np.ndarray
    mass_series: np.ndarray
    flux_record: np.ndarray
    initial_state: tuple
    final_state: tuple
    lam: float
    T: float
    dt: float
    snapshots: dict = field(default_factory=dict, repr=False)


def wave_evolve(
    ops: OperatorSet,
    v0: np.ndarray,
    v1: np.ndarray,
    T: float,
    dt: float,
    snapshot_every: int | None = None,
    record_flux: bool = True,
    control: Callable[[int], np.ndarray] | None = None,
) -> EvolutionTrace:
    """Evolve the wave equation from (v0, v1) over [0, T].

    ``control(n)`` may supply arc boundary values for step n (controlled
    runs); by default the boundary is homogeneous.
    """
    g = ops.grid
    v = np.array(g.check_field(v0), dtype=float)
    w = np.array(g.check_field(v1), dtype=float)
    n, dt = time_grid(T, dt)
    st = WaveStepper(ops, dt)
    times = np.linspace(0.0, T, n + 1)
    energy = np.empty(n + 1)
    mass = np.empty(n + 1)
    flux = np.empty((n + 1, len(g.faces))) if record_flux else np.empty((0, 0))
    snaps = {}

    def record(k):
        energy[k] = st.energy(v, w)
        mass[k] = float(v @ (ops.m * v))
        if record_flux:
            flux[k] = normal_derivative(g, v)
        if snapshot_every and k % snapshot_every == 0:
            snaps[times[k]] = (v.copy(), w.copy())

    record(0)
    initial = (v.copy(), w.copy())
    for k in range(n):
        c = control(k) if control is not None else None
        v, w, _ = st.step(v, w, c)
        record(k + 1)
    return EvolutionTrace(
        "wave", times, energy, mass, flux, initial, (v, w), ops.lam, T, dt, snaps
    )


def schrodinger_evolve(
    ops: OperatorSet,
    u0: np.ndarray,
    T: float,
    dt: float,
    snapshot_every: int | None = None,
    record_flux: bool = True,
    control: Callable[[int], np.ndarray] | None = None,
) -> EvolutionTrace:
    """Evolve ``i u_t - Lap u - lam u/|x|^2 = 0`` from u0 over [0, T].

    An eigenmode ``A phi = mu phi`` evolves as ``exp(i mu t) phi``.
    ``energy_series`` holds the Hardy energy, ``mass_series`` the L2 mass.
    """
    g = ops.grid
    u = np.array(g.check_field(u0), dtype=complex)
    n, dt = time_grid(T, dt)
    st = SchrodingerStepper(ops, dt)
    times = np.linspace(0.0, T, n + 1)
    energy = np.empty(n + 1)
    mass = np.empty(n + 1)
    flux = (
        np.empty((n + 1, len(g.faces)), dtype=complex) if record_flux else np.empty((0, 0))
    )
    snaps = {}

    def record(k):
        energy[k] = ops.energy(u)
        mass[k] = ops.mass(u)
        if record_flux:
            flux[k] = normal_derivative(g, u)
        if snapshot_every and k % snapshot_every == 0:
            snaps[times[k]] = u.copy()

    record(0)
    initial = (u.copy(),)
    for k in range(n):
        c = control(k) if control is not None else None
        u, _ = st.step(u, c)
        record(k + 1)
    return EvolutionTrace(
        "schrodinger", times, energy, mass, flux, initial, (u,), ops.lam, T, dt, snaps
    )


def relative_drift(series: np.ndarray) -> float:
    """max |s - s_0| / |s_0| over a conserved series."""
    s0 = series[0]
    if s0 == 0:
        return float(np.max(np.abs(series)))
    return float(np.max(np.abs(series - s0)) / abs(s0))


def observation(grid: Grid, trace: EvolutionTrace, weight: str = "x_dot_nu") -> float:
    """Trapezoid-in-time integral of the weighted squared boundary flux."""
    if trace.flux_record.size == 0:
        raise ValueError("trace has no flux record")
    per_time = np.array([boundary_quadrature(grid, b, weight) for b in trace.flux_record])
    return float(np.trapezoid(per_time, trace.times))


def initial_energy(ops: OperatorSet, trace: EvolutionTrace) -> float:
    """``||v0||^2_{H_lam} + ||v1||^2`` (twice the discrete energy)."""
    v0, v1 = trace.initial_state
    return ops.energy(v0) + ops.mass(v1)


@dataclass
class MultiplierReport:
    lhs: float
    energy_part: float
    cross_part: float
    residual: float


def multiplier_report(grid: Grid, ops: OperatorSet, trace: EvolutionTrace) -> MultiplierReport:
    """Both sides of the multiplier identity for a free wave trajectory.

    ``1/2 int_0^T int (x.nu)(dv/dnu)^2 = T/2 E0 + [int v_t (x.grad v + (N-1)/2 v)]_0^T``.
    """
    if trace.kind != "wave":
        raise ValueError("multiplier identity needs a wave trace")
    N = grid.dimension
    lhs = 0.5 * observation(grid, trace, "x_dot_nu")
    energy_part = 0.5 * trace.T * initial_energy(ops, trace)

    def bracket(state):
        v, w = state
        return float(np.sum(ops.m * w * (dilation(grid, v) + 0.5 * (N - 1) * v)))

    cross = bracket(trace.final_state) - bracket(trace.initial_state)
    scale = max(abs(lhs), abs(energy_part), abs(cross))
    residual = 0.0 if scale == 0 else (lhs - energy_part - cross) / scale
    return MultiplierReport(lhs, energy_part, cross, residual)


def hidden_regularity_ratio(grid: Grid, ops: OperatorSet, trace: EvolutionTrace) -> float:
    """``int_0^T int |x|^2 (dv/dnu)^2 / (||v0||^2_{H_lam} + ||v1||^2)``."""
    E0 = initial_energy(ops, trace)
    num = observation(grid, trace, "abs_x_squared")
    if E0 <= 0:
        if num == 0:
            return 0.0
        raise ZeroDivisionError("zero initial energy with nonzero flux")
    return num / E0


@dataclass
class SampleSpec:
    """Initial data for an observability scan.

    ``n_modes`` eigenmode data (phi_k, 0), ``n_random`` seeded random
    combinations of the lowest ``n_basis`` modes in both slots, plus
    ``gramian_iterations`` power steps on the observation Gramian started
    from the worst sample.
    """

    n_modes: int = 3
    n_random: int = 4
    n_basis: int = 12
    seed: int = 42
    gramian_iterations: int = 0
    extra: list = field(default_factory=list)


def sample_data(ops: OperatorSet, spec: SampleSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    k = max(spec.n_modes, spec.n_basis if spec.n_random else 0, 1)
    modes = [e.vector for e in smallest_generalized_eigenpairs(ops.K_lambda, ops.M, k)]
    out = [(modes[i], np.zeros_like(modes[i])) for i in range(spec.n_modes)]
    rng = np.random.default_rng(spec.seed)
    basis = np.array(modes[: spec.n_basis]).T
    for _ in range(spec.n_random):
        a, b = rng.standard_normal((2, basis.shape[1]))
        out.append((basis @ a, basis @ b))
    out.extend(spec.extra)
    return out


@dataclass
class ObservabilityScan:
    D1_estimate: float
    worst_datum: tuple
    ratios: list
    skipped: int = 0
    gramian_ratios: list = field(default_factory=list)


def observation_ratio(ops: OperatorSet, v0, v1, T: float, dt: float) -> float | None:
    """Observation over energy for one datum; None for zero-energy data."""
    g = ops.grid
    E0 = ops.energy(v0) + ops.mass(v1)
    if E0 <= 0:
        return None
    trace = wave_evolve(ops, v0, v1, T, dt)
    return observation(g, trace, "x_dot_nu") / E0


def observability_scan(ops: OperatorSet, T: float, dt: float, samples: SampleSpec | None = None) -> ObservabilityScan:
    """Empirical lower envelope of observation/energy over sample data.

    ``D1_estimate = 1 / min ratio`` is a lower bound for the true
    observability constant, never the constant itself.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    spec = samples or SampleSpec()
    ratios, data, skipped = [], [], 0
    for v0, v1 in sample_data(ops, spec):
        rho = observation_ratio(ops, v0, v1, T, dt)
        if rho is None:
            log.info("skipping zero-energy sample")
            skipped += 1
            continue
        ratios.append(rho)
        data.append((v0, v1))
    if not ratios:
        raise ValueError("no sample with positive energy")
    worst = int(np.argmin(ratios))
    result = ObservabilityScan(1.0 / min(ratios), data[worst], ratios, skipped)
    if spec.gramian_iterations:
        from .control import gramian_power_refine

        refined = gramian_power_refine(ops, data[worst], T, dt, spec.gramian_iterations, max(ratios))
        for rho, datum in refined:
            result.gramian_ratios.append(rho)
            if rho < 1.0 / result.D1_estimate:
                result.D1_estimate = 1.0 / rho
                result.worst_datum = datum
    return result
