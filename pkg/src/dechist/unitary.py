"""Strang split-operator propagation of wavefunctions and Ehrenfest diagnostics."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .errors import ValidationError
from .grid import (Observables, PhysicalParams, SpatialGrid, WaveFunction, boundary_leak,
                   check_same_grid, observables)

log = logging.getLogger(__name__)

LEAK_THRESHOLD = 1e-6


@dataclass(frozen=True)
class UnitaryStepper:
    """One Strang step V/2 -> T -> V/2 of length ``dt``.

    ``backward=True`` gives the conjugate stepper, i.e. evolution by -dt.
    """

    grid: SpatialGrid
    params: PhysicalParams
    dt: float
    backward: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be > 0", "dt")
        # forces the tabulated-length check up front
        self.params.potential_on(self.grid)

    @property
    def _signed_dt(self) -> float:
        return -self.dt if self.backward else self.dt

    @cached_property
    def kinetic_phase(self) -> np.ndarray:
        p = self.grid.momenta(self.params.hbar)
        return np.exp(-1j * p**2 * self._signed_dt / (2 * self.params.mass * self.params.hbar))

    @cached_property
    def half_potential_phase(self) -> np.ndarray:
        v = self.params.potential_on(self.grid)
        return np.exp(-1j * v * self._signed_dt / (2 * self.params.hbar))

    @cached_property
    def full_potential_phase(self) -> np.ndarray:
        v = self.params.potential_on(self.grid)
        return np.exp(-1j * v * self._signed_dt / self.params.hbar)

    def conjugate(self) -> "UnitaryStepper":
        return UnitaryStepper(self.grid, self.params, self.dt, not self.backward)

    def phase_warnings(self) -> list[str]:
        hb, m = self.params.hbar, self.params.mass
        v = self.params.potential_on(self.grid)
        p_max = np.max(np.abs(self.grid.momenta(hb)))
        out = []
        if np.max(np.abs(v)) * self.dt / hb > 0.5:
            out.append("phase-wrap: max|V| dt/hbar > 0.5")
        if p_max**2 * self.dt / (2 * m * hb) > np.pi:
            out.append("phase-wrap: p_max^2 dt/(2 m hbar) > pi")
        return out

    def steps_for(self, t: float) -> int:
        """Number of steps covering ``t``; ``t`` must be a multiple of dt within 1e-9."""
        n = int(round(t / self.dt))
        if abs(n * self.dt - t) > 1e-9 or n < 0:
            raise ValidationError(
                f"time {t!r} is not a non-negative integer multiple of dt={self.dt!r} (within 1e-9)",
                "times")
        return n

    def propagate(self, amps: np.ndarray, n_steps: int) -> np.ndarray:
        """Apply ``n_steps`` steps to raw amplitudes (last axis is x).

        Adjacent potential half-steps are fused into one full phase.
        """
        a = np.array(amps, dtype=np.complex128)
        if n_steps == 0:
            return a
        k, vh, vf = self.kinetic_phase, self.half_potential_phase, self.full_potential_phase
        a *= vh
        for i in range(n_steps):
            a = sfft.ifft(sfft.fft(a, axis=-1) * k, axis=-1)
            a *= vf if i < n_steps - 1 else vh
        return a


def step(stepper: UnitaryStepper, psi: WaveFunction) -> WaveFunction:
    check_same_grid(stepper.grid, psi.grid)
    return WaveFunction(psi.grid, stepper.propagate(psi.amplitudes, 1))


@dataclass(frozen=True)
class Snapshot:
    time: float
    state: WaveFunction
    observables: Observables
    boundary_leak: float

    @property
    def leak_flag(self) -> bool:
        return self.boundary_leak > LEAK_THRESHOLD


@dataclass
class Trajectory:
    snapshots: list[Snapshot]
    warnings: list[str] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(s.observables, name) for s in self.snapshots])


def aligned_steps(stepper, t_final: float, sample_times: Sequence[float] | None) -> list[tuple[float, int]]:
    if t_final < 0:
        raise ValidationError("t_final must be >= 0", "t_final")
    n_final = stepper.steps_for(t_final)
    if sample_times is None:
        sample_times = [0.0] if n_final == 0 else [0.0, t_final]
    ts = [float(t) for t in sample_times]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ValidationError("sample times must be sorted", "sample_times")
    out = []
    for t in ts:
        if t < -1e-9 or t > t_final + 1e-9:
            raise ValidationError(f"sample time {t} outside [0, t_final]", "sample_times")
        out.append((t, stepper.steps_for(t)))
    if n_final == 0:
        out = [(t, n) for t, n in out if n == 0][:1] or [(0.0, 0)]
    return out


def evolve(stepper: UnitaryStepper, psi: WaveFunction, t_final: float,
           sample_times: Sequence[float] | None = None) -> Trajectory:
    """Step ``psi`` to ``t_final`` recording snapshots at ``sample_times``."""
    check_same_grid(stepper.grid, psi.grid)
    plan = aligned_steps(stepper, t_final, sample_times)
    traj = Trajectory([], list(stepper.phase_warnings()))
    amps, done = psi.amplitudes, 0
    for t, n in plan:
        amps = stepper.propagate(amps, n - done)
        done = n
        state = WaveFunction(psi.grid, amps)
        snap = Snapshot(t, state, observables(state, stepper.params), boundary_leak(state))
        if snap.leak_flag:
            traj.warnings.append(f"boundary leak {snap.boundary_leak:.3e} at t={t}")
        traj.snapshots.append(snap)
    for w in traj.warnings:
        log.warning(w)
    return traj


@dataclass(frozen=True)
class EhrenfestDiagnostics:
    times: np.ndarray
    mean_x: np.ndarray
    mean_force_gradient: np.ndarray  # <V'(x)>
    classicality_gap: np.ndarray  # |<V'(x)> - V'(<x>)|
    residual_times: np.ndarray
    residual: np.ndarray  # m d2<x>/dt2 + <V'(x)>


def ehrenfest_residual(traj: Trajectory, params: PhysicalParams) -> EhrenfestDiagnostics:
    """Ehrenfest residual from a uniformly sampled trajectory.

    d2<x>/dt2 uses the 5-point centred stencil, so residuals are only
    reported at interior samples.
    """
    if len(traj.snapshots) < 5:
        raise ValidationError("ehrenfest_residual needs at least 5 samples", "trajectory")
    t = traj.times
    h = np.diff(t)
    if np.max(np.abs(h - h[0])) > 1e-9 * max(1.0, abs(h[0])) or h[0] <= 0:
        raise ValidationError("ehrenfest_residual needs uniformly spaced samples", "trajectory")
    h = h[0]
    grid = traj.snapshots[0].state.grid
    dv = params.force_gradient_on(grid)
    mx = traj.series("mean_x")
    mforce = np.array([np.sum(dv * np.abs(s.state.amplitudes) ** 2) / np.sum(np.abs(s.state.amplitudes) ** 2)
                       for s in traj.snapshots])
    gap = np.abs(mforce - params.potential.gradient(mx, params.mass))
    acc = (-mx[:-4] + 16 * mx[1:-3] - 30 * mx[2:-2] + 16 * mx[3:-1] - mx[4:]) / (12 * h**2)
    resid = params.mass * acc + mforce[2:-2]
    return EhrenfestDiagnostics(t, mx, mforce, gap, t[2:-2], resid)
