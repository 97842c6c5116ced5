"""Density-matrix evolution under the position-decoherence master equation

    d rho/dt = -(i/hbar)[H, rho] - D (x - y)^2 rho,   D = 2 m gamma k T / hbar^2

split as half decay -> unitary conjugation -> half decay. The decay factor
is applied in closed form, so the decay-only propagator is exact.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla

from .errors import ValidationError
from .grid import DensityMatrix, PhysicalParams, SpatialGrid, boundary_leak, check_same_grid
from .unitary import LEAK_THRESHOLD, UnitaryStepper, aligned_steps

log = logging.getLogger(__name__)

NEGATIVITY_FLAG = -1e-6


def decoherence_coefficient(params: PhysicalParams) -> float:
    return 2 * params.mass * params.gamma * params.k_boltzmann * params.temperature / params.hbar**2


@dataclass(frozen=True)
class MasterStepper:
    """Trotter step for the master equation.

    ``d_override`` decouples D from (gamma, T); it is surfaced in
    :meth:`provenance` so reports record it. ``unitary_enabled=False`` drops
    the Hamiltonian part entirely (decay-only propagation).
    """

    grid: SpatialGrid
    params: PhysicalParams
    dt: float
    d_override: float | None = None
    unitary_enabled: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be > 0", "dt")
        if self.d_override is not None and not self.d_override >= 0:
            raise ValidationError("decoherence coefficient must be >= 0", "D")

    @property
    def coefficient(self) -> float:
        if self.d_override is not None:
            return float(self.d_override)
        return decoherence_coefficient(self.params)

    @cached_property
    def unitary(self) -> UnitaryStepper:
        return UnitaryStepper(self.grid, self.params, self.dt)

    @cached_property
    def half_decay_mask(self) -> np.ndarray:
        x = self.grid.x
        return np.exp(-self.coefficient * (x[:, None] - x[None, :]) ** 2 * self.dt / 2)

    @cached_property
    def decay_mask(self) -> np.ndarray:
        x = self.grid.x
        return np.exp(-self.coefficient * (x[:, None] - x[None, :]) ** 2 * self.dt)

    def provenance(self) -> dict:
        return {"D": self.coefficient, "D_source": "override" if self.d_override is not None else "2*m*gamma*k*T/hbar^2",
                "dt": self.dt, "unitary_enabled": self.unitary_enabled}

    def steps_for(self, t: float) -> int:
        return self.unitary.steps_for(t)

    @cached_property
    def _half_phase(self) -> np.ndarray:
        """Half potential step on both sides, with the half decay mask."""
        vh = self.unitary.half_potential_phase
        return vh[:, None] * vh.conj()[None, :] * self.half_decay_mask

    @cached_property
    def _full_phase(self) -> np.ndarray:
        # two adjacent half steps; all factors are diagonal in (x, y) and commute
        return self._half_phase**2

    @cached_property
    def _kinetic(self) -> np.ndarray:
        k = self.unitary.kinetic_phase
        return k[:, None] * k.conj()[None, :]

    def _kinetic_step(self, r: np.ndarray) -> np.ndarray:
        # F r F^-1, multiply by K (x) K*, then back
        r = sfft.fft(sfft.ifft(r, axis=-1, overwrite_x=True), axis=-2, overwrite_x=True)
        r *= self._kinetic
        return sfft.ifft(sfft.fft(r, axis=-1, overwrite_x=True), axis=-2, overwrite_x=True)

    def _conjugate(self, r: np.ndarray) -> np.ndarray:
        """U r U^dagger over the last two axes (r need not be Hermitian)."""
        vh = self.unitary.half_potential_phase
        ph = vh[:, None] * vh.conj()[None, :]
        return self._kinetic_step(r * ph) * ph

    def propagate(self, r: np.ndarray, n_steps: int) -> np.ndarray:
        """Apply ``n_steps`` Trotter steps to raw kernels (last two axes are x, y).

        Each step is half (potential + decay), kinetic, half (potential +
        decay); the diagonal halves of adjacent steps are fused.
        """
        r = np.array(r, dtype=np.complex128)
        if n_steps == 0:
            return r
        if not self.unitary_enabled:
            for _ in range(n_steps):
                r *= self.decay_mask
            return r
        r *= self._half_phase
        for i in range(n_steps):
            r = self._kinetic_step(r)
            r *= self._full_phase if i < n_steps - 1 else self._half_phase
        return r


def master_step(stepper: MasterStepper, rho: DensityMatrix) -> DensityMatrix:
    check_same_grid(stepper.grid, rho.grid)
    if rho.hermiticity_error() > 1e-8:
        raise ValidationError("input density matrix is not Hermitian within 1e-8", "rho")
    out = stepper.propagate(rho.entries, 1)
    # Hermitian by construction up to roundoff; symmetrise to remove it
    return DensityMatrix(rho.grid, 0.5 * (out + out.conj().T))


def min_eigenvalue(rho: DensityMatrix) -> float:
    """Smallest eigenvalue of the operator rho*dx."""
    h = 0.5 * (rho.entries + rho.entries.conj().T) * rho.grid.dx
    return float(sla.eigvalsh(h, subset_by_index=[0, 0])[0])


def coherence_length(rho: DensityMatrix) -> float:
    """Full width in s at which |rho(x0+s, x0-s)| drops to 1/e of its value at s=0.

    x0 is the maximum of the diagonal. Linear interpolation between samples;
    returns the available span if the profile never reaches 1/e.
    """
    grid = rho.grid
    i0 = int(np.argmax(rho.diagonal))
    n = grid.n_points
    m = min(i0, n - 1 - i0)
    j = np.arange(m + 1)
    prof = np.abs(rho.entries[i0 + j, i0 - j])
    target = prof[0] / math.e
    below = np.nonzero(prof < target)[0]
    if len(below) == 0:
        return float(2 * m * grid.dx)
    k = below[0]
    frac = (prof[k - 1] - target) / (prof[k - 1] - prof[k])
    return float(2 * (k - 1 + frac) * grid.dx)


@dataclass(frozen=True)
class OpenSnapshot:
    time: float
    rho: DensityMatrix
    trace: float
    purity: float
    coherence_length: float
    hermiticity_error: float
    min_eigenvalue: float | None
    offdiag_peak: float | None
    boundary_leak: float


@dataclass
class OpenTrajectory:
    snapshots: list[OpenSnapshot]
    provenance: dict
    warnings: list[str] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.snapshots], dtype=float)


def evolve_open(stepper: MasterStepper, rho: DensityMatrix, t_final: float,
                sample_times: Sequence[float] | None = None,
                peak_points: tuple[float, float] | None = None,
                positivity: bool = True) -> OpenTrajectory:
    """Master-equation trajectory with per-snapshot diagnostics.

    ``peak_points=(xa, xb)`` records |rho(xa, xb)|, the off-diagonal peak of a
    two-packet state centred at xa and xb.
    """
    check_same_grid(stepper.grid, rho.grid)
    if rho.hermiticity_error() > 1e-8:
        raise ValidationError("input density matrix is not Hermitian within 1e-8", "rho")
    plan = aligned_steps(stepper.unitary, t_final, sample_times)
    traj = OpenTrajectory([], stepper.provenance(), list(stepper.unitary.phase_warnings()))
    grid = rho.grid
    ia = ib = None
    if peak_points is not None:
        ia, ib = grid.index_of(peak_points[0]), grid.index_of(peak_points[1])
    r, done = rho.entries, 0
    for t, n in plan:
        r = stepper.propagate(r, n - done)
        done = n
        r = 0.5 * (r + r.conj().T)
        cur = DensityMatrix(grid, r)
        lam = min_eigenvalue(cur) if positivity else None
        if lam is not None and lam < NEGATIVITY_FLAG:
            traj.warnings.append(f"negative eigenvalue {lam:.3e} at t={t}")
        leak = boundary_leak(cur)
        if leak > LEAK_THRESHOLD:
            traj.warnings.append(f"boundary leak {leak:.3e} at t={t}")
        traj.snapshots.append(OpenSnapshot(
            time=t, rho=cur, trace=cur.trace, purity=cur.purity,
            coherence_length=coherence_length(cur),
            hermiticity_error=cur.hermiticity_error(), min_eigenvalue=lam,
            offdiag_peak=None if ia is None else float(abs(r[ia, ib])),
            boundary_leak=leak))
    for w in traj.warnings:
        log.warning(w)
    return traj


@dataclass(frozen=True)
class SuppressionExponent:
    """Size of the interference suppression exp(-D s^2 t), kept in log form.

    ``exponent`` is D s^2 t; ``log10_exponent`` its base-10 log (``-inf``
    when D = 0); ``log10_base10_exponent`` the log10 of the decimal exponent
    E*log10(e), i.e. the suppression is 10^(-10^log10_base10_exponent).
    """

    exponent: float
    log10_exponent: float
    log10_base10_exponent: float
    log10_suppression: float  # log10 of exp(-E) = -E*log10(e)


def suppression_exponent(params: PhysicalParams, separation: float, t: float,
                         d_override: float | None = None) -> SuppressionExponent:
    if not separation > 0 or not t > 0:
        raise ValidationError("separation and t must be > 0", "separation")
    if d_override is not None:
        log_d = math.log10(d_override) if d_override > 0 else -math.inf
    elif params.gamma == 0 or params.temperature == 0:
        log_d = -math.inf
    else:
        log_d = (math.log10(2) + math.log10(params.mass) + math.log10(params.gamma)
                 + math.log10(params.k_boltzmann) + math.log10(params.temperature)
                 - 2 * math.log10(params.hbar))
    if log_d == -math.inf:
        return SuppressionExponent(0.0, -math.inf, -math.inf, 0.0)
    log_e = log_d + 2 * math.log10(separation) + math.log10(t)
    exponent = 10.0**log_e
    return SuppressionExponent(exponent, log_e, log_e + math.log10(math.log10(math.e)),
                               -exponent * math.log10(math.e))
