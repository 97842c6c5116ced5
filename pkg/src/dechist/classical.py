"""Classical reference dynamics: velocity Verlet and a Langevin integrator.

The Langevin step is a Verlet step followed by an Euler-Maruyama update of
the friction and noise on the momentum,

    p <- p - gamma p dt + sqrt(2 m gamma k T dt) * xi,

so with gamma = T = 0 it is bit-for-bit the Verlet integrator. Noise is drawn
from numpy's Philox counter-based generator.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import InvariantViolation, ValidationError
from .grid import PhysicalParams

RNG_ALGORITHM = "numpy.random.Philox (4x64, 10 rounds)"


@dataclass(frozen=True)
class ClassicalState:
    x: float
    p: float
    t: float


@dataclass(frozen=True)
class LangevinParams:
    gamma: float
    temperature: float
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0 or self.temperature < 0:
            raise ValidationError("gamma and temperature must be >= 0", "gamma")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer", "seed")

    def noise_amplitude(self, params: PhysicalParams) -> float:
        return float(np.sqrt(2 * params.mass * self.gamma * params.k_boltzmann * self.temperature))

    def metadata(self) -> dict:
        return {"seed": self.seed, "rng": RNG_ALGORITHM, "gamma": self.gamma, "temperature": self.temperature}


@dataclass(frozen=True)
class ClassicalTrajectory:
    """Samples of (t, x, p). With ensemble initial data x and p have shape
    (n_samples, n_walkers)."""

    t: np.ndarray
    x: np.ndarray
    p: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[ClassicalState]:
        for t, x, p in zip(self.t, self.x, self.p):
            yield ClassicalState(float(x), float(p), float(t))

    def energy(self, params: PhysicalParams) -> np.ndarray:
        return self.p**2 / (2 * params.mass) + params.potential.evaluate(self.x, params.mass)

    def position_at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[i] - t) > 1e-9:
            raise ValidationError(f"time {t} not sampled by the trajectory", "t")
        return self.x[i]


def _n_steps(t_final: float, dt: float) -> int:
    if not dt > 0:
        raise ValidationError("dt must be > 0", "dt")
    if t_final < 0:
        raise ValidationError("t_final must be >= 0", "t_final")
    return int(round(t_final / dt))


def _integrate(params: PhysicalParams, x0, p0, t_final, dt, record_every, kick=None):
    n = _n_steps(t_final, dt)
    m = params.mass
    grad = params.potential.gradient
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float)
    f = -grad(x, m)
    ts, xs, ps = [0.0], [x.copy()], [p.copy()]
    for i in range(1, n + 1):
        p = p + 0.5 * dt * f
        x = x + dt * p / m
        f = -grad(x, m)
        p = p + 0.5 * dt * f
        if kick is not None:
            p = kick(p)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p)) and np.all(np.isfinite(f))):
            raise InvariantViolation(f"non-finite classical state at step {i}", "finite")
        if i % record_every == 0 or i == n:
            ts.append(i * dt)
            xs.append(x.copy())
            ps.append(p.copy())
    return ClassicalTrajectory(np.array(ts), np.array(xs), np.array(ps))


def newton_trajectory(params: PhysicalParams, x0, p0, t_final: float, dt: float,
                      record_every: int = 1) -> ClassicalTrajectory:
    """Velocity-Verlet solution of m x'' + V'(x) = 0."""
    return _integrate(params, x0, p0, t_final, dt, record_every)


def langevin_trajectory(params: PhysicalParams, langevin: LangevinParams, x0, p0,
                        t_final: float, dt: float, record_every: int = 1) -> ClassicalTrajectory:
    """Langevin trajectory (or ensemble, for array ``x0``/``p0``); deterministic in the seed."""
    g = langevin.gamma
    if g == 0 and langevin.temperature == 0:
        return _integrate(params, x0, p0, t_final, dt, record_every)
    rng = np.random.Generator(np.random.Philox(langevin.seed))
    amp = langevin.noise_amplitude(params) * np.sqrt(dt)
    shape = np.broadcast(np.asarray(x0), np.asarray(p0)).shape

    def kick(p):
        return p - g * p * dt + amp * rng.standard_normal(shape)

    return _integrate(params, x0, p0, t_final, dt, record_every, kick)


def energy_drift(traj: ClassicalTrajectory, params: PhysicalParams, window: int) -> float:
    """Relative secular drift: mean energy over the last ``window`` samples
    against the first ``window`` samples."""
    e = traj.energy(params)
    return float(abs(np.mean(e[-window:]) - np.mean(e[:window])) / abs(np.mean(e[:window])))
