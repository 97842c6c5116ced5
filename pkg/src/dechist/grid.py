"""Uniform periodic 1D grids, physical parameters, states and observables.

Conventions used throughout the package:

* ``x_j = x_min + j*dx`` for ``j = 0..N-1`` with ``dx = (x_max - x_min)/N``
  (periodic, so ``x_max`` itself is not a sample point).
* Momenta are ``2*pi*hbar*k/(N*dx)`` in FFT ordering.
* Wavefunctions are normalised as ``sum(|psi|^2) * dx = 1`` and density
  matrices as ``sum(diag(rho)) * dx = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np
import scipy.constants as const
import scipy.fft as sfft

from .errors import GridMismatchError, ValidationError, ZeroNormError

# cgs values, only used for order-of-magnitude estimates
HBAR_CGS = const.hbar * 1e7  # erg s
KB_CGS = const.k * 1e7  # erg / K


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SpatialGrid:
    n_points: int
    x_min: float
    x_max: float

    def __post_init__(self):
        n = self.n_points
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise ValidationError(f"n_points must be a power of two >= 8, got {n}", "n_points")
        if not np.isfinite(self.x_min) or not np.isfinite(self.x_max) or self.x_max <= self.x_min:
            raise ValidationError("x_max must be greater than x_min", "x_max")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        return _frozen(self.x_min + self.dx * np.arange(self.n_points))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return _frozen(2 * np.pi * sfft.fftfreq(self.n_points, d=self.dx))

    def momenta(self, hbar: float = 1.0) -> np.ndarray:
        return hbar * self.wavenumbers

    def index_of(self, x: float) -> int:
        """Nearest grid index to ``x``."""
        return int(np.clip(round((x - self.x_min) / self.dx), 0, self.n_points - 1))


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class Free:
    def evaluate(self, x, mass: float = 1.0):
        return np.zeros_like(np.asarray(x, dtype=float))

    def gradient(self, x, mass: float = 1.0):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Harmonic:
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValidationError("harmonic omega must be > 0", "omega")

    def evaluate(self, x, mass: float = 1.0):
        return 0.5 * mass * self.omega**2 * np.asarray(x, dtype=float) ** 2

    def gradient(self, x, mass: float = 1.0):
        return mass * self.omega**2 * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class Quartic:
    lam: float

    def evaluate(self, x, mass: float = 1.0):
        return self.lam * np.asarray(x, dtype=float) ** 4

    def gradient(self, x, mass: float = 1.0):
        return 4 * self.lam * np.asarray(x, dtype=float) ** 3


@dataclass(frozen=True)
class DoubleSlitBarrier:
    """Transverse aperture: ``height`` everywhere except inside two slit windows.

    ``thickness`` is the extent of the barrier along the (unmodelled)
    direction of flight; the double-slit scenario turns it into a transit time.
    """

    centers: tuple[float, float]
    width: float
    height: float
    thickness: float

    def __post_init__(self):
        if len(self.centers) != 2 or self.centers[0] == self.centers[1]:
            raise ValidationError("slit centers must be two distinct values", "centers")
        if not self.width > 0:
            raise ValidationError("slit width must be > 0", "width")
        if self.height < 0:
            raise ValidationError("barrier height must be >= 0", "height")
        if not self.thickness > 0:
            raise ValidationError("barrier thickness must be > 0", "thickness")

    def windows(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for c in self.centers:
            inside |= np.abs(x - c) <= self.width / 2
        return inside

    def evaluate(self, x, mass: float = 1.0):
        return np.where(self.windows(x), 0.0, self.height)

    def gradient(self, x, mass: float = 1.0):
        # piecewise constant
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Potential sampled on a uniform periodic grid spanning [x_min, x_max)."""

    values: np.ndarray
    x_min: float
    x_max: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValidationError("tabulated potential must be a finite 1D array", "values")
        object.__setattr__(self, "values", _frozen(v))

    def _nodes(self) -> np.ndarray:
        n = len(self.values)
        return self.x_min + (self.x_max - self.x_min) / n * np.arange(n)

    def evaluate(self, x, mass: float = 1.0):
        x = np.asarray(x, dtype=float)
        if x.shape == self.values.shape and np.allclose(x, self._nodes()):
            return np.array(self.values)
        return np.interp(x, self._nodes(), self.values, period=self.x_max - self.x_min)

    def gradient(self, x, mass: float = 1.0):
        dx = (self.x_max - self.x_min) / len(self.values)
        dv = (np.roll(self.values, -1) - np.roll(self.values, 1)) / (2 * dx)
        return np.interp(np.asarray(x, dtype=float), self._nodes(), dv, period=self.x_max - self.x_min)


Potential = Union[Free, Harmonic, Quartic, DoubleSlitBarrier, Tabulated]


@dataclass(frozen=True)
class PhysicalParams:
    hbar: float = 1.0
    mass: float = 1.0
    gamma: float = 0.0
    temperature: float = 0.0
    k_boltzmann: float = 1.0
    potential: Potential = field(default_factory=Free)

    def __post_init__(self):
        for name in ("hbar", "mass", "k_boltzmann"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0", name)
        for name in ("gamma", "temperature"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be >= 0", name)

    @classmethod
    def cgs(cls, mass: float = 1.0, gamma: float = 1.0, temperature: float = 1.0,
            potential: Potential | None = None) -> "PhysicalParams":
        """Parameters in cgs units (grams, seconds, kelvin)."""
        return cls(hbar=HBAR_CGS, mass=mass, gamma=gamma, temperature=temperature,
                   k_boltzmann=KB_CGS, potential=potential or Free())

    def potential_on(self, grid: SpatialGrid) -> np.ndarray:
        if isinstance(self.potential, Tabulated) and len(self.potential.values) != grid.n_points:
            raise ValidationError("tabulated potential length must equal grid n_points", "potential")
        return np.asarray(self.potential.evaluate(grid.x, self.mass), dtype=float)

    def force_gradient_on(self, grid: SpatialGrid) -> np.ndarray:
        return np.asarray(self.potential.gradient(grid.x, self.mass), dtype=float)


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex amplitudes on a grid. Not forced to be normalised: history
    branch states are deliberately unnormalised."""

    grid: SpatialGrid
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=np.complex128)
        if a.shape != (self.grid.n_points,):
            raise ValidationError(f"amplitudes must have shape ({self.grid.n_points},)", "amplitudes")
        object.__setattr__(self, "amplitudes", _frozen(a))

    @property
    def norm(self) -> float:
        """Total probability, sum |psi|^2 dx."""
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx)

    def normalized(self) -> "WaveFunction":
        n = self.norm
        if n < 1e-24:
            raise ZeroNormError("cannot normalise a zero-norm state")
        return WaveFunction(self.grid, self.amplitudes / np.sqrt(n))

    def inner(self, other: "WaveFunction") -> complex:
        """<self|other>."""
        check_same_grid(self.grid, other.grid)
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.grid.dx)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Position-space kernel rho(x_i, y_j); trace is sum(diag) * dx."""

    grid: SpatialGrid
    entries: np.ndarray

    def __post_init__(self):
        r = np.array(self.entries, dtype=np.complex128)
        n = self.grid.n_points
        if r.shape != (n, n):
            raise ValidationError(f"entries must have shape ({n}, {n})", "entries")
        object.__setattr__(self, "entries", _frozen(r))

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.entries)) * self.grid.dx)

    @property
    def purity(self) -> float:
        """Tr(rho^2) for the operator rho*dx, assuming Hermitian entries."""
        return float(np.sum(np.abs(self.entries) ** 2) * self.grid.dx**2)

    @property
    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.entries)).copy()

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))


State = Union[WaveFunction, DensityMatrix]


def check_same_grid(a: SpatialGrid, b: SpatialGrid) -> None:
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}", "grid")


# ---------------------------------------------------------------------------
# constructors


def gaussian_packet(grid: SpatialGrid, params: PhysicalParams, x0: float, p0: float,
                    sigma: float) -> WaveFunction:
    """Minimum-uncertainty packet with position spread ``sigma``.

    psi ~ exp(-(x - x0)^2 / (4 sigma^2) + i p0 x / hbar)
    """
    if sigma <= 3 * grid.dx:
        raise ValidationError(f"packet too narrow: sigma={sigma} <= 3*dx={3 * grid.dx}", "sigma")
    if x0 - 5 * sigma < grid.x_min or x0 + 5 * sigma > grid.x_max:
        raise ValidationError("packet near boundary: keep x0 at least 5 sigma from both edges", "x0")
    x = grid.x
    amp = np.exp(-((x - x0) ** 2) / (4 * sigma**2) + 1j * p0 * (x - x0) / params.hbar)
    return WaveFunction(grid, amp).normalized()


def superpose(psi1: WaveFunction, psi2: WaveFunction, c1: complex, c2: complex,
              normalize: bool = True) -> WaveFunction:
    """c1*psi1 + c2*psi2, normalised unless ``normalize`` is False."""
    check_same_grid(psi1.grid, psi2.grid)
    out = WaveFunction(psi1.grid, c1 * psi1.amplitudes + c2 * psi2.amplitudes)
    if out.norm < 1e-12:
        raise ZeroNormError("superposition cancels to zero norm")
    return out.normalized() if normalize else out


def pure_density(psi: WaveFunction) -> DensityMatrix:
    a = psi.amplitudes
    r = np.outer(a, a.conj())
    # symmetrising makes rho(x, y) = rho*(y, x) hold bit-for-bit
    return DensityMatrix(psi.grid, 0.5 * (r + r.conj().T))


def mixed_density(components: Sequence[tuple[float, WaveFunction]]) -> DensityMatrix:
    if not components:
        raise ValidationError("mixed_density needs at least one component", "components")
    probs = np.array([p for p, _ in components], dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-10:
        raise ValidationError("probabilities must be >= 0 and sum to 1", "probabilities")
    grid = components[0][1].grid
    rho = np.zeros((grid.n_points, grid.n_points), dtype=np.complex128)
    for p, psi in components:
        check_same_grid(grid, psi.grid)
        a = psi.amplitudes
        rho += p * np.outer(a, a.conj())
    return DensityMatrix(grid, 0.5 * (rho + rho.conj().T))


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observables:
    norm: float
    mean_x: float
    mean_p: float
    delta_x: float
    delta_p: float
    purity: float
    mean_energy: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def position_distribution(state: State) -> np.ndarray:
    """Probability density in x (integrates to the norm/trace with dx)."""
    if isinstance(state, WaveFunction):
        return np.abs(state.amplitudes) ** 2
    return state.diagonal


def momentum_distribution(state: State) -> np.ndarray:
    """Unnormalised weights over the FFT-ordered momentum samples."""
    if isinstance(state, WaveFunction):
        return np.abs(sfft.fft(state.amplitudes)) ** 2
    a = sfft.fft(state.entries, axis=0)
    b = sfft.fft(a.conj(), axis=1)
    return np.real(np.diag(b)).copy()


def observables(state: State, params: PhysicalParams) -> Observables:
    grid = state.grid
    x = grid.x
    px = position_distribution(state)
    norm = float(np.sum(px) * grid.dx)
    wx = px / np.sum(px)
    mean_x = float(np.sum(wx * x))
    var_x = float(np.sum(wx * (x - mean_x) ** 2))

    p = grid.momenta(params.hbar)
    pp = momentum_distribution(state)
    wp = pp / np.sum(pp)
    mean_p = float(np.sum(wp * p))
    var_p = float(np.sum(wp * (p - mean_p) ** 2))

    kinetic = float(np.sum(wp * p**2)) / (2 * params.mass)
    potential = float(np.sum(wx * params.potential_on(grid)))
    if isinstance(state, WaveFunction):
        purity = 1.0
    else:
        purity = state.purity / norm**2
    return Observables(norm=norm, mean_x=mean_x, mean_p=mean_p,
                       delta_x=float(np.sqrt(max(var_x, 0.0))),
                       delta_p=float(np.sqrt(max(var_p, 0.0))),
                       purity=float(purity), mean_energy=kinetic + potential)


def boundary_leak(state: State, n_edge: int = 3) -> float:
    """Probability within ``n_edge`` grid points of either edge."""
    px = position_distribution(state)
    return float((np.sum(px[:n_edge]) + np.sum(px[-n_edge:])) * state.grid.dx)
