"""Decoherent-histories toolkit on a 1D grid: wave functions, density
matrices, classical references and the decoherence functional."""

__version__ = "0.1.0"

from .errors import (CapExceededError, DechistError, GridMismatchError, InvariantViolation,
                     PartitionError, ValidationError, ZeroNormError)
from .grid import (DensityMatrix, DoubleSlitBarrier, Free, Harmonic, PhysicalParams, Quartic,
                   SpatialGrid, Tabulated, WaveFunction, gaussian_packet, mixed_density,
                   observables, pure_density, superpose)
from .unitary import UnitaryStepper, evolve, ehrenfest_residual
from .open_system import MasterStepper, evolve_open, suppression_exponent
from .classical import LangevinParams, langevin_trajectory, newton_trajectory
from .histories import (EnergyBands, HistorySpec, PositionGates, additivity_violation,
                        consistency_measure, decoherence_functional, energy_band_partition,
                        peaking_score)

__all__ = [
    "__version__",
    "CapExceededError", "DechistError", "GridMismatchError", "InvariantViolation", "PartitionError",
    "ValidationError", "ZeroNormError",
    "DensityMatrix", "DoubleSlitBarrier", "Free", "Harmonic", "PhysicalParams", "Quartic", "SpatialGrid",
    "Tabulated", "WaveFunction", "gaussian_packet", "mixed_density", "observables", "pure_density",
    "superpose",
    "UnitaryStepper", "evolve", "ehrenfest_residual",
    "MasterStepper", "evolve_open", "suppression_exponent",
    "LangevinParams", "langevin_trajectory", "newton_trajectory",
    "EnergyBands", "HistorySpec", "PositionGates", "additivity_violation", "consistency_measure",
    "decoherence_functional", "energy_band_partition", "peaking_score",
]
