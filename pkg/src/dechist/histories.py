"""Decoherent histories: projective partitions, branch states, the decoherence
functional, consistency and additivity tests, energy-band histories and
peaking of history probabilities about classical paths.

A history alpha = (a_1, ..., a_n) has branch state

    |psi_alpha> = P_{a_n} U(t_n, t_{n-1}) ... P_{a_1} U(t_1, 0) |psi>

and the decoherence functional is D(alpha, alpha') = <psi_alpha'|psi_alpha>.
With an open-system propagator the same object is built from a two-sided
kernel, projecting on the left with alpha and on the right with alpha'.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence, Union

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla

from .classical import ClassicalTrajectory
from .errors import CapExceededError, PartitionError, ValidationError
from .grid import DensityMatrix, PhysicalParams, SpatialGrid, WaveFunction, check_same_grid, pure_density
from .open_system import MasterStepper
from .unitary import UnitaryStepper

Label = tuple[int, ...]

DEFAULT_PRUNE = 1e-12
DEFAULT_CAP = 4096
OPEN_MAX_TIMES = 3
OPEN_MAX_CELLS = 8
DECOHERENT_THRESHOLD = 0.01


# ---------------------------------------------------------------------------
# partitions


@dataclass(frozen=True)
class PositionGates:
    """Contiguous cells (-inf, b_0), [b_0, b_1), ..., [b_{k-1}, inf)."""

    breakpoints: tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        if any(not math.isfinite(b) for b in bp):
            raise PartitionError("breakpoints must be finite", "breakpoints")
        if any(b >= c for b, c in zip(bp, bp[1:])):
            raise PartitionError("breakpoints must be strictly increasing; repeated or "
                                 "overlapping cells break exclusivity", "breakpoints")
        object.__setattr__(self, "breakpoints", bp)

    @classmethod
    def from_cells(cls, cells: Sequence[tuple[float, float]]) -> "PositionGates":
        """Build from explicit (lo, hi) cells, which must tile the real line."""
        cells = sorted((float(lo), float(hi)) for lo, hi in cells)
        if not cells or cells[0][0] != -math.inf or cells[-1][1] != math.inf:
            raise PartitionError("cells must cover the whole line (not exhaustive)", "cells")
        for (lo1, hi1), (lo2, hi2) in zip(cells, cells[1:]):
            if lo2 < hi1:
                raise PartitionError(f"cells [{lo1}, {hi1}) and [{lo2}, {hi2}) overlap (not exclusive)", "cells")
            if lo2 > hi1:
                raise PartitionError(f"gap between {hi1} and {lo2} (not exhaustive)", "cells")
        return cls(tuple(lo for lo, _ in cells[1:]))

    @property
    def n_cells(self) -> int:
        return len(self.breakpoints) + 1

    def cell_index(self, grid: SpatialGrid) -> np.ndarray:
        return np.searchsorted(np.array(self.breakpoints), grid.x, side="right")

    def mask(self, grid: SpatialGrid, c: int) -> np.ndarray:
        return self.cell_index(grid) == c

    def project(self, grid, c, vecs):
        return np.where(self.mask(grid, c), vecs, 0)

    def project_left(self, grid, c, mats):
        return np.where(self.mask(grid, c)[:, None], mats, 0)

    def project_right(self, grid, c, mats):
        return np.where(self.mask(grid, c)[None, :], mats, 0)

    def trace_in(self, grid, c, mats):
        """Tr(P_c X) over the last two axes, with the dx measure."""
        d = np.diagonal(mats, axis1=-2, axis2=-1)
        return np.sum(np.where(self.mask(grid, c), d, 0), axis=-1) * grid.dx

    def check(self, grid: SpatialGrid, tol: float = 1e-10) -> None:
        # cells are index sets, so the invariants hold exactly
        idx = self.cell_index(grid)
        if idx.min() < 0 or idx.max() >= self.n_cells:
            raise PartitionError("cell index out of range", "breakpoints")


@dataclass(frozen=True, eq=False)
class EnergyBands:
    """Spectral projectors of a discretised Hamiltonian onto energy bands
    [e_0, e_1), [e_1, e_2), ...; ``vectors`` holds orthonormal eigenvectors
    as columns."""

    energies: np.ndarray
    vectors: np.ndarray
    band_edges: tuple[float, ...]

    def __post_init__(self):
        edges = tuple(float(e) for e in self.band_edges)
        if len(edges) < 2 or any(a >= b for a, b in zip(edges, edges[1:])):
            raise PartitionError("band edges must be strictly increasing with at least two entries",
                                 "band_edges")
        if edges[0] > self.energies.min() or edges[-1] <= self.energies.max():
            raise PartitionError(
                f"band edges [{edges[0]}, {edges[-1]}) do not cover the spectrum "
                f"[{self.energies.min():.6g}, {self.energies.max():.6g}]", "band_edges")
        object.__setattr__(self, "band_edges", edges)
        band = np.searchsorted(np.array(edges), self.energies, side="right") - 1
        object.__setattr__(self, "_bands", [self.vectors[:, band == b] for b in range(len(edges) - 1)])

    @property
    def n_cells(self) -> int:
        return len(self.band_edges) - 1

    def band_vectors(self, c: int) -> np.ndarray:
        return self._bands[c]

    def project(self, grid, c, vecs):
        v = self._bands[c]
        return (vecs @ v.conj()) @ v.T

    def project_left(self, grid, c, mats):
        v = self._bands[c]
        return v @ (v.conj().T @ mats)

    def project_right(self, grid, c, mats):
        v = self._bands[c]
        return (mats @ v) @ v.conj().T

    def trace_in(self, grid, c, mats):
        v = self._bands[c]
        return np.einsum("ia,...ij,ja->...", v.conj(), mats, v) * grid.dx

    def projector(self, c: int) -> np.ndarray:
        v = self._bands[c]
        return v @ v.conj().T

    def check(self, grid: SpatialGrid, tol: float = 1e-8) -> None:
        n = grid.n_points
        if self.vectors.shape != (n, n):
            raise PartitionError("eigenvector matrix does not match the grid", "bands")
        gram = self.vectors.conj().T @ self.vectors
        err = np.max(np.abs(gram - np.eye(n)))
        if err > tol:
            raise PartitionError(f"band projectors not exclusive/exhaustive (error {err:.2e})", "bands")


ProjectivePartition = Union[PositionGates, EnergyBands]


def apply_projector(partition: ProjectivePartition, cell: int, state, side: str = "left"):
    """P_cell applied to a wavefunction, or to a density matrix from the left
    (P rho) or right (rho P). The result is not renormalised."""
    if not 0 <= cell < partition.n_cells:
        raise ValidationError(f"invalid cell index {cell} for {partition.n_cells} cells", "cell")
    grid = state.grid
    if isinstance(state, WaveFunction):
        return WaveFunction(grid, partition.project(grid, cell, state.amplitudes))
    if side == "left":
        return DensityMatrix(grid, partition.project_left(grid, cell, state.entries))
    if side == "right":
        return DensityMatrix(grid, partition.project_right(grid, cell, state.entries))
    raise ValidationError("side must be 'left' or 'right'", "side")


def fourier_grid_hamiltonian(params: PhysicalParams, grid: SpatialGrid) -> np.ndarray:
    """Dense H = F^-1 diag(p^2/2m) F + diag(V), the generator matching the
    spectral kinetic operator used by the propagators."""
    n = grid.n_points
    kin = grid.momenta(params.hbar) ** 2 / (2 * params.mass)
    t = sfft.ifft(kin[:, None] * sfft.fft(np.eye(n), axis=0), axis=0)
    h = t + np.diag(params.potential_on(grid))
    return 0.5 * (h + h.conj().T)


def energy_band_partition(params: PhysicalParams, grid: SpatialGrid,
                          band_edges: Sequence[float]) -> EnergyBands:
    if grid.n_points > 1024:
        raise ValidationError("energy bands need n_points <= 1024 for the dense eigensolve", "n_points")
    h = fourier_grid_hamiltonian(params, grid)
    try:
        energies, vectors = sla.eigh(h)
    except sla.LinAlgError as exc:
        raise ValidationError(f"eigensolver failure: {exc}", "potential") from exc
    bands = EnergyBands(energies, vectors, tuple(band_edges))
    bands.check(grid)
    return bands


# ---------------------------------------------------------------------------
# history specifications


Propagator = Union[UnitaryStepper, MasterStepper]


@dataclass(frozen=True, eq=False)
class HistorySpec:
    times: tuple[float, ...]
    partitions: tuple[ProjectivePartition, ...]
    propagator: Propagator
    initial: WaveFunction | DensityMatrix
    prune_threshold: float = DEFAULT_PRUNE
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        parts = tuple(self.partitions)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "partitions", parts)
        if not times:
            raise ValidationError("a history needs at least one time", "times")
        if len(parts) != len(times):
            raise ValidationError("one partition is required per time", "partitions")
        if times[0] < 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("times must be non-negative and strictly increasing", "times")
        for t in times:
            self.propagator.steps_for(t)  # raises on misalignment
        check_same_grid(self.propagator.grid, self.initial.grid)
        for p in parts:
            p.check(self.grid)
        size = math.prod(p.n_cells for p in parts)
        if size > self.cap:
            raise CapExceededError(f"{size} histories exceed the cap of {self.cap}", "cap")
        if self.is_open:
            if len(times) > OPEN_MAX_TIMES or max(p.n_cells for p in parts) > OPEN_MAX_CELLS:
                raise CapExceededError(
                    f"open-system functionals are limited to {OPEN_MAX_TIMES} times and "
                    f"{OPEN_MAX_CELLS} cells per time", "cap")
        elif not isinstance(self.initial, WaveFunction):
            raise ValidationError("unitary histories need a pure initial WaveFunction", "initial")

    @property
    def grid(self) -> SpatialGrid:
        return self.propagator.grid

    @property
    def is_open(self) -> bool:
        return isinstance(self.propagator, MasterStepper)

    def step_counts(self) -> list[int]:
        n = [self.propagator.steps_for(t) for t in self.times]
        return [b - a for a, b in zip([0] + n[:-1], n)]


@dataclass
class BranchSet:
    states: dict[Label, WaveFunction]
    pruned: list[Label]
    evolutions: int


def branch_states(spec: HistorySpec) -> BranchSet:
    """Tree evaluation of all branch states; branches with norm^2 below the
    prune threshold are dropped (and listed) at the level they fall below it."""
    if spec.is_open:
        raise ValidationError("branch_states needs unitary propagation", "propagator")
    grid = spec.grid
    labels: list[Label] = [()]
    amps = spec.initial.amplitudes[None, :]
    pruned: list[Label] = []
    evolutions = 0
    for n, part in zip(spec.step_counts(), spec.partitions):
        amps = spec.propagator.propagate(amps, n)
        evolutions += len(labels)
        new_labels, new_amps = [], []
        for c in range(part.n_cells):
            proj = part.project(grid, c, amps)
            norms = np.sum(np.abs(proj) ** 2, axis=-1) * grid.dx
            for lab, a, w in zip(labels, proj, norms):
                if w < spec.prune_threshold:
                    pruned.append(lab + (c,))
                else:
                    new_labels.append(lab + (c,))
                    new_amps.append(a)
        order = sorted(range(len(new_labels)), key=new_labels.__getitem__)
        labels = [new_labels[i] for i in order]
        amps = np.array([new_amps[i] for i in order]).reshape(len(labels), grid.n_points)
    states = {lab: WaveFunction(grid, a) for lab, a in zip(labels, amps)}
    return BranchSet(states, sorted(pruned), evolutions)


@dataclass
class DecoherenceFunctional:
    labels: list[Label]
    matrix: np.ndarray  # matrix[i, j] = D(labels[i], labels[j])
    pruned: list[Label] = field(default_factory=list)
    propagation: str = "unitary"
    evolutions: int = 0

    @property
    def probabilities(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def probability(self, label: Label) -> float:
        try:
            return float(self.probabilities[self.labels.index(tuple(label))])
        except ValueError:
            return 0.0

    def entry(self, a: Label, b: Label) -> complex:
        return complex(self.matrix[self.labels.index(tuple(a)), self.labels.index(tuple(b))])

    @property
    def total(self) -> complex:
        return complex(np.sum(self.matrix))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) if self.labels else 0.0


def decoherence_functional(spec: HistorySpec) -> DecoherenceFunctional:
    if not spec.is_open:
        branches = branch_states(spec)
        labels = list(branches.states)
        if labels:
            s = np.array([branches.states[lab].amplitudes for lab in labels])
            mat = (s @ s.conj().T) * spec.grid.dx
        else:
            mat = np.zeros((0, 0), dtype=complex)
        return DecoherenceFunctional(labels, mat, branches.pruned, "unitary", branches.evolutions)
    return _open_functional(spec)


def _evolve_nodes(prop: MasterStepper, nodes: dict, n: int, batch: int = 16) -> int:
    if n == 0:
        return 0
    keys = list(nodes)
    for i in range(0, len(keys), batch):
        chunk = keys[i:i + batch]
        out = prop.propagate(np.array([nodes[k] for k in chunk]), n)
        for k, v in zip(chunk, out):
            nodes[k] = v
    return len(keys)


def _open_functional(spec: HistorySpec) -> DecoherenceFunctional:
    grid = spec.grid
    prop: MasterStepper = spec.propagator
    rho0 = spec.initial if isinstance(spec.initial, DensityMatrix) else pure_density(spec.initial)
    # canonical pair nodes (a, b) with a <= b; (b, a) is the conjugate transpose
    nodes: dict[tuple[Label, Label], np.ndarray] = {((), ()): np.array(rho0.entries)}
    pruned: list[Label] = []
    evolutions = 0
    steps = spec.step_counts()
    last = len(spec.times) - 1
    values: dict[tuple[Label, Label], complex] = {}
    for k, (n, part) in enumerate(zip(steps, spec.partitions)):
        evolutions += _evolve_nodes(prop, nodes, n)
        cells = range(part.n_cells)
        # probabilities of the extended prefixes decide which survive
        alive: dict[Label, float] = {}
        for (a, b), y in nodes.items():
            if a != b:
                continue
            for c in cells:
                w = float(np.real(part.trace_in(grid, c, y)))
                if w < spec.prune_threshold:
                    pruned.append(a + (c,))
                else:
                    alive[a + (c,)] = w
        if k == last:
            for (a, b), y in nodes.items():
                for c in cells:
                    if a + (c,) in alive and b + (c,) in alive:
                        values[(a + (c,), b + (c,))] = complex(part.trace_in(grid, c, y))
            break
        children: dict[tuple[Label, Label], np.ndarray] = {}
        for (a, b), y in nodes.items():
            for c in cells:
                if a + (c,) not in alive:
                    continue
                left = part.project_left(grid, c, y)
                for c2 in cells:
                    if b + (c2,) not in alive or (a == b and c2 < c):
                        continue
                    children[(a + (c,), b + (c2,))] = part.project_right(grid, c2, left)
        nodes = children
    labels = sorted({lab for pair in values for lab in pair})
    index = {lab: i for i, lab in enumerate(labels)}
    mat = np.zeros((len(labels), len(labels)), dtype=np.complex128)
    for (a, b), v in values.items():
        mat[index[a], index[b]] = v
        if a != b:
            mat[index[b], index[a]] = np.conj(v)
    for i in range(len(labels)):
        mat[i, i] = mat[i, i].real
    return DecoherenceFunctional(labels, mat, sorted(pruned), "open", evolutions)


# ---------------------------------------------------------------------------
# consistency and additivity


@dataclass(frozen=True)
class Consistency:
    epsilon: float
    pair: tuple[Label, Label] | None
    excluded: int  # labels left out because p < zero threshold

    def decoherent(self, threshold: float = DECOHERENT_THRESHOLD) -> bool:
        return self.epsilon < threshold


def consistency_measure(dfunc: DecoherenceFunctional, zero_threshold: float = DEFAULT_PRUNE,
                        weak: bool = False) -> Consistency:
    """epsilon = max over alpha != alpha' of |D(alpha, alpha')| / sqrt(p(alpha) p(alpha')).

    ``weak=True`` uses |Re D| instead of |D|.
    """
    if not dfunc.labels:
        raise ValidationError("empty history alphabet", "alphabet")
    p = dfunc.probabilities
    keep = np.nonzero(p >= zero_threshold)[0]
    excluded = len(p) - len(keep)
    if len(keep) < 2:
        return Consistency(0.0, None, excluded)
    sub = dfunc.matrix[np.ix_(keep, keep)]
    mag = np.abs(sub.real) if weak else np.abs(sub)
    norm = np.sqrt(np.outer(p[keep], p[keep]))
    ratio = mag / norm
    np.fill_diagonal(ratio, -1.0)
    i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    return Consistency(float(ratio[i, j]), (dfunc.labels[keep[i]], dfunc.labels[keep[j]]), excluded)


@dataclass(frozen=True)
class Additivity:
    violation: float
    group: tuple[Label, ...] | None
    bound: float  # 2 * sum |Re D| over distinct pairs in the worst group
    bound_holds: bool  # checked for every group


def group_by(dfunc: DecoherenceFunctional, key: Callable[[Label], Hashable]) -> list[list[Label]]:
    """Coarse-graining that merges labels sharing ``key(label)``."""
    groups: dict = {}
    for lab in dfunc.labels:
        groups.setdefault(key(lab), []).append(lab)
    return list(groups.values())


def additivity_violation(dfunc: DecoherenceFunctional,
                         grouping: Sequence[Sequence[Label]]) -> Additivity:
    """Worst |p(merged) - sum of fine p| over the merged cells of ``grouping``."""
    index = {lab: i for i, lab in enumerate(dfunc.labels)}
    seen: set = set()
    groups = []
    for g in grouping:
        idx = []
        for lab in g:
            lab = tuple(lab)
            if lab not in index:
                raise ValidationError(f"label {lab} is not in the alphabet", "grouping")
            if lab in seen:
                raise ValidationError(f"label {lab} appears in two groups", "grouping")
            seen.add(lab)
            idx.append(index[lab])
        groups.append(idx)
    if len(seen) != len(index):
        raise ValidationError("grouping does not cover the alphabet", "grouping")
    worst, worst_group, worst_bound, holds = 0.0, None, 0.0, True
    for idx in groups:
        block = dfunc.matrix[np.ix_(idx, idx)]
        cross = block - np.diag(np.diag(block))
        v = abs(np.sum(cross).real)
        bound = 2 * np.sum(np.triu(np.abs(cross.real), 1))
        holds &= v <= bound * (1 + 1e-12) + 1e-15
        if worst_group is None or v > worst:
            worst, worst_group, worst_bound = float(v), tuple(dfunc.labels[i] for i in idx), float(bound)
    return Additivity(worst, worst_group, worst_bound, bool(holds))


# ---------------------------------------------------------------------------
# peaking about classical paths


@dataclass
class PeakingResult:
    score: float
    consistency: Consistency
    functional: DecoherenceFunctional
    centers: np.ndarray
    widths: np.ndarray
    threshold: float = DECOHERENT_THRESHOLD

    @property
    def epsilon(self) -> float:
        return self.consistency.epsilon

    @property
    def meaningful(self) -> bool:
        return self.consistency.epsilon < self.threshold


def gate_partitions(centers: Sequence[float], widths: Sequence[float]) -> list[PositionGates]:
    """Three cells per time: below the gate, the gate, above it."""
    return [PositionGates((c - w / 2, c + w / 2)) for c, w in zip(centers, widths)]


def peaking_score(initial: WaveFunction | DensityMatrix, propagator: Propagator,
                  times: Sequence[float],
                  reference: ClassicalTrajectory | Sequence[float],
                  width: float | Sequence[float],
                  threshold: float = DECOHERENT_THRESHOLD,
                  prune_threshold: float = DEFAULT_PRUNE) -> PeakingResult:
    """Probability that the system passes through every gate centred on the
    reference path. Label 1 is the on-path cell at each time."""
    times = [float(t) for t in times]
    if isinstance(reference, ClassicalTrajectory):
        centers = np.array([float(reference.position_at(t)) for t in times])
    else:
        centers = np.asarray(reference, dtype=float)
    widths = np.broadcast_to(np.asarray(width, dtype=float), centers.shape).copy()
    if centers.shape != (len(times),):
        raise ValidationError("need one gate centre per time", "reference")
    if np.any(widths <= 0):
        raise ValidationError("gate widths must be > 0", "width")
    spec = HistorySpec(tuple(times), tuple(gate_partitions(centers, widths)), propagator, initial,
                       prune_threshold=prune_threshold)
    dfunc = decoherence_functional(spec)
    score = dfunc.probability((1,) * len(times))
    return PeakingResult(score, consistency_measure(dfunc), dfunc, centers, widths, threshold)


def all_labels(spec: HistorySpec) -> list[Label]:
    return list(itertools.product(*(range(p.n_cells) for p in spec.partitions)))
