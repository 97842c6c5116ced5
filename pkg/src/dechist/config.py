"""Strict JSON configuration for scenarios, trajectories and history specs.

Every config is a dataclass; unknown keys are rejected with the dotted path
of the offending field, and :func:`to_dict` echoes the fully populated
config (defaults included) back into reports.
"""
from __future__ import annotations

import dataclasses
import json
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import ValidationError
from .grid import (DoubleSlitBarrier, Free, Harmonic, PhysicalParams, Quartic, SpatialGrid,
                   Tabulated)


class ConfigError(ValidationError):
    pass


# ---------------------------------------------------------------------------
# generic strict loader


def _convert(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        if len(inner) == 1:
            return _convert(inner[0], value, path)
        for a in inner:
            try:
                return _convert(a, value, path)
            except ConfigError:
                continue
        raise ConfigError(f"{path}: value {value!r} does not match {tp}", path)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, path)
    if origin in (list, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list", path)
        item = args[0] if args else Any
        return [_convert(item, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is float:
        if value is None:
            raise ConfigError(f"{path}: expected a number", path)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}", path)
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}", path)
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}", path)
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}", path)
        return value
    return value


def from_dict(cls, data, path: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object", path or "config")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    for key in data:
        if key not in names:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown field {key!r} at {where}", where)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _convert(hints[f.name], data[f.name], f"{path}.{f.name}" if path else f.name)
    try:
        obj = cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}", path) from exc
    if hasattr(obj, "validate"):
        obj.validate(path)
    return obj


def to_dict(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return None
    return obj


def load_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError:
        raise
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}",
                          f"line {exc.lineno}") from exc


def _snap(value: float, dt: float, name: str) -> None:
    n = round(value / dt)
    if abs(n * dt - value) > 1e-9:
        raise ConfigError(f"{name}={value!r} is not an integer multiple of dt={dt!r}; times are snapped "
                          f"to step boundaries only within 1e-9", name)


# ---------------------------------------------------------------------------
# building blocks


@dataclass
class GridConfig:
    n_points: int = 512
    x_min: float = -20.0
    x_max: float = 20.0

    def build(self) -> SpatialGrid:
        return SpatialGrid(self.n_points, self.x_min, self.x_max)

    def validate(self, path):
        try:
            self.build()
        except ValidationError as exc:
            raise ConfigError(f"{path}: {exc}", f"{path}.{exc.field}") from exc


@dataclass
class PotentialConfig:
    kind: str = "free"
    omega: Optional[float] = None
    lam: Optional[float] = None
    centers: Optional[list[float]] = None
    width: Optional[float] = None
    height: Optional[float] = None
    thickness: Optional[float] = None
    values: Optional[list[float]] = None

    _FIELDS = {
        "free": (),
        "harmonic": ("omega",),
        "quartic": ("lam",),
        "double_slit": ("centers", "width", "height", "thickness"),
        "tabulated": ("values",),
    }

    def validate(self, path):
        if self.kind not in self._FIELDS:
            raise ConfigError(f"{path}.kind: unknown potential kind {self.kind!r}", f"{path}.kind")
        wanted = self._FIELDS[self.kind]
        for name in ("omega", "lam", "centers", "width", "height", "thickness", "values"):
            given = getattr(self, name) is not None
            if name in wanted and not given:
                raise ConfigError(f"{path}.{name}: required for potential kind {self.kind!r}", f"{path}.{name}")
            if name not in wanted and given:
                raise ConfigError(f"{path}.{name}: not a field of potential kind {self.kind!r}",
                                  f"{path}.{name}")

    def build(self, grid: SpatialGrid | None = None):
        if self.kind == "free":
            return Free()
        if self.kind == "harmonic":
            return Harmonic(self.omega)
        if self.kind == "quartic":
            return Quartic(self.lam)
        if self.kind == "double_slit":
            return DoubleSlitBarrier(tuple(self.centers), self.width, self.height, self.thickness)
        if grid is None:
            raise ConfigError("tabulated potentials need a grid", "potential.kind")
        return Tabulated(np.array(self.values), grid.x_min, grid.x_max)


@dataclass
class ParamsConfig:
    hbar: float = 1.0
    mass: float = 1.0
    gamma: float = 0.0
    temperature: float = 0.0
    k_boltzmann: float = 1.0
    potential: PotentialConfig = field(default_factory=PotentialConfig)

    def build(self, grid: SpatialGrid | None = None) -> PhysicalParams:
        try:
            return PhysicalParams(self.hbar, self.mass, self.gamma, self.temperature, self.k_boltzmann,
                                  self.potential.build(grid))
        except ValidationError as exc:
            raise ConfigError(f"params: {exc}", f"params.{exc.field}") from exc


@dataclass
class PacketConfig:
    x0: float = 0.0
    p0: float = 0.0
    sigma: float = 1.0


@dataclass
class OutputConfig:
    snapshots: str = "binary"  # "binary" | "csv" | "none"
    curves: bool = True

    def validate(self, path):
        if self.snapshots not in ("binary", "csv", "none"):
            raise ConfigError(f"{path}.snapshots must be 'binary', 'csv' or 'none'", f"{path}.snapshots")


# ---------------------------------------------------------------------------
# scenario configs


@dataclass
class DoubleSlitConfig:
    scenario: str = "double_slit"
    grid: GridConfig = field(default_factory=lambda: GridConfig(256, -40.0, 40.0))
    params: ParamsConfig = field(default_factory=ParamsConfig)
    dt: float = 0.025
    mode: str = "idealized"  # "idealized" | "barrier"
    separation: float = 10.0  # distance between slit centres
    slit_sigma: float = 1.0  # width of the packet emerging from each slit
    slit_time: float = 0.0
    screen_time: float = 11.0
    fringe_bins: int = 5  # half-fringe screen bins; two remainder cells are added
    masked_slit: Optional[int] = None  # 1 or 2 blocks that slit
    d_sweep: list[float] = field(default_factory=lambda: [0.0, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0])
    epsilon_threshold: float = 0.01
    # barrier mode only
    barrier_height: float = 50.0
    incoming_sigma: float = 7.0
    transit_time: float = 0.1
    outputs: OutputConfig = field(default_factory=lambda: OutputConfig(snapshots="none"))

    def validate(self, path):
        _check_id(self, "double_slit")
        if self.mode not in ("idealized", "barrier"):
            raise ConfigError("mode must be 'idealized' or 'barrier'", "mode")
        if self.masked_slit not in (None, 1, 2):
            raise ConfigError("masked_slit must be null, 1 or 2", "masked_slit")
        if self.fringe_bins < 1 or self.fringe_bins % 2 == 0 or self.fringe_bins + 2 > 8:
            raise ConfigError("fringe_bins must be odd and at most 5", "fringe_bins")
        if not self.d_sweep or any(d < 0 for d in self.d_sweep):
            raise ConfigError("d_sweep must be a non-empty list of values >= 0", "d_sweep")
        if self.screen_time <= self.slit_time:
            raise ConfigError("screen_time must exceed slit_time", "screen_time")
        for name in ("slit_time", "screen_time", "transit_time"):
            _snap(getattr(self, name), self.dt, name)


@dataclass
class CatConfig:
    scenario: str = "cat_decoherence"
    grid: GridConfig = field(default_factory=GridConfig)
    params: ParamsConfig = field(default_factory=ParamsConfig)
    dt: float = 1e-4
    separation: float = 10.0
    sigma: float = 1.0
    D: Optional[float] = 2.0  # null: derive from params
    t_final: float = 0.02
    sample_every: int = 1  # steps between recorded samples
    rate_tolerance: float = 0.05
    outputs: OutputConfig = field(default_factory=OutputConfig)

    def validate(self, path):
        _check_id(self, "cat_decoherence")
        if self.separation < 6 * self.sigma:
            raise ConfigError("packet separation must be >= 6 sigma", "separation")
        if self.D is not None and self.D < 0:
            raise ConfigError("D must be >= 0", "D")
        if self.sample_every < 1:
            raise ConfigError("sample_every must be >= 1", "sample_every")
        _snap(self.t_final, self.dt, "t_final")


@dataclass
class EnergySuperpositionConfig:
    scenario: str = "energy_superposition"
    grid: GridConfig = field(default_factory=GridConfig)
    params: ParamsConfig = field(default_factory=lambda: ParamsConfig(potential=PotentialConfig("harmonic", omega=1.0)))
    dt: float = 1e-3
    band_edges: list[Optional[float]] = field(default_factory=lambda: [None, 2.0, 4.0, 6.0, None])
    superposed_bands: list[int] = field(default_factory=lambda: [0, 2])
    seed_packet: PacketConfig = field(default_factory=lambda: PacketConfig(1.5, 0.0, 0.7071067811865476))
    times: list[float] = field(default_factory=lambda: [0.5, 1.3, 2.1])
    position_breakpoints: list[float] = field(default_factory=lambda: [0.0])
    outputs: OutputConfig = field(default_factory=lambda: OutputConfig(snapshots="none"))

    def validate(self, path):
        _check_id(self, "energy_superposition")
        if len(self.superposed_bands) != 2:
            raise ConfigError("superposed_bands must list two band indices", "superposed_bands")
        if any(e is None for e in self.band_edges[1:-1]):
            raise ConfigError("only the first/last band edge may be null (open)", "band_edges")
        for t in self.times:
            _snap(t, self.dt, "times")

    def edges(self) -> list[float]:
        e = list(self.band_edges)
        return [(-math.inf if i == 0 else math.inf) if v is None else v for i, v in enumerate(e)]


@dataclass
class EmergentTrajectoryConfig:
    scenario: str = "emergent_trajectory"
    grid: GridConfig = field(default_factory=lambda: GridConfig(512, -128.0, 128.0))
    params: ParamsConfig = field(default_factory=lambda: ParamsConfig(mass=100.0, gamma=0.1, temperature=1.0))
    dt: float = 0.1
    sigma: float = 2.0
    velocity: float = 0.03
    gate_times: list[float] = field(default_factory=lambda: [4.0, 8.0, 12.0])
    width_factor: float = 10.0  # gate width in units of the packet width sigma(t)
    compare_masses: list[float] = field(default_factory=lambda: [1.0])
    compare_width_factors: list[float] = field(default_factory=lambda: [3.0])
    epsilon_threshold: float = 0.01
    langevin_walkers: int = 4000
    seed: int = 12345
    outputs: OutputConfig = field(default_factory=lambda: OutputConfig(snapshots="none"))

    def validate(self, path):
        _check_id(self, "emergent_trajectory")
        if len(self.gate_times) < 1:
            raise ConfigError("gate_times must be non-empty", "gate_times")
        for t in self.gate_times:
            _snap(t, self.dt, "gate_times")


@dataclass
class SpreadingConfig:
    scenario: str = "spreading"
    grid: GridConfig = field(default_factory=GridConfig)
    params: ParamsConfig = field(default_factory=ParamsConfig)
    dt: float = 1e-3
    packet: PacketConfig = field(default_factory=PacketConfig)
    t_final: float = 2.0
    n_samples: int = 21
    outputs: OutputConfig = field(default_factory=lambda: OutputConfig(snapshots="none"))

    def validate(self, path):
        _check_id(self, "spreading")
        _snap(self.t_final, self.dt, "t_final")
        _snap(self.t_final / (self.n_samples - 1), self.dt, "n_samples")


@dataclass
class EhrenfestGapConfig:
    scenario: str = "ehrenfest_gap"
    grid: GridConfig = field(default_factory=lambda: GridConfig(256, -8.0, 8.0))
    dt: float = 1e-3
    mass: float = 1.0
    omega: float = 1.0
    lam: float = 0.1
    packet: PacketConfig = field(default_factory=lambda: PacketConfig(1.0, 0.0, 1.0))
    harmonic_packet_sigma: float = 0.7071067811865476
    t_final: float = 6.28
    sample_every: float = 0.02
    outputs: OutputConfig = field(default_factory=lambda: OutputConfig(snapshots="none"))

    def validate(self, path):
        _check_id(self, "ehrenfest_gap")
        _snap(self.t_final, self.dt, "t_final")
        _snap(self.sample_every, self.dt, "sample_every")
        _snap(self.t_final, self.sample_every, "t_final")


SCENARIO_CONFIGS = {
    "double_slit": DoubleSlitConfig,
    "cat_decoherence": CatConfig,
    "energy_superposition": EnergySuperpositionConfig,
    "emergent_trajectory": EmergentTrajectoryConfig,
    "spreading": SpreadingConfig,
    "ehrenfest_gap": EhrenfestGapConfig,
}


def _check_id(cfg, expected):
    if cfg.scenario != expected:
        raise ConfigError(f"scenario id {cfg.scenario!r} does not match {expected!r}", "scenario")


def scenario_config(scenario: str, data: dict | None = None):
    if scenario not in SCENARIO_CONFIGS:
        raise ConfigError(f"unknown scenario {scenario!r}", "scenario")
    data = dict(data or {})
    data.setdefault("scenario", scenario)
    return from_dict(SCENARIO_CONFIGS[scenario], data)


# ---------------------------------------------------------------------------
# subcommand configs


@dataclass
class EvolveConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    params: ParamsConfig = field(default_factory=ParamsConfig)
    dt: float = 1e-3
    packet: PacketConfig = field(default_factory=PacketConfig)
    t_final: float = 1.0
    sample_times: Optional[list[float]] = None

    def validate(self, path):
        _snap(self.t_final, self.dt, "t_final")
        for t in self.sample_times or []:
            _snap(t, self.dt, "sample_times")


@dataclass
class MasterConfig:
    grid: GridConfig = field(default_factory=lambda: GridConfig(256, -16.0, 16.0))
    params: ParamsConfig = field(default_factory=ParamsConfig)
    dt: float = 1e-3
    packets: list[PacketConfig] = field(default_factory=lambda: [PacketConfig()])
    coherent: bool = True  # superpose the packets (true) or mix them (false)
    D: Optional[float] = None
    t_final: float = 0.1
    sample_times: Optional[list[float]] = None
    outputs: OutputConfig = field(default_factory=OutputConfig)

    def validate(self, path):
        if not self.packets:
            raise ConfigError("packets must be non-empty", "packets")
        _snap(self.t_final, self.dt, "t_final")
        for t in self.sample_times or []:
            _snap(t, self.dt, "sample_times")


@dataclass
class PartitionConfig:
    kind: str = "position"  # "position" | "energy"
    breakpoints: Optional[list[float]] = None
    band_edges: Optional[list[Optional[float]]] = None

    def validate(self, path):
        if self.kind == "position":
            if self.breakpoints is None or self.band_edges is not None:
                raise ConfigError(f"{path}: position partitions take 'breakpoints' only", f"{path}.breakpoints")
        elif self.kind == "energy":
            if self.band_edges is None or self.breakpoints is not None:
                raise ConfigError(f"{path}: energy partitions take 'band_edges' only", f"{path}.band_edges")
        else:
            raise ConfigError(f"{path}.kind must be 'position' or 'energy'", f"{path}.kind")

    def edges(self) -> list[float]:
        e = list(self.band_edges)
        return [(-math.inf if i == 0 else math.inf) if v is None else v for i, v in enumerate(e)]


@dataclass
class HistoriesConfig:
    grid: GridConfig = field(default_factory=lambda: GridConfig(256, -16.0, 16.0))
    params: ParamsConfig = field(default_factory=ParamsConfig)
    dt: float = 1e-3
    propagation: str = "unitary"  # "unitary" | "open"
    D: Optional[float] = None
    packets: list[PacketConfig] = field(default_factory=lambda: [PacketConfig()])
    times: list[float] = field(default_factory=lambda: [0.1])
    partitions: list[PartitionConfig] = field(default_factory=lambda: [PartitionConfig(breakpoints=[0.0])])
    coarse_grain_time: Optional[int] = None  # merge labels that differ only at this time index
    prune_threshold: float = 1e-12
    cap: int = 4096

    def validate(self, path):
        if self.propagation not in ("unitary", "open"):
            raise ConfigError("propagation must be 'unitary' or 'open'", "propagation")
        if len(self.partitions) != len(self.times):
            raise ConfigError("one partition is required per time", "partitions")
        for t in self.times:
            _snap(t, self.dt, "times")


@dataclass
class ClassicalConfig:
    params: ParamsConfig = field(default_factory=ParamsConfig)
    x0: float = 0.0
    p0: float = 0.0
    t_final: float = 10.0
    dt: float = 1e-3
    record_every: int = 10
    langevin: bool = False
    seed: int = 0

    def validate(self, path):
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1", "record_every")


@dataclass
class SweepConfig:
    scenario: str = "double_slit"
    base: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)  # dotted path -> list of values

    def validate(self, path):
        if self.scenario not in SCENARIO_CONFIGS:
            raise ConfigError(f"unknown scenario {self.scenario!r}", "scenario")
        if not self.parameters:
            raise ConfigError("parameters must name at least one swept field", "parameters")
        for k, v in self.parameters.items():
            if not isinstance(v, list) or not v:
                raise ConfigError(f"parameters.{k} must be a non-empty list", f"parameters.{k}")
