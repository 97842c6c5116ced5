"""Built-in invariant suite run by the ``check`` subcommand."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .classical import LangevinParams, langevin_trajectory
from .grid import (Harmonic, PhysicalParams, SpatialGrid, gaussian_packet, observables,
                   pure_density, superpose)
from .histories import (HistorySpec, PositionGates, additivity_violation, decoherence_functional,
                        energy_band_partition, group_by)
from .open_system import MasterStepper, evolve_open
from .unitary import UnitaryStepper, evolve


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: str
    passed: bool
    seconds: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _grid() -> SpatialGrid:
    return SpatialGrid(256, -16.0, 16.0)


def _harmonic() -> PhysicalParams:
    return PhysicalParams(potential=Harmonic(1.0))


def _coherent(grid: SpatialGrid, x0: float, t: float) -> np.ndarray:
    """Harmonic (m = omega = hbar = 1) coherent state up to a global phase."""
    xc, pc = x0 * math.cos(t), -x0 * math.sin(t)
    return np.pi**-0.25 * np.exp(-((grid.x - xc) ** 2) / 2 + 1j * pc * (grid.x - xc))


def _phase_free_error(a: np.ndarray, ref: np.ndarray, dx: float) -> float:
    ov = np.vdot(ref, a)
    return float(np.sqrt(np.sum(np.abs(a * abs(ov) / ov - ref) ** 2) * dx))


def check_norm() -> tuple[float, bool]:
    g, par = _grid(), _harmonic()
    psi = gaussian_packet(g, par, 2.0, 0.5, 0.8)
    traj = evolve(UnitaryStepper(g, par, 1e-2), psi, 10.0, np.linspace(0, 10, 11))
    err = float(np.max(np.abs(traj.series("norm") - 1)))
    return err, err < 1e-10


def check_trace_hermiticity() -> tuple[float, bool]:
    g, par = _grid(), _harmonic()
    psi = superpose(gaussian_packet(g, par, -3, 0, 1), gaussian_packet(g, par, 3, 0, 1), 1, 1)
    traj = evolve_open(MasterStepper(g, par, 1e-2, d_override=0.5), pure_density(psi), 2.0,
                       np.linspace(0, 2, 5), positivity=False)
    err = max(float(np.max(np.abs(traj.series("trace") - 1))), float(np.max(traj.series("hermiticity_error"))))
    return err, err < 1e-10


def check_purity_unitary() -> tuple[float, bool]:
    g, par = _grid(), _harmonic()
    psi = gaussian_packet(g, par, 1.0, 0.0, 1.0)
    traj = evolve_open(MasterStepper(g, par, 1e-2, d_override=0.0), pure_density(psi), 2.0,
                       np.linspace(0, 2, 5), positivity=False)
    err = float(np.max(np.abs(traj.series("purity") - 1)))
    return err, err < 1e-10


def check_purity_open() -> tuple[float, bool]:
    g, par = _grid(), _harmonic()
    psi = superpose(gaussian_packet(g, par, -3, 0, 1), gaussian_packet(g, par, 3, 0, 1), 1, 1)
    traj = evolve_open(MasterStepper(g, par, 1e-2, d_override=0.2), pure_density(psi), 2.0,
                       np.linspace(0, 2, 21), positivity=False)
    rise = float(np.max(np.diff(traj.series("purity"))))
    return rise, rise < 0


def check_uncertainty() -> tuple[float, bool]:
    worst = math.inf
    g = _grid()
    for par in (PhysicalParams(), _harmonic()):
        psi = gaussian_packet(g, par, 0.5, 1.0, 0.9)
        traj = evolve(UnitaryStepper(g, par, 1e-2), psi, 3.0, np.linspace(0, 3, 31))
        worst = min(worst, float(np.min(traj.series("delta_x") * traj.series("delta_p"))) - par.hbar / 2)
    rho = pure_density(superpose(gaussian_packet(g, _harmonic(), -3, 0, 1),
                                 gaussian_packet(g, _harmonic(), 3, 0, 1), 1, 1))
    traj = evolve_open(MasterStepper(g, _harmonic(), 1e-2, d_override=0.5), rho, 1.0,
                       np.linspace(0, 1, 5), positivity=False)
    for s in traj.snapshots:
        o = observables(s.rho, _harmonic())
        worst = min(worst, o.delta_x * o.delta_p - 0.5)
    return worst, worst >= -1e-6


def check_strang_order() -> tuple[float, bool]:
    g, par = _grid(), _harmonic()
    psi = gaussian_packet(g, par, 1.0, 0.0, 2**-0.5)
    ref = _coherent(g, 1.0, 1.0)
    errs = []
    for dt in (0.02, 0.01):
        st = UnitaryStepper(g, par, dt)
        errs.append(_phase_free_error(st.propagate(psi.amplitudes, st.steps_for(1.0)), ref, g.dx))
    ratio = errs[0] / errs[1]
    return ratio, 3.5 <= ratio <= 4.5


def check_trotter_order() -> tuple[float, bool]:
    g, par = _grid(), _harmonic()
    rho = pure_density(superpose(gaussian_packet(g, par, -3, 0, 1), gaussian_packet(g, par, 3, 0, 1), 1, 1))
    res = []
    for dt in (0.04, 0.02, 0.01):
        m = MasterStepper(g, par, dt, d_override=0.5)
        res.append(m.propagate(rho.entries, m.steps_for(0.4)))
    ratio = float(np.max(np.abs(res[0] - res[1])) / np.max(np.abs(res[1] - res[2])))
    return ratio, 3.5 <= ratio <= 4.5


def check_unitary_vs_open() -> tuple[float, bool]:
    g, par = _grid(), _harmonic()
    psi = gaussian_packet(g, par, 1.5, -0.5, 0.9)
    u = UnitaryStepper(g, par, 1e-2)
    a = u.propagate(psi.amplitudes, 200)
    m = MasterStepper(g, par, 1e-2, d_override=0.0)
    r = m.propagate(pure_density(psi).entries, 200)
    err = float(np.max(np.abs(r - np.outer(a, a.conj()))))
    return err, err < 1e-7


def check_equipartition() -> tuple[float, bool]:
    par = PhysicalParams(gamma=1.0, temperature=1.0, potential=Harmonic(1.0))
    lp = LangevinParams(1.0, 1.0, seed=2024)
    n = 4000
    ens = langevin_trajectory(par, lp, np.zeros(n), np.zeros(n), 40.0, 0.01, record_every=50)
    late = ens.t >= 10.0
    kinetic = float(np.mean(ens.p[late] ** 2) / par.mass)
    rel = abs(kinetic - par.k_boltzmann * par.temperature) / (par.k_boltzmann * par.temperature)
    return rel, rel < 0.05


def check_additivity() -> tuple[float, bool]:
    """Additivity bound on every functional computed here, under every
    single-time coarse graining."""
    g = _grid()
    free, harm = PhysicalParams(), _harmonic()
    psi = superpose(gaussian_packet(g, free, -3, 1, 1), gaussian_packet(g, free, 3, -1, 1), 1, 1)
    specs = [
        HistorySpec((0.5, 1.5), (PositionGates((-1.0, 1.0)), PositionGates((-2.0, 0.0, 2.0))),
                    UnitaryStepper(g, free, 1e-2), psi),
        HistorySpec((0.5, 1.5), (PositionGates((0.0,)), PositionGates((-1.0, 1.0))),
                    MasterStepper(g, free, 1e-2, d_override=0.3), pure_density(psi)),
        HistorySpec((0.3, 0.9), (energy_band_partition(harm, g, (-math.inf, 1.0, 3.0, math.inf)),) * 2,
                    UnitaryStepper(g, harm, 1e-2), gaussian_packet(g, harm, 1.0, 0.0, 0.9)),
    ]
    worst = 0.0
    ok = True
    for spec in specs:
        d = decoherence_functional(spec)
        ok &= d.hermiticity_error() < 1e-12
        for k in range(len(spec.times)):
            add = additivity_violation(d, group_by(d, lambda lab, k=k: lab[:k] + lab[k + 1:]))
            ok &= add.bound_holds
            worst = max(worst, add.violation - add.bound)
    return worst, bool(ok)


CHECKS: list[tuple[str, str, Callable[[], tuple[float, bool]]]] = [
    ("norm_conservation", "max |norm - 1| < 1e-10", check_norm),
    ("trace_hermiticity", "max(|Tr - 1|, Hermiticity) < 1e-10", check_trace_hermiticity),
    ("purity_constant_unitary", "max |purity - 1| < 1e-10", check_purity_unitary),
    ("purity_decreasing_open", "max purity increment < 0", check_purity_open),
    ("uncertainty", "min dx*dp - hbar/2 >= -1e-6", check_uncertainty),
    ("strang_order", "error ratio dt/(dt/2) in [3.5, 4.5]", check_strang_order),
    ("trotter_order", "increment ratio in [3.5, 4.5]", check_trotter_order),
    ("unitary_vs_open_D0", "max |rho - psi psi*| < 1e-7", check_unitary_vs_open),
    ("langevin_equipartition", "|<p^2>/m - kT| / kT < 0.05", check_equipartition),
    ("additivity_bound", "|p(merged) - sum p| <= 2 sum |Re D| for every merge", check_additivity),
]


def run_checks(only: list[str] | None = None) -> list[CheckResult]:
    out = []
    for name, tol, fn in CHECKS:
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        value, ok = fn()
        out.append(CheckResult(name, float(value), tol, bool(ok), time.perf_counter() - t0))
    return out
