import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from dechist.errors import CapExceededError, PartitionError, ValidationError
from dechist.grid import Harmonic, PhysicalParams, SpatialGrid, gaussian_packet, pure_density, superpose
from dechist.histories import (HistorySpec, PositionGates, additivity_violation, all_labels,
                               apply_projector, branch_states, consistency_measure, decoherence_functional,
                               energy_band_partition, group_by, peaking_score)
from dechist.open_system import MasterStepper
from dechist.unitary import UnitaryStepper

GRID = SpatialGrid(128, -16.0, 16.0)
FREE = PhysicalParams()
HARM = PhysicalParams(potential=Harmonic(1.0))


def cat(grid=GRID, params=FREE, a=4.0, sigma=1.0):
    return superpose(gaussian_packet(grid, params, -a, 0, sigma), gaussian_packet(grid, params, a, 1.0, sigma), 1, 1)


# --- partitions ---------------------------------------------------------------


def test_single_cell_is_identity():
    psi = gaussian_packet(GRID, FREE, 1.0, 0.5, 1.0)
    out = apply_projector(PositionGates(()), 0, psi)
    np.testing.assert_array_equal(out.amplitudes, psi.amplitudes)


def test_far_packet_projected_away():
    # amplitude width 1, i.e. position spread 1/sqrt(2): the cut sits 7 spreads out
    g = SpatialGrid(256, -16.0, 16.0)
    psi = gaussian_packet(g, FREE, -5.0, 0.0, 2**-0.5)
    out = apply_projector(PositionGates((0.0,)), 1, psi)
    assert out.norm < 1e-10


def test_projector_idempotent_on_density():
    rho = pure_density(cat())
    part = PositionGates((-1.0, 2.0))
    once = apply_projector(part, 1, rho, side="right")
    twice = apply_projector(part, 1, once, side="right")
    assert np.max(np.abs(once.entries - twice.entries)) < 1e-10
    with pytest.raises(ValidationError):
        apply_projector(part, 3, rho)
    with pytest.raises(ValidationError):
        apply_projector(part, 0, rho, side="middle")


def test_gates_reject_overlap_and_gaps():
    with pytest.raises(PartitionError):
        PositionGates((1.0, 1.0))
    with pytest.raises(PartitionError):
        PositionGates((2.0, 1.0))
    with pytest.raises(PartitionError):
        PositionGates.from_cells([(-math.inf, 0.0), (1.0, math.inf)])
    with pytest.raises(PartitionError):
        PositionGates.from_cells([(-math.inf, 1.0), (0.0, math.inf)])
    assert PositionGates.from_cells([(0.0, math.inf), (-math.inf, 0.0)]).breakpoints == (0.0,)


def test_gate_cells_exhaustive_and_exclusive():
    part = PositionGates((-3.0, 0.5, 7.0))
    masks = np.array([part.mask(GRID, c) for c in range(part.n_cells)])
    np.testing.assert_array_equal(masks.sum(axis=0), 1)


# --- energy bands --------------------------------------------------------------------

SMALL = SpatialGrid(128, -10.0, 10.0)


def test_one_band_is_identity():
    bands = energy_band_partition(HARM, SMALL, [-1.0, 1e9])
    assert np.max(np.abs(bands.projector(0) - np.eye(128))) < 1e-8


def test_band_projectors_are_a_resolution_of_identity():
    bands = energy_band_partition(HARM, SMALL, [-1.0, 1.0, 3.0, 1e9])
    ps = [bands.projector(c) for c in range(3)]
    assert np.max(np.abs(sum(ps) - np.eye(128))) < 1e-8
    for a, b in itertools.product(range(3), repeat=2):
        target = ps[a] if a == b else 0.0
        assert np.max(np.abs(ps[a] @ ps[b] - target)) < 1e-8


def test_ground_state_in_low_band():
    bands = energy_band_partition(HARM, SMALL, [-1.0, 1.0, 1e9])
    # ground energy 0.5 (quadrature-checked in the grid tests)
    assert abs(bands.energies[0] - 0.5) < 1e-8
    ground = gaussian_packet(SMALL, HARM, 0.0, 0.0, 2**-0.5)
    low = apply_projector(bands, 0, ground)
    assert np.max(np.abs(low.amplitudes - ground.amplitudes)) < 1e-8


def test_bands_must_cover_spectrum():
    with pytest.raises(PartitionError):
        energy_band_partition(HARM, SMALL, [1.0, 1e9])
    with pytest.raises(PartitionError):
        energy_band_partition(HARM, SMALL, [-1.0, 5.0])
    with pytest.raises(ValidationError):
        energy_band_partition(HARM, SpatialGrid(2048, -10.0, 10.0), [-1.0, 1e9])


@settings(max_examples=10, deadline=None)
@given(ts=st.lists(st.integers(1, 300), min_size=1, max_size=3, unique=True),
       x0=st.floats(-2, 2), p0=st.floats(-2, 2))
def test_energy_histories_decohere(ts, x0, p0):
    bands = energy_band_partition(HARM, SMALL, [-1.0, 1.0, 2.0, 3.0, 1e9])
    times = tuple(sorted(t * 0.01 for t in ts))
    psi = gaussian_packet(SMALL, HARM, x0, p0, 1.0)
    # Strang leakage between bands scales as dt^2; at dt=1e-3 the spurious
    # branches stay below the prune threshold
    spec = HistorySpec(times, (bands,) * len(times), UnitaryStepper(SMALL, HARM, 1e-3), psi)
    assert consistency_measure(decoherence_functional(spec)).epsilon < 1e-8


# --- branch states and the functional ----------------------------------------------


def test_born_rule_random_cells():
    rng = np.random.default_rng(2024)
    stp = UnitaryStepper(GRID, HARM, 0.01)
    for _ in range(20):
        a, b = rng.uniform(-4, 4, 2)
        psi = superpose(gaussian_packet(GRID, HARM, a, rng.normal(), rng.uniform(1, 2)),
                        gaussian_packet(GRID, HARM, b, rng.normal(), rng.uniform(1, 2)),
                        rng.normal() + 1j * rng.normal(), rng.normal())
        lo, hi = np.sort(rng.uniform(-6, 6, 2))
        t = 0.01 * int(rng.integers(0, 200))
        spec = HistorySpec((t,), (PositionGates((lo, hi)),), stp, psi)
        dfunc = decoherence_functional(spec)
        final = stp.propagate(psi.amplitudes, stp.steps_for(t))
        inside = (GRID.x >= lo) & (GRID.x < hi)
        born = np.sum(np.abs(final[inside]) ** 2) * GRID.dx
        assert abs(dfunc.probability((1,)) - born) < 1e-10
        off = dfunc.matrix - np.diag(np.diag(dfunc.matrix))
        assert np.max(np.abs(off)) < 1e-10


def test_single_time_completeness():
    psi = cat()
    spec = HistorySpec((0.5,), (PositionGates((-2.0, 0.0, 2.0)),), UnitaryStepper(GRID, FREE, 0.01), psi)
    br = branch_states(spec)
    assert abs(sum(s.norm for s in br.states.values()) - 1) < 1e-9


def test_trivial_second_projection():
    psi = cat()
    stp = UnitaryStepper(GRID, FREE, 0.01)
    part = PositionGates((0.0,))
    one = branch_states(HistorySpec((0.5,), (part,), stp, psi))
    two = branch_states(HistorySpec((0.5, 1.2), (part, PositionGates(())), stp, psi))
    for (c,), s in one.states.items():
        moved = stp.propagate(s.amplitudes, 70)
        np.testing.assert_allclose(two.states[(c, 0)].amplitudes, moved, atol=1e-10)
        assert abs(two.states[(c, 0)].norm - s.norm) < 1e-10


def test_functional_invariants_and_sum_rule():
    psi = cat()
    part = PositionGates((-2.0, 0.0, 2.0))
    spec = HistorySpec((0.3, 0.8, 1.5), (part,) * 3, UnitaryStepper(GRID, FREE, 0.01), psi)
    d = decoherence_functional(spec)
    assert d.hermiticity_error() < 1e-10
    assert np.min(d.probabilities) > -1e-10
    assert abs(d.total - 1) < 1e-8
    everything = additivity_violation(d, [d.labels])
    assert everything.bound_holds


def test_pruning_is_recorded():
    psi = gaussian_packet(GRID, FREE, -9.0, 0.0, 1.0)
    spec = HistorySpec((0.1,), (PositionGates((0.0,)),), UnitaryStepper(GRID, FREE, 0.01), psi)
    d = decoherence_functional(spec)
    assert d.labels == [(0,)] and d.pruned == [(1,)]


def test_spec_validation():
    psi = cat()
    stp = UnitaryStepper(GRID, FREE, 0.01)
    part = PositionGates((0.0,))
    with pytest.raises(ValidationError):
        HistorySpec((), (), stp, psi)
    with pytest.raises(ValidationError):
        HistorySpec((0.5, 0.5), (part, part), stp, psi)
    with pytest.raises(ValidationError):
        HistorySpec((0.505,), (part,), stp, psi)
    with pytest.raises(ValidationError):
        HistorySpec((0.5,), (part, part), stp, psi)
    with pytest.raises(ValidationError):
        HistorySpec((0.5,), (part,), stp, pure_density(psi))
    six = PositionGates((-2.0, -1.0, 0.0, 1.0, 2.0))
    with pytest.raises(CapExceededError):
        HistorySpec(tuple(0.1 * k for k in range(1, 6)), (six,) * 5, stp, psi)
    ms = MasterStepper(GRID, FREE, 0.01, d_override=0.0)
    with pytest.raises(CapExceededError):
        HistorySpec((0.1, 0.2, 0.3, 0.4), (part,) * 4, ms, psi)


def test_functional_deterministic():
    psi = cat()
    part = PositionGates((-1.0, 1.0))
    spec = HistorySpec((0.2, 0.6), (part, part), MasterStepper(GRID, FREE, 0.01, d_override=0.3), psi)
    a, b = decoherence_functional(spec), decoherence_functional(spec)
    np.testing.assert_array_equal(a.matrix, b.matrix)


def test_open_matches_unitary_at_zero_d():
    psi = cat(params=HARM)
    part = PositionGates((-1.0, 1.0))
    times = (0.0, 0.5, 1.0)
    u = decoherence_functional(HistorySpec(times, (part,) * 3, UnitaryStepper(GRID, HARM, 0.01), psi))
    o = decoherence_functional(HistorySpec(times, (part,) * 3,
                                           MasterStepper(GRID, HARM, 0.01, d_override=0.0), psi))
    assert o.propagation == "open"
    common = [lab for lab in u.labels if lab in o.labels]
    assert len(common) >= 0.9 * len(u.labels)
    for a, b in itertools.product(common, repeat=2):
        assert abs(u.entry(a, b) - o.entry(a, b)) < 1e-7


def test_environment_suppresses_off_diagonal_terms():
    psi = cat(a=5.0)
    part = PositionGates((0.0,))
    times = (0.0, 1.0)
    screen = PositionGates((-1.0, 1.0))

    def eps(d):
        spec = HistorySpec(times, (part, screen), MasterStepper(GRID, FREE, 0.01, d_override=d), psi)
        return consistency_measure(decoherence_functional(spec)).epsilon

    values = [eps(d) for d in (0.0, 0.1, 1.0)]
    assert values[0] > values[1] > values[2]
    assert values[2] < 0.01


# --- consistency and additivity ----------------------------------------------------


def _two_slit_functional():
    # two packets sent towards each other, slit partition at t=0, screen cells later
    g = SpatialGrid(256, -40.0, 40.0)
    psi = superpose(gaussian_packet(g, FREE, -5.0, 0.0, 1.0), gaussian_packet(g, FREE, 5.0, 0.0, 1.0), 1, 1)
    lam = 2 * math.pi * (1 + 5.5**2) / (5 * 5.5)  # fringe spacing at t = 11
    screen = PositionGates((-lam / 4, lam / 4))  # half a fringe around the centre
    spec = HistorySpec((0.0, 11.0), (PositionGates((0.0,)), screen), UnitaryStepper(g, FREE, 0.025), psi)
    return decoherence_functional(spec)


def test_two_slit_interference_and_additivity_identity():
    d = _two_slit_functional()
    cross = d.entry((0, 1), (1, 1))
    assert abs(cross.real) > 0.05
    assert consistency_measure(d).epsilon > 0.1
    merged = additivity_violation(d, [[(0, 1), (1, 1)], [(0, 0)], [(1, 0)], [(0, 2)], [(1, 2)]])
    assert merged.group == ((0, 1), (1, 1))
    assert abs(merged.violation - abs(2 * cross.real)) < 1e-10
    assert merged.bound_holds


def test_decoherent_set_is_additive():
    d = _two_slit_functional()
    single = additivity_violation(d, [[lab] for lab in d.labels])
    assert single.violation == 0.0
    spec = HistorySpec((0.4,), (PositionGates((-1.0, 0.0, 2.0)),), UnitaryStepper(GRID, FREE, 0.01), cat())
    dec = decoherence_functional(spec)
    assert consistency_measure(dec).epsilon < 1e-10
    assert additivity_violation(dec, [dec.labels[:2], dec.labels[2:]]).violation < 1e-9


def test_additivity_grouping_errors():
    d = _two_slit_functional()
    with pytest.raises(ValidationError):
        additivity_violation(d, [d.labels[:2]])
    with pytest.raises(ValidationError):
        additivity_violation(d, [d.labels, d.labels[:1]])
    with pytest.raises(ValidationError):
        additivity_violation(d, [d.labels + [(7, 7)]])


@settings(max_examples=10, deadline=None)
@given(bp=st.lists(st.floats(-6, 6), min_size=1, max_size=3, unique=True), t2=st.integers(1, 100))
def test_additivity_bound_property(bp, t2):
    bp = sorted(bp)
    if min(np.diff(bp), default=1.0) < 0.5:
        bp = [bp[0]]
    part = PositionGates(tuple(bp))
    spec = HistorySpec((0.2, 0.2 + 0.01 * t2), (part, part), UnitaryStepper(GRID, FREE, 0.01), cat())
    d = decoherence_functional(spec)
    for key in (lambda lab: lab[0], lambda lab: lab[-1], lambda lab: 0):
        assert additivity_violation(d, group_by(d, key)).bound_holds


def test_consistency_needs_labels():
    d = _two_slit_functional()
    d.labels, d.matrix = [], np.zeros((0, 0))
    with pytest.raises(ValidationError):
        consistency_measure(d)


# --- peaking ---------------------------------------------------------------------------

MASSIVE = PhysicalParams(mass=100.0)
FINE = SpatialGrid(2048, -16.0, 16.0)


def _massive_score(factor):
    psi = gaussian_packet(FINE, MASSIVE, -2.0, 100.0, 1.0)
    times = [1.0, 2.0, 3.0]
    centers = [-2.0 + t for t in times]
    widths = [factor * math.sqrt(1 + (t / 200) ** 2) for t in times]
    return peaking_score(psi, UnitaryStepper(FINE, MASSIVE, 0.01), times, centers, widths)


def test_full_width_gate_scores_one():
    psi = gaussian_packet(GRID, FREE, 0.0, 0.0, 1.0)
    res = peaking_score(psi, UnitaryStepper(GRID, FREE, 0.01), [0.5, 1.0], [0.0, 0.0], 1e3)
    assert abs(res.score - 1) < 1e-9


def test_massive_packet_follows_gates():
    res = _massive_score(10.0)
    # Gaussian tail mass beyond 5 sigma at each of three gates
    assert res.score > 0.99 and res.score > 1 - 3 * special.erfc(5 / math.sqrt(2)) - 1e-6
    # without an environment the tiny off-path branches still interfere
    assert 0.0 <= res.epsilon <= 1 + 1e-10


def test_narrow_gates_cannot_be_peaked():
    res = _massive_score(0.1)
    # central mass of a 0.1 sigma window
    assert res.score < special.erf(0.05 / math.sqrt(2)) < 0.1


def test_peaking_input_checks():
    psi = gaussian_packet(GRID, FREE, 0.0, 0.0, 1.0)
    stp = UnitaryStepper(GRID, FREE, 0.01)
    with pytest.raises(ValidationError):
        peaking_score(psi, stp, [0.5], [0.0, 1.0], 1.0)
    with pytest.raises(ValidationError):
        peaking_score(psi, stp, [0.5], [0.0], 0.0)


def test_all_labels():
    spec = HistorySpec((0.1, 0.2), (PositionGates((0.0,)), PositionGates((-1.0, 1.0))),
                       UnitaryStepper(GRID, FREE, 0.01), cat())
    assert len(all_labels(spec)) == 6
