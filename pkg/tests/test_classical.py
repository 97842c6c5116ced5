import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dechist.classical import (RNG_ALGORITHM, ClassicalState, LangevinParams, energy_drift,
                               langevin_trajectory, newton_trajectory)
from dechist.errors import InvariantViolation, ValidationError
from dechist.grid import Harmonic, PhysicalParams, Quartic

FREE = PhysicalParams()
HARM = PhysicalParams(potential=Harmonic(1.0))


def test_free_motion():
    tr = newton_trajectory(FREE, 0.0, 1.0, 5.0, 1e-3, record_every=100)
    np.testing.assert_allclose(tr.x, tr.t, rtol=0, atol=1e-12)


def test_harmonic_cosine():
    tr = newton_trajectory(HARM, 1.0, 0.0, 2 * math.pi, 1e-3)
    assert np.max(np.abs(tr.x - np.cos(tr.t))) < 1e-6


def test_harmonic_energy_pointwise_fine_dt():
    # pointwise Verlet energy oscillates by ~(omega dt)^2 / 8 of E
    tr = newton_trajectory(HARM, 0.3, -1.2, 20.0, 1e-4, record_every=10)
    e = tr.energy(HARM)
    assert np.max(np.abs(e - e[0])) / e[0] < 1e-8


def test_secular_energy_drift_long_run():
    tr = newton_trajectory(HARM, 1.0, 0.5, 100.0, 1e-3, record_every=10)
    period = int(round(2 * math.pi / 1e-2))
    assert energy_drift(tr, HARM, period) < 1e-8


def test_verlet_order():
    errs = []
    for dt in (0.02, 0.01):
        tr = newton_trajectory(HARM, 1.0, 0.0, 5.0, dt)
        errs.append(abs(tr.x[-1] - math.cos(5.0)))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


@settings(max_examples=20, deadline=None)
@given(x0=st.floats(-3, 3), p0=st.floats(-3, 3), n=st.integers(10, 2000))
def test_time_reversal(x0, p0, n):
    par = PhysicalParams(potential=Quartic(0.1))
    dt = 1e-3
    fwd = newton_trajectory(par, x0, p0, n * dt, dt)
    back = newton_trajectory(par, fwd.x[-1], -fwd.p[-1], n * dt, dt)
    assert abs(back.x[-1] - x0) < 1e-10
    assert abs(back.p[-1] + p0) < 1e-10


def test_iteration_yields_states():
    tr = newton_trajectory(FREE, 0.0, 2.0, 0.01, 1e-3)
    states = list(tr)
    assert isinstance(states[0], ClassicalState) and len(states) == 11
    assert states[-1].x == pytest.approx(0.02)


def test_nonfinite_force_raises():
    # x^3 overflows, so the force is infinite on the first evaluation
    par = PhysicalParams(potential=Quartic(1.0))
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(InvariantViolation):
        newton_trajectory(par, 1e150, 0.0, 1.0, 1e-2)


def test_bad_step():
    with pytest.raises(ValidationError):
        newton_trajectory(FREE, 0, 0, 1.0, 0.0)


# --- Langevin ------------------------------------------------------------------


def test_langevin_params_validation():
    with pytest.raises(ValidationError):
        LangevinParams(-1.0, 1.0)
    with pytest.raises(ValidationError):
        LangevinParams(1.0, 1.0, seed=-1)
    lp = LangevinParams(0.5, 2.0, seed=3)
    assert lp.noise_amplitude(PhysicalParams(mass=4.0)) == pytest.approx(math.sqrt(2 * 4 * 0.5 * 2))
    assert lp.metadata()["rng"] == RNG_ALGORITHM


def test_langevin_deterministic_limit_bitwise():
    a = newton_trajectory(HARM, 1.0, 0.3, 3.0, 1e-4)
    b = langevin_trajectory(HARM, LangevinParams(0.0, 0.0, seed=9), 1.0, 0.3, 3.0, 1e-4)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.p, b.p)


def test_langevin_same_seed_identical():
    lp = LangevinParams(0.5, 1.0, seed=123)
    a = langevin_trajectory(HARM, lp, 0.0, 0.0, 5.0, 1e-2)
    b = langevin_trajectory(HARM, lp, 0.0, 0.0, 5.0, 1e-2)
    np.testing.assert_array_equal(a.x, b.x)
    c = langevin_trajectory(HARM, LangevinParams(0.5, 1.0, seed=124), 0.0, 0.0, 5.0, 1e-2)
    assert not np.array_equal(a.x, c.x)


def test_langevin_equipartition_position():
    lp = LangevinParams(0.5, 1.0, seed=42)
    n = 2000
    tr = langevin_trajectory(HARM, lp, np.zeros(n), np.zeros(n), 60.0, 1e-2, record_every=10)
    late = tr.t >= 10.0  # burn-in of 5 relaxation times
    samples = tr.x[late].ravel()
    assert samples.size >= 10**6
    assert abs(np.var(samples) - 1.0) < 0.05


def test_langevin_equipartition_momentum():
    par = PhysicalParams(mass=2.0, potential=Harmonic(1.0))
    lp = LangevinParams(1.0, 0.5, seed=7)
    n = 2000
    tr = langevin_trajectory(par, lp, np.zeros(n), np.zeros(n), 30.0, 1e-2, record_every=20)
    late = tr.t >= 10.0
    assert abs(np.mean(tr.p[late] ** 2) / (par.mass * 0.5) - 1) < 0.05
