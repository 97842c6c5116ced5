import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dechist.errors import GridMismatchError, ValidationError, ZeroNormError
from dechist.grid import (DensityMatrix, DoubleSlitBarrier, Free, Harmonic, PhysicalParams, Quartic,
                          SpatialGrid, Tabulated, WaveFunction, boundary_leak, gaussian_packet,
                          mixed_density, observables, pure_density, superpose)

GRID = SpatialGrid(512, -20.0, 20.0)
FREE = PhysicalParams()


# --- grid ------------------------------------------------------------------


def test_grid_spacing_and_momenta():
    g = SpatialGrid(16, -4.0, 4.0)
    assert g.dx == 0.5
    k = np.fft.fftfreq(16) * 16
    np.testing.assert_allclose(g.momenta(2.0), 2 * np.pi * 2.0 * k / (16 * 0.5), rtol=0, atol=1e-13)
    p = np.sort(g.momenta())
    # symmetric except the single Nyquist point
    np.testing.assert_allclose(p[1:], -p[1:][::-1], atol=1e-12)


@pytest.mark.parametrize("n,lo,hi", [(12, 0, 1), (4, 0, 1), (16, 1, 1), (16, 2, 1)])
def test_grid_rejects_bad_shape(n, lo, hi):
    with pytest.raises(ValidationError):
        SpatialGrid(n, lo, hi)


def test_params_validation():
    with pytest.raises(ValidationError):
        PhysicalParams(hbar=0)
    with pytest.raises(ValidationError):
        PhysicalParams(gamma=-1)
    with pytest.raises(ValidationError):
        Harmonic(0.0)
    with pytest.raises(ValidationError):
        DoubleSlitBarrier((1.0, 1.0), 1.0, 1.0, 1.0)
    with pytest.raises(ValidationError):
        DoubleSlitBarrier((-1.0, 1.0), 0.0, 1.0, 1.0)
    with pytest.raises(ValidationError):
        DoubleSlitBarrier((-1.0, 1.0), 1.0, -1.0, 1.0)


def test_tabulated_length_must_match():
    pot = Tabulated(np.zeros(8), -1.0, 1.0)
    with pytest.raises(ValidationError):
        PhysicalParams(potential=pot).potential_on(SpatialGrid(16, -1.0, 1.0))


def test_potential_shapes():
    x = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(Harmonic(2.0).evaluate(x, 3.0), 0.5 * 3 * 4 * x**2)
    np.testing.assert_allclose(Quartic(0.1).gradient(x), 0.4 * x**3)
    b = DoubleSlitBarrier((-1.0, 1.0), 0.5, 7.0, 1.0)
    v = b.evaluate(np.array([-1.0, 0.0, 1.2, 2.0]))
    np.testing.assert_array_equal(v, [0.0, 7.0, 0.0, 7.0])
    assert np.all(Free().evaluate(x) == 0)


# --- packets ---------------------------------------------------------------


def test_minimum_uncertainty():
    o = observables(gaussian_packet(GRID, FREE, 0.0, 0.0, 1.0), FREE)
    assert abs(o.delta_x * o.delta_p - 0.5) < 1e-6


def test_packet_centre():
    o = observables(gaussian_packet(GRID, FREE, 2.0, 3.0, 1.0), FREE)
    assert abs(o.mean_x - 2) < 1e-6
    assert abs(o.mean_p - 3) < 1e-6


def test_packet_widths_half_sigma():
    o = observables(gaussian_packet(GRID, FREE, 0.0, 0.0, 0.5), FREE)
    # analytic: dx = sigma, dp = hbar / (2 sigma)
    assert abs(o.delta_x - 0.5) < 1e-6
    assert abs(o.delta_p - 1.0) < 1e-6


def test_packet_errors():
    with pytest.raises(ValidationError, match="narrow"):
        gaussian_packet(GRID, FREE, 0.0, 0.0, 3 * GRID.dx)
    with pytest.raises(ValidationError, match="boundary"):
        gaussian_packet(GRID, FREE, 17.0, 0.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(x0=st.floats(-10, 10), p0=st.floats(-8, 8), sigma=st.floats(0.5, 2.0))
def test_packet_moments_property(x0, p0, sigma):
    psi = gaussian_packet(GRID, FREE, x0, p0, sigma)
    o = observables(psi, FREE)
    assert abs(o.norm - 1) < 1e-9
    assert abs(o.mean_x - x0) < 1e-6
    assert abs(o.mean_p - p0) < 1e-6
    assert abs(o.delta_x - sigma) / sigma < 1e-6
    assert o.delta_x * o.delta_p >= 0.5 - 1e-6


# --- superposition ---------------------------------------------------------


def test_superpose_identity():
    psi = gaussian_packet(GRID, FREE, 1.0, 0.5, 1.0)
    out = superpose(psi, psi, 1, 0)
    np.testing.assert_allclose(out.amplitudes, psi.amplitudes, atol=1e-14)


def _factor(sigma):
    a = gaussian_packet(GRID, FREE, -5.0, 0.0, sigma)
    b = gaussian_packet(GRID, FREE, 5.0, 0.0, sigma)
    raw = superpose(a, b, 1, 1, normalize=False)
    out = superpose(a, b, 1, 1)
    return np.max(np.abs(out.amplitudes)) / np.max(np.abs(raw.amplitudes))


def test_superpose_normalisation_factor():
    # overlap exp(-50): the packets are disjoint to double precision
    assert abs(_factor(0.5) - 1 / math.sqrt(2)) < 1e-6


def test_superpose_factor_with_overlap():
    # unit-width packets at +-5 overlap by exp(-d^2 / 8 sigma^2)
    overlap = math.exp(-100 / 8)
    assert abs(_factor(1.0) - 1 / math.sqrt(2 * (1 + overlap))) < 1e-12


def test_superpose_cancellation():
    psi = gaussian_packet(GRID, FREE, 0.0, 0.0, 1.0)
    neg = WaveFunction(GRID, -psi.amplitudes)
    with pytest.raises(ZeroNormError):
        superpose(psi, neg, 1, 1)


def test_superpose_grid_mismatch():
    other = SpatialGrid(256, -20.0, 20.0)
    with pytest.raises(GridMismatchError):
        superpose(gaussian_packet(GRID, FREE, 0, 0, 1), gaussian_packet(other, FREE, 0, 0, 1), 1, 1)


@settings(max_examples=30, deadline=None)
@given(a=st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
       b=st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
       x1=st.floats(-8, 8), x2=st.floats(-8, 8))
def test_superpose_linear(a, b, x1, x2):
    p1 = gaussian_packet(GRID, FREE, x1, 1.0, 1.0)
    p2 = gaussian_packet(GRID, FREE, x2, -1.0, 1.5)
    raw = a * p1.amplitudes + b * p2.amplitudes
    if np.sqrt(np.sum(np.abs(raw) ** 2) * GRID.dx) < 1e-12:
        return
    out = superpose(p1, p2, a, b, normalize=False)
    np.testing.assert_allclose(out.amplitudes, raw, rtol=0, atol=1e-12)


# --- density matrices -------------------------------------------------------


def test_pure_density_properties():
    psi = gaussian_packet(GRID, FREE, 0.0, 0.7, 1.0)
    rho = pure_density(psi)
    assert abs(rho.purity - 1) < 1e-8
    assert abs(rho.trace - 1) < 1e-8
    assert rho.hermiticity_error() == 0.0
    np.testing.assert_allclose(rho.diagonal, np.abs(psi.amplitudes) ** 2, rtol=0, atol=1e-15)


def test_cat_four_peaks():
    a = gaussian_packet(GRID, FREE, -5.0, 0.0, 1.0)
    b = gaussian_packet(GRID, FREE, 5.0, 0.0, 1.0)
    rho = np.abs(pure_density(superpose(a, b, 1, 1)).entries)
    i5, im5 = GRID.index_of(5.0), GRID.index_of(-5.0)
    peak = rho.max()
    for i, j in [(i5, i5), (im5, im5), (i5, im5), (im5, i5)]:
        assert rho[i, j] > 0.99 * peak
    assert rho[GRID.index_of(0.0), GRID.index_of(0.0)] < 1e-4 * peak


def test_mixed_single_component():
    psi = gaussian_packet(GRID, FREE, 1.0, 0.0, 1.0)
    np.testing.assert_array_equal(mixed_density([(1.0, psi)]).entries, pure_density(psi).entries)


def test_mixture_has_no_interference_peaks():
    a = gaussian_packet(GRID, FREE, -5.0, 0.0, 0.5)
    b = gaussian_packet(GRID, FREE, 5.0, 0.0, 0.5)
    rho = mixed_density([(0.5, a), (0.5, b)])
    x = GRID.x
    cross = (x[:, None] < 0) != (x[None, :] < 0)
    assert np.max(np.abs(rho.entries[cross])) < 1e-10
    assert abs(rho.purity - 0.5) < 1e-8


def test_mixed_probabilities_must_sum_to_one():
    psi = gaussian_packet(GRID, FREE, 0.0, 0.0, 1.0)
    with pytest.raises(ValidationError):
        mixed_density([(0.5, psi), (0.4, psi)])
    with pytest.raises(ValidationError):
        mixed_density([(1.5, psi), (-0.5, psi)])


def test_density_hermiticity_error_detects_asymmetry():
    m = np.zeros((8, 8), complex)
    m[0, 1] = 1.0
    assert DensityMatrix(SpatialGrid(8, 0.0, 1.0), m).hermiticity_error() == 1.0


def test_density_shape_checked():
    with pytest.raises(ValidationError):
        DensityMatrix(SpatialGrid(8, 0.0, 1.0), np.zeros((4, 4)))


@settings(max_examples=25, deadline=None)
@given(ps=st.lists(st.floats(0.05, 1.0), min_size=2, max_size=4),
       xs=st.lists(st.floats(-8, 8), min_size=4, max_size=4))
def test_mixture_purity_bounds(ps, xs):
    g = SpatialGrid(128, -20.0, 20.0)
    w = np.array(ps) / np.sum(ps)
    comps = [(float(p), gaussian_packet(g, FREE, x, 0.0, 1.5)) for p, x in zip(w, xs)]
    comps[0] = (1.0 - sum(p for p, _ in comps[1:]), comps[0][1])
    rho = mixed_density(comps)
    assert abs(rho.trace - 1) < 1e-8
    assert rho.hermiticity_error() < 1e-14
    assert rho.purity <= 1 + 1e-10
    assert np.all(rho.diagonal >= -1e-10)
    o = observables(rho, FREE)
    assert o.delta_x * o.delta_p >= 0.5 - 1e-6


# --- observables ------------------------------------------------------------


def test_symmetric_cat_mean_zero():
    a = gaussian_packet(GRID, FREE, -4.0, 0.0, 1.0)
    b = gaussian_packet(GRID, FREE, 4.0, 0.0, 1.0)
    o = observables(superpose(a, b, 1, 1), FREE)
    assert abs(o.mean_x) < 1e-6


def _energy_quadrature(sigma):
    """<H> for a real Gaussian in the unit oscillator by direct quadrature."""
    def psi(x):
        return (2 * np.pi * sigma**2) ** -0.25 * np.exp(-x**2 / (4 * sigma**2))

    def dpsi(x):
        return -x / (2 * sigma**2) * psi(x)

    kin = integrate.quad(lambda x: 0.5 * dpsi(x) ** 2, -np.inf, np.inf)[0]
    pot = integrate.quad(lambda x: 0.5 * x**2 * psi(x) ** 2, -np.inf, np.inf)[0]
    return kin + pot


@pytest.mark.parametrize("sigma", [2**-0.5, 1.0])
def test_harmonic_energy_against_quadrature(sigma):
    par = PhysicalParams(potential=Harmonic(1.0))
    o = observables(gaussian_packet(GRID, par, 0.0, 0.0, sigma), par)
    assert abs(o.mean_energy - _energy_quadrature(sigma)) < 1e-4


def test_ground_state_energy():
    par = PhysicalParams(potential=Harmonic(1.0))
    o = observables(gaussian_packet(GRID, par, 0.0, 0.0, 2**-0.5), par)
    assert abs(o.mean_energy - 0.5) < 1e-4


def test_density_observables_match_wavefunction():
    par = PhysicalParams(potential=Harmonic(0.5))
    psi = gaussian_packet(GRID, par, 1.0, -2.0, 0.8)
    a = observables(psi, par).as_dict()
    b = observables(pure_density(psi), par).as_dict()
    for k in a:
        assert abs(a[k] - b[k]) < 1e-9, k


def test_boundary_leak():
    assert boundary_leak(gaussian_packet(GRID, FREE, 0.0, 0.0, 1.0)) < 1e-30
    flat = WaveFunction(GRID, np.ones(GRID.n_points) / np.sqrt(GRID.length))
    assert abs(boundary_leak(flat) - 6 / GRID.n_points) < 1e-12
