import numpy as np
import pytest
from scipy.integrate import trapezoid

from vibpolariton import (ConfigurationError, GridMismatchError,
                          InstabilityError, KGrid, MatrixGF, diagonalize,
                          dynamical_matrix, harmonic_gf, phonon_basis)
from vibpolariton.lattice import (cavity_band_squared, dipole_gauge_crosscheck,
                                  dyson_gf, frequency_grid,
                                  onsite_force_constants)
from vibpolariton.model import analytic_cavity_dispersion
from vibpolariton.stencil import stencil_coefficients, stencil_symbol
from vibpolariton.units import mev, to_mev


@pytest.fixture(scope='function')
def gamma(params):
    return KGrid.from_points([0.0], params.a)


@pytest.mark.parametrize('order, expected', [
    (2, [-2.0, 1.0]),
    (4, [-5 / 2, 4 / 3, -1 / 12]),
    (6, [-49 / 18, 3 / 2, -3 / 20, 1 / 90]),
])
def test_stencil_coefficients(order, expected):
    np.testing.assert_allclose(stencil_coefficients(order), expected,
                               rtol=1e-12)


@pytest.mark.parametrize('order', [2, 4, 6, 8])
def test_stencil_annihilates_constants(order):
    weights = stencil_coefficients(order)
    assert weights[0] + 2 * weights[1:].sum() == pytest.approx(0, abs=1e-12)
    assert stencil_symbol(order, 1e-3) == pytest.approx(1e-6, rel=1e-5)


def test_stencil_error_decreases_with_order(params):
    k = 0.5 * np.pi / params.a
    errors = []
    for order in (2, 4, 6, 8):
        band = np.sqrt(cavity_band_squared(params.replace(stencil_order=order),
                                           k))
        errors.append(abs(band - analytic_cavity_dispersion(params, k)))
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))


def test_second_order_stencil_near_gamma(params):
    k_max = 5 * params.omega_m / params.c
    k = np.linspace(-k_max, k_max, 101)
    band = np.sqrt(cavity_band_squared(params.replace(stencil_order=2), k))
    exact = analytic_cavity_dispersion(params, k)
    assert np.max(np.abs(band - exact) / exact) < 1e-5


def test_second_order_stencil_at_zone_edge(params):
    k = np.pi / params.a
    band = np.sqrt(cavity_band_squared(params.replace(stencil_order=2), k))
    exact = analytic_cavity_dispersion(params, k)
    assert band / exact == pytest.approx(2 / np.pi, rel=1e-3)


def test_uniform_grid_is_commensurate(params):
    grid = KGrid.uniform(params.a, 64)
    assert len(grid) == 64
    assert grid.weights.sum() == pytest.approx(1.0)
    m = grid.points * 64 * params.a / (2 * np.pi)
    np.testing.assert_allclose(m, np.round(m), atol=1e-10)
    assert 0.0 in grid.points
    assert grid.points.max() == pytest.approx(np.pi / params.a)
    assert KGrid.commensurate(params.replace(n_sites=64)).points.tolist() == \
        grid.points.tolist()


def test_display_grid(params):
    grid = KGrid.display(params, 51)
    assert len(grid) == 51
    assert grid.points[0] == 0.0
    assert np.all(np.diff(grid.points) > 0)
    assert grid.points[-1] <= np.pi / params.a


def test_zone_checks(params):
    outside = 1.5 * np.pi / params.a
    with pytest.raises(ConfigurationError):
        KGrid.from_points([outside], params.a)
    with pytest.raises(ConfigurationError):
        dynamical_matrix(params, outside)
    folded = dynamical_matrix(params, outside, fold=True)
    np.testing.assert_allclose(
        folded, dynamical_matrix(params, -0.5 * np.pi / params.a))


def test_dynamical_matrix_shapes(params, matter):
    assert dynamical_matrix(params, 0.0).shape == (2, 2)
    assert dynamical_matrix(matter, 0.0).shape == (1, 1)
    assert dynamical_matrix(params, [0.0, 0.1]).shape == (2, 2, 2)
    matrix = dynamical_matrix(params, 0.02)
    np.testing.assert_allclose(matrix, matrix.T)


def test_rabi_splitting_on_resonance(params, gamma):
    basis = phonon_basis(params, gamma)
    lower, upper = basis.frequencies[0]
    assert to_mev(upper - lower) == pytest.approx(88.0, abs=0.5)


def test_light_fraction_at_resonance(params, gamma):
    fractions = phonon_basis(params, gamma).light_fraction[0]
    assert fractions.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(fractions, 0.5, atol=0.06)


def test_uncoupled_bands(params, small_grid):
    basis = phonon_basis(params.replace(eta=0.0), small_grid)
    fractions = basis.light_fraction[small_grid.points != 0]
    assert np.all((fractions < 1e-12) | (fractions > 1 - 1e-12))


def test_eigenvectors_are_unitary(params, small_grid):
    basis = phonon_basis(params, small_grid)
    c = basis.eigenvectors
    overlap = np.einsum('kal,kam->klm', c.conj(), c)
    np.testing.assert_allclose(overlap, np.broadcast_to(np.eye(2),
                                                        overlap.shape),
                               atol=1e-12)
    scale = np.abs(basis.frequencies).max() ** 2
    np.testing.assert_allclose(basis.dynamical_matrices(),
                               dynamical_matrix(params, small_grid.points),
                               rtol=1e-10, atol=1e-12 * scale)
    assert np.all(np.diff(basis.frequencies, axis=1) >= 0)


def test_negative_eigenvalue_names_k():
    with pytest.raises(InstabilityError) as info:
        diagonalize(np.array([[[1.0]], [[-1.0]]]), [0.1, 0.2])
    assert info.value.k == pytest.approx(0.2)


def test_two_oscillator_crosscheck(params, small_grid):
    basis = phonon_basis(params, small_grid)
    np.testing.assert_allclose(dipole_gauge_crosscheck(params,
                                                       small_grid.points),
                               basis.frequencies, rtol=1e-7)


def test_onsite_force_constants_are_zone_averages(params, small_grid):
    matrices = dynamical_matrix(params, small_grid.points)
    np.testing.assert_allclose(onsite_force_constants(params),
                               np.average(matrices, axis=0,
                                          weights=small_grid.weights),
                               rtol=1e-10)


def test_harmonic_lorentzian_weight(harmonic_matter):
    grid = KGrid.from_points([0.0, 0.5 * np.pi / harmonic_matter.a],
                             harmonic_matter.a)
    basis = phonon_basis(harmonic_matter, grid)
    omega = frequency_grid(3 * harmonic_matter.omega_m, 16384)
    gf = harmonic_gf(basis, omega, mev(1.0))
    spectral = gf.spectral_diagonal()[:, :, 0]
    frequencies = basis.frequencies[:, 0]
    area = trapezoid(spectral, omega, axis=-1)
    np.testing.assert_allclose(area, 1 / (2 * frequencies), rtol=1e-2)
    moment = trapezoid(omega * spectral, omega, axis=-1)
    np.testing.assert_allclose(moment, 0.5, rtol=1e-2)
    peaks = omega[np.argmax(spectral, axis=-1)]
    np.testing.assert_allclose(peaks, frequencies,
                               atol=2 * (omega[1] - omega[0]))


def test_dyson_matches_harmonic(params, small_grid):
    basis = phonon_basis(params, small_grid)
    omega = frequency_grid(2 * params.omega_m, 256)
    delta = mev(2.0)
    expected = harmonic_gf(basis, omega, delta).values
    values = dyson_gf(dynamical_matrix(params, small_grid.points), omega,
                      delta)
    np.testing.assert_allclose(values, expected, rtol=1e-6,
                               atol=1e-10 * np.abs(expected).max())


def test_harmonic_gf_is_positive(params, small_grid):
    basis = phonon_basis(params, small_grid)
    gf = harmonic_gf(basis, frequency_grid(2 * params.omega_m, 512),
                     mev(1.0))
    assert gf.check_positivity()
    assert gf.values.shape == (64, 512, 2, 2)


def test_broadening_must_be_positive(params, small_grid):
    basis = phonon_basis(params, small_grid)
    with pytest.raises(ConfigurationError):
        harmonic_gf(basis, frequency_grid(params.omega_m, 16), 0.0)


def test_matrix_gf_shape_check(params, small_grid):
    with pytest.raises(GridMismatchError):
        MatrixGF(kgrid=small_grid, omega_grid=np.linspace(0, 1, 10),
                 values=np.zeros((3, 10, 2, 2), dtype=complex), delta=0.1)
