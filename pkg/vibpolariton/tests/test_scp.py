import numpy as np
import pytest

from vibpolariton import (ConfigurationError, ConvergenceFailure, KGrid,
                          ModelParams, ScpResult, phonon_basis,
                          scp_dispersion, scp_solve)
from vibpolariton.scp import (quartic_force_constant, scp_temperature_scan,
                              single_site_frequency)
from vibpolariton.units import to_mev


@pytest.fixture(scope='function')
def isolated(matter):
    'Matter chain without intersite coupling: independent oscillators'
    return matter.replace(Omega_m=0.0)


def test_single_site_closed_form(isolated):
    grid = KGrid.uniform(isolated.a, 16)
    result = scp_solve(isolated, grid)
    expected = single_site_frequency(isolated.omega_m, isolated.g,
                                     isolated.kT)
    np.testing.assert_allclose(result.frequencies, expected, rtol=1e-6)
    assert to_mev(expected - isolated.omega_m) == pytest.approx(155, abs=5)
    assert result.converged


def test_harmonic_chain_is_unchanged(harmonic_matter, small_grid):
    result = scp_solve(harmonic_matter, small_grid)
    np.testing.assert_allclose(result.frequencies,
                               phonon_basis(harmonic_matter,
                                            small_grid).frequencies,
                               rtol=1e-12)
    assert result.onsite_shift == 0.0
    assert result.iterations == 1


def test_frequencies_harden(params, small_grid):
    result = scp_solve(params, small_grid)
    harmonic = phonon_basis(params, small_grid)
    assert np.all(result.frequencies >= harmonic.frequencies - 1e-12)
    assert result.onsite_shift > 0
    assert result.residuals[-1] < 1e-8


def test_hardening_grows_with_temperature(matter):
    rows = scp_temperature_scan(matter, KGrid.uniform(matter.a, 64),
                                [100.0, 200.0, 300.0])
    shifts = [row['shift_meV'] for row in rows]
    assert all(b > a > 0 for a, b in zip(shifts, shifts[1:]))


def test_matter_chain_gamma_shift(matter):
    rows = scp_temperature_scan(matter, KGrid.uniform(matter.a, 512),
                                [300.0])
    assert rows[0]['shift_meV'] == pytest.approx(135, abs=10)


def test_coupled_shift_follows_matter_band():
    detuned = ModelParams.water_defaults(omega_0_mev=510.0, eta=0.01)
    grid = KGrid.uniform(detuned.a, 64)
    coupled, = scp_temperature_scan(detuned, grid, [300.0])
    matter, = scp_temperature_scan(detuned.matter_chain(), grid, [300.0])
    assert matter['shift_meV'] > 70.0
    assert coupled['shift_meV'] == pytest.approx(matter['shift_meV'], abs=2)
    assert coupled['omega_gamma_meV'] == pytest.approx(
        matter['omega_gamma_meV'], abs=2)


def test_frequencies_do_not_depend_on_supercell(matter):
    points = KGrid.from_points([0.0, 0.5 * np.pi / matter.a], matter.a)
    bands = []
    for n_sites in (16, 32, 64):
        chain = matter.replace(n_sites=n_sites)
        result = scp_solve(chain, KGrid.commensurate(chain), tol=1e-10)
        bands.append(scp_dispersion(result, points).frequencies)
    for band in bands[1:]:
        np.testing.assert_allclose(band, bands[0], rtol=1e-8)


def test_dispersion_on_display_grid(params, small_grid):
    result = scp_solve(params, small_grid)
    on_grid = scp_dispersion(result, small_grid)
    np.testing.assert_allclose(on_grid.frequencies, result.frequencies,
                               rtol=1e-6)
    display = scp_dispersion(result, KGrid.display(params, 21))
    assert display.frequencies.shape == (21, 2)
    assert np.all(display.frequencies > 0)


def test_quartic_force_constant(matter, small_grid):
    basis = phonon_basis(matter, small_grid)
    phi = quartic_force_constant(basis, 0, 0, 0, 3, 0, 0)
    assert phi == pytest.approx(12 * matter.g / len(small_grid))


def test_failure_reports_residuals(params, small_grid):
    with pytest.raises(ConvergenceFailure) as info:
        scp_solve(params, small_grid, tol=1e-14, max_iter=2)
    assert len(info.value.residuals) == 2


@pytest.mark.parametrize('kwargs', [{'mixing': 0.0}, {'mixing': 1.5},
                                    {'tol': -1.0}])
def test_invalid_options(params, small_grid, kwargs):
    with pytest.raises(ConfigurationError):
        scp_solve(params, small_grid, **kwargs)


def test_needs_uniform_grid(params):
    with pytest.raises(ConfigurationError):
        scp_solve(params, KGrid.display(params, 11))


def test_restart_from_previous(params, small_grid):
    first = scp_solve(params, small_grid, T=200.0)
    second = scp_solve(params, small_grid, T=200.0, initial=first)
    assert second.iterations <= 2
    np.testing.assert_allclose(second.frequencies, first.frequencies,
                               rtol=1e-6)


def test_serialization(params, small_grid, tmp_path):
    result = scp_solve(params, small_grid)
    path = tmp_path / 'scp.json'
    result.save_json(path)
    restored = ScpResult.load_json(path)
    assert restored.params == result.params
    assert restored.onsite_shift == pytest.approx(result.onsite_shift)
    np.testing.assert_allclose(restored.frequencies, result.frequencies)
    np.testing.assert_allclose(restored.gamma_frequencies(),
                               result.gamma_frequencies())
