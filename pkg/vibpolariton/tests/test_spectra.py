import numpy as np
import pytest

from vibpolariton import (ConfigurationError, KGrid, Method, SelfEnergy,
                          TuningCase, find_peaks, harmonic_gf, phonon_basis,
                          rabi_scan, rabi_splitting, spectral_function)
from vibpolariton.lattice import frequency_grid
from vibpolariton.spectra import (PEAK_FIELDS, SPECTRUM_FIELDS, Peak,
                                  lorentzian, peak_rows, read_csv,
                                  tuning_targets, write_csv)
from vibpolariton.units import HBAR_MEV_FS, mev, to_mev


@pytest.fixture(scope='function')
def window():
    'Frequency window around the polariton branches, 0.1 meV spacing'
    return mev(np.linspace(300.0, 700.0, 4001))


@pytest.fixture(scope='function')
def gamma(params):
    return KGrid.from_points([0.0], params.a)


def test_separated_lorentzians(window):
    omega = to_mev(window)
    values = lorentzian(omega, 440.0, 5.0, 1.0) + lorentzian(omega, 528.0,
                                                            8.0, 0.6)
    peaks = find_peaks(window, values)
    assert [peak.fitted for peak in peaks] == [False, False]
    assert peaks[0].position_mev == pytest.approx(440.0, abs=0.1)
    assert peaks[1].position_mev == pytest.approx(528.0, abs=0.1)
    assert peaks[0].fwhm_mev == pytest.approx(5.0, abs=0.2)
    assert peaks[1].fwhm_mev == pytest.approx(8.0, abs=0.2)
    assert peaks[0].lifetime_fs == pytest.approx(HBAR_MEV_FS / 5.0, rel=0.05)


def test_overlapping_lorentzians_are_fitted(window):
    omega = to_mev(window)
    values = lorentzian(omega, 440.0, 5.0, 1.0) + lorentzian(omega, 448.0,
                                                            8.0, 0.8)
    peaks = find_peaks(window, values)
    assert len(peaks) == 2
    assert all(peak.fitted for peak in peaks)
    assert peaks[0].position_mev == pytest.approx(440.0, abs=0.05)
    assert peaks[1].position_mev == pytest.approx(448.0, abs=0.05)
    assert peaks[0].fwhm_mev == pytest.approx(5.0, rel=0.02)
    assert peaks[1].fwhm_mev == pytest.approx(8.0, rel=0.02)


def test_single_lorentzian(window):
    values = lorentzian(to_mev(window), 500.0, 10.0, 2.5)
    peak, = find_peaks(window, values)
    assert peak.position_mev == pytest.approx(500.0, abs=0.1)
    assert peak.height == pytest.approx(2.5)


@pytest.mark.parametrize('values', [np.zeros(64), np.linspace(0, 1, 64),
                                    np.linspace(1, 0, 64)])
def test_no_maximum(values):
    assert find_peaks(np.linspace(0, 0.03, 64), values) == []


def test_small_bumps_are_ignored(window):
    omega = to_mev(window)
    values = (lorentzian(omega, 440.0, 5.0, 1.0) +
              lorentzian(omega, 600.0, 5.0, 0.01))
    assert len(find_peaks(window, values)) == 1
    assert len(find_peaks(window, values, prominence=0.001)) == 2


def test_infinite_lifetime():
    assert Peak(440.0, 0.0, 1.0).lifetime_fs == float('inf')


def test_spectrum_sum_rules(params, gamma):
    omega = frequency_grid(3 * params.omega_m, 16384)
    gf = harmonic_gf(phonon_basis(params, gamma), omega, mev(1.0))
    spectrum = spectral_function(gf)
    assert spectrum.method == Method.harmonic
    assert spectrum.values.shape == (1, len(omega))
    np.testing.assert_allclose(spectrum.first_moment(), 0.5, rtol=1e-2)
    np.testing.assert_allclose(spectrum.values,
                               spectrum.components.sum(axis=-1))


def test_spectral_rabi_splitting(params, gamma, window):
    gf = harmonic_gf(phonon_basis(params, gamma), window, mev(1.0))
    spectrum = spectral_function(gf)
    assert len(spectrum.peaks_at(0.0)) == 2
    assert rabi_splitting(spectrum) == pytest.approx(88.0, abs=0.5)
    assert rabi_splitting(phonon_basis(params, gamma)) == pytest.approx(
        88.0, abs=0.5)


def test_rabi_splitting_sources(params, gamma):
    assert rabi_splitting(phonon_basis(params.replace(eta=0.0),
                                       gamma)) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ConfigurationError):
        rabi_splitting(phonon_basis(params.matter_chain(), gamma))
    with pytest.raises(ValueError):
        rabi_splitting('spectrum')


@pytest.mark.parametrize('omega_m_mev', [220.0, 440.0])
def test_rabi_splitting_is_linear_in_coupling(params, omega_m_mev):
    scaled = params.replace(omega_m=mev(omega_m_mev), omega_0=mev(omega_m_mev))
    etas = [0.0, 0.02, 0.05, 0.1]
    scan = rabi_scan(scaled, etas, TuningCase.bare)
    np.testing.assert_allclose(scan.harmonic, 2 * np.array(etas) * omega_m_mev,
                               rtol=1e-6, atol=1e-9)
    assert scan.omega_0_mev == pytest.approx(omega_m_mev)
    assert scan.scp is None and scan.vdmft is None


def test_rabi_scan_levels(params):
    scp_shift = 0.5 * params.omega_m ** 2
    scan = rabi_scan(params, [0.05, 0.1], TuningCase.scp,
                     scp_shift=scp_shift, threads=2)
    assert np.all(scan.scp > 0)
    assert scan.omega_0_mev == pytest.approx(
        to_mev(np.sqrt(params.omega_m ** 2 + scp_shift)))
    rows = scan.rows()
    assert rows[1]['eta'] == 0.1
    assert rows[1]['tuning'] == 'scp'
    assert np.isnan(rows[1]['rabi_vdmft_meV'])


def test_rabi_scan_needs_target(params):
    with pytest.raises(ConfigurationError):
        rabi_scan(params, [0.1], TuningCase.vdmft)
    with pytest.raises(ConfigurationError):
        rabi_scan(params, [0.1], TuningCase.bare,
                  matter_sigma=SelfEnergy.zero(np.linspace(0, 1, 8)))


def test_tuning_targets(params):
    omega = frequency_grid(2 * params.omega_m, 4096)
    targets = tuning_targets(params, scp_shift=0.0,
                             matter_sigma=SelfEnergy.zero(omega),
                             omega_grid=omega, delta=mev(1.0))
    assert set(targets) == set(TuningCase)
    assert targets[TuningCase.bare] == pytest.approx(params.omega_m)
    assert targets[TuningCase.scp] == pytest.approx(params.omega_m)
    assert targets[TuningCase.vdmft] == pytest.approx(params.omega_m,
                                                      abs=omega[1] - omega[0])


def test_spectrum_rows(matter, gamma, window):
    gf = harmonic_gf(phonon_basis(matter, gamma), window, mev(1.0))
    spectrum = spectral_function(gf)
    rows = spectrum.rows()
    assert len(rows) == len(window)
    assert set(rows[0]) == set(SPECTRUM_FIELDS)
    assert all(row['A_cavity'] == 0 for row in rows)
    peaks = peak_rows(spectrum)
    assert len(peaks) == 1
    assert set(peaks[0]) == set(PEAK_FIELDS)


def test_csv_format(tmp_path):
    rows = [{'k_invbohr': 0.1, 'band': 0, 'omega_meV': 1 / 3},
            {'k_invbohr': np.float64(0.2), 'band': 1, 'omega_meV': 2.0}]
    first = write_csv(tmp_path / 'a.csv', rows)
    second = write_csv(tmp_path / 'b.csv', rows)
    assert first.read_bytes() == second.read_bytes()
    restored = read_csv(first)
    assert restored[0] == {'k_invbohr': '0.1', 'band': '0',
                           'omega_meV': '0.333333333333'}
    assert restored[1]['k_invbohr'] == '0.2'
