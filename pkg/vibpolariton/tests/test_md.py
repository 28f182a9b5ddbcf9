import logging

import numpy as np
import pytest

from vibpolariton import (ConfigurationError, IncommensurateKError, KGrid,
                          MdOptions, ModelParams, SystemKind, TimestepError,
                          md_lattice_gf, run_trajectories, scp_dispersion,
                          scp_solve)
from vibpolariton.lattice import frequency_grid
from vibpolariton.md import (MIN_RECORD_PERIODS, CoupledChainSystem,
                             ImpuritySystem, MatterChainSystem, accumulate,
                             check_commensurate, check_record_length,
                             energy_drift, equipartition_frequency,
                             estimate_gf, integrate_nve, one_sided_transform,
                             read_trajectory_dump, resolve_timestep,
                             write_trajectory_dump)
from vibpolariton.spectra import find_peaks, spectral_function
from vibpolariton.units import mev, to_mev


@pytest.fixture(scope='function')
def chain(matter):
    return matter.replace(n_sites=8)


@pytest.fixture(scope='function')
def quick():
    return MdOptions(dt=4.0, n_equil_steps=64, n_prod_steps=64, stride=4,
                     n_trajectories=4, batch_size=4, seed=11)


def oscillator(omega):
    return ImpuritySystem(onsite=omega ** 2, g=0.0, kT=1e-3)


def test_verlet_matches_discrete_solution():
    omega, dt, q0 = 0.02, 1.0, 0.7
    positions, velocities, energies = integrate_nve(
        oscillator(omega), [q0], [0.0], dt, 200)
    theta = np.arccos(1 - 0.5 * (omega * dt) ** 2)
    expected = q0 * np.cos(theta * np.arange(200))
    np.testing.assert_allclose(positions[:, 0], expected, atol=1e-12)
    assert energy_drift(energies) < 1e-3


def test_verlet_is_time_reversible():
    system = oscillator(0.02)
    positions, velocities, _ = integrate_nve(system, [0.3], [0.01], 4.0, 101)
    back, _, _ = integrate_nve(system, positions[-1], -velocities[-1], 4.0,
                               101)
    np.testing.assert_allclose(back[-1], positions[0], atol=1e-10)


def test_stride_records(chain, rng):
    system = MatterChainSystem(chain)
    q = rng.normal(scale=0.1, size=(2, chain.n_sites))
    v = np.zeros_like(q)
    positions, velocities, energies = integrate_nve(system, q, v, 4.0, 40,
                                                    stride=8)
    assert positions.shape == (5, 2, chain.n_sites)
    assert energies.shape == (5, 2)
    np.testing.assert_allclose(positions[0], q)


def test_trajectories_are_reproducible(chain, quick):
    first = run_trajectories(chain, SystemKind.matter_chain, quick)
    regrouped = run_trajectories(chain, SystemKind.matter_chain,
                                 quick.replace(batch_size=1, threads=2))
    assert [t.index for t in regrouped] == [0, 1, 2, 3]
    for a, b in zip(first, regrouped):
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.velocities, b.velocities)
    subset = run_trajectories(chain, SystemKind.matter_chain, quick,
                              indices=[2])
    np.testing.assert_array_equal(subset[0].positions, first[2].positions)


def test_seed_changes_trajectories(chain, quick):
    first = run_trajectories(chain, SystemKind.matter_chain, quick)
    other = run_trajectories(chain, SystemKind.matter_chain,
                             quick.replace(seed=12))
    assert not np.array_equal(first[0].positions, other[0].positions)


def test_timestep_limit(params):
    system = CoupledChainSystem(params.replace(n_sites=8))
    opts = MdOptions(dt=4.0, n_equil_steps=10, n_prod_steps=100, stride=1)
    with pytest.raises(TimestepError) as info:
        resolve_timestep(system, opts)
    assert info.value.omega_max == pytest.approx(system.omega_max)

    tightened = resolve_timestep(system, opts.replace(auto_tighten=True))
    assert tightened.dt * system.omega_max == pytest.approx(0.1)
    assert tightened.n_prod_steps * tightened.dt >= 100 * 4.0
    assert resolve_timestep(MatterChainSystem(params), opts) is opts


def test_incommensurate_wavevector(chain):
    with pytest.raises(IncommensurateKError) as info:
        check_commensurate([0.1234], chain.a, chain.n_sites)
    assert len(info.value.allowed) == chain.n_sites
    check_commensurate(KGrid.commensurate(chain).points, chain.a,
                       chain.n_sites)


def test_lattice_gf_rejects_incommensurate_grid(chain, quick):
    grid = KGrid.from_points([0.1234], chain.a)
    with pytest.raises(IncommensurateKError):
        md_lattice_gf(chain, grid, frequency_grid(chain.omega_m, 16), quick)


@pytest.mark.parametrize('kwargs', [{'dt': 0.0}, {'stride': 0},
                                    {'n_trajectories': 0},
                                    {'n_prod_steps': 4, 'stride': 4}])
def test_invalid_options(kwargs):
    with pytest.raises(ConfigurationError):
        MdOptions(**kwargs)


def test_exact_transform_of_harmonic_correlation():
    omega_0, kT, h = 0.016, 1e-3, 4.0
    delta = omega_0 / 20
    n_lag = int(15 / delta / h)
    times = np.arange(n_lag) * h
    correlation = (-kT * np.sin(omega_0 * times) / omega_0
                   ).reshape(n_lag, 1, 1)
    omega = np.linspace(0.5 * omega_0, 1.5 * omega_0, 64)
    values = one_sided_transform(correlation, h, omega,
                                 np.exp(-delta * times), kT)[:, 0, 0]
    expected = 1 / ((omega + 1j * delta) ** 2 - omega_0 ** 2)
    np.testing.assert_allclose(values, expected, rtol=1e-4)


def test_trajectory_dump(chain, quick, tmp_path):
    trajectories = run_trajectories(chain, SystemKind.matter_chain, quick)
    path = tmp_path / 'trajectories.bin'
    write_trajectory_dump(path, trajectories)
    restored = read_trajectory_dump(path, kT=chain.kT, a=chain.a)
    assert len(restored) == len(trajectories)
    for a, b in zip(trajectories, restored):
        assert b.dt == a.dt and b.stride == a.stride
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.velocities, b.velocities)


def test_not_a_dump(tmp_path):
    path = tmp_path / 'junk.bin'
    path.write_bytes(b'\x01' * 64)
    with pytest.raises(ConfigurationError):
        read_trajectory_dump(path)


def test_time_reversed(chain, quick):
    trajectory = run_trajectories(chain, SystemKind.matter_chain, quick)[0]
    reversed_ = trajectory.time_reversed()
    np.testing.assert_array_equal(reversed_.positions[0],
                                  trajectory.positions[-1])
    np.testing.assert_array_equal(reversed_.velocities[0],
                                  -trajectory.velocities[-1])
    assert reversed_.n_records == trajectory.n_records


def test_estimate_shapes(chain, quick):
    trajectories = run_trajectories(chain, SystemKind.matter_chain, quick)
    grid = KGrid.commensurate(chain)
    estimate = accumulate(trajectories, grid.points, quick)
    assert estimate.values.shape == (quick.n_records // 2, len(grid), 1, 1)
    assert estimate.n_trajectories == quick.n_trajectories
    assert estimate.times[1] == pytest.approx(quick.record_interval)


def test_estimate_gf_from_trajectories(chain, quick):
    trajectories = run_trajectories(chain, SystemKind.matter_chain, quick)
    grid = KGrid.commensurate(chain)
    omega = frequency_grid(2 * chain.omega_m, 64)
    gf = estimate_gf(trajectories, grid, omega, quick, mev(5.0))
    assert gf.values.shape == (len(grid), 64, 1, 1)
    assert gf.delta == pytest.approx(mev(5.0))
    assert gf.metadata['method'] == 'MD'
    assert gf.metadata['n_trajectories'] == quick.n_trajectories


@pytest.mark.slow
def test_md_peak_tracks_scp(matter):
    chain = matter.replace(n_sites=32)
    opts = MdOptions(dt=4.0, n_equil_steps=4096, n_prod_steps=32768,
                     n_trajectories=16, stride=8, seed=5)
    omega = frequency_grid(2 * chain.omega_m, 2048)
    gamma = KGrid.from_points([0.0], chain.a)
    gf = md_lattice_gf(chain, gamma, omega, opts, mev(5.0))
    spectral = -gf.values[0, :, 0, 0].imag / np.pi
    peak = find_peaks(omega, spectral)[0]
    scp = scp_solve(chain, KGrid.commensurate(chain))
    expected = to_mev(scp_dispersion(scp, gamma).frequencies[0, 0])
    assert peak.position_mev == pytest.approx(expected, abs=25)


@pytest.fixture(scope='module')
def thermal_run():
    chain = ModelParams.water_defaults().matter_chain().replace(n_sites=8)
    opts = MdOptions(dt=4.0, n_equil_steps=1024, n_prod_steps=2048,
                     stride=4, n_trajectories=32, batch_size=32,
                     friction=1e-2, seed=21)
    return chain, opts, run_trajectories(chain, SystemKind.matter_chain,
                                         opts)


def assert_spectra_agree(first, second):
    'Trace spectra agree within four combined standard errors'
    a, b = (-np.trace(gf.values, axis1=2, axis2=3).imag / np.pi
            for gf in (first, second))
    bound = 4 * (first.metadata['spectral_std_error'] +
                 second.metadata['spectral_std_error'])
    bound = bound + 1e-3 * np.max(np.abs(a))
    assert np.all(np.abs(a - b) <= bound)


def test_equipartition(matter):
    chain = matter.replace(n_sites=16)
    opts = MdOptions(dt=4.0, n_equil_steps=2048, n_prod_steps=256,
                     stride=4, n_trajectories=20, batch_size=20,
                     friction=1e-2, seed=7)
    trajectories = run_trajectories(chain, SystemKind.matter_chain, opts)
    samples = np.array([np.mean(t.velocities ** 2)
                        for t in trajectories]) / chain.kT
    error = np.std(samples, ddof=1) / np.sqrt(len(samples))
    assert abs(np.mean(samples) - 1.0) < 3 * error


def test_nve_energy_drift(matter):
    opts = MdOptions(dt=4.0, n_equil_steps=1024, n_prod_steps=100000,
                     stride=100, n_trajectories=2, batch_size=2,
                     friction=1e-2, seed=3)
    trajectories = run_trajectories(matter, SystemKind.matter_chain, opts)
    assert max(t.drift for t in trajectories) < 1e-5
    assert not any(t.drift_flag for t in trajectories)


def test_md_first_moment_sum_rule(matter):
    chain = matter.replace(n_sites=8)
    opts = MdOptions(dt=4.0, n_equil_steps=1024, n_prod_steps=2048,
                     stride=4, n_trajectories=4000, batch_size=500,
                     friction=1e-2, window='hann', seed=8)
    grid = KGrid.commensurate(chain)
    omega = frequency_grid(3 * chain.omega_m, 2048)
    gf = md_lattice_gf(chain, grid, omega, opts, mev(5.0))
    moments = spectral_function(gf, locate_peaks=False).first_moment()
    assert np.mean(moments) == pytest.approx(0.5, rel=0.02)


def test_spectrum_is_even_in_k(thermal_run):
    chain, opts, trajectories = thermal_run
    k = 2 * (2 * np.pi / (chain.n_sites * chain.a))
    omega = frequency_grid(2 * chain.omega_m, 256)
    forward, backward = (
        estimate_gf(trajectories, KGrid.from_points([q], chain.a), omega,
                    opts, mev(20.0))
        for q in (k, -k))
    assert_spectra_agree(forward, backward)


def test_spectrum_is_time_reversal_symmetric(thermal_run):
    chain, opts, trajectories = thermal_run
    grid = KGrid.commensurate(chain)
    omega = frequency_grid(2 * chain.omega_m, 256)
    forward = estimate_gf(trajectories, grid, omega, opts, mev(20.0))
    backward = estimate_gf([t.time_reversed() for t in trajectories], grid,
                           omega, opts, mev(20.0))
    assert_spectra_agree(forward, backward)


@pytest.mark.parametrize('periods', [4.0, 12.0])
def test_record_length_check(caplog, periods):
    omega = mev(400.0)
    with caplog.at_level(logging.WARNING, logger='vibpolariton.md'):
        covered = check_record_length(periods * 2 * np.pi / omega, omega)
    assert covered == pytest.approx(periods)
    assert ('slowest mode' in caplog.text) == (periods < MIN_RECORD_PERIODS)


def test_short_records_are_flagged(chain, quick, caplog):
    trajectories = run_trajectories(chain, SystemKind.matter_chain, quick)
    omega = frequency_grid(2 * chain.omega_m, 64)
    with caplog.at_level(logging.WARNING, logger='vibpolariton.md'):
        gf = estimate_gf(trajectories, KGrid.commensurate(chain), omega,
                         quick)
    assert gf.metadata['record_periods'] < MIN_RECORD_PERIODS
    assert 'slowest mode' in caplog.text


def test_equipartition_frequency_of_harmonic_chain(harmonic_matter):
    chain = harmonic_matter.replace(n_sites=8)
    opts = MdOptions(dt=4.0, n_equil_steps=256, n_prod_steps=2048,
                     stride=4, n_trajectories=8, batch_size=8, seed=4)
    trajectories = run_trajectories(chain, SystemKind.matter_chain, opts)
    grid = KGrid.commensurate(chain)
    system = MatterChainSystem(chain)
    estimated = equipartition_frequency(trajectories, grid.points)
    assert estimated == pytest.approx(system.omega_min, rel=0.05)
    assert system.omega_min < system.omega_max
