'''
Command pipelines

Each experiment runs one family of calculations from a `RunConfig` and
writes its tables, gnuplot scripts and JSON results through a
`RunManifest`.  ``run`` returns False when a self-consistency loop stopped
without converging (the outputs of the best iterate are still written).
'''
import argparse
import json
import logging

import numpy as np

from . import units
from .config import RunConfig
from .enums import Method, TuningCase
from .exceptions import ConfigurationError, GridMismatchError
from .lattice import (KGrid, analytic_cavity_dispersion, cavity_band_squared,
                      matter_band_squared, phonon_basis)
from .manifest import RunManifest
from .md import md_lattice_gf, run_trajectories, write_trajectory_dump
from .registry import ExperimentRegistry
from .scp import ScpResult, scp_solve, scp_temperature_scan
from .spectra import (DISPERSION_FIELDS, PEAK_FIELDS, RABI_FIELDS,
                      SPECTRUM_FIELDS, band_rows, peak_rows, rabi_scan,
                      rabi_splitting, shifted_basis, spectral_function,
                      tuning_targets)
from .vdmft import (SelfEnergy, VdmftResult, assemble_polariton_gf,
                    lattice_gf, vdmft_loop)

logger = logging.getLogger(__name__)


def parse_int_list(text: str) -> list:
    'Parse ``2,4,6,8``'
    try:
        return [int(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            'expected comma-separated integers, got {!r}'.format(text))


def parse_float_list(text: str) -> list:
    'Parse ``100,200,300``'
    try:
        return [float(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            'expected comma-separated numbers, got {!r}'.format(text))


def parse_range(text: str) -> list:
    '''
    Parse ``start:stop:step`` (stop included) or a comma-separated list
    '''
    if ':' not in text:
        return parse_float_list(text)
    try:
        start, stop, step = (float(item) for item in text.split(':'))
    except ValueError:
        raise argparse.ArgumentTypeError(
            'expected start:stop:step, got {!r}'.format(text))
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError(
            'empty range {!r}'.format(text))
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def line_plot_script(csv_name, title, xlabel, ylabel, series) -> str:
    '''
    Gnuplot script drawing columns of a CSV file

    Parameters
    ----------
    series : list of (str, str)
        ``(using, title)`` pairs
    '''
    plots = ', \\\n     '.join(
        "'{}' every ::1 using {} with lines title '{}'".format(
            csv_name, using, label) for using, label in series)
    return '\n'.join([
        '# gnuplot script for {}'.format(csv_name),
        "set datafile separator ','",
        "set title '{}'".format(title),
        "set xlabel '{}'".format(xlabel),
        "set ylabel '{}'".format(ylabel),
        'set key outside',
        'plot {}'.format(plots),
        '',
    ])


def band_plot_script(csv_name, title, labels) -> str:
    series = [("1:(strcol(2) eq '{}' ? $3 : NaN)".format(label), label)
              for label in labels]
    return line_plot_script(csv_name, title, 'k (1/bohr)', 'omega (meV)',
                            series)


def heatmap_script(csv_name, title, overlays=()) -> str:
    'Spectral heatmap with optional band overlays'
    lines = [
        '# gnuplot script for {}'.format(csv_name),
        "set datafile separator ','",
        "set title '{}'".format(title),
        "set xlabel 'k (1/bohr)'",
        "set ylabel 'omega (meV)'",
        'set view map',
        'set palette defined (0 "white", 1 "red", 2 "black")',
        "splot '{}' every ::1 using 1:2:3 with points pointtype 5 "
        "pointsize 0.4 palette notitle".format(csv_name),
    ]
    for overlay in overlays:
        lines.append("replot '{}' every ::1 using 1:3:(0) with points "
                     "pointtype 7 pointsize 0.2 lc 'black' notitle"
                     "".format(overlay))
    lines.append('')
    return '\n'.join(lines)


class Experiment:
    '''
    Base class of the command pipelines

    Subclasses set ``name``, ``help`` and ``category``, add their own
    arguments and implement `run`.
    '''
    name = ''
    help = ''
    category = ''

    def add_arguments(self, parser: argparse.ArgumentParser):
        ...

    def run(self, config: RunConfig, args: argparse.Namespace,
            manifest: RunManifest) -> bool:
        raise NotImplementedError()

    def write_plot(self, config, manifest, name, text):
        if config.output.plot_scripts:
            manifest.write_text(name, text)


def solve_matter_scp(config: RunConfig, manifest: RunManifest,
                     temperature: float = None) -> ScpResult:
    'SCP of the isolated matter chain'
    matter = config.params.matter_chain()
    with manifest.stage('scp'):
        result = scp_solve(matter, config.grid.uniform(matter),
                           T=temperature, tol=config.scp.tol,
                           mixing=config.scp.mixing,
                           max_iter=config.scp.max_iter)
    gamma = result.gamma_frequencies()[0]
    manifest.record_convergence(
        'scp', iterations=result.iterations,
        final_residual=result.residuals[-1],
        temperature_K=result.temperature,
        onsite_shift_au=result.onsite_shift,
        gamma_meV=units.to_mev(gamma),
        gamma_shift_meV=units.to_mev(gamma - matter.omega_m))
    return result


def solve_matter_vdmft(config: RunConfig, manifest: RunManifest,
                       scp_result: ScpResult) -> VdmftResult:
    'VDMFT of the isolated matter chain, recorded in the manifest'
    with manifest.stage('vdmft'):
        result = vdmft_loop(config.params, config.vdmft, config.md,
                            scp_result=scp_result)
    last = result.iterations[-1]
    manifest.record_convergence(
        'vdmft', iterations=result.n_iterations, converged=result.converged,
        best_iteration=result.sigma.iteration,
        sigma_residual=last['sigma_residual'],
        spectral_distance=last['spectral_distance'],
        bath_modes=last['bath_modes'], bath_error=last['bath_error'],
        sigma_noise_floor=result.sigma.noise_floor)
    manifest.note('Self-energy noise floor {:.3e} Ha^2{}'.format(
        result.sigma.noise_floor,
        ' (harmonic impurity solved exactly)'
        if config.params.g == 0 and config.vdmft.exact_harmonic else ''))
    return result


def load_self_energy(path, omega_grid) -> SelfEnergy:
    'Self-energy from a saved VDMFT result or self-energy JSON file'
    with open(path, 'rt') as f:
        doc = json.load(f)
    sigma = SelfEnergy.from_state(doc.get('sigma', doc))
    if len(sigma.omega_grid) != len(omega_grid) or not np.allclose(
            sigma.omega_grid, omega_grid):
        raise GridMismatchError('Self-energy in {} was computed on a '
                                'different frequency grid'.format(path),
                                key='n_omega')
    return sigma


def reference_rows(params, kgrid: KGrid) -> list:
    'Analytic cavity line and the uncoupled finite-difference bands'
    uncoupled = params.replace(eta=0.0)
    cavity = np.sqrt(cavity_band_squared(uncoupled, kgrid.points))
    matter = np.sqrt(matter_band_squared(uncoupled, kgrid.points))
    analytic = analytic_cavity_dispersion(params, kgrid.points)
    rows = []
    for label, values, light in (('cavity_analytic', analytic, 1.0),
                                 ('cavity_uncoupled', cavity, 1.0),
                                 ('matter_uncoupled', matter, 0.0)):
        rows.extend({'k_invbohr': k, 'band': label,
                     'omega_meV': units.to_mev(value),
                     'light_fraction': light}
                    for k, value in zip(kgrid.points, values))
    return rows


def photon_band_error(params, kgrid: KGrid) -> float:
    'Largest relative error of the lattice photon band'
    lattice = np.sqrt(cavity_band_squared(params, kgrid.points))
    analytic = analytic_cavity_dispersion(params, kgrid.points)
    return float(np.max(np.abs(lattice - analytic) / analytic))


POLARITON_LABELS = ('lower', 'upper')
REFERENCE_LABELS = ('cavity_analytic', 'cavity_uncoupled', 'matter_uncoupled')


class DispersionExperiment(Experiment):
    name = 'dispersion'
    help = 'Harmonic polariton dispersion for several photon stencils'
    category = 'harmonic'

    def add_arguments(self, parser):
        parser.add_argument('--stencil-orders', type=parse_int_list,
                            default=None,
                            help='Comma-separated stencil orders (default: '
                            'the configured order)')

    def run(self, config, args, manifest):
        params = config.params
        orders = args.stencil_orders or [params.stencil_order]
        labels = POLARITON_LABELS + REFERENCE_LABELS
        errors = {}
        with manifest.stage('dispersion'):
            for order in orders:
                point = params.replace(stencil_order=order)
                kgrid = config.grid.full_zone(point)
                basis = phonon_basis(point, kgrid)
                rows = (band_rows(basis, POLARITON_LABELS) +
                        reference_rows(point, kgrid))
                name = 'dispersion_stencil{}.csv'.format(order)
                manifest.write_csv(name, rows, DISPERSION_FIELDS)
                self.write_plot(config, manifest,
                                'dispersion_stencil{}.gp'.format(order),
                                band_plot_script(name, 'stencil order {}'
                                                 ''.format(order), labels))
                errors['stencil_{}'.format(order)] = photon_band_error(
                    point, kgrid)

            zoom = config.grid.display(params)
            basis = phonon_basis(params, zoom)
            rows = band_rows(basis, POLARITON_LABELS) + reference_rows(params,
                                                                      zoom)
            manifest.write_csv('dispersion.csv', rows, DISPERSION_FIELDS)
            self.write_plot(config, manifest, 'dispersion.gp',
                            band_plot_script('dispersion.csv',
                                             'near the zone center', labels))
            rabi = rabi_splitting(phonon_basis(params,
                                               KGrid.from_points([0.0],
                                                                 params.a)))
        manifest.record_convergence('dispersion',
                                    photon_band_max_rel_error=errors,
                                    rabi_harmonic_meV=rabi)
        return True


class ScpExperiment(Experiment):
    name = 'scp'
    help = 'Self-consistent phonon renormalization of the matter chain'
    category = 'static'

    def add_arguments(self, parser):
        parser.add_argument('--temperatures', type=parse_float_list,
                            default=None,
                            help='Comma-separated temperatures (K) for a '
                            'zone-center shift scan')

    def run(self, config, args, manifest):
        result = solve_matter_scp(config, manifest)
        matter = result.params
        kgrid = config.grid.full_zone(matter)
        harmonic = phonon_basis(matter, kgrid)
        renormalized = shifted_basis(matter, kgrid, result.onsite_shift)
        manifest.write_csv('dispersion_harm.csv',
                           band_rows(harmonic, ('matter', )),
                           DISPERSION_FIELDS)
        manifest.write_csv('dispersion_scp.csv',
                           band_rows(renormalized, ('matter', )),
                           DISPERSION_FIELDS)
        manifest.write_json('scp.json', result)
        self.write_plot(config, manifest, 'dispersion_scp.gp',
                        line_plot_script('dispersion_scp.csv',
                                         'SCP matter band', 'k (1/bohr)',
                                         'omega (meV)', [('1:3', 'SCP')]))

        temperatures = args.temperatures
        if temperatures:
            with manifest.stage('scp-temperature-scan'):
                rows = scp_temperature_scan(
                    matter, config.grid.uniform(matter), temperatures,
                    tol=config.scp.tol, mixing=config.scp.mixing,
                    max_iter=config.scp.max_iter)
            manifest.write_csv('scp_temperature.csv', rows,
                               ('T_K', 'omega_gamma_meV', 'shift_meV'))
            self.write_plot(config, manifest, 'scp_temperature.gp',
                            line_plot_script('scp_temperature.csv',
                                             'SCP zone-center shift', 'T (K)',
                                             'shift (meV)',
                                             [('1:3', 'shift')]))
        return True


def write_spectrum(experiment, config, manifest, spectrum, name, title,
                   overlays=()):
    manifest.write_csv(name + '.csv', spectrum.rows(), SPECTRUM_FIELDS)
    manifest.write_csv(name + '_peaks.csv', peak_rows(spectrum), PEAK_FIELDS)
    experiment.write_plot(config, manifest, name + '.gp',
                          heatmap_script(name + '.csv', title, overlays))


def write_overlays(config, manifest, params, kgrid, onsite_shift):
    'Harmonic and SCP bands on the spectrum k-path'
    manifest.write_csv('dispersion_harm.csv',
                       band_rows(phonon_basis(params, kgrid)),
                       DISPERSION_FIELDS)
    manifest.write_csv('dispersion_scp.csv',
                       band_rows(shifted_basis(params, kgrid, onsite_shift)),
                       DISPERSION_FIELDS)
    return ('dispersion_harm.csv', 'dispersion_scp.csv')


class MdSpectrumExperiment(Experiment):
    name = 'md-spectrum'
    help = 'Exact classical spectral function from molecular dynamics'
    category = 'reference'

    def run(self, config, args, manifest):
        coupled = config.md_coupled
        params = config.params if coupled else config.params.matter_chain()
        opts = config.md.replace(auto_tighten=True) if coupled else config.md
        supercell = KGrid.commensurate(params)
        kgrid = KGrid.from_points(supercell.points[supercell.points >= 0],
                                  params.a)
        omega = config.grid.omega_grid(params)
        with manifest.stage('md'):
            gf = md_lattice_gf(params, kgrid, omega, opts, config.grid.delta,
                               coupled=coupled)
        spectrum = spectral_function(gf, Method.md)
        overlays = ()
        if not coupled:
            scp_result = solve_matter_scp(config, manifest)
            overlays = write_overlays(config, manifest, params, kgrid,
                                      scp_result.onsite_shift)
        write_spectrum(self, config, manifest, spectrum, 'spectrum',
                       'MD spectral function', overlays)
        manifest.record_convergence(
            'md', n_trajectories=gf.metadata['n_trajectories'],
            drift_flags=gf.metadata['drift_flags'],
            tau_damp_au=gf.metadata['tau_damp'],
            max_spectral_std_error=float(
                np.max(gf.metadata['spectral_std_error'])))
        if config.output.dump_trajectories:
            with manifest.stage('dump'):
                count = min(opts.batch_size, opts.n_trajectories)
                kind = 'coupled-chain' if coupled else 'matter-chain'
                trajectories = run_trajectories(params, kind, opts,
                                                indices=range(count))
                path = manifest.path('trajectories.bin')
                write_trajectory_dump(path, trajectories)
                manifest.add_file(path)
                logger.debug('Dumped %d trajectories to %s', count, path)
        return True


def iteration_rows(result: VdmftResult) -> list:
    'Probe spectra of every VDMFT iteration'
    params = result.params
    monitored = (0.0, np.pi / params.a)
    omega_mev = units.to_mev(result.sigma.omega_grid)
    rows = []
    for record in result.iterations:
        for k, values in zip(monitored, record['monitor_spectra']):
            rows.extend({'iteration': record['iteration'], 'k_invbohr': k,
                         'omega_meV': omega, 'A': value}
                        for omega, value in zip(omega_mev, values))
    return rows


class VdmftExperiment(Experiment):
    name = 'vdmft'
    help = 'VDMFT spectral function of the anharmonic matter chain'
    category = 'dynamic'

    def run(self, config, args, manifest):
        scp_result = solve_matter_scp(config, manifest)
        result = solve_matter_vdmft(config, manifest, scp_result)
        params = result.params
        kgrid = config.grid.full_zone(params)
        gf = lattice_gf(params, kgrid, result.sigma,
                        result.sigma.omega_grid, config.vdmft.delta)
        spectrum = spectral_function(gf, Method.vdmft)
        overlays = write_overlays(config, manifest, params, kgrid,
                                  scp_result.onsite_shift)
        write_spectrum(self, config, manifest, spectrum, 'spectrum',
                       'VDMFT spectral function', overlays)
        manifest.write_csv('vdmft_iterations.csv', iteration_rows(result),
                           ('iteration', 'k_invbohr', 'omega_meV', 'A'))
        manifest.write_json('vdmft.json', result)
        self.write_plot(config, manifest, 'vdmft_iterations.gp',
                        line_plot_script('vdmft_iterations.csv',
                                         'monitor spectra per iteration',
                                         'omega (meV)', 'A',
                                         [('3:4', 'A')]))
        return result.converged


class _CoupledExperiment(Experiment):
    'Shared setup of the polariton commands'

    def add_arguments(self, parser):
        parser.add_argument('--tuning', choices=[case.value
                                                 for case in TuningCase],
                            default=TuningCase.vdmft.value,
                            help='Cavity frequency: bare, SCP or VDMFT matter '
                            'frequency at the zone center')
        parser.add_argument('--sigma', default=None,
                            help='Reuse a self-energy from a previous vdmft '
                            'run (vdmft.json)')

    def matter_solution(self, config, args, manifest):
        scp_result = solve_matter_scp(config, manifest)
        omega = config.vdmft.omega_grid(config.params.matter_chain())
        converged = True
        if args.sigma:
            sigma = load_self_energy(args.sigma, omega)
            manifest.note('Self-energy read from {}'.format(args.sigma))
        else:
            result = solve_matter_vdmft(config, manifest, scp_result)
            sigma = result.sigma
            converged = result.converged
        with manifest.stage('tuning'):
            targets = tuning_targets(config.params,
                                     scp_shift=scp_result.onsite_shift,
                                     matter_sigma=sigma, omega_grid=omega,
                                     delta=config.vdmft.delta)
        manifest.record_convergence(
            'tuning', **{'{}_meV'.format(case.value): units.to_mev(value)
                         for case, value in targets.items()})
        return scp_result, sigma, omega, targets, converged


class PolaritonExperiment(_CoupledExperiment):
    name = 'polariton'
    help = 'VDMFT spectral function of the coupled polariton lattice'
    category = 'dynamic'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--etas', type=parse_range, default=None,
                            help='Couplings for zone-center cuts '
                            '(start:stop:step or a list)')

    def run(self, config, args, manifest):
        scp_result, sigma, omega, targets, converged = self.matter_solution(
            config, args, manifest)
        tuning = TuningCase(args.tuning)
        if tuning not in targets:
            raise ConfigurationError('No {} matter frequency could be '
                                     'measured'.format(tuning.value),
                                     key='tuning')
        delta = config.vdmft.delta
        params = config.params.replace(omega_0=targets[tuning])
        kgrid = config.grid.display(params)
        with manifest.stage('polariton'):
            gf = assemble_polariton_gf(params, sigma, kgrid, omega, delta)
            spectrum = spectral_function(gf, Method.vdmft)
        overlays = write_overlays(config, manifest, params, kgrid,
                                  scp_result.onsite_shift)
        write_spectrum(self, config, manifest, spectrum, 'spectrum',
                       'polariton spectral function', overlays)

        etas = args.etas or [params.eta]
        gamma = KGrid.from_points([0.0], params.a)
        rows = []
        omega_mev = units.to_mev(omega)
        with manifest.stage('gamma-cuts'):
            for eta in etas:
                cut = spectral_function(assemble_polariton_gf(
                    params.replace(eta=eta), sigma, gamma, omega, delta),
                    Method.vdmft, locate_peaks=False)
                rows.extend({'eta': eta, 'tuning': tuning.value,
                             'omega_meV': w, 'A_trace': value}
                            for w, value in zip(omega_mev, cut.values[0]))
        manifest.write_csv('gamma_cut.csv', rows,
                           ('eta', 'tuning', 'omega_meV', 'A_trace'))
        peaks = spectrum.peaks_at(0.0)
        manifest.record_convergence(
            'polariton', omega_0_meV=units.to_mev(params.omega_0),
            eta=params.eta, tuning=tuning.value,
            gamma_peaks_meV=[peak.position_mev for peak in peaks],
            gamma_fwhm_meV=[peak.fwhm_mev for peak in peaks])
        return converged


class RabiScanExperiment(_CoupledExperiment):
    name = 'rabi-scan'
    help = 'Rabi splitting versus coupling at three levels of theory'
    category = 'dynamic'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--etas', type=parse_range,
                            default=parse_range('0.0:0.1:0.01'),
                            help='Couplings (start:stop:step or a list)')

    def run(self, config, args, manifest):
        scp_result, sigma, omega, targets, converged = self.matter_solution(
            config, args, manifest)
        with manifest.stage('rabi-scan'):
            scan = rabi_scan(config.params, args.etas, args.tuning,
                             scp_shift=scp_result.onsite_shift,
                             matter_sigma=sigma, omega_grid=omega,
                             delta=config.vdmft.delta, targets=targets,
                             threads=config.threads)
        manifest.write_csv('rabi.csv', scan.rows(), RABI_FIELDS)
        self.write_plot(config, manifest, 'rabi.gp', line_plot_script(
            'rabi.csv', 'Rabi splitting ({} tuning)'.format(args.tuning),
            'eta', 'Omega_R (meV)',
            [('1:3', 'harmonic'), ('1:4', 'SCP'), ('1:5', 'VDMFT')]))
        manifest.record_convergence('rabi-scan', tuning=args.tuning,
                                    omega_0_meV=scan.omega_0_mev,
                                    n_points=len(scan.etas))
        return converged


def default_registry() -> ExperimentRegistry:
    'Registry with every command'
    registry = ExperimentRegistry()
    for experiment in (DispersionExperiment, ScpExperiment,
                       MdSpectrumExperiment, VdmftExperiment,
                       PolaritonExperiment, RabiScanExperiment):
        registry.register_experiment(experiment, experiment.category)
    return registry

