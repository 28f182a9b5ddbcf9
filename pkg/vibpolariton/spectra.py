'''
Spectral functions, peak extraction and Rabi splittings
'''
import concurrent.futures
import csv
import dataclasses
import logging

import numpy as np
import scipy.integrate
import scipy.optimize
import scipy.signal

from .enums import Method, TuningCase
from .exceptions import ConfigurationError
from .lattice import (KGrid, MatrixGF, PhononBasis, diagonalize,
                      dynamical_matrix, phonon_basis)
from .model import ModelParams
from .units import lifetime_fs, mev, to_mev
from .vdmft import assemble_polariton_gf, lattice_gf

logger = logging.getLogger(__name__)

DEFAULT_PROMINENCE = 0.05

DISPERSION_FIELDS = ('k_invbohr', 'band', 'omega_meV', 'light_fraction')
SPECTRUM_FIELDS = ('k_invbohr', 'omega_meV', 'A_trace', 'A_cavity', 'A_matter')
RABI_FIELDS = ('eta', 'tuning', 'rabi_harm_meV', 'rabi_scp_meV',
               'rabi_vdmft_meV')
PEAK_FIELDS = ('k_invbohr', 'position_meV', 'fwhm_meV', 'height', 'fitted',
               'lifetime_fs')


@dataclasses.dataclass(frozen=True)
class Peak:
    '''
    A spectral peak

    Attributes
    ----------
    position_mev : float
    fwhm_mev : float
    height : float
    fitted : bool
        Center and width come from a two-Lorentzian least-squares fit
    '''
    position_mev: float
    fwhm_mev: float
    height: float
    fitted: bool = False

    @property
    def lifetime_fs(self) -> float:
        return lifetime_fs(self.fwhm_mev)


@dataclasses.dataclass
class SpectrumResult:
    '''
    Momentum-resolved spectral function

    Attributes
    ----------
    kgrid : KGrid
    omega_grid : np.ndarray
        Hartree
    values : np.ndarray
        Trace spectral function ``A(k, omega)``, ``(n_k, n_omega)``
    components : np.ndarray
        Diagonal spectral functions per coordinate, ``(n_k, n_omega, n)``
    method : Method
    peaks : list
        One sorted list of `Peak` per k-point
    metadata : dict
    '''
    kgrid: KGrid
    omega_grid: np.ndarray
    values: np.ndarray
    components: np.ndarray
    method: Method
    peaks: list = None
    metadata: dict = dataclasses.field(default_factory=dict)

    @property
    def n_coords(self) -> int:
        return self.components.shape[-1]

    def slice_at(self, k: float) -> np.ndarray:
        return self.values[self.kgrid.index_of(k)]

    def peaks_at(self, k: float) -> list:
        if self.peaks is None:
            return find_peaks(self.omega_grid, self.slice_at(k))
        return self.peaks[self.kgrid.index_of(k)]

    def area(self) -> np.ndarray:
        '``int A_aa d omega`` per k and coordinate'
        return scipy.integrate.trapezoid(self.components, self.omega_grid,
                                         axis=1)

    def first_moment(self) -> np.ndarray:
        '``int omega A_aa d omega`` per k and coordinate (1/2 when exact)'
        return scipy.integrate.trapezoid(
            self.omega_grid[np.newaxis, :, np.newaxis] * self.components,
            self.omega_grid, axis=1)

    def rows(self) -> list:
        '''
        Rows of ``spectrum.csv``

        ``k_invbohr, omega_meV, A_trace, A_cavity, A_matter``; the cavity
        column is zero for the matter chain.
        '''
        rows = []
        omega_mev = to_mev(self.omega_grid)
        for ik, k in enumerate(self.kgrid.points):
            if self.n_coords == 1:
                cavity = np.zeros(len(self.omega_grid))
                matter = self.components[ik, :, 0]
            else:
                cavity = self.components[ik, :, 0]
                matter = self.components[ik, :, 1]
            for iw, omega in enumerate(omega_mev):
                rows.append({'k_invbohr': k,
                             'omega_meV': omega,
                             'A_trace': self.values[ik, iw],
                             'A_cavity': cavity[iw],
                             'A_matter': matter[iw],
                             })
        return rows


@dataclasses.dataclass
class RabiScan:
    '''
    Rabi splittings over a range of couplings

    Attributes
    ----------
    etas : np.ndarray
    tuning : TuningCase
    omega_0_mev : float
        Cavity frequency the scan was tuned to
    harmonic, scp, vdmft : np.ndarray
        ``Omega_R`` (meV) per coupling; None for levels not computed
    '''
    etas: np.ndarray
    tuning: TuningCase
    omega_0_mev: float
    harmonic: np.ndarray
    scp: np.ndarray = None
    vdmft: np.ndarray = None

    def rows(self) -> list:
        'Rows of ``rabi.csv``'
        def column(values, idx):
            return float('nan') if values is None else float(values[idx])

        return [{'eta': float(eta),
                 'tuning': TuningCase(self.tuning).value,
                 'rabi_harm_meV': column(self.harmonic, idx),
                 'rabi_scp_meV': column(self.scp, idx),
                 'rabi_vdmft_meV': column(self.vdmft, idx),
                 }
                for idx, eta in enumerate(self.etas)]


def spectral_function(gf: MatrixGF, method: Method = None, *,
                      locate_peaks: bool = True,
                      prominence: float = DEFAULT_PROMINENCE
                      ) -> SpectrumResult:
    """
    ``A(k, omega) = -Tr Im D(k, omega) / pi``

    Parameters
    ----------
    gf : MatrixGF
    method : Method, optional
        Defaults to the method recorded in ``gf.metadata``
    locate_peaks : bool, optional
        Run `find_peaks` on every k slice
    prominence : float, optional
        Relative prominence threshold for the peak search

    Returns
    -------
    spectrum : SpectrumResult
    """
    if method is None:
        method = gf.metadata.get('method', Method.harmonic)
    components = gf.spectral_diagonal()
    values = components.sum(axis=-1)
    peaks = None
    if locate_peaks:
        peaks = [find_peaks(gf.omega_grid, values[ik], prominence=prominence)
                 for ik in range(len(gf.kgrid))]
    metadata = {key: value for key, value in gf.metadata.items()
                if key != 'method'}
    return SpectrumResult(kgrid=gf.kgrid, omega_grid=gf.omega_grid,
                          values=values, components=components,
                          method=Method(method), peaks=peaks,
                          metadata=metadata)


def lorentzian(omega, center, fwhm, height):
    'Lorentzian of given height and full width at half maximum'
    half = 0.5 * fwhm
    return height * half ** 2 / ((omega - center) ** 2 + half ** 2)


def _two_lorentzians(omega, c1, w1, h1, c2, w2, h2):
    return lorentzian(omega, c1, w1, h1) + lorentzian(omega, c2, w2, h2)


def _overlapping(values, first, second):
    valley = values[first:second + 1].min()
    return valley > 0.5 * min(values[first], values[second])


def _fit_pair(omega_mev, values, first, second, widths):
    step = omega_mev[1] - omega_mev[0]
    w1, w2 = max(widths[0], 2 * step), max(widths[1], 2 * step)
    lo = max(np.searchsorted(omega_mev, omega_mev[first] - 2 * w1), 0)
    hi = min(np.searchsorted(omega_mev, omega_mev[second] + 2 * w2),
             len(omega_mev) - 1)
    window = slice(lo, hi + 1)
    scale = max(values[first], values[second])
    p0 = [omega_mev[first], w1, values[first] / scale,
          omega_mev[second], w2, values[second] / scale]
    lower = [omega_mev[lo], step, 0.0] * 2
    upper = [omega_mev[hi], omega_mev[hi] - omega_mev[lo], np.inf] * 2
    p0 = np.clip(p0, lower, upper)
    try:
        popt, _ = scipy.optimize.curve_fit(
            _two_lorentzians, omega_mev[window], values[window] / scale,
            p0=p0, bounds=(lower, upper))
    except (RuntimeError, ValueError) as ex:
        logger.debug('Two-Lorentzian fit failed: %s', ex)
        return None
    c1, w1, h1, c2, w2, h2 = popt
    return [Peak(c1, w1, h1 * scale, fitted=True),
            Peak(c2, w2, h2 * scale, fitted=True)]


def find_peaks(omega_grid, values, *, prominence: float = DEFAULT_PROMINENCE,
               fit_overlaps: bool = True) -> list:
    """
    Locate peaks of a single spectral slice

    Parameters
    ----------
    omega_grid : np.ndarray
        Uniform grid (Hartree)
    values : np.ndarray
        ``A(omega)`` at one k-point
    prominence : float, optional
        Minimum prominence as a fraction of the global maximum
    fit_overlaps : bool, optional
        Fit two Lorentzians to neighbouring peaks that overlap above half
        height

    Returns
    -------
    peaks : list of Peak
        Sorted by position; empty when the slice has no maximum
    """
    values = np.asarray(values, dtype=float)
    peak_max = float(np.max(values)) if values.size else 0.0
    if peak_max <= 0:
        return []
    indices, properties = scipy.signal.find_peaks(
        values, prominence=prominence * peak_max)
    if len(indices) == 0:
        return []

    heights = values[indices]
    # widths measured at half of the absolute height
    widths, _, left, right = scipy.signal.peak_widths(
        values, indices, rel_height=0.5,
        prominence_data=(heights, properties['left_bases'],
                         properties['right_bases']))
    omega_mev = to_mev(np.asarray(omega_grid, dtype=float))
    step = omega_mev[1] - omega_mev[0]
    widths_mev = np.maximum(widths * step, step)

    peaks = [Peak(float(omega_mev[idx]), float(width), float(height))
             for idx, width, height in zip(indices, widths_mev, heights)]
    if fit_overlaps:
        i = 0
        while i < len(indices) - 1:
            if _overlapping(values, indices[i], indices[i + 1]):
                fitted = _fit_pair(omega_mev, values, indices[i],
                                   indices[i + 1], widths_mev[i:i + 2])
                if fitted is not None:
                    peaks[i:i + 2] = fitted
                    i += 2
                    continue
            i += 1
    return sorted(peaks, key=lambda peak: peak.position_mev)


def dominant_peaks(peaks, count: int = 2) -> list:
    'The ``count`` highest peaks, sorted by position'
    highest = sorted(peaks, key=lambda peak: peak.height, reverse=True)
    return sorted(highest[:count], key=lambda peak: peak.position_mev)


def lifetimes(peaks) -> list:
    'Lifetime (fs) of every peak'
    return [peak.lifetime_fs for peak in peaks]


def rabi_splitting(source) -> float:
    """
    ``Omega_R = omega_UP(Gamma) - omega_LP(Gamma)`` in meV

    Parameters
    ----------
    source : PhononBasis or SpectrumResult
        Harmonic or SCP bands (eigenvalue difference at the zone center)
        or a spectrum (difference of the two dominant peaks at the zone
        center, zero with fewer than two peaks)

    Returns
    -------
    rabi : float
    """
    if isinstance(source, PhononBasis):
        if source.n_bands < 2:
            raise ConfigurationError('Rabi splitting needs the coupled model')
        gamma = source.kgrid.index_of(0.0)
        frequencies = source.frequencies[gamma]
        return float(to_mev(frequencies[1] - frequencies[0]))
    if isinstance(source, SpectrumResult):
        peaks = dominant_peaks(source.peaks_at(0.0))
        if len(peaks) < 2:
            return 0.0
        return float(peaks[1].position_mev - peaks[0].position_mev)
    raise ValueError('Unsupported Rabi splitting source: {!r}'.format(source))


def gamma_grid(params: ModelParams) -> KGrid:
    return KGrid.from_points([0.0], params.a)


def shifted_basis(params: ModelParams, kgrid: KGrid,
                  onsite_shift: float) -> PhononBasis:
    'Bands of ``D(k) + onsite_shift P_m`` (static SCP renormalization)'
    matrices = dynamical_matrix(params, kgrid.points)
    m = params.matter_index
    matrices[:, m, m] += onsite_shift
    frequencies, eigenvectors = diagonalize(matrices, kgrid.points)
    return PhononBasis(params=params, kgrid=kgrid, frequencies=frequencies,
                       eigenvectors=eigenvectors)


def matter_peak(spectrum: SpectrumResult, k: float = 0.0) -> Peak:
    'Highest peak at ``k``; None when the slice is flat'
    peaks = spectrum.peaks_at(k)
    if not peaks:
        return None
    return max(peaks, key=lambda peak: peak.height)


def tuning_targets(params: ModelParams, *, scp_shift: float = None,
                   matter_sigma=None, omega_grid=None,
                   delta: float = None) -> dict:
    """
    Zone-center matter frequency at each level of theory (Hartree)

    Parameters
    ----------
    params : ModelParams
    scp_shift : float, optional
        Static on-site renormalization ``6 g <r^2>``
    matter_sigma : SelfEnergy, optional
        Converged matter-chain self-energy; the VDMFT target is the
        measured peak of the matter spectrum at Gamma

    Returns
    -------
    targets : dict
        ``{TuningCase: omega}`` for the levels that can be evaluated
    """
    matter = params.matter_chain()
    grid = gamma_grid(matter)
    targets = {TuningCase.bare: float(phonon_basis(matter,
                                                   grid).frequencies[0, 0])}
    if scp_shift is not None:
        targets[TuningCase.scp] = float(
            shifted_basis(matter, grid, scp_shift).frequencies[0, 0])
    if matter_sigma is not None:
        gf = lattice_gf(matter, grid, matter_sigma, omega_grid, delta)
        peak = matter_peak(spectral_function(gf, Method.vdmft))
        if peak is not None:
            targets[TuningCase.vdmft] = mev(peak.position_mev)
    return targets


def rabi_scan(params: ModelParams, etas, tuning: TuningCase, *,
              scp_shift: float = None, matter_sigma=None, omega_grid=None,
              delta: float = None, targets: dict = None,
              threads: int = 1) -> RabiScan:
    """
    Rabi splitting at every level of theory over a set of couplings

    The matter self-energy is independent of the coupling, so it is
    computed once and reused for every point.

    Parameters
    ----------
    params : ModelParams
        Template for the coupled model
    etas : sequence of float
    tuning : TuningCase
        Cavity frequency choice: bare, SCP or VDMFT matter frequency
    scp_shift : float, optional
        Enables the SCP column
    matter_sigma : SelfEnergy, optional
        Enables the VDMFT column (``omega_grid`` and ``delta`` required)
    targets : dict, optional
        Precomputed `tuning_targets`
    threads : int, optional
        Scan points evaluated concurrently

    Returns
    -------
    scan : RabiScan
    """
    tuning = TuningCase(tuning)
    if matter_sigma is not None and (omega_grid is None or delta is None):
        raise ConfigurationError('VDMFT splittings need omega_grid and delta')
    if targets is None:
        targets = tuning_targets(params, scp_shift=scp_shift,
                                 matter_sigma=matter_sigma,
                                 omega_grid=omega_grid, delta=delta)
    if tuning not in targets:
        raise ConfigurationError('No {} frequency available for tuning'
                                 ''.format(tuning.value), key='tuning')
    omega_0 = targets[tuning]
    etas = np.asarray(etas, dtype=float)

    def evaluate(eta):
        point = params.replace(eta=float(eta), omega_0=omega_0, cavity=True)
        grid = gamma_grid(point)
        harmonic = rabi_splitting(phonon_basis(point, grid))
        scp = vdmft = float('nan')
        if scp_shift is not None:
            scp = rabi_splitting(shifted_basis(point, grid, scp_shift))
        if matter_sigma is not None:
            gf = assemble_polariton_gf(point, matter_sigma, grid, omega_grid,
                                       delta)
            vdmft = rabi_splitting(spectral_function(gf, Method.vdmft))
        logger.debug('eta = %.4f: Omega_R harmonic %.3f, SCP %.3f, VDMFT '
                     '%.3f meV', eta, harmonic, scp, vdmft)
        return harmonic, scp, vdmft

    with concurrent.futures.ThreadPoolExecutor(max(threads, 1)) as pool:
        results = np.array(list(pool.map(evaluate, etas)))
    results = results.reshape(len(etas), 3)
    logger.info('Rabi scan (%s tuning, omega_0 = %.2f meV) over %d couplings',
                tuning.value, to_mev(omega_0), len(etas))
    return RabiScan(etas=etas, tuning=tuning, omega_0_mev=to_mev(omega_0),
                    harmonic=results[:, 0],
                    scp=results[:, 1] if scp_shift is not None else None,
                    vdmft=(results[:, 2] if matter_sigma is not None
                           else None))


def band_rows(basis: PhononBasis, labels=None) -> list:
    '''
    Rows of ``dispersion.csv``

    ``k_invbohr, band, omega_meV, light_fraction``.  Bands are numbered
    from 0 unless ``labels`` names them.
    '''
    light = basis.light_fraction
    rows = []
    for ik, k in enumerate(basis.kgrid.points):
        for band in range(basis.n_bands):
            rows.append({'k_invbohr': k,
                         'band': band if labels is None else labels[band],
                         'omega_meV': to_mev(basis.frequencies[ik, band]),
                         'light_fraction': light[ik, band],
                         })
    return rows


def _format(value):
    if isinstance(value, (float, np.floating)):
        return '{:.12g}'.format(value)
    return value


def write_csv(file_name, rows, fieldnames=None):
    '''
    Write dictionaries as CSV with a fixed float format

    Returns
    -------
    file_name
    '''
    rows = list(rows)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    with open(file_name, 'wt', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _format(value)
                             for key, value in row.items()})
    logger.debug('Wrote %d rows to %s', len(rows), file_name)
    return file_name


def read_csv(file_name) -> list:
    'Read a CSV written by `write_csv` back as dictionaries of strings'
    with open(file_name, 'rt', newline='') as f:
        return list(csv.DictReader(f))


def peak_rows(spectrum: SpectrumResult) -> list:
    'Rows of ``peaks.csv`` with the lifetime of every peak'
    rows = []
    peaks = spectrum.peaks
    if peaks is None:
        peaks = [find_peaks(spectrum.omega_grid, values)
                 for values in spectrum.values]
    for k, slice_peaks in zip(spectrum.kgrid.points, peaks):
        for peak in slice_peaks:
            rows.append({'k_invbohr': k,
                         'position_meV': peak.position_mev,
                         'fwhm_meV': peak.fwhm_mev,
                         'height': peak.height,
                         'fitted': int(peak.fitted),
                         'lifetime_fs': peak.lifetime_fs,
                         })
    return rows
