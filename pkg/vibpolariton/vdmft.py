'''
Vibrational dynamical mean-field theory (VDMFT)

The lattice is mapped onto one unit cell coupled to a harmonic bath whose
spectral density is fixed self-consistently::

    D(k, w)  = [(w + i delta)^2 - D_bare(k) - P Sigma(w) P]^-1
    D_loc(w) = sum_k w_k D_mm(k, w)
    Delta(w) = (w + i delta)^2 - omega_loc^2 - Sigma(w) - D_loc(w)^-1

The impurity (bare anharmonic on-site potential plus discretized bath) is
solved with classical MD, and ``Sigma`` is recovered from its Green's
function.  ``Sigma`` is carried in frequency-squared units relative to the
bare dynamical matrix, so static (SCP-like) and dynamic anharmonicity are
both contained in it.
'''
import dataclasses
import logging

import numpy as np
import scipy.integrate
import scipy.signal

from .base import (Serializable, complex_from_json, complex_to_json,
                   real_from_json)
from .exceptions import (BathReconstructionError, ConfigurationError,
                         GridMismatchError)
from .lattice import (KGrid, LocalGF, MatrixGF, check_same_grid, dyson_gf,
                      dynamical_matrix, frequency_grid, onsite_force_constants)
from .md import ImpuritySystem, MdOptions, md_impurity_gf
from .model import ModelParams
from .scp import ScpResult, scp_solve
from .units import mev, to_mev

logger = logging.getLogger(__name__)

J_THRESHOLD = 1e-4
MASK_THRESHOLD = 1e-8


@dataclasses.dataclass
class VdmftOptions:
    '''
    Controls of the VDMFT self-consistency loop

    Attributes
    ----------
    n_bath : int
        Number of bath bins
    n_omega : int
        Frequency grid points on ``[0, omega_max_factor * omega_m]``
    omega_max_factor : float
    delta_mev : float
        Lattice broadening (meV)
    n_k : int
        Uniform grid for the Brillouin-zone average
    mixing : float
        Weight of the new self-energy from the second iteration on
    max_iter : int
    tol_sigma : float
        Threshold on ``max |dSigma| / omega_m^2``
    tol_spectral : float
        Threshold on the L1 distance of successive monitor spectra
    bath_tolerance : float
        Largest accepted relative bath reconstruction error
    causality_tolerance : float
        Clipped ``Im Delta`` (relative to ``max |Delta|``) above which the
        hybridization is flagged
    smoothing_window, smoothing_order : int
        Savitzky-Golay smoothing of the extracted self-energy; a window of
        0 disables it
    exact_harmonic : bool
        Solve a harmonic (g = 0) impurity analytically instead of by MD
    coupled : bool
        Use the coupled light-matter cell as the impurity
    '''
    n_bath: int = 300
    n_omega: int = 4096
    omega_max_factor: float = 3.0
    delta_mev: float = 1.0
    n_k: int = 512
    mixing: float = 0.5
    max_iter: int = 8
    tol_sigma: float = 1e-3
    tol_spectral: float = 0.05
    bath_tolerance: float = 0.25
    causality_tolerance: float = 1e-6
    smoothing_window: int = 21
    smoothing_order: int = 3
    exact_harmonic: bool = True
    coupled: bool = False

    def __post_init__(self):
        if self.n_bath < 1:
            raise ConfigurationError('n_bath must be at least 1',
                                     key='n_bath')
        if not 0 < self.mixing <= 1:
            raise ConfigurationError('mixing must lie in (0, 1]',
                                     key='mixing')
        if self.max_iter < 1:
            raise ConfigurationError('max_iter must be at least 1',
                                     key='max_iter')
        if self.smoothing_window and (self.smoothing_window % 2 == 0 or
                                      self.smoothing_window <=
                                      self.smoothing_order):
            raise ConfigurationError('smoothing_window must be odd and larger '
                                     'than smoothing_order',
                                     key='smoothing_window')

    @property
    def delta(self) -> float:
        return mev(self.delta_mev)

    def omega_grid(self, params: ModelParams) -> np.ndarray:
        return frequency_grid(self.omega_max_factor * params.omega_m,
                              self.n_omega)

    def replace(self, **changes) -> 'VdmftOptions':
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass
class SelfEnergy(Serializable):
    '''
    Local self-energy of the matter coordinate (frequency-squared units)

    Attributes
    ----------
    omega_grid : np.ndarray
    values : np.ndarray
        Complex ``Sigma(omega)``
    reference : float
        Bare on-site constant ``omega_loc^2`` the self-energy is relative to
    smoothing : dict
        Smoothing applied, if any
    iteration : int
    noise_floor : float
        Statistical uncertainty propagated from the impurity estimate
    metadata : dict
    '''
    omega_grid: np.ndarray
    values: np.ndarray
    reference: float = 0.0
    smoothing: dict = None
    iteration: int = 0
    noise_floor: float = 0.0
    metadata: dict = dataclasses.field(default_factory=dict)

    @classmethod
    def zero(cls, omega_grid, reference=0.0) -> 'SelfEnergy':
        return cls.constant(omega_grid, 0.0, reference=reference)

    @classmethod
    def constant(cls, omega_grid, value, reference=0.0,
                 iteration=0) -> 'SelfEnergy':
        omega_grid = np.asarray(omega_grid, dtype=float)
        return cls(omega_grid=omega_grid,
                   values=np.full(len(omega_grid), value, dtype=complex),
                   reference=reference, iteration=iteration)

    def matrix(self, params: ModelParams) -> np.ndarray:
        '``P Sigma P`` as ``(n_omega, n_coords, n_coords)``'
        n = params.n_coords
        m = params.matter_index
        result = np.zeros((len(self.omega_grid), n, n), dtype=complex)
        result[:, m, m] = self.values
        return result

    def max_causality_violation(self) -> float:
        'Largest positive Im Sigma at omega > 0'
        positive = self.omega_grid > 0
        if not np.any(positive):
            return 0.0
        return float(max(np.max(self.values.imag[positive]), 0.0))

    def mixed(self, other: 'SelfEnergy', weight: float) -> 'SelfEnergy':
        '``(1 - weight) self + weight other``'
        check_same_grid(self.omega_grid, other.omega_grid)
        return dataclasses.replace(
            other, values=(1 - weight) * self.values + weight * other.values,
            metadata=dict(other.metadata, mixing=weight))

    def save(self) -> dict:
        return {'omega_grid': self.omega_grid.tolist(),
                'values': complex_to_json(self.values),
                'reference': self.reference,
                'smoothing': self.smoothing,
                'iteration': self.iteration,
                'noise_floor': self.noise_floor,
                }

    def restore(self, state: dict):
        self.omega_grid = real_from_json(state['omega_grid'])
        self.values = complex_from_json(state['values'])
        self.reference = float(state['reference'])
        self.smoothing = state.get('smoothing')
        self.iteration = int(state.get('iteration', 0))
        self.noise_floor = float(state.get('noise_floor', 0.0))
        self.metadata = {}


@dataclasses.dataclass
class Hybridization(Serializable):
    '''
    Hybridization function of the impurity (frequency-squared units)

    ``values`` is ``(n_omega,)`` for the matter impurity or
    ``(n_omega, n, n)`` for the coupled cell.
    '''
    omega_grid: np.ndarray
    values: np.ndarray
    delta: float
    causal: bool = True
    clipped: float = 0.0

    @property
    def is_matrix(self) -> bool:
        return self.values.ndim == 3

    def spectral_density(self) -> np.ndarray:
        '``J(omega) = -Im Delta`` (matrix: ``-(Delta - Delta^H) / 2i``)'
        if self.is_matrix:
            adjoint = np.conj(np.swapaxes(self.values, -1, -2))
            return (-(self.values - adjoint) / 2j).real
        return -self.values.imag

    def save(self) -> dict:
        return {'omega_grid': self.omega_grid.tolist(),
                'values': complex_to_json(self.values),
                'delta': self.delta,
                'causal': self.causal,
                'clipped': self.clipped,
                }

    def restore(self, state: dict):
        self.omega_grid = real_from_json(state['omega_grid'])
        self.values = complex_from_json(state['values'])
        self.delta = float(state['delta'])
        self.causal = bool(state['causal'])
        self.clipped = float(state['clipped'])


@dataclasses.dataclass
class BathModel(Serializable):
    '''
    Discrete harmonic bath

    Attributes
    ----------
    frequencies : np.ndarray
        ``omega_b`` (Hartree)
    couplings : np.ndarray
        ``c_b``, ``(N_b,)`` or ``(N_b, n_impurity)``
    reconstruction_error : float
        ``max |Delta_fit - Delta| / max |Delta|``
    n_bins : int
    '''
    frequencies: np.ndarray
    couplings: np.ndarray
    reconstruction_error: float = 0.0
    n_bins: int = 0

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    @classmethod
    def empty(cls, n_impurity: int = 1) -> 'BathModel':
        shape = (0, ) if n_impurity == 1 else (0, n_impurity)
        return cls(frequencies=np.zeros(0), couplings=np.zeros(shape))

    def hybridization(self, omega_grid, delta: float) -> Hybridization:
        '''
        Fitted hybridization of the discrete bath

        ``sum_b c_b c_b^T / ((omega + i delta)^2 - omega_b^2)``
        '''
        omega_grid = np.asarray(omega_grid, dtype=float)
        z2 = (omega_grid + 1j * delta) ** 2
        poles = 1.0 / (z2[:, np.newaxis] - self.frequencies[np.newaxis] ** 2)
        if self.couplings.ndim == 1:
            values = poles @ (self.couplings ** 2)
        else:
            values = np.einsum('wb,bi,bj->wij', poles, self.couplings,
                               self.couplings)
        return Hybridization(omega_grid=omega_grid, values=values,
                             delta=delta)

    def save(self) -> dict:
        return {'frequencies': self.frequencies.tolist(),
                'couplings': self.couplings.tolist(),
                'reconstruction_error': self.reconstruction_error,
                'n_bins': self.n_bins,
                }

    def restore(self, state: dict):
        self.frequencies = real_from_json(state['frequencies'])
        self.couplings = real_from_json(state['couplings'])
        self.reconstruction_error = float(state['reconstruction_error'])
        self.n_bins = int(state.get('n_bins', 0))


@dataclasses.dataclass
class VdmftResult(Serializable):
    '''
    Outcome of the self-consistency loop

    Attributes
    ----------
    params : ModelParams
        Parameters the loop ran with (the isolated matter chain on the
        production path)
    sigma : SelfEnergy
        Converged (or best) self-energy
    gf : MatrixGF
        Lattice Green's function on the uniform grid
    iterations : list of dict
        Residuals, noise floors, bath errors and monitor spectra
    converged : bool
    scp : ScpResult
        Static starting point
    hybridization : Hybridization
    bath : BathModel
    impurity : LocalGF
    '''
    params: ModelParams
    sigma: SelfEnergy
    gf: MatrixGF
    iterations: list
    converged: bool
    scp: ScpResult = None
    hybridization: Hybridization = None
    bath: BathModel = None
    impurity: LocalGF = None

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    def save(self) -> dict:
        log = []
        for record in self.iterations:
            entry = {key: value for key, value in record.items()
                     if key != 'monitor_spectra'}
            log.append(entry)
        return {'params': self.params.save(),
                'sigma': self.sigma.save(),
                'iterations': log,
                'converged': self.converged,
                'scp_onsite_shift': (self.scp.onsite_shift if self.scp
                                     else None),
                'bath': self.bath.save() if self.bath else None,
                'hybridization': (self.hybridization.save()
                                  if self.hybridization else None),
                }

    def restore(self, state: dict):
        self.params = ModelParams(**state['params'])
        self.sigma = SelfEnergy.from_state(state['sigma'])
        self.iterations = list(state['iterations'])
        self.converged = bool(state['converged'])
        self.gf = None
        self.scp = None
        self.impurity = None
        self.bath = (BathModel.from_state(state['bath'])
                     if state.get('bath') else None)
        self.hybridization = (Hybridization.from_state(state['hybridization'])
                              if state.get('hybridization') else None)


def spectral_distance(a, b, omega_grid) -> float:
    '''
    Relative L1 distance ``int |a - b| / int |b|`` of two spectra
    '''
    norm = scipy.integrate.trapezoid(np.abs(b), omega_grid)
    if norm == 0:
        return 0.0 if np.allclose(a, b) else float('inf')
    return float(scipy.integrate.trapezoid(np.abs(a - b), omega_grid) / norm)


def _check_sigma_grid(sigma, omega_grid):
    if sigma is None:
        return
    try:
        check_same_grid(sigma.omega_grid, omega_grid)
    except GridMismatchError:
        raise GridMismatchError('Self-energy and Green function use '
                                'different frequency grids') from None


def lattice_gf(params: ModelParams, kgrid: KGrid, sigma: SelfEnergy,
               omega_grid, delta: float) -> MatrixGF:
    """
    Lattice Dyson equation with a local matter self-energy

    Parameters
    ----------
    params : ModelParams
    kgrid : KGrid
    sigma : SelfEnergy
        May be None for the bare lattice
    omega_grid : np.ndarray
    delta : float

    Returns
    -------
    gf : MatrixGF
    """
    omega_grid = np.asarray(omega_grid, dtype=float)
    _check_sigma_grid(sigma, omega_grid)
    matrices = dynamical_matrix(params, kgrid.points)
    correction = None if sigma is None else sigma.matrix(params)
    values = dyson_gf(matrices, omega_grid, delta, correction)
    return MatrixGF(kgrid=kgrid, omega_grid=omega_grid, values=values,
                    delta=delta, metadata={'method': 'VDMFT'})


def local_gf(gf: MatrixGF, kgrid: KGrid, *, matrix: bool = False) -> LocalGF:
    """
    Zone-averaged Green's function of the matter coordinate

    Parameters
    ----------
    gf : MatrixGF
    kgrid : KGrid
        Uniform grid the Green's function was evaluated on
    matrix : bool, optional
        Return the full cell-averaged matrix instead of the matter element

    Returns
    -------
    local : LocalGF
    """
    if not kgrid.is_uniform:
        raise GridMismatchError('The local Green function needs a uniform '
                                'Brillouin-zone grid with weights')
    if len(kgrid) != len(gf.kgrid) or not np.allclose(kgrid.points,
                                                      gf.kgrid.points):
        raise GridMismatchError('k-grid does not match the Green function')
    averaged = np.einsum('k,kwab->wab', kgrid.weights, gf.values)
    if not matrix:
        m = gf.n_coords - 1
        averaged = averaged[:, m, m]
    return LocalGF(omega_grid=gf.omega_grid, values=averaged, delta=gf.delta)


def _onsite(params, matrix):
    if matrix:
        return onsite_force_constants(params)
    return params.omega_loc_sq


def hybridization_update(D_loc: LocalGF, sigma: SelfEnergy,
                         params: ModelParams, *,
                         noise_threshold: float = 1e-6) -> Hybridization:
    """
    Hybridization from the local Green's function

    ``Delta = (omega + i delta)^2 - omega_loc^2 - Sigma - D_loc^-1``; the
    matrix form uses the zone-averaged force-constant matrix and places
    ``Sigma`` on the matter element.

    Parameters
    ----------
    D_loc : LocalGF
    sigma : SelfEnergy
    params : ModelParams
    noise_threshold : float, optional
        Clipped positive ``Im Delta`` above this fraction of ``max |Delta|``
        marks the result as not causal

    Returns
    -------
    delta : Hybridization
    """
    omega = D_loc.omega_grid
    _check_sigma_grid(sigma, omega)
    z2 = (omega + 1j * D_loc.delta) ** 2
    sigma_values = 0.0 if sigma is None else sigma.values
    positive = omega > 0
    if D_loc.is_matrix:
        n = D_loc.values.shape[-1]
        onsite = _onsite(params, True)
        sigma_matrix = np.zeros((len(omega), n, n), dtype=complex)
        sigma_matrix[:, -1, -1] = sigma_values
        values = (z2[:, np.newaxis, np.newaxis] * np.eye(n) - onsite -
                  sigma_matrix - np.linalg.inv(D_loc.values))
        # keep -Im Delta positive semidefinite
        hermitian = 0.5 * (values + np.conj(np.swapaxes(values, -1, -2)))
        spectral = (-(values - np.conj(np.swapaxes(values, -1, -2))) /
                    2j)
        eigenvalues, vectors = np.linalg.eigh(spectral)
        negative = np.where(positive[:, np.newaxis], np.clip(eigenvalues,
                                                             None, 0), 0)
        clipped = float(np.max(-negative)) if negative.size else 0.0
        eigenvalues = np.where(positive[:, np.newaxis],
                               np.clip(eigenvalues, 0, None), eigenvalues)
        spectral = np.einsum('wij,wj,wkj->wik', vectors, eigenvalues,
                             vectors.conj())
        values = hermitian - 1j * spectral
    else:
        values = z2 - params.omega_loc_sq - sigma_values - 1.0 / D_loc.values
        violation = np.where(positive, np.clip(values.imag, 0, None), 0.0)
        clipped = float(np.max(violation)) if violation.size else 0.0
        values = values.real + 1j * (values.imag - violation)

    scale = float(np.max(np.abs(values))) if values.size else 0.0
    causal = clipped <= noise_threshold * scale + 1e-300
    if clipped > 0:
        log = logger.debug if causal else logger.warning
        log('Clipped acausal Im Delta of magnitude %.3e (max |Delta| %.3e)',
            clipped, scale)
    return Hybridization(omega_grid=omega, values=values, delta=D_loc.delta,
                         causal=causal, clipped=clipped)


def _equal_weight_edges(omega, weight, n_bins):
    cumulative = scipy.integrate.cumulative_trapezoid(weight, omega,
                                                      initial=0.0)
    targets = np.linspace(0.0, cumulative[-1], n_bins + 1)
    # strictly increasing abscissa for the inverse interpolation
    support = np.concatenate([[True], np.diff(cumulative) > 0])
    edges = np.interp(targets, cumulative[support], omega[support])
    edges[0], edges[-1] = omega[0], omega[-1]
    return edges, cumulative


def _bin_integrals(omega, density, edges):
    'Integral of ``density`` (last axes arbitrary) over each bin'
    cumulative = scipy.integrate.cumulative_trapezoid(density, omega, axis=0,
                                                      initial=0.0)
    flat = cumulative.reshape(len(omega), -1)
    at_edges = np.stack([np.interp(edges, omega, column)
                         for column in flat.T], axis=-1)
    at_edges = at_edges.reshape((len(edges), ) + density.shape[1:])
    return np.diff(at_edges, axis=0)


def discretize_bath(delta: Hybridization, N_b: int, *,
                    tolerance: float = 0.25) -> BathModel:
    """
    Discretize a hybridization function into harmonic bath modes

    ``J = -Im Delta`` (values below ``1e-4 max J`` dropped) is split into
    ``N_b`` bins of equal spectral weight.  Each bin contributes a mode at
    its J-weighted mean frequency with ``c_b^2 = (2 omega_b / pi) int_bin
    J``; for a matrix hybridization the binned weight matrix is
    eigendecomposed into up to ``n`` modes per bin.

    Parameters
    ----------
    delta : Hybridization
    N_b : int
        Number of bins
    tolerance : float, optional
        Largest accepted ``max |Delta_fit - Delta| / max |Delta|``; None
        disables the check

    Returns
    -------
    bath : BathModel

    Raises
    ------
    BathReconstructionError
    """
    if N_b < 1:
        raise ConfigurationError('N_b must be at least 1', key='n_bath')
    omega = delta.omega_grid
    J = delta.spectral_density()
    n_imp = J.shape[-1] if delta.is_matrix else 1
    weight = np.trace(J, axis1=1, axis2=2) if delta.is_matrix else J
    weight = np.clip(weight, 0, None)
    peak = float(np.max(weight)) if weight.size else 0.0
    if peak <= 0 or not np.any(np.abs(delta.values) > 0):
        return BathModel.empty(n_imp)

    keep = weight >= J_THRESHOLD * peak
    weight = np.where(keep, weight, 0.0)
    edges, _ = _equal_weight_edges(omega, weight, N_b)
    mass = _bin_integrals(omega, weight, edges)
    first_moment = _bin_integrals(omega, omega * weight, edges)
    filled = mass > 0
    frequencies = first_moment[filled] / mass[filled]

    if delta.is_matrix:
        J = np.where(keep[:, np.newaxis, np.newaxis], J, 0.0)
        matrices = _bin_integrals(omega, J, edges)[filled]
        mode_frequencies, couplings = [], []
        for omega_b, block in zip(frequencies, matrices):
            eigenvalues, vectors = np.linalg.eigh(0.5 * (block + block.T))
            for value, vector in zip(eigenvalues, vectors.T):
                if value > J_THRESHOLD * eigenvalues.max():
                    mode_frequencies.append(omega_b)
                    couplings.append(np.sqrt(2 * omega_b / np.pi * value) *
                                     vector)
        bath = BathModel(frequencies=np.array(mode_frequencies),
                         couplings=np.array(couplings).reshape(-1, n_imp),
                         n_bins=N_b)
    else:
        couplings = np.sqrt(2 * frequencies / np.pi * mass[filled])
        bath = BathModel(frequencies=frequencies, couplings=couplings,
                         n_bins=N_b)

    fitted = bath.hybridization(omega, delta.delta).values
    scale = np.max(np.abs(delta.values))
    bath.reconstruction_error = float(np.max(np.abs(fitted - delta.values)) /
                                      scale)
    logger.debug('Discretized bath: %d modes, reconstruction error %.3f',
                 bath.n_modes, bath.reconstruction_error)
    if tolerance is not None and bath.reconstruction_error > tolerance:
        raise BathReconstructionError(
            'Bath of {} bins reproduces the hybridization only to {:.3f} '
            '(tolerance {}); increase n_bath'.format(
                N_b, bath.reconstruction_error, tolerance),
            error=bath.reconstruction_error, n_modes=N_b)
    return bath


def harmonic_impurity_gf(onsite, bath: BathModel, omega_grid,
                         delta: float) -> np.ndarray:
    '``[(omega + i delta)^2 - K - Delta_fit]^-1`` of a harmonic impurity'
    omega_grid = np.asarray(omega_grid, dtype=float)
    z2 = (omega_grid + 1j * delta) ** 2
    fit = bath.hybridization(omega_grid, delta).values
    onsite = np.asarray(onsite, dtype=float)
    if onsite.ndim == 0:
        return 1.0 / (z2 - onsite - fit)
    n = onsite.shape[0]
    return np.linalg.inv(z2[:, np.newaxis, np.newaxis] * np.eye(n) - onsite -
                         fit)


def solve_impurity(params: ModelParams, bath: BathModel, opts: MdOptions,
                   omega_grid, delta: float, *, coupled: bool = False,
                   onsite_shift: float = 0.0,
                   exact_harmonic: bool = False) -> LocalGF:
    """
    Impurity Green's function from MD of the cell plus bath

    Parameters
    ----------
    params : ModelParams
    bath : BathModel
    opts : MdOptions
    omega_grid : np.ndarray
    delta : float
        Lattice broadening; the exponential window uses ``tau = 1 / delta``
        unless ``opts.tau_damp`` is set
    coupled : bool, optional
        Cavity and matter coordinates of the cell form the impurity
    onsite_shift : float, optional
        Added to the matter on-site constant of the simulated impurity
    exact_harmonic : bool, optional
        For ``g = 0`` return the exact harmonic result instead of sampling

    Returns
    -------
    D_imp : LocalGF
    """
    system = ImpuritySystem.from_params(params, bath, coupled=coupled,
                                        onsite_shift=onsite_shift)
    if exact_harmonic and params.g == 0:
        onsite = system.onsite if coupled else system.onsite[0, 0]
        values = harmonic_impurity_gf(onsite, bath, omega_grid, delta)
        logger.debug('Harmonic impurity solved exactly')
        return LocalGF(omega_grid=np.asarray(omega_grid), values=values,
                       delta=delta,
                       std_error=np.zeros(len(omega_grid)),
                       metadata={'method': 'exact-harmonic'})
    return md_impurity_gf(system, omega_grid, opts, delta)


def _noise_floor(D_imp):
    if D_imp.std_error is None:
        return 0.0
    error = np.pi * np.asarray(D_imp.std_error)
    values = D_imp.values
    if D_imp.is_matrix:
        values = values[:, -1, -1]
    magnitude = np.abs(values) ** 2
    finite = np.isfinite(error) & (magnitude > 0)
    if not np.any(finite):
        return 0.0
    return float(np.percentile(error[finite] / magnitude[finite], 95))


def extract_self_energy(D_imp: LocalGF, delta: Hybridization,
                        params: ModelParams, *, smoothing_window: int = 0,
                        smoothing_order: int = 3,
                        iteration: int = 0) -> SelfEnergy:
    """
    Self-energy from the impurity Dyson equation

    ``Sigma = (omega + i delta)^2 - omega_loc^2 - Delta - D_imp^-1``; for a
    matrix impurity only the matter element is kept.

    Parameters
    ----------
    D_imp : LocalGF
    delta : Hybridization
        The hybridization the impurity actually felt
    params : ModelParams
    smoothing_window, smoothing_order : int, optional
        Savitzky-Golay smoothing of real and imaginary parts
    iteration : int, optional

    Returns
    -------
    sigma : SelfEnergy
    """
    omega = D_imp.omega_grid
    check_same_grid(omega, delta.omega_grid)
    z2 = (omega + 1j * D_imp.delta) ** 2
    values = D_imp.values
    metadata = {}
    if D_imp.is_matrix:
        n = values.shape[-1]
        onsite = _onsite(params, True)
        full = (z2[:, np.newaxis, np.newaxis] * np.eye(n) - onsite -
                delta.values - np.linalg.inv(values))
        sigma = full[:, -1, -1]
        magnitude = np.abs(values[:, -1, -1])
    else:
        magnitude = np.abs(values)
        with np.errstate(divide='ignore', invalid='ignore'):
            sigma = z2 - params.omega_loc_sq - delta.values - 1.0 / values

    masked = ~np.isfinite(sigma) | (magnitude < MASK_THRESHOLD *
                                    np.max(magnitude))
    if np.any(masked):
        good = ~masked
        sigma = (np.interp(omega, omega[good], sigma.real[good]) +
                 1j * np.interp(omega, omega[good], sigma.imag[good]))
        metadata['masked_points'] = int(masked.sum())
        logger.warning('Masked %d points with vanishing |D_imp|',
                       masked.sum())

    smoothing = None
    if smoothing_window and len(omega) > smoothing_window:
        sigma = (scipy.signal.savgol_filter(sigma.real, smoothing_window,
                                            smoothing_order) +
                 1j * scipy.signal.savgol_filter(sigma.imag, smoothing_window,
                                                 smoothing_order))
        smoothing = {'method': 'savgol', 'window': smoothing_window,
                     'order': smoothing_order}

    noise = _noise_floor(D_imp)
    positive = omega > 0
    violation = np.where(positive, np.clip(sigma.imag, 0, None), 0.0)
    if np.any(violation > 0):
        clipped = float(violation.max())
        metadata['clipped'] = clipped
        log = logger.debug if clipped <= noise else logger.warning
        log('Clipped positive Im Sigma up to %.3e (noise floor %.3e)',
            clipped, noise)
        sigma = sigma - 1j * violation
    return SelfEnergy(omega_grid=omega, values=sigma,
                      reference=params.omega_loc_sq, smoothing=smoothing,
                      iteration=iteration, noise_floor=noise,
                      metadata=metadata)


def monitor_kgrid(params: ModelParams) -> KGrid:
    'Zone center and zone boundary'
    return KGrid.from_points([0.0, np.pi / params.a], params.a)


def _monitor_spectra(params, sigma, omega_grid, delta):
    gf = lattice_gf(params, monitor_kgrid(params), sigma, omega_grid, delta)
    return -np.trace(gf.values, axis1=2, axis2=3).imag / np.pi


def vdmft_loop(params: ModelParams, opts: VdmftOptions = None,
               md_opts: MdOptions = None, *,
               scp_result: ScpResult = None) -> VdmftResult:
    """
    Iterate the VDMFT equations to self-consistency

    Parameters
    ----------
    params : ModelParams
        The isolated matter chain is used unless ``opts.coupled``
    opts : VdmftOptions, optional
    md_opts : MdOptions, optional
        Impurity MD protocol; the timestep is tightened automatically for
        fast bath modes
    scp_result : ScpResult, optional
        Static starting point; solved here when omitted

    Returns
    -------
    result : VdmftResult
        With ``converged = False`` when the loop does not converge in
        ``opts.max_iter`` iterations; the returned iterate is then the one
        with the smallest ``max |dSigma| / omega_m^2``
    """
    opts = opts or VdmftOptions()
    md_opts = (md_opts or MdOptions()).replace(auto_tighten=True)
    if opts.coupled:
        if not params.cavity:
            raise ConfigurationError('Coupled VDMFT needs the cavity chain')
        loop_params = params
    else:
        loop_params = params.matter_chain()

    omega = opts.omega_grid(loop_params)
    delta = opts.delta
    kgrid = KGrid.uniform(loop_params.a, opts.n_k)
    if scp_result is None:
        scp_result = scp_solve(loop_params, kgrid)
    scale = loop_params.omega_m ** 2

    sigma = SelfEnergy.constant(omega, scp_result.onsite_shift,
                                reference=loop_params.omega_loc_sq)
    previous_spectra = _monitor_spectra(loop_params, sigma, omega, delta)
    iterations, candidates = [], []
    converged = False
    state = {}
    for iteration in range(1, opts.max_iter + 1):
        gf = lattice_gf(loop_params, kgrid, sigma, omega, delta)
        D_loc = local_gf(gf, kgrid, matrix=opts.coupled)
        hybridization = hybridization_update(
            D_loc, sigma, loop_params,
            noise_threshold=opts.causality_tolerance)
        bath = discretize_bath(hybridization, opts.n_bath,
                               tolerance=opts.bath_tolerance)
        impurity = solve_impurity(loop_params, bath, md_opts, omega, delta,
                                  coupled=opts.coupled,
                                  exact_harmonic=opts.exact_harmonic)
        felt = bath.hybridization(omega, delta)
        extracted = extract_self_energy(
            impurity, felt, loop_params,
            smoothing_window=opts.smoothing_window,
            smoothing_order=opts.smoothing_order, iteration=iteration)
        if iteration == 1:
            new_sigma = extracted
        else:
            new_sigma = sigma.mixed(extracted, opts.mixing)

        spectra = _monitor_spectra(loop_params, new_sigma, omega, delta)
        residual = float(np.max(np.abs(new_sigma.values - sigma.values)) /
                         scale)
        distance = None
        if iteration > 1:
            distance = max(spectral_distance(spectra[i], previous_spectra[i],
                                             omega)
                           for i in range(len(spectra)))
        impurity_values = (impurity.values[:, -1, -1] if impurity.is_matrix
                           else impurity.values)
        local_values = (D_loc.values[:, -1, -1] if D_loc.is_matrix
                        else D_loc.values)
        mismatch = float(np.max(np.abs(impurity_values - local_values)) /
                         np.max(np.abs(local_values)))
        record = {'iteration': iteration,
                  'sigma_residual': residual,
                  'spectral_distance': distance,
                  'bath_modes': bath.n_modes,
                  'bath_error': bath.reconstruction_error,
                  'hybridization_clipped': hybridization.clipped,
                  'hybridization_causal': hybridization.causal,
                  'sigma_noise_floor': extracted.noise_floor,
                  'sigma_clipped': extracted.metadata.get('clipped', 0.0),
                  'impurity_mismatch': mismatch,
                  'monitor_spectra': spectra,
                  }
        iterations.append(record)
        logger.info('VDMFT iteration %d: dSigma/omega_m^2 = %.3e, spectral '
                    'distance %s, bath %d modes (error %.3f)', iteration,
                    residual, 'n/a' if distance is None else
                    '{:.4f}'.format(distance), bath.n_modes,
                    bath.reconstruction_error)

        sigma = new_sigma
        previous_spectra = spectra
        state = dict(hybridization=hybridization, bath=bath,
                     impurity=impurity)
        candidates.append((residual, sigma, state))
        if residual < opts.tol_sigma or (distance is not None and
                                         distance < opts.tol_spectral):
            converged = True
            break

    if not converged:
        _, sigma, state = min(candidates, key=lambda item: item[0])
        logger.warning('VDMFT did not converge in %d iterations; returning '
                       'iteration %d', opts.max_iter, sigma.iteration)
    gf = lattice_gf(loop_params, kgrid, sigma, omega, delta)
    return VdmftResult(params=loop_params, sigma=sigma, gf=gf,
                       iterations=iterations, converged=converged,
                       scp=scp_result, **state)


def assemble_polariton_gf(params: ModelParams, matter_sigma: SelfEnergy,
                          display_kgrid: KGrid, omega_grid,
                          delta: float) -> MatrixGF:
    """
    Coupled light-matter Green's function with the matter self-energy

    ``D^-1(k, omega) = (omega + i delta)^2 - D_bare(k) - P Sigma(omega) P``

    Parameters
    ----------
    params : ModelParams
        Coupled-model parameters
    matter_sigma : SelfEnergy
        Converged matter-chain self-energy
    display_kgrid : KGrid
    omega_grid : np.ndarray
    delta : float

    Returns
    -------
    gf : MatrixGF
    """
    if not params.cavity:
        raise ConfigurationError('Polariton assembly needs the cavity chain')
    gf = lattice_gf(params, display_kgrid, matter_sigma, omega_grid, delta)
    gf.metadata.update({'method': 'VDMFT', 'eta': params.eta,
                        'omega_0_meV': to_mev(params.omega_0)})
    return gf
