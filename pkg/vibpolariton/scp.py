'''
Classical self-consistent phonon (SCP) theory for the quartic chain

The on-site quartic term couples every mode to the thermal mean square
matter displacement, so the self-consistent force-constant matrix is::

    V(k) = D(k) + 6 g <r^2> P_m

with ``<r^2> = sum_k w_k sum_mu |e_m,mu(k)|^2 k_B T / Omega_mu(k)^2`` and
``P_m`` the projector on the matter atom.  In the harmonic band basis this is
``V_ll'(k) = omega_l^2 delta_ll' + 1/2 sum Phi <Q* Q>``.
'''
import dataclasses
import logging

import numpy as np

from .base import Serializable, real_from_json
from .exceptions import ConfigurationError, ConvergenceFailure
from .lattice import (KGrid, PhononBasis, diagonalize, dynamical_matrix,
                      phonon_basis)
from .model import ModelParams
from .units import to_mev

logger = logging.getLogger(__name__)


@dataclasses.dataclass
class ScpOptions:
    '''
    Numerical controls of the SCP fixed point

    Attributes
    ----------
    n_k : int
        Uniform Brillouin-zone grid used for the thermal average
    tol : float
        Convergence threshold on ``max |dOmega^2| / omega_m^2``
    mixing : float
        Linear mixing of squared frequencies, in (0, 1]
    max_iter : int
    temperatures : tuple
        Temperatures (K) of the optional temperature scan
    '''
    n_k: int = 512
    tol: float = 1e-8
    mixing: float = 0.5
    max_iter: int = 200
    temperatures: tuple = (100.0, 200.0, 300.0, 400.0)


@dataclasses.dataclass
class ScpResult(Serializable):
    '''
    Converged SCP quasiparticles on a uniform grid

    Attributes
    ----------
    params : ModelParams
    kgrid : KGrid
    frequencies : np.ndarray
        Renormalized ``Omega_mu(k)``, ``(n_k, n_bands)``
    rotation : np.ndarray
        ``U(k)`` taking harmonic to SCP eigenvectors, ``(n_k, n, n)``
    force_constants : np.ndarray
        ``V(k)`` in the harmonic band basis, ``(n_k, n, n)``
    residuals : list
        ``max |dOmega^2| / omega_m^2`` per iteration
    temperature : float
    mean_square_displacement : float
        Thermal ``<r^2>`` of the matter atom
    converged : bool
    '''
    params: ModelParams
    kgrid: KGrid
    frequencies: np.ndarray
    rotation: np.ndarray
    force_constants: np.ndarray
    residuals: list
    temperature: float
    mean_square_displacement: float
    converged: bool = True

    @property
    def onsite_shift(self) -> float:
        'Static renormalization ``6 g <r^2>`` of the matter force constant'
        return 6.0 * self.params.g * self.mean_square_displacement

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    @property
    def harmonic(self) -> PhononBasis:
        return phonon_basis(self.params, self.kgrid)

    @property
    def eigenvectors(self) -> np.ndarray:
        'SCP eigenvectors in site coordinates, ``c(k) U(k)``'
        return np.einsum('kal,klm->kam', self.harmonic.eigenvectors,
                         self.rotation)

    def basis(self) -> PhononBasis:
        return PhononBasis(params=self.params, kgrid=self.kgrid,
                           frequencies=self.frequencies,
                           eigenvectors=self.eigenvectors)

    def gamma_frequencies(self) -> np.ndarray:
        'Renormalized frequencies at the zone center (Hartree)'
        return scp_dispersion(self, KGrid.from_points([0.0], self.params.a)
                              ).frequencies[0]

    def save(self) -> dict:
        return {'params': self.params.save(),
                'kgrid': self.kgrid.save(),
                'frequencies': self.frequencies.tolist(),
                'rotation': self.rotation.real.tolist(),
                'force_constants': self.force_constants.real.tolist(),
                'residuals': [float(r) for r in self.residuals],
                'temperature': self.temperature,
                'mean_square_displacement': self.mean_square_displacement,
                'onsite_shift': self.onsite_shift,
                'converged': self.converged,
                }

    def restore(self, state: dict):
        self.params = ModelParams(**state['params'])
        self.kgrid = KGrid(**state['kgrid'])
        self.frequencies = real_from_json(state['frequencies'])
        self.rotation = real_from_json(state['rotation'])
        self.force_constants = real_from_json(state['force_constants'])
        self.residuals = list(state['residuals'])
        self.temperature = float(state['temperature'])
        self.mean_square_displacement = float(
            state['mean_square_displacement'])
        self.converged = bool(state['converged'])


def quartic_force_constant(basis: PhononBasis, k: int, lam: int, lam_p: int,
                           k_p: int, lam_pp: int, lam_ppp: int) -> float:
    """
    Quartic force constant between the modes (k, -k, k', -k')

    ``Phi = 12 g / N c_m,l(k) c_m,l'(-k) c_m,l''(k') c_m,l'''(-k')``,
    with ``c(-k) = c(k)*`` for a real force-constant lattice.

    Parameters
    ----------
    basis : PhononBasis
        Harmonic basis on a uniform grid of ``N`` points
    k, k_p : int
        Indices into ``basis.kgrid``
    lam, lam_p, lam_pp, lam_ppp : int
        Band indices

    Returns
    -------
    phi : float
    """
    c_m = basis.matter_components
    n_k = len(basis.kgrid)
    product = (c_m[k, lam] * np.conj(c_m[k, lam_p]) *
               c_m[k_p, lam_pp] * np.conj(c_m[k_p, lam_ppp]))
    return float(12.0 * basis.params.g / n_k * product.real)


def thermal_mean_square(eigenvectors, frequencies, weights, kT, matter_index):
    '''
    Classical ``<r^2>`` of the matter atom

    ``sum_k w_k sum_mu |e_m,mu(k)|^2 k_B T / Omega_mu(k)^2``
    '''
    weight = np.abs(eigenvectors[:, matter_index, :]) ** 2
    return float(np.sum(weights[:, np.newaxis] * weight * kT /
                        frequencies ** 2))


def _renormalized_matrices(params, bare, shift):
    matrices = bare.copy()
    m = params.matter_index
    matrices[:, m, m] += shift
    return matrices


def scp_solve(params: ModelParams, kgrid: KGrid, T: float = None,
              tol: float = 1e-8, mixing: float = 0.5, max_iter: int = 200,
              *, initial: ScpResult = None) -> ScpResult:
    """
    Iterate the SCP equation to self-consistency

    Parameters
    ----------
    params : ModelParams
    kgrid : KGrid
        Uniform Brillouin-zone grid
    T : float, optional
        Temperature (K); defaults to ``params.T``
    tol : float, optional
        Threshold on ``max |dOmega^2| / omega_m^2``
    mixing : float, optional
        Weight of the new squared frequencies in each update
    max_iter : int, optional
    initial : ScpResult, optional
        Start from a previous solution instead of the harmonic one

    Returns
    -------
    result : ScpResult

    Raises
    ------
    ConvergenceFailure
        No fixed point within ``max_iter`` iterations
    InstabilityError
        Negative renormalized eigenvalue
    """
    if not kgrid.is_uniform:
        raise ConfigurationError('SCP requires a uniform Brillouin-zone grid')
    if tol <= 0:
        raise ConfigurationError('tol must be positive', key='tol')
    if not 0 < mixing <= 1:
        raise ConfigurationError('mixing must lie in (0, 1]', key='mixing')
    if T is not None and T != params.T:
        params = params.replace(T=T)

    harmonic = phonon_basis(params, kgrid)
    if np.any(harmonic.frequencies <= 0):
        raise ConfigurationError('Harmonic frequencies must be positive')

    bare = dynamical_matrix(params, kgrid.points)
    if initial is not None:
        frequencies_sq = initial.frequencies ** 2
        eigenvectors = initial.eigenvectors
    else:
        frequencies_sq = harmonic.frequencies ** 2
        eigenvectors = harmonic.eigenvectors

    scale = params.omega_m ** 2
    residuals = []
    for iteration in range(1, max_iter + 1):
        msd = thermal_mean_square(eigenvectors, np.sqrt(frequencies_sq),
                                  kgrid.weights, params.kT,
                                  params.matter_index)
        shift = 6.0 * params.g * msd
        new_frequencies, eigenvectors = diagonalize(
            _renormalized_matrices(params, bare, shift), kgrid.points)
        new_sq = new_frequencies ** 2
        residual = float(np.max(np.abs(new_sq - frequencies_sq)) / scale)
        residuals.append(residual)
        logger.debug('SCP iteration %d: <r^2> = %.6e, residual %.3e',
                     iteration, msd, residual)
        if residual < tol:
            frequencies_sq = new_sq
            break
        frequencies_sq = (1 - mixing) * frequencies_sq + mixing * new_sq
    else:
        raise ConvergenceFailure(
            'SCP did not converge in {} iterations (last residual {:.3e})'
            ''.format(max_iter, residuals[-1]), residuals=residuals)

    msd = thermal_mean_square(eigenvectors, np.sqrt(frequencies_sq),
                              kgrid.weights, params.kT, params.matter_index)
    rotation = np.einsum('kal,kam->klm', harmonic.eigenvectors.conj(),
                         eigenvectors)
    force_constants = np.einsum(
        'klm,km,knm->kln', rotation, frequencies_sq, rotation.conj())
    result = ScpResult(params=params, kgrid=kgrid,
                       frequencies=np.sqrt(frequencies_sq),
                       rotation=rotation, force_constants=force_constants,
                       residuals=residuals, temperature=params.T,
                       mean_square_displacement=msd)
    logger.info('SCP converged in %d iterations at %.1f K: onsite shift '
                '%.4e Ha^2', len(residuals), params.T, result.onsite_shift)
    return result


def scp_dispersion(result: ScpResult, display_kgrid: KGrid) -> PhononBasis:
    """
    Renormalized bands on an arbitrary grid

    The self-consistent field is a zone average, so the renormalized
    dynamical matrix ``D(k) + 6 g <r^2> P_m`` is exact at any k.

    Parameters
    ----------
    result : ScpResult
        Converged solution
    display_kgrid : KGrid

    Returns
    -------
    basis : PhononBasis
    """
    if not result.converged:
        raise ConvergenceFailure('Cannot evaluate an unconverged SCP result',
                                 residuals=result.residuals)
    params = result.params
    bare = dynamical_matrix(params, display_kgrid.points)
    frequencies, eigenvectors = diagonalize(
        _renormalized_matrices(params, bare, result.onsite_shift),
        display_kgrid.points)
    return PhononBasis(params=params, kgrid=display_kgrid,
                       frequencies=frequencies, eigenvectors=eigenvectors)


def single_site_frequency(omega_m: float, g: float, kT: float) -> float:
    '''
    Closed-form SCP frequency of an isolated quartic oscillator

    Positive root of ``Omega^2 = omega_m^2 + 6 g k_B T / Omega^2``.
    '''
    return float(np.sqrt(0.5 * (omega_m ** 2 +
                                np.sqrt(omega_m ** 4 + 24.0 * g * kT))))


def scp_temperature_scan(params: ModelParams, kgrid: KGrid, temperatures,
                         **solve_kwargs) -> list:
    '''
    Zone-center matter frequency shift over a set of temperatures

    The shift is taken between the harmonic and renormalized bands with
    the largest matter weight, which may sit at different band indices
    once the matter mode hardens past the cavity mode.

    Returns
    -------
    rows : list of dict
        ``{'T_K', 'omega_gamma_meV', 'shift_meV'}`` for each temperature
    '''
    zone_center = KGrid.from_points([0.0], params.a)
    harmonic = _matter_band_frequency(params,
                                      phonon_basis(params, zone_center))
    rows = []
    for temperature in temperatures:
        result = scp_solve(params, kgrid, T=temperature, **solve_kwargs)
        omega = _matter_band_frequency(
            params, scp_dispersion(result, zone_center))
        rows.append({'T_K': float(temperature),
                     'omega_gamma_meV': to_mev(omega),
                     'shift_meV': to_mev(omega - harmonic),
                     })
    return rows


def _matter_band_frequency(params, basis):
    'Frequency of the band with the largest matter weight at the first k'
    weights = np.abs(basis.eigenvectors[0, params.matter_index, :])
    return basis.frequencies[0, int(np.argmax(weights))]
