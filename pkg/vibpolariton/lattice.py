'''
Bloch dynamical matrix of the two-atom unit cell, phonon bases over k-grids
and harmonic Green's functions
'''
import dataclasses
import logging

import numpy as np

from .enums import BasisTag, KGridKind
from .exceptions import (ConfigurationError, GridMismatchError,
                         InstabilityError)
from .model import ModelParams, analytic_cavity_dispersion, effective_couplings
from .stencil import stencil_coefficients, stencil_symbol

logger = logging.getLogger(__name__)

DEFAULT_DISPLAY_SPAN = 20.0
_BZ_SLACK = 1e-12


def zone_boundary(a: float) -> float:
    'pi / a'
    return np.pi / a


def fold_to_zone(k, a: float):
    'Map wavevectors into the first Brillouin zone (-pi/a, pi/a]'
    k = np.asarray(k, dtype=float)
    period = 2 * np.pi / a
    folded = np.mod(k + np.pi / a, period) - np.pi / a
    edge = np.isclose(folded, -np.pi / a, rtol=0, atol=1e-14 * period)
    return np.where(edge, np.pi / a, folded)


@dataclasses.dataclass(frozen=True)
class KGrid:
    '''
    A set of wavevectors inside the first Brillouin zone

    Attributes
    ----------
    points : np.ndarray
        Wavevectors (inverse bohr), all with ``|k| <= pi/a``
    weights : np.ndarray
        Non-negative weights summing to 1
    kind : KGridKind
    a : float
        Lattice constant the grid was built for
    '''
    points: np.ndarray
    weights: np.ndarray
    kind: KGridKind
    a: float

    def __post_init__(self):
        points = np.atleast_1d(np.asarray(self.points, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'kind', KGridKind(self.kind))
        if points.shape != weights.shape:
            raise GridMismatchError('k-points and weights differ in shape')
        if np.any(np.abs(points) > np.pi / self.a * (1 + _BZ_SLACK)):
            raise ConfigurationError('k-points must lie in the first '
                                     'Brillouin zone |k| <= pi/a')
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigurationError('k-point weights must be non-negative '
                                     'and sum to 1')

    def __len__(self):
        return len(self.points)

    @property
    def is_uniform(self) -> bool:
        return self.kind == KGridKind.uniform

    @classmethod
    def uniform(cls, a: float, n_k: int) -> 'KGrid':
        '''
        Uniform Brillouin-zone grid ``k = 2 pi m / (n_k a)``

        ``m`` runs over ``-n_k/2 + 1 .. n_k/2`` (rounded), so the grid is
        exactly the set of wavevectors commensurate with an ``n_k``-site
        supercell.
        '''
        if n_k < 1:
            raise ConfigurationError('n_k must be at least 1', key='n_k')
        m = np.arange(n_k) - (n_k - 1) // 2
        points = 2 * np.pi * m / (n_k * a)
        return cls(points=points, weights=np.full(n_k, 1.0 / n_k),
                   kind=KGridKind.uniform, a=a)

    @classmethod
    def commensurate(cls, params: ModelParams) -> 'KGrid':
        'All wavevectors of the simulation supercell'
        return cls.uniform(params.a, params.n_sites)

    @classmethod
    def display(cls, params: ModelParams, n_points: int = 201,
                k_max: float = None) -> 'KGrid':
        '''
        Geometric display path near the zone center

        Parameters
        ----------
        params : ModelParams
        n_points : int, optional
            Number of points, including ``k = 0``
        k_max : float, optional
            Largest wavevector; defaults to ``20 omega_m / c`` (clipped to
            the zone boundary)
        '''
        if k_max is None:
            k_max = DEFAULT_DISPLAY_SPAN * params.omega_m / params.c
        k_max = min(k_max, np.pi / params.a)
        if n_points < 2:
            raise ConfigurationError('Display paths need at least 2 points',
                                     key='n_points')
        points = np.concatenate(
            [[0.0], np.geomspace(k_max * 1e-3, k_max, n_points - 1)])
        return cls.from_points(points, params.a)

    @classmethod
    def full_zone(cls, a: float, n_points: int = 201) -> 'KGrid':
        'Linear display path from the zone center to the zone boundary'
        return cls.from_points(np.linspace(0.0, np.pi / a, n_points), a)

    @classmethod
    def from_points(cls, points, a: float,
                    kind: KGridKind = KGridKind.display) -> 'KGrid':
        'Equal-weight grid through the given points'
        points = np.atleast_1d(np.asarray(points, dtype=float))
        return cls(points=points,
                   weights=np.full(len(points), 1.0 / len(points)),
                   kind=kind, a=a)

    def index_of(self, k: float) -> int:
        'Index of the grid point closest to ``k``'
        return int(np.argmin(np.abs(self.points - k)))

    def save(self) -> dict:
        return {'points': self.points.tolist(),
                'weights': self.weights.tolist(),
                'kind': self.kind.value,
                'a': self.a}


@dataclasses.dataclass(frozen=True)
class PhononBasis:
    '''
    Per-k harmonic (or renormalized) frequencies and eigenvectors

    Attributes
    ----------
    params : ModelParams
    kgrid : KGrid
    frequencies : np.ndarray
        ``(n_k, n_bands)``, ascending at each k
    eigenvectors : np.ndarray
        ``(n_k, n_coords, n_bands)``; column ``lambda`` is band ``lambda``
    '''
    params: ModelParams
    kgrid: KGrid
    frequencies: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n_bands(self) -> int:
        return self.frequencies.shape[1]

    @property
    def light_fraction(self) -> np.ndarray:
        'Weight of each band on the cavity atom, ``(n_k, n_bands)``'
        if not self.params.cavity:
            return np.zeros_like(self.frequencies)
        return np.abs(self.eigenvectors[:, 0, :]) ** 2

    @property
    def matter_components(self) -> np.ndarray:
        'Matter-atom components ``c_m,lambda(k)``, ``(n_k, n_bands)``'
        return self.eigenvectors[:, self.params.matter_index, :]

    def dynamical_matrices(self) -> np.ndarray:
        'Reassemble ``C diag(Omega^2) C^dagger`` at each k'
        c = self.eigenvectors
        return np.einsum('kal,kl,kbl->kab', c, self.frequencies ** 2,
                         c.conj())


@dataclasses.dataclass
class MatrixGF:
    '''
    Retarded phonon Green's function resolved in k and omega

    Attributes
    ----------
    kgrid : KGrid
    omega_grid : np.ndarray
        Uniform frequency grid (Hartree)
    values : np.ndarray
        Complex array ``(n_k, n_omega, n_coords, n_coords)``
    delta : float
        Broadening (Hartree)
    basis : BasisTag
    metadata : dict
    '''
    kgrid: KGrid
    omega_grid: np.ndarray
    values: np.ndarray
    delta: float
    basis: BasisTag = BasisTag.site
    metadata: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        expected = (len(self.kgrid), len(self.omega_grid))
        if self.values.shape[:2] != expected:
            raise GridMismatchError(
                'Green function shape {} does not match grids {}'
                ''.format(self.values.shape, expected))

    @property
    def n_coords(self) -> int:
        return self.values.shape[-1]

    def component(self, alpha: int, beta: int = None) -> np.ndarray:
        'Element ``D_{alpha beta}(k, omega)``, shape ``(n_k, n_omega)``'
        beta = alpha if beta is None else beta
        return self.values[:, :, alpha, beta]

    def spectral_diagonal(self) -> np.ndarray:
        '``-Im D_aa / pi`` per coordinate, shape ``(n_k, n_omega, n_coords)``'
        diagonal = np.diagonal(self.values, axis1=2, axis2=3)
        return -diagonal.imag / np.pi

    def check_positivity(self, tolerance: float = 1e-8) -> bool:
        'True when every diagonal spectral weight at omega > 0 is >= -tol'
        positive = self.omega_grid > 0
        spectral = self.spectral_diagonal()[:, positive]
        return bool(np.all(spectral >= -tolerance))


@dataclasses.dataclass
class LocalGF:
    '''
    Frequency-resolved Green's function of a single coordinate

    Used for the k-averaged lattice function on the matter atom and for the
    impurity result.  ``values`` is ``(n_omega,)`` or, for a matrix-valued
    impurity, ``(n_omega, n, n)``.
    '''
    omega_grid: np.ndarray
    values: np.ndarray
    delta: float
    std_error: np.ndarray = None
    metadata: dict = dataclasses.field(default_factory=dict)

    @property
    def is_matrix(self) -> bool:
        return self.values.ndim == 3

    @property
    def spectral(self) -> np.ndarray:
        values = self.values
        if self.is_matrix:
            values = np.trace(values, axis1=1, axis2=2)
        return -values.imag / np.pi


def frequency_grid(omega_max: float, n_points: int = 4096) -> np.ndarray:
    'Uniform frequency grid on ``[0, omega_max]`` (Hartree)'
    if omega_max <= 0 or n_points < 2:
        raise ConfigurationError('Frequency grid needs omega_max > 0 and at '
                                 'least 2 points')
    return np.linspace(0.0, omega_max, n_points)


def check_same_grid(omega_a, omega_b, what='frequency grids'):
    'Raise GridMismatchError unless two grids coincide'
    if len(omega_a) != len(omega_b) or not np.allclose(omega_a, omega_b,
                                                       rtol=1e-12, atol=0):
        raise GridMismatchError('Incompatible {}'.format(what))


def _prepare_k(params, k, fold):
    k = np.asarray(k, dtype=float)
    outside = np.abs(k) > np.pi / params.a * (1 + _BZ_SLACK)
    if np.any(outside):
        if not fold:
            raise ConfigurationError(
                'k = {} lies outside the first Brillouin zone'
                ''.format(k[outside].ravel()[0]), key='k')
        k = fold_to_zone(k, params.a)
    return k


def cavity_band_squared(params: ModelParams, k) -> np.ndarray:
    'Squared frequency of the finite-difference photon chain'
    k = np.asarray(k, dtype=float)
    stiffness = (params.c / params.a) ** 2
    return params.omega_0 ** 2 + stiffness * stencil_symbol(
        params.stencil_order, k * params.a)


def matter_band_squared(params: ModelParams, k, *, dse=True) -> np.ndarray:
    'Squared frequency of the bare matter chain, with the DSE shift'
    k = np.asarray(k, dtype=float)
    band = (params.omega_m ** 2 +
            4 * params.Omega_m ** 2 * np.sin(k * params.a / 2) ** 2)
    if dse:
        band = band + 2 * effective_couplings(params).d_se
    return band


def dynamical_matrix(params: ModelParams, k, *,
                     fold: bool = False) -> np.ndarray:
    '''
    Bloch dynamical matrix in (cavity, matter) site coordinates

    Parameters
    ----------
    params : ModelParams
    k : float or array
        Wavevector(s) in inverse bohr
    fold : bool, optional
        Fold wavevectors outside the first zone back into it instead of
        raising

    Returns
    -------
    matrix : np.ndarray
        ``(n_coords, n_coords)`` for scalar k, ``(n_k, n_coords, n_coords)``
        otherwise; 1x1 for the isolated matter chain
    '''
    k = _prepare_k(params, k, fold)
    scalar = k.ndim == 0
    k = np.atleast_1d(k)
    n = params.n_coords
    matrix = np.zeros((len(k), n, n))
    m = params.matter_index
    matrix[:, m, m] = matter_band_squared(params, k)
    if params.cavity:
        matrix[:, 0, 0] = cavity_band_squared(params, k)
        G_lm = effective_couplings(params).G_lm
        matrix[:, 0, 1] = G_lm
        matrix[:, 1, 0] = G_lm
    return matrix[0] if scalar else matrix


def diagonalize(matrices, k_points, *, tolerance=1e-12):
    '''
    Sorted eigen-decomposition with a deterministic phase

    Each eigenvector is scaled so that its largest-magnitude component is
    real and positive.  Raises InstabilityError naming the first k with a
    negative eigenvalue.
    '''
    eigenvalues, eigenvectors = np.linalg.eigh(matrices)
    scale = np.max(np.abs(eigenvalues)) if eigenvalues.size else 1.0
    unstable = eigenvalues < -tolerance * max(scale, 1e-300)
    if np.any(unstable):
        idx = int(np.argwhere(unstable.any(axis=1))[0, 0])
        k = float(np.atleast_1d(k_points)[idx])
        raise InstabilityError(
            'Negative squared frequency {:.3e} at k = {:.6g} bohr^-1'
            ''.format(eigenvalues[idx].min(), k), k=k)

    pivots = np.argmax(np.abs(eigenvectors), axis=1)
    pivot_values = np.take_along_axis(eigenvectors, pivots[:, np.newaxis, :],
                                      axis=1)
    phase = pivot_values / np.abs(pivot_values)
    eigenvectors = eigenvectors / phase
    return np.sqrt(np.clip(eigenvalues, 0, None)), eigenvectors


def phonon_basis(params: ModelParams, kgrid: KGrid) -> PhononBasis:
    """
    Diagonalize the dynamical matrix at every point of a grid

    Parameters
    ----------
    params : ModelParams
    kgrid : KGrid

    Returns
    -------
    basis : PhononBasis
    """
    matrices = dynamical_matrix(params, kgrid.points)
    frequencies, eigenvectors = diagonalize(matrices, kgrid.points)
    logger.debug('Diagonalized %d k-points; frequency range %.6g - %.6g Ha',
                 len(kgrid), frequencies.min(), frequencies.max())
    return PhononBasis(params=params, kgrid=kgrid, frequencies=frequencies,
                       eigenvectors=eigenvectors)


def dyson_gf(dynamical_matrices, omega_grid, delta, self_energy=None):
    '''
    ``[(omega + i delta)^2 - D(k) - Sigma(omega)]^-1`` on all grid points

    Parameters
    ----------
    dynamical_matrices : np.ndarray
        ``(n_k, n, n)``
    omega_grid : np.ndarray
    delta : float
    self_energy : np.ndarray, optional
        ``(n_omega, n, n)`` frequency-dependent correction

    Returns
    -------
    values : np.ndarray
        ``(n_k, n_omega, n, n)`` complex
    '''
    if delta <= 0:
        raise ConfigurationError('Broadening delta must be positive',
                                 key='delta')
    n = dynamical_matrices.shape[-1]
    z2 = (np.asarray(omega_grid) + 1j * delta) ** 2
    inverse = (z2[np.newaxis, :, np.newaxis, np.newaxis] * np.eye(n) -
               dynamical_matrices[:, np.newaxis, :, :])
    if self_energy is not None:
        inverse = inverse - self_energy[np.newaxis]
    if n == 1:
        return 1.0 / inverse
    return np.linalg.inv(inverse)


def harmonic_gf(basis: PhononBasis, omega_grid, delta: float) -> MatrixGF:
    """
    Harmonic retarded Green's function in site coordinates

    ``D(k, omega) = sum_lambda c c^dagger / ((omega + i delta)^2 -
    Omega_lambda^2)``

    Parameters
    ----------
    basis : PhononBasis
    omega_grid : np.ndarray
    delta : float
        Broadening (Hartree), must be positive

    Returns
    -------
    gf : MatrixGF
    """
    if delta <= 0:
        raise ConfigurationError('Broadening delta must be positive',
                                 key='delta')
    omega_grid = np.asarray(omega_grid, dtype=float)
    z2 = (omega_grid + 1j * delta) ** 2
    poles = 1.0 / (z2[np.newaxis, :, np.newaxis] -
                   basis.frequencies[:, np.newaxis, :] ** 2)
    c = basis.eigenvectors
    values = np.einsum('kal,kwl,kbl->kwab', c, poles, c.conj())
    return MatrixGF(kgrid=basis.kgrid, omega_grid=omega_grid, values=values,
                    delta=delta, basis=BasisTag.site,
                    metadata={'method': 'harmonic'})


def dipole_gauge_crosscheck(params: ModelParams, k, *,
                            analytic: bool = False) -> np.ndarray:
    '''
    Eigenfrequencies of the per-k two-oscillator polariton model

    The cavity mode (finite-difference band, or ``sqrt(omega_0^2 + c^2
    k^2)`` with ``analytic=True``) and the DSE-shifted matter band are
    coupled through ``G_lm``.  With the finite-difference band this is the
    same matrix as `dynamical_matrix`.

    Returns
    -------
    frequencies : np.ndarray
        Ascending, ``(2,)`` for scalar k or ``(n_k, 2)``
    '''
    k = _prepare_k(params, k, fold=False)
    if analytic:
        cavity = analytic_cavity_dispersion(params, k) ** 2
    else:
        cavity = cavity_band_squared(params, k)
    matter = matter_band_squared(params, k)
    G_lm = effective_couplings(params).G_lm
    upper = 0.5 * (cavity + matter) + np.sqrt(0.25 * (cavity - matter) ** 2 +
                                              G_lm ** 2)
    # product of the roots is the determinant
    lower = (cavity * matter - G_lm ** 2) / upper
    return np.sqrt(np.stack([lower, upper], axis=-1))


def onsite_force_constants(params: ModelParams) -> np.ndarray:
    '''
    Zone average of the bare dynamical matrix

    The matter entry is ``omega_loc^2 = omega_m^2 + 2 Omega_m^2 + 2 d_se``;
    the cavity entry is ``omega_0^2 - (c/a)^2 w_0``.
    '''
    n = params.n_coords
    matrix = np.zeros((n, n))
    m = params.matter_index
    matrix[m, m] = params.omega_loc_sq
    if params.cavity:
        w0 = stencil_coefficients(params.stencil_order)[0]
        matrix[0, 0] = params.omega_0 ** 2 - (params.c / params.a) ** 2 * w0
        G_lm = effective_couplings(params).G_lm
        matrix[0, 1] = matrix[1, 0] = G_lm
    return matrix
