'''
Real-space model of a cavity-atom chain bilinearly coupled to an anharmonic
matter chain

Each unit cell holds one "cavity" atom (a localized cavity radiation mode,
displacement ``x_j``) and one matter atom (displacement ``r_j``), both in
mass-weighted atomic units.  The lattice potential is::

    V = 1/2 sum_j [omega_0^2 x_j^2 + (c/a)^2 sum_m w_m (x_j - x_{j+m})^2]
      + 1/2 sum_j [omega_m^2 r_j^2 + g r_j^4 + Omega_m^2 (r_j - r_{j+1})^2]
      + sum_j G_lm x_j r_j + sum_j d_se r_j^2

where ``w_m`` are the photon-chain finite-difference weights.
'''
import collections
import dataclasses
import logging

import numpy as np

from . import units
from .exceptions import ConfigurationError
from .stencil import SUPPORTED_ORDERS, stencil_coefficients

logger = logging.getLogger(__name__)

Couplings = collections.namedtuple('Couplings', ('G_lm', 'd_se'))
Forces = collections.namedtuple('Forces', ('x', 'r'))


@dataclasses.dataclass(frozen=True)
class ModelParams:
    '''
    Physical parameters of the coupled chain, in atomic units

    Attributes
    ----------
    a : float
        Lattice constant (bohr)
    omega_m : float
        Bare matter frequency (Hartree)
    Omega_m : float
        Nearest-neighbor matter coupling (Hartree)
    g : float
        Quartic on-site anharmonicity (absolute atomic units)
    omega_0 : float
        Cavity cutoff frequency at k = 0 (Hartree)
    eta : float
        Density-scaled light-matter coupling
    T : float
        Temperature (Kelvin)
    n_sites : int
        Number of unit cells in the supercell
    stencil_order : int
        Finite-difference order of the photon chain
    c : float
        Speed of light (a.u.)
    cavity : bool
        False for the isolated matter chain (no cavity atoms)
    '''
    a: float
    omega_m: float
    Omega_m: float
    g: float
    omega_0: float
    eta: float = 0.0
    T: float = 300.0
    n_sites: int = 128
    stencil_order: int = 2
    c: float = units.SPEED_OF_LIGHT
    cavity: bool = True

    def __post_init__(self):
        checks = [
            ('a', self.a > 0, 'must be positive'),
            ('omega_m', self.omega_m > 0, 'must be positive'),
            ('Omega_m', self.Omega_m >= 0, 'must be non-negative'),
            ('g', self.g >= 0, 'must be non-negative'),
            ('omega_0', self.omega_0 > 0, 'must be positive'),
            ('eta', self.eta >= 0, 'must be non-negative'),
            ('T', self.T > 0, 'must be positive'),
            ('n_sites', int(self.n_sites) == self.n_sites and
             self.n_sites >= 2,
             'must be an integer >= 2'),
            ('stencil_order', self.stencil_order in SUPPORTED_ORDERS,
             'must be one of {}'.format(SUPPORTED_ORDERS)),
        ]
        for key, ok, reason in checks:
            if not ok:
                raise ConfigurationError(
                    '{} = {!r} {}'.format(key, getattr(self, key), reason),
                    key=key)
        if not self.cavity and self.eta != 0:
            raise ConfigurationError('The isolated matter chain has no light-'
                                     'matter coupling; eta must be 0',
                                     key='eta')

    @classmethod
    def from_lab_units(cls, *, a_angstrom, omega_m_mev, Omega_m_mev,
                       g_omega_m3, omega_0_mev=None, eta=0.0, T=300.0,
                       **kwargs):
        '''
        Create parameters from meV / Angstrom / Kelvin inputs

        ``g_omega_m3`` is the anharmonicity as a multiple of omega_m^3.
        ``omega_0_mev`` defaults to the bare matter frequency.
        '''
        omega_m = units.mev(omega_m_mev)
        if omega_0_mev is None:
            omega_0_mev = omega_m_mev
        return cls(a=a_angstrom * units.ANGSTROM_TO_BOHR,
                   omega_m=omega_m,
                   Omega_m=units.mev(Omega_m_mev),
                   g=abs(g_omega_m3) * omega_m ** 3,
                   omega_0=units.mev(omega_0_mev),
                   eta=eta, T=T, **kwargs)

    @classmethod
    def water_defaults(cls, **overrides):
        'Water-like parameters: a = 3 A, 440 meV stretch, 215 meV coupling'
        kwargs = dict(a_angstrom=3.0, omega_m_mev=440.0, Omega_m_mev=215.0,
                      g_omega_m3=4.3, omega_0_mev=440.0, eta=0.1, T=300.0)
        kwargs.update(overrides)
        return cls.from_lab_units(**kwargs)

    def replace(self, **changes) -> 'ModelParams':
        'Copy of these parameters with some fields changed'
        return dataclasses.replace(self, **changes)

    def matter_chain(self) -> 'ModelParams':
        'The isolated matter chain sharing these matter parameters'
        return self.replace(cavity=False, eta=0.0)

    @property
    def kT(self) -> float:
        'Thermal energy k_B T (Hartree)'
        return units.kelvin_to_hartree(self.T)

    @property
    def n_coords(self) -> int:
        'Number of atoms per unit cell'
        return 2 if self.cavity else 1

    @property
    def matter_index(self) -> int:
        'Index of the matter atom within the unit cell'
        return 1 if self.cavity else 0

    @property
    def coordinate_names(self) -> tuple:
        return ('cavity', 'matter') if self.cavity else ('matter', )

    @property
    def omega_loc_sq(self) -> float:
        '''
        Bare on-site force constant of the matter atom

        ``omega_m^2 + 2 Omega_m^2 + 2 d_se``: the k-average of the matter
        diagonal of the dynamical matrix.
        '''
        return (self.omega_m ** 2 + 2 * self.Omega_m ** 2 +
                2 * effective_couplings(self).d_se)

    def save(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class DisplacementState:
    '''
    Instantaneous configuration of the chain

    Attributes
    ----------
    x, r : np.ndarray
        Cavity and matter displacements per site
    v_x, v_r : np.ndarray
        Conjugate velocities
    periodic : bool
    '''
    x: np.ndarray
    r: np.ndarray
    v_x: np.ndarray = None
    v_r: np.ndarray = None
    periodic: bool = True

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        if self.v_x is None:
            self.v_x = np.zeros_like(self.x)
        if self.v_r is None:
            self.v_r = np.zeros_like(self.r)
        self.v_x = np.asarray(self.v_x, dtype=float)
        self.v_r = np.asarray(self.v_r, dtype=float)
        lengths = {len(self.x), len(self.r), len(self.v_x), len(self.v_r)}
        if len(lengths) != 1:
            raise ConfigurationError('Displacement and velocity arrays must '
                                     'share one length; got {}'
                                     ''.format(sorted(lengths)))

    @classmethod
    def zeros(cls, n_sites: int) -> 'DisplacementState':
        return cls(x=np.zeros(n_sites), r=np.zeros(n_sites))

    @property
    def n_sites(self) -> int:
        return len(self.r)

    def rolled(self, shift: int) -> 'DisplacementState':
        'Cyclic relabeling of the sites'
        return DisplacementState(x=np.roll(self.x, shift),
                                 r=np.roll(self.r, shift),
                                 v_x=np.roll(self.v_x, shift),
                                 v_r=np.roll(self.v_r, shift),
                                 periodic=self.periodic)


def effective_couplings(params: ModelParams) -> Couplings:
    """
    Per-site light-matter coupling and dipole self-energy coefficients

    Parameters
    ----------
    params : ModelParams

    Returns
    -------
    couplings : Couplings
        ``G_lm = 2 eta sqrt(omega_0^3 omega_m)`` and
        ``d_se = 2 eta^2 omega_0 omega_m``; ``d_se`` multiplies ``r_j^2``
        in the potential, so it adds ``2 d_se`` to the matter force constant.
    """
    eta = params.eta
    G_lm = 2.0 * eta * np.sqrt(params.omega_0 ** 3 * params.omega_m)
    d_se = 2.0 * eta ** 2 * params.omega_0 * params.omega_m
    return Couplings(G_lm=float(G_lm), d_se=float(d_se))


def analytic_cavity_dispersion(params: ModelParams, k):
    'Cavity dispersion of the lowest branch, sqrt(omega_0^2 + c^2 k^2)'
    k = np.asarray(k, dtype=float)
    return np.sqrt(params.omega_0 ** 2 + (params.c * k) ** 2)


def _photon_gradient_weights(params):
    return stencil_coefficients(params.stencil_order)[1:]


def chain_potential(params: ModelParams, x, r) -> np.ndarray:
    '''
    Potential energy for (batches of) chain configurations

    ``x`` and ``r`` have the sites along the last axis; leading axes are
    treated as independent configurations.  ``x`` is ignored (and may be
    None) for the isolated matter chain.
    '''
    r = np.asarray(r, dtype=float)
    energy = 0.5 * np.sum(params.omega_m ** 2 * r ** 2 + params.g * r ** 4,
                          axis=-1)
    energy = energy + 0.5 * params.Omega_m ** 2 * np.sum(
        (r - np.roll(r, -1, axis=-1)) ** 2, axis=-1)
    if not params.cavity:
        return energy

    x = np.asarray(x, dtype=float)
    G_lm, d_se = effective_couplings(params)
    stiffness = (params.c / params.a) ** 2
    energy = energy + 0.5 * params.omega_0 ** 2 * np.sum(x ** 2, axis=-1)
    for m, w_m in enumerate(_photon_gradient_weights(params), start=1):
        energy = energy + 0.5 * stiffness * w_m * np.sum(
            (x - np.roll(x, -m, axis=-1)) ** 2, axis=-1)
    energy = energy + G_lm * np.sum(x * r, axis=-1)
    energy = energy + d_se * np.sum(r ** 2, axis=-1)
    return energy


def chain_forces(params: ModelParams, x, r) -> Forces:
    'Analytic forces -dV/dx, -dV/dr matching `chain_potential`'
    r = np.asarray(r, dtype=float)
    laplacian_r = 2 * r - np.roll(r, -1, axis=-1) - np.roll(r, 1, axis=-1)
    f_r = (-params.omega_m ** 2 * r - 2 * params.g * r ** 3 -
           params.Omega_m ** 2 * laplacian_r)
    if not params.cavity:
        return Forces(x=None, r=f_r)

    x = np.asarray(x, dtype=float)
    G_lm, d_se = effective_couplings(params)
    stiffness = (params.c / params.a) ** 2
    f_x = -params.omega_0 ** 2 * x - G_lm * r
    for m, w_m in enumerate(_photon_gradient_weights(params), start=1):
        f_x = f_x - stiffness * w_m * (
            2 * x - np.roll(x, -m, axis=-1) - np.roll(x, m, axis=-1))
    f_r = f_r - G_lm * x - 2 * d_se * r
    return Forces(x=f_x, r=f_r)


def _check_state(params, state):
    if state.n_sites != params.n_sites:
        raise ConfigurationError(
            'State has {} sites but the model has n_sites = {}'
            ''.format(state.n_sites, params.n_sites), key='n_sites')
    if not state.periodic:
        raise ConfigurationError('Only periodic boundaries are supported')


def potential_energy(params: ModelParams, state: DisplacementState) -> float:
    """
    Potential energy of a chain configuration (Hartree)

    Parameters
    ----------
    params : ModelParams
    state : DisplacementState

    Returns
    -------
    energy : float
    """
    _check_state(params, state)
    return float(chain_potential(params, state.x, state.r))


def forces(params: ModelParams, state: DisplacementState) -> Forces:
    """
    Forces on cavity and matter atoms

    Parameters
    ----------
    params : ModelParams
    state : DisplacementState

    Returns
    -------
    forces : Forces
        ``Forces(x=-dV/dx_j, r=-dV/dr_j)``; for the isolated matter chain
        the cavity forces are zero.
    """
    _check_state(params, state)
    result = chain_forces(params, state.x, state.r)
    if result.x is None:
        return Forces(x=np.zeros_like(state.x), r=result.r)
    return result
