'''
Classical molecular dynamics reference and Green's function estimators

Trajectories are integrated in batches, one row per trajectory, with
Langevin (BAOAB) equilibration followed by NVE velocity-Verlet production.
Each trajectory owns a counter-based Philox stream spawned from the master
seed, so results do not depend on how trajectories are grouped or scheduled.
'''
import concurrent.futures
import dataclasses
import logging
import math

import numpy as np

from .enums import SystemKind, WindowKind
from .exceptions import (ConfigurationError, IncommensurateKError,
                         TimestepError)
from .lattice import (KGrid, LocalGF, MatrixGF, dynamical_matrix,
                      onsite_force_constants)
from .model import ModelParams, chain_forces, chain_potential
from .units import mev, to_mev

logger = logging.getLogger(__name__)

STABILITY_LIMIT = 0.1
MIN_RECORD_PERIODS = 10
DUMP_MAGIC = b'VPTRAJ\x00\x00'
DUMP_VERSION = 1
DUMP_HEADER = np.dtype([('magic', 'S8'), ('version', '<u4'), ('dt', '<f8'),
                        ('stride', '<u4'), ('n_dof', '<u4'),
                        ('n_trajectories', '<u4'), ('n_records', '<u4')])


@dataclasses.dataclass
class MdOptions:
    '''
    Molecular dynamics protocol

    Attributes
    ----------
    dt : float
        Timestep (a.u. time)
    n_equil_steps : int
        Langevin equilibration steps
    n_prod_steps : int
        NVE production steps
    n_trajectories : int
    friction : float
        Langevin friction (a.u.)
    seed : int
        Master seed
    stride : int
        Record every ``stride`` production steps
    window : WindowKind
    tau_damp : float, optional
        Exponential window time; ``None`` matches the lattice broadening
        (``tau = 1 / delta``)
    max_lag : int, optional
        Correlation length in records; defaults to half the record count
    batch_size : int
        Trajectories integrated together
    threads : int
        Worker threads over batches
    auto_tighten : bool
        Shrink dt (keeping the simulated time) instead of raising
        TimestepError
    drift_threshold : float
        Relative energy drift above which a trajectory is flagged
    '''
    dt: float = 4.0
    n_equil_steps: int = 4096
    n_prod_steps: int = 65536
    n_trajectories: int = 100
    friction: float = 1e-3
    seed: int = 1729
    stride: int = 8
    window: WindowKind = WindowKind.exponential
    tau_damp: float = None
    max_lag: int = None
    batch_size: int = 10
    threads: int = 1
    auto_tighten: bool = False
    drift_threshold: float = 1e-4

    def __post_init__(self):
        self.window = WindowKind(self.window)
        if self.dt <= 0:
            raise ConfigurationError('dt must be positive', key='dt')
        if self.n_trajectories < 1:
            raise ConfigurationError('n_trajectories must be at least 1',
                                     key='n_trajectories')
        if self.stride < 1:
            raise ConfigurationError('stride must be at least 1',
                                     key='stride')
        if self.n_prod_steps < 2 * self.stride:
            raise ConfigurationError('n_prod_steps must cover at least two '
                                     'records', key='n_prod_steps')
        if self.friction <= 0:
            raise ConfigurationError('friction must be positive',
                                     key='friction')

    @property
    def n_records(self) -> int:
        return self.n_prod_steps // self.stride

    @property
    def record_interval(self) -> float:
        return self.dt * self.stride

    def window_time(self, delta: float = None) -> float:
        if self.tau_damp is not None:
            return self.tau_damp
        if delta is None:
            delta = mev(1.0)
        return 1.0 / delta

    def replace(self, **changes) -> 'MdOptions':
        return dataclasses.replace(self, **changes)


class MatterChainSystem:
    '''
    Isolated anharmonic matter chain; one coordinate per site

    Parameters
    ----------
    params : ModelParams
        Only the matter parameters are used
    '''
    kind = SystemKind.matter_chain
    n_coords = 1

    def __init__(self, params: ModelParams):
        self.params = params.matter_chain() if params.cavity else params
        self.n_sites = self.params.n_sites
        self.n_dof = self.n_sites
        self.n_observed = self.n_dof
        self.a = self.params.a
        self.kT = self.params.kT

    def forces(self, q):
        return chain_forces(self.params, None, q).r

    def potential(self, q):
        return chain_potential(self.params, None, q)

    @property
    def omega_max(self) -> float:
        grid = KGrid.commensurate(self.params)
        return float(np.sqrt(np.max(dynamical_matrix(self.params,
                                                     grid.points))))

    @property
    def omega_min(self) -> float:
        grid = KGrid.commensurate(self.params)
        lowest = np.min(dynamical_matrix(self.params, grid.points))
        return float(np.sqrt(max(lowest, 0.0)))


class CoupledChainSystem(MatterChainSystem):
    '''
    Full light-matter chain, coordinates ordered ``[x_0..x_N-1, r_0..r_N-1]``
    '''
    kind = SystemKind.coupled_chain
    n_coords = 2

    def __init__(self, params: ModelParams):
        if not params.cavity:
            raise ConfigurationError('The coupled chain needs cavity atoms')
        self.params = params
        self.n_sites = params.n_sites
        self.n_dof = 2 * self.n_sites
        self.n_observed = self.n_dof
        self.a = params.a
        self.kT = params.kT

    def forces(self, q):
        n = self.n_sites
        result = chain_forces(self.params, q[..., :n], q[..., n:])
        return np.concatenate([result.x, result.r], axis=-1)

    def potential(self, q):
        n = self.n_sites
        return chain_potential(self.params, q[..., :n], q[..., n:])

    @property
    def omega_max(self) -> float:
        grid = KGrid.commensurate(self.params)
        matrices = dynamical_matrix(self.params, grid.points)
        return float(np.sqrt(np.max(np.linalg.eigvalsh(matrices))))

    @property
    def omega_min(self) -> float:
        grid = KGrid.commensurate(self.params)
        matrices = dynamical_matrix(self.params, grid.points)
        lowest = np.min(np.linalg.eigvalsh(matrices))
        return float(np.sqrt(max(lowest, 0.0)))


class ImpuritySystem:
    '''
    Anharmonic impurity bilinearly coupled to harmonic bath oscillators

    ``V = 1/2 q.K.q + 1/2 g r^4 + sum_b [1/2 omega_b^2 y_b^2 + y_b c_b.q]``

    Parameters
    ----------
    onsite : float or np.ndarray
        On-site force constant (scalar, or matrix for a multi-coordinate
        impurity)
    g : float
        Quartic coefficient on the anharmonic coordinate
    kT : float
    bath_frequencies : np.ndarray, optional
    bath_couplings : np.ndarray, optional
        ``(N_b,)`` or ``(N_b, n_impurity)``
    anharmonic_index : int, optional
        Impurity coordinate carrying the quartic term (the last by default)
    '''
    kind = SystemKind.impurity
    n_coords = 1
    a = None

    def __init__(self, onsite, g, kT, bath_frequencies=None,
                 bath_couplings=None, anharmonic_index=-1):
        self.onsite = np.atleast_2d(np.asarray(onsite, dtype=float))
        self.n_impurity = self.onsite.shape[0]
        self.n_coords = self.n_impurity
        self.g = float(g)
        self.kT = float(kT)
        if bath_frequencies is None:
            bath_frequencies = np.zeros(0)
        self.bath_frequencies = np.asarray(bath_frequencies, dtype=float)
        if bath_couplings is None:
            bath_couplings = np.zeros((0, self.n_impurity))
        couplings = np.asarray(bath_couplings, dtype=float)
        self.bath_couplings = couplings.reshape(len(self.bath_frequencies),
                                                self.n_impurity)
        self.anharmonic_index = anharmonic_index % self.n_impurity
        self.n_sites = 1
        self.n_dof = self.n_impurity + len(self.bath_frequencies)
        self.n_observed = self.n_impurity

    @classmethod
    def from_params(cls, params: ModelParams, bath=None, *,
                    coupled: bool = False, onsite_shift: float = 0.0):
        '''
        Impurity of one unit cell with bare on-site constants

        The matter coordinate feels ``omega_loc^2 = omega_m^2 + 2 Omega_m^2 +
        2 d_se`` (plus ``onsite_shift``); with ``coupled=True`` the cavity
        coordinate of the cell is included with its k-averaged force
        constant and the bilinear coupling.
        '''
        frequencies = None if bath is None else bath.frequencies
        couplings = None if bath is None else bath.couplings
        if coupled:
            if not params.cavity:
                raise ConfigurationError('A coupled impurity needs the cavity')
            onsite = onsite_force_constants(params)
        else:
            onsite = np.array([[params.omega_loc_sq]])
        onsite[-1, -1] += onsite_shift
        return cls(onsite, params.g, params.kT, frequencies, couplings)

    def forces(self, q):
        n = self.n_impurity
        impurity = q[..., :n]
        bath = q[..., n:]
        f_imp = -impurity @ self.onsite.T
        r = impurity[..., self.anharmonic_index]
        f_imp[..., self.anharmonic_index] -= 2 * self.g * r ** 3
        if len(self.bath_frequencies):
            f_imp -= bath @ self.bath_couplings
            f_bath = (-self.bath_frequencies ** 2 * bath -
                      impurity @ self.bath_couplings.T)
            return np.concatenate([f_imp, f_bath], axis=-1)
        return f_imp

    def potential(self, q):
        n = self.n_impurity
        impurity = q[..., :n]
        bath = q[..., n:]
        r = impurity[..., self.anharmonic_index]
        energy = 0.5 * np.einsum('...i,ij,...j->...', impurity, self.onsite,
                                 impurity)
        energy = energy + 0.5 * self.g * r ** 4
        if len(self.bath_frequencies):
            energy = energy + 0.5 * np.sum(self.bath_frequencies ** 2 *
                                           bath ** 2, axis=-1)
            energy = energy + np.einsum('...b,bi,...i->...', bath,
                                        self.bath_couplings, impurity)
        return energy

    def hessian(self) -> np.ndarray:
        'Harmonic Hessian of the impurity and bath'
        n = self.n_impurity
        hessian = np.zeros((self.n_dof, self.n_dof))
        hessian[:n, :n] = self.onsite
        hessian[n:, n:] = np.diag(self.bath_frequencies ** 2)
        hessian[n:, :n] = self.bath_couplings
        hessian[:n, n:] = self.bath_couplings.T
        return hessian

    @property
    def omega_max(self) -> float:
        eigenvalues = np.linalg.eigvalsh(self.hessian())
        if eigenvalues[0] < 0:
            logger.warning('Impurity Hessian has a negative eigenvalue '
                           '%.3e; the bath overbinds the impurity',
                           eigenvalues[0])
        return float(np.sqrt(max(eigenvalues[-1], 0.0)))


def build_system(params: ModelParams, kind, *, bath=None, **kwargs):
    'Construct the simulated system for a SystemKind'
    kind = SystemKind(kind)
    if kind == SystemKind.matter_chain:
        return MatterChainSystem(params)
    if kind == SystemKind.coupled_chain:
        return CoupledChainSystem(params)
    if bath is None:
        raise ConfigurationError('An impurity simulation needs a bath model',
                                 key='bath')
    return ImpuritySystem.from_params(params, bath, **kwargs)


def resolve_timestep(system, opts: MdOptions) -> MdOptions:
    '''
    Check ``dt * Omega_max <= 0.1`` for a system

    With ``opts.auto_tighten`` the timestep is reduced and the step counts
    scaled so that the simulated times are unchanged.
    '''
    omega_max = system.omega_max
    if opts.dt * omega_max <= STABILITY_LIMIT * (1 + 1e-12):
        return opts
    if not opts.auto_tighten:
        raise TimestepError(
            'dt = {:.4g} a.u. exceeds the stability limit {:.4g} a.u. for '
            'Omega_max = {:.6g} Ha'.format(
                opts.dt, STABILITY_LIMIT / omega_max, omega_max),
            omega_max=omega_max)
    dt = STABILITY_LIMIT / omega_max
    ratio = opts.dt / dt
    logger.warning('Tightening dt from %.4g to %.4g a.u. '
                   '(Omega_max = %.4g Ha)', opts.dt, dt, omega_max)
    return opts.replace(
        dt=dt, n_equil_steps=int(math.ceil(opts.n_equil_steps * ratio)),
        n_prod_steps=int(math.ceil(opts.n_prod_steps * ratio)),
        auto_tighten=False)


def trajectory_generators(seed: int, n_trajectories: int, indices=None):
    'Independent Philox generators, one per trajectory index'
    children = np.random.SeedSequence(seed).spawn(n_trajectories)
    if indices is None:
        indices = range(n_trajectories)
    return [np.random.Generator(np.random.Philox(children[i]))
            for i in indices]


@dataclasses.dataclass
class Trajectory:
    '''
    Recorded NVE production run

    Attributes
    ----------
    index : int
        Trajectory index within the run (selects its random stream)
    dt : float
    stride : int
    positions, velocities : np.ndarray
        ``(n_records, n_observed)``
    energies : np.ndarray
        Total energy at every record
    kT : float
    n_coords : int
        Coordinates per cell of the observed layout
    a : float
        Lattice constant; None for an impurity
    drift : float
    drift_flag : bool
    '''
    index: int
    dt: float
    stride: int
    positions: np.ndarray
    velocities: np.ndarray
    energies: np.ndarray
    kT: float
    n_coords: int = 1
    a: float = None
    drift: float = 0.0
    drift_flag: bool = False

    @property
    def n_records(self) -> int:
        return len(self.positions)

    @property
    def n_sites(self) -> int:
        return self.positions.shape[1] // self.n_coords

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_records) * self.dt * self.stride

    def time_reversed(self) -> 'Trajectory':
        'The same path traversed backwards (velocities negated)'
        return dataclasses.replace(self,
                                   positions=self.positions[::-1].copy(),
                                   velocities=-self.velocities[::-1],
                                   energies=self.energies[::-1].copy())

    def modes(self, k_points) -> tuple:
        '''
        Bloch components ``u_alpha(k, t)`` and their velocities

        Returns
        -------
        u, u_dot : np.ndarray
            ``(n_records, n_k, n_coords)`` complex
        '''
        k_points = np.atleast_1d(np.asarray(k_points, dtype=float))
        n = self.n_sites
        shape = (self.n_records, self.n_coords, n)
        if self.a is None:
            phases = np.ones((len(k_points), n))
        else:
            sites = np.arange(n)
            phases = np.exp(-1j * np.outer(k_points, sites) * self.a)
        phases = phases / np.sqrt(n)
        u = np.einsum('tcj,kj->tkc', self.positions.reshape(shape), phases)
        u_dot = np.einsum('tcj,kj->tkc', self.velocities.reshape(shape),
                          phases)
        return u, u_dot


def energy_drift(energies) -> float:
    '''
    Relative drift between the first and last tenth of a run

    ``|<E>_last - <E>_first| / |<E>_first|``
    '''
    energies = np.asarray(energies)
    n = max(len(energies) // 10, 1)
    first = np.mean(energies[:n], axis=0)
    last = np.mean(energies[-n:], axis=0)
    return np.abs(last - first) / np.abs(first)


def langevin_equilibrate(system, q, v, generators, dt, n_steps, friction,
                         noise_block=256):
    '''
    BAOAB Langevin dynamics at the system temperature

    ``q`` and ``v`` are ``(n_batch, n_dof)`` and updated in place; each row
    draws its noise from its own generator.
    '''
    c1 = math.exp(-friction * dt)
    c2 = math.sqrt((1 - c1 ** 2) * system.kT)
    f = system.forces(q)
    done = 0
    while done < n_steps:
        block = min(noise_block, n_steps - done)
        noise = np.stack([rng.standard_normal((block, system.n_dof))
                          for rng in generators], axis=1)
        for xi in noise:
            v += 0.5 * dt * f
            q += 0.5 * dt * v
            v *= c1
            v += c2 * xi
            q += 0.5 * dt * v
            f = system.forces(q)
            v += 0.5 * dt * f
        done += block
    return q, v


def integrate_nve(system, q, v, dt, n_steps, stride=1):
    """
    Velocity-Verlet production with periodic recording

    Parameters
    ----------
    system
        Anything with ``forces``, ``potential`` and ``n_observed``
    q, v : np.ndarray
        ``(n_dof,)`` or ``(n_batch, n_dof)`` initial conditions
    dt : float
    n_steps : int
    stride : int

    Returns
    -------
    positions, velocities : np.ndarray
        ``(n_records, n_batch, n_observed)``, records at steps
        ``0, stride, 2 stride, ...``
    energies : np.ndarray
        ``(n_records, n_batch)``
    """
    single = np.ndim(q) == 1
    q = np.array(q, dtype=float, ndmin=2)
    v = np.array(v, dtype=float, ndmin=2)
    n_records = n_steps // stride
    n_obs = system.n_observed
    positions = np.empty((n_records, q.shape[0], n_obs))
    velocities = np.empty_like(positions)
    energies = np.empty((n_records, q.shape[0]))

    f = system.forces(q)
    for record in range(n_records):
        positions[record] = q[:, :n_obs]
        velocities[record] = v[:, :n_obs]
        energies[record] = 0.5 * np.sum(v ** 2, axis=-1) + system.potential(q)
        for _ in range(stride):
            v += 0.5 * dt * f
            q += dt * v
            f = system.forces(q)
            v += 0.5 * dt * f
    if single:
        return positions[:, 0], velocities[:, 0], energies[:, 0]
    return positions, velocities, energies


def _run_batch(system, opts, indices):
    generators = trajectory_generators(opts.seed, opts.n_trajectories, indices)
    n_batch = len(indices)
    q = np.zeros((n_batch, system.n_dof))
    v = np.stack([rng.standard_normal(system.n_dof) for rng in generators])
    v *= math.sqrt(system.kT)
    langevin_equilibrate(system, q, v, generators, opts.dt,
                         opts.n_equil_steps, opts.friction)
    positions, velocities, energies = integrate_nve(
        system, q, v, opts.dt, opts.n_prod_steps, opts.stride)
    drifts = energy_drift(energies)
    trajectories = []
    for row, index in enumerate(indices):
        drift = float(drifts[row])
        flag = drift > opts.drift_threshold
        if flag:
            logger.warning('Trajectory %d: relative energy drift %.3e above '
                           '%.1e', index, drift, opts.drift_threshold)
        trajectories.append(Trajectory(
            index=int(index), dt=opts.dt, stride=opts.stride,
            positions=positions[:, row].copy(),
            velocities=velocities[:, row].copy(),
            energies=energies[:, row].copy(), kT=system.kT,
            n_coords=system.n_coords, a=system.a, drift=drift,
            drift_flag=flag))
    return trajectories


def _batches(indices, batch_size):
    indices = list(indices)
    return [indices[i:i + batch_size]
            for i in range(0, len(indices), max(batch_size, 1))]


def run_trajectories(params: ModelParams, system, opts: MdOptions, *,
                     bath=None, indices=None) -> list:
    """
    Thermalize and propagate independent trajectories

    Parameters
    ----------
    params : ModelParams
    system : SystemKind, str or system instance
        ``matter-chain``, ``coupled-chain`` or ``impurity+bath``
    opts : MdOptions
    bath : BathModel, optional
        Required for an impurity system given by kind
    indices : iterable of int, optional
        Subset of trajectory indices to run; all by default

    Returns
    -------
    trajectories : list of Trajectory
        Ordered by index
    """
    if isinstance(system, (str, SystemKind)):
        system = build_system(params, system, bath=bath)
    opts = resolve_timestep(system, opts)
    if indices is None:
        indices = range(opts.n_trajectories)
    batches = _batches(indices, opts.batch_size)
    logger.debug('Running %d trajectories of %s in %d batches',
                 sum(map(len, batches)), system.kind.value, len(batches))
    with concurrent.futures.ThreadPoolExecutor(max(opts.threads, 1)) as pool:
        results = pool.map(lambda batch: _run_batch(system, opts, batch),
                           batches)
        return [traj for batch in results for traj in batch]


def check_commensurate(k_points, a, n_sites):
    'Raise IncommensurateKError unless every k is a supercell wavevector'
    k_points = np.atleast_1d(np.asarray(k_points, dtype=float))
    m = k_points * n_sites * a / (2 * np.pi)
    bad = np.abs(m - np.round(m)) > 1e-8
    if np.any(bad):
        allowed = KGrid.uniform(a, n_sites).points
        raise IncommensurateKError(
            'k = {:.6g} is not commensurate with a {}-site supercell; '
            'allowed k = 2 pi m / (N a)'.format(k_points[bad][0], n_sites),
            allowed=allowed.tolist())


def correlate(u_dot, u, n_lag):
    '''
    Multi-origin ``C_ab(tau) = < u_dot_a(t + tau) u_b(t)* >`` via FFT

    Parameters
    ----------
    u_dot, u : np.ndarray
        ``(n_records, ...)`` with coordinates along the last axis

    Returns
    -------
    correlation : np.ndarray
        ``(n_lag, ..., n, n)``
    '''
    n = len(u)
    size = 2 * n
    a = np.fft.fft(u_dot, n=size, axis=0)
    b = np.fft.fft(u, n=size, axis=0)
    spectrum = a[..., :, np.newaxis] * np.conj(b[..., np.newaxis, :])
    correlation = np.fft.ifft(spectrum, axis=0)[:n_lag]
    counts = (n - np.arange(n_lag)).reshape((n_lag, ) +
                                            (1, ) * (correlation.ndim - 1))
    return correlation / counts


def window_values(kind: WindowKind, times, tau: float):
    kind = WindowKind(kind)
    if kind == WindowKind.exponential:
        return np.exp(-times / tau)
    if kind == WindowKind.hann:
        span = times[-1] if len(times) > 1 else 1.0
        return np.cos(0.5 * np.pi * times / span) ** 2
    return np.ones_like(times)


def one_sided_transform(correlation, record_interval, omega_grid, window,
                        kT, chunk=512):
    '''
    ``(1 / k_B T) int_0^inf dt e^{i omega t} W(t) C(t)``

    Trapezoidal sum with the leading endpoint correction ``-h^2 / 12`` on
    diagonal elements, which uses the classical identity
    ``d/dt <u_dot(t) u(0)> |_0 = -k_B T``.

    Parameters
    ----------
    correlation : np.ndarray
        ``(n_lag, ..., n, n)``
    record_interval : float
    omega_grid : np.ndarray
    window : np.ndarray
        ``(n_lag,)`` window values
    kT : float

    Returns
    -------
    values : np.ndarray
        ``(n_omega, ..., n, n)``
    '''
    h = record_interval
    n_lag = len(correlation)
    times = np.arange(n_lag) * h
    weights = h * np.asarray(window, dtype=float)
    weights[0] *= 0.5
    tail_shape = correlation.shape[1:]
    weighted = (weights[:, np.newaxis] *
                correlation.reshape(n_lag, -1)).astype(complex)
    omega_grid = np.asarray(omega_grid, dtype=float)
    result = np.empty((len(omega_grid), weighted.shape[1]), dtype=complex)
    for start in range(0, len(omega_grid), chunk):
        stop = start + chunk
        phases = np.exp(1j * np.outer(omega_grid[start:stop], times))
        result[start:stop] = phases @ weighted
    result = result.reshape((len(omega_grid), ) + tail_shape) / kT
    n = tail_shape[-1]
    result = result - (h ** 2 / 12.0) * np.eye(n)
    return result


@dataclasses.dataclass
class CorrelationEstimate:
    '''
    Trajectory-averaged ``<u_dot_a(k, t) u_b(-k, 0)>``

    Attributes
    ----------
    times : np.ndarray
    k_points : np.ndarray
    values : np.ndarray
        ``(n_lag, n_k, n, n)`` complex mean
    std_error : np.ndarray
        Block standard error of ``values`` (complex: real and imaginary
        parts separately)
    block_values : np.ndarray
        ``(n_blocks, n_lag, n_k, n, n)`` block means
    n_trajectories : int
    kT : float
    record_interval : float
    metadata : dict
    '''
    times: np.ndarray
    k_points: np.ndarray
    values: np.ndarray
    std_error: np.ndarray
    block_values: np.ndarray
    n_trajectories: int
    kT: float
    record_interval: float
    metadata: dict = dataclasses.field(default_factory=dict)

    def transform(self, omega_grid, window: WindowKind, tau: float):
        '''
        Green's function and spectral-trace standard error on a grid

        Returns
        -------
        values : np.ndarray
            ``(n_k, n_omega, n, n)``
        spectral_error : np.ndarray
            ``(n_k, n_omega)``
        '''
        win = window_values(window, self.times, tau)
        values = one_sided_transform(self.values, self.record_interval,
                                     omega_grid, win, self.kT)
        values = np.moveaxis(values, 0, 1)
        n_blocks = len(self.block_values)
        if n_blocks < 2:
            error = np.full(values.shape[:2], np.nan)
        else:
            stacked = np.moveaxis(self.block_values, 0, -3)
            blocks = one_sided_transform(stacked, self.record_interval,
                                         omega_grid, win, self.kT)
            spectra = -np.trace(blocks, axis1=-2, axis2=-1).imag / np.pi
            # (n_omega, n_k, n_blocks)
            error = np.std(spectra, axis=-1, ddof=1) / np.sqrt(n_blocks)
            error = np.moveaxis(error, 0, 1)
        return values, error


class CorrelationAccumulator:
    '''
    Streaming reduction of trajectory correlations into blocks

    Trajectory ``i`` always lands in block ``i % n_blocks``, so the
    estimate does not depend on how trajectories were batched.
    '''

    def __init__(self, k_points, n_lag, n_coords, n_blocks, *, kT,
                 record_interval):
        self.k_points = np.atleast_1d(np.asarray(k_points, dtype=float))
        self.n_lag = int(n_lag)
        self.n_blocks = max(int(n_blocks), 1)
        self.kT = kT
        self.record_interval = record_interval
        shape = (self.n_blocks, self.n_lag, len(self.k_points), n_coords,
                 n_coords)
        self._sums = np.zeros(shape, dtype=complex)
        self._counts = np.zeros(self.n_blocks, dtype=int)
        self.drift_flags = 0

    @property
    def n_trajectories(self) -> int:
        return int(self._counts.sum())

    def add(self, trajectory: Trajectory):
        if trajectory.n_records < self.n_lag:
            raise ConfigurationError('Trajectory is shorter than the '
                                     'correlation length')
        u, u_dot = trajectory.modes(self.k_points)
        block = trajectory.index % self.n_blocks
        self._sums[block] += correlate(u_dot, u, self.n_lag)
        self._counts[block] += 1
        self.drift_flags += int(trajectory.drift_flag)

    def add_all(self, trajectories):
        for trajectory in sorted(trajectories, key=lambda t: t.index):
            self.add(trajectory)

    def finalize(self, **metadata) -> CorrelationEstimate:
        if self.n_trajectories == 0:
            raise ConfigurationError('No trajectories were accumulated')
        filled = self._counts > 0
        values = self._sums[filled].sum(axis=0) / self.n_trajectories
        block_values = (self._sums[filled] /
                        self._counts[filled][:, np.newaxis, np.newaxis,
                                             np.newaxis, np.newaxis])
        n_blocks = len(block_values)
        if n_blocks > 1:
            std_error = (np.std(block_values.real, axis=0, ddof=1) +
                         1j * np.std(block_values.imag, axis=0, ddof=1)
                         ) / np.sqrt(n_blocks)
        else:
            std_error = np.full(values.shape, np.nan + 1j * np.nan)
        metadata.setdefault('drift_flags', self.drift_flags)
        return CorrelationEstimate(
            times=np.arange(self.n_lag) * self.record_interval,
            k_points=self.k_points, values=values, std_error=std_error,
            block_values=block_values, n_trajectories=self.n_trajectories,
            kT=self.kT, record_interval=self.record_interval,
            metadata=metadata)


def _default_blocks(n_trajectories):
    return min(n_trajectories, 10)


def accumulate(trajectories, k_points=(0.0, ), opts: MdOptions = None,
               n_lag: int = None) -> CorrelationEstimate:
    'Correlation estimate from a list of trajectories'
    trajectories = list(trajectories)
    if not trajectories:
        raise ConfigurationError('No trajectories given')
    first = trajectories[0]
    if first.a is not None:
        check_commensurate(k_points, first.a, first.n_sites)
    if n_lag is None:
        n_lag = (opts.max_lag if opts is not None and opts.max_lag
                 else first.n_records // 2)
    accumulator = CorrelationAccumulator(
        k_points, n_lag, first.n_coords,
        _default_blocks(len(trajectories)), kT=first.kT,
        record_interval=first.dt * first.stride)
    accumulator.add_all(trajectories)
    return accumulator.finalize()


def estimate_gf(trajectories, kgrid: KGrid, omega_grid, opts: MdOptions,
                delta: float = None, *,
                omega_min: float = None) -> MatrixGF:
    """
    Momentum-resolved Green's function from chain trajectories

    ``D(k, omega) = (1 / k_B T) int_0^inf dt e^{i omega t} W(t)
    <u_dot(k, t) u^T(-k, 0)>``

    Parameters
    ----------
    trajectories : list of Trajectory
    kgrid : KGrid
        Wavevectors commensurate with the supercell
    omega_grid : np.ndarray
    opts : MdOptions
    delta : float, optional
        Lattice broadening the exponential window is matched to
    omega_min : float, optional
        Slowest mode frequency; estimated from the trajectories by
        equipartition when omitted

    Returns
    -------
    gf : MatrixGF
        ``metadata`` carries the spectral standard error, estimator
        settings and ``record_periods``
    """
    trajectories = list(trajectories)
    estimate = accumulate(trajectories, kgrid.points, opts)
    if omega_min is None:
        omega_min = equipartition_frequency(trajectories, kgrid.points)
    first = trajectories[0]
    periods = check_record_length(
        first.n_records * first.dt * first.stride, omega_min)
    gf = _estimate_to_gf(estimate, kgrid, omega_grid, opts, delta)
    gf.metadata['record_periods'] = periods
    return gf


def equipartition_frequency(trajectories, k_points) -> float:
    '''
    Slowest frequency in a set of trajectories

    A harmonic normal mode has ``omega^2 = <|u_dot|^2> / <|u|^2>``; the
    smallest ratio over wavevectors and coordinates is returned.
    '''
    velocity_sq, position_sq = 0.0, 0.0
    for trajectory in trajectories:
        u, u_dot = trajectory.modes(k_points)
        velocity_sq = velocity_sq + np.mean(np.abs(u_dot) ** 2, axis=0)
        position_sq = position_sq + np.mean(np.abs(u) ** 2, axis=0)
    return float(np.sqrt(np.min(velocity_sq / position_sq)))


def check_record_length(record_time: float, omega_min: float) -> float:
    '''
    Periods of the slowest mode covered by one production record

    Logs a warning below ``MIN_RECORD_PERIODS``.
    '''
    periods = record_time * omega_min / (2 * np.pi)
    if periods < MIN_RECORD_PERIODS:
        logger.warning('Production records span %.1f periods of the '
                       'slowest mode (%.1f meV); at least %d are needed. '
                       'Increase n_prod_steps or stride.', periods,
                       to_mev(omega_min), MIN_RECORD_PERIODS)
    return periods


def _estimate_to_gf(estimate, kgrid, omega_grid, opts, delta):
    tau = opts.window_time(delta)
    values, error = estimate.transform(omega_grid, opts.window, tau)
    return MatrixGF(kgrid=kgrid, omega_grid=np.asarray(omega_grid),
                    values=values, delta=1.0 / tau,
                    metadata={'method': 'MD',
                              'spectral_std_error': error,
                              'n_trajectories': estimate.n_trajectories,
                              'window': WindowKind(opts.window).value,
                              'tau_damp': tau,
                              'record_interval': estimate.record_interval,
                              'drift_flags': estimate.metadata.get(
                                  'drift_flags', 0)})


def sample_correlation(params: ModelParams, system, opts: MdOptions,
                       k_points=(0.0, ), *, bath=None) -> CorrelationEstimate:
    '''
    Run all trajectories in bounded-memory batches and reduce them

    Only one batch of trajectories is held at a time.
    '''
    if isinstance(system, (str, SystemKind)):
        system = build_system(params, system, bath=bath)
    opts = resolve_timestep(system, opts)
    if system.a is not None:
        check_commensurate(k_points, system.a, system.n_sites)
    n_lag = opts.max_lag or opts.n_records // 2
    accumulator = CorrelationAccumulator(
        k_points, n_lag, system.n_coords,
        _default_blocks(opts.n_trajectories), kT=system.kT,
        record_interval=opts.record_interval)
    batches = _batches(range(opts.n_trajectories), opts.batch_size)
    with concurrent.futures.ThreadPoolExecutor(max(opts.threads, 1)) as pool:
        for trajectories in pool.map(
                lambda batch: _run_batch(system, opts, batch), batches):
            accumulator.add_all(trajectories)
    estimate = accumulator.finalize(dt=opts.dt, stride=opts.stride)
    logger.info('Accumulated %d trajectories of %s (%d drift flags)',
                estimate.n_trajectories, system.kind.value,
                accumulator.drift_flags)
    return estimate


def md_lattice_gf(params: ModelParams, kgrid: KGrid, omega_grid,
                  opts: MdOptions, delta: float = None, *,
                  coupled: bool = False) -> MatrixGF:
    'Exact classical lattice Green\'s function of the chain on a k-grid'
    kind = SystemKind.coupled_chain if coupled else SystemKind.matter_chain
    system = build_system(params, kind)
    periods = check_record_length(opts.n_records * opts.record_interval,
                                  system.omega_min)
    estimate = sample_correlation(params, system, opts, kgrid.points)
    gf = _estimate_to_gf(estimate, kgrid, omega_grid, opts, delta)
    gf.metadata['record_periods'] = periods
    return gf


def md_impurity_gf(system: ImpuritySystem, omega_grid, opts: MdOptions,
                   delta: float = None) -> LocalGF:
    'Impurity Green\'s function ``D_imp(omega)`` with its standard error'
    estimate = sample_correlation(None, system, opts)
    tau = opts.window_time(delta)
    values, error = estimate.transform(omega_grid, opts.window, tau)
    values = values[0]
    if system.n_impurity == 1:
        values = values[:, 0, 0]
    return LocalGF(omega_grid=np.asarray(omega_grid), values=values,
                   delta=1.0 / tau, std_error=error[0],
                   metadata={'method': 'MD',
                             'n_trajectories': estimate.n_trajectories,
                             'window': WindowKind(opts.window).value,
                             'tau_damp': tau})


def write_trajectory_dump(file_name, trajectories):
    '''
    Write trajectories in the raw binary layout

    Header (little endian): magic ``VPTRAJ``, version, dt, stride, number of
    recorded coordinates, trajectory count, record count.  Then, for each
    trajectory, positions followed by velocities as ``(n_records, n_dof)``
    64-bit floats.
    '''
    trajectories = list(trajectories)
    if not trajectories:
        raise ConfigurationError('Nothing to dump')
    first = trajectories[0]
    header = np.zeros(1, dtype=DUMP_HEADER)
    header['magic'] = DUMP_MAGIC
    header['version'] = DUMP_VERSION
    header['dt'] = first.dt
    header['stride'] = first.stride
    header['n_dof'] = first.positions.shape[1]
    header['n_trajectories'] = len(trajectories)
    header['n_records'] = first.n_records
    with open(file_name, 'wb') as f:
        f.write(header.tobytes())
        for trajectory in trajectories:
            f.write(trajectory.positions.astype('<f8').tobytes())
            f.write(trajectory.velocities.astype('<f8').tobytes())


def read_trajectory_dump(file_name, *, kT: float = float('nan'),
                         n_coords: int = 1, a: float = None) -> list:
    'Read trajectories written by `write_trajectory_dump`'
    with open(file_name, 'rb') as f:
        raw = f.read()
    header = np.frombuffer(raw[:DUMP_HEADER.itemsize], dtype=DUMP_HEADER)[0]
    if header['magic'] != DUMP_MAGIC.rstrip(b'\x00'):
        raise ConfigurationError('{} is not a trajectory dump'
                                 ''.format(file_name))
    if header['version'] != DUMP_VERSION:
        raise ConfigurationError('Unsupported dump version {}'
                                 ''.format(header['version']))
    shape = (int(header['n_records']), int(header['n_dof']))
    data = np.frombuffer(raw[DUMP_HEADER.itemsize:], dtype='<f8')
    data = data.reshape(int(header['n_trajectories']), 2, *shape)
    trajectories = []
    for index, (positions, velocities) in enumerate(data):
        trajectories.append(Trajectory(
            index=index, dt=float(header['dt']), stride=int(header['stride']),
            positions=positions.copy(), velocities=velocities.copy(),
            energies=np.full(shape[0], np.nan), kT=kT, n_coords=n_coords,
            a=a))
    return trajectories
