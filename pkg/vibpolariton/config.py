'''
Configuration files

Files are YAML, one mapping per section::

    # comment
    model:
      a: 3.0 angstrom
      omega_m: 440 meV
      g: 4.3 omega_m^3

Keys are case-sensitive (``omega_m`` and ``Omega_m`` are different keys).
Each section is a pydantic model holding its keys, defaults and allowed
ranges.  Values without a unit suffix are taken in meV, Angstrom, Kelvin and
femtoseconds.
'''
import dataclasses
import logging
import os
import pathlib
from typing import Literal, Optional, Tuple

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field, field_validator
from ruamel.yaml import YAML
from ruamel.yaml.comments import CommentedMap
from ruamel.yaml.error import MarkedYAMLError, YAMLError

from . import units
from .exceptions import ConfigurationError
from .lattice import KGrid, frequency_grid
from .md import MdOptions
from .model import ModelParams
from .scp import ScpOptions
from .vdmft import VdmftOptions

logger = logging.getLogger(__name__)

THREADS_ENVIRONMENT = 'VIBPOLARITON_THREADS'

ENERGY_UNITS = {
    'meV': units.MEV_TO_HARTREE,
    'eV': 1000.0 * units.MEV_TO_HARTREE,
    'hartree': 1.0,
    'Ha': 1.0,
    'au': 1.0,
    'cm-1': 1.0 / units.HARTREE_TO_CM,
}
LENGTH_UNITS = {
    'angstrom': units.ANGSTROM_TO_BOHR,
    'A': units.ANGSTROM_TO_BOHR,
    'bohr': 1.0,
    'au': 1.0,
}
TIME_UNITS = {
    'fs': units.FS_TO_AU_TIME,
    'au': 1.0,
}
TEMPERATURE_UNITS = {
    'K': 1.0,
}
ANHARMONICITY_UNITS = ('omega_m^3', 'au')


def _split_quantity(value, default_suffix):
    'Number and unit suffix of ``440``, ``"440 meV"`` or ``"0.44 eV"``'
    if isinstance(value, bool):
        raise ValueError('expected a number, got {!r}'.format(value))
    if isinstance(value, (int, float)):
        return float(value), default_suffix
    parts = str(value).split()
    if not 1 <= len(parts) <= 2:
        raise ValueError('expected a number with an optional unit, got '
                         '{!r}'.format(value))
    try:
        number = float(parts[0])
    except ValueError:
        raise ValueError('{!r} is not a number'.format(parts[0])) from None
    return number, parts[1] if len(parts) == 2 else default_suffix


def _quantity(value, table, default_suffix):
    if value is None:
        return None
    number, suffix = _split_quantity(value, default_suffix)
    if suffix not in table:
        raise ValueError('bad unit suffix {!r} (use {})'.format(
            suffix, ', '.join(table)))
    return number * table[suffix]


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class ModelSection(_Section):
    'Chain, cavity and light-matter coupling'
    a: float = Field(gt=0)
    omega_m: float = Field(gt=0)
    Omega_m: float = Field(ge=0)
    g: Tuple[float, str]
    T: float = Field(gt=0)
    omega_0: Optional[float] = Field(None, gt=0)
    eta: float = Field(0.1, ge=0)
    n_sites: int = Field(128, ge=2)
    stencil_order: Literal[2, 4, 6, 8] = 2

    @field_validator('a', mode='before')
    @classmethod
    def _length(cls, value):
        return _quantity(value, LENGTH_UNITS, 'angstrom')

    @field_validator('omega_m', 'Omega_m', 'omega_0', mode='before')
    @classmethod
    def _energy(cls, value):
        return _quantity(value, ENERGY_UNITS, 'meV')

    @field_validator('T', mode='before')
    @classmethod
    def _temperature(cls, value):
        return _quantity(value, TEMPERATURE_UNITS, 'K')

    @field_validator('g', mode='before')
    @classmethod
    def _anharmonicity(cls, value):
        number, suffix = _split_quantity(value, 'omega_m^3')
        if suffix not in ANHARMONICITY_UNITS:
            raise ValueError('bad unit suffix {!r} (use {})'.format(
                suffix, ' or '.join(ANHARMONICITY_UNITS)))
        return number, suffix


class GridSection(_Section):
    n_k: int = Field(512, ge=1)
    n_display: int = Field(201, ge=2)
    display_span: float = Field(20.0, gt=0)
    n_omega: int = Field(4096, ge=2)
    omega_max_factor: float = Field(3.0, gt=0)
    delta: float = Field(units.mev(1.0), gt=0)

    @field_validator('delta', mode='before')
    @classmethod
    def _energy(cls, value):
        return _quantity(value, ENERGY_UNITS, 'meV')


class ScpSection(_Section):
    tol: float = Field(1e-8, gt=0)
    mixing: float = Field(0.5, gt=0, le=1)
    max_iter: int = Field(200, ge=1)
    temperatures: Tuple[float, ...] = Field((100.0, 200.0, 300.0, 400.0),
                                            min_length=1)

    @field_validator('temperatures', mode='before')
    @classmethod
    def _temperature_list(cls, value):
        'A YAML list or a comma-separated string such as ``"100, 300 K"``'
        if isinstance(value, str):
            text = value.strip()
            if text.endswith('K'):
                text = text[:-1]
            value = [item for item in text.split(',') if item.strip()]
        elif not isinstance(value, (list, tuple)):
            value = [value]
        temperatures = [_quantity(item, TEMPERATURE_UNITS, 'K')
                        for item in value]
        if any(temperature <= 0 for temperature in temperatures):
            raise ValueError('temperatures must be positive')
        return tuple(temperatures)


class MdSection(_Section):
    dt: float = Field(4.0, gt=0)
    n_equil_steps: int = Field(4096, ge=0)
    n_prod_steps: int = Field(65536, ge=2)
    n_trajectories: int = Field(100, ge=1)
    friction: float = Field(1e-3, gt=0)
    stride: int = Field(8, ge=1)
    window: Literal['exponential', 'hann', 'none'] = 'exponential'
    tau_damp: Optional[float] = Field(None, gt=0)
    batch_size: int = Field(10, ge=1)
    auto_tighten: bool = False
    drift_threshold: float = Field(1e-4, gt=0)
    coupled: bool = False

    @field_validator('dt', 'tau_damp', mode='before')
    @classmethod
    def _time(cls, value):
        return _quantity(value, TIME_UNITS, 'fs')


class VdmftSection(_Section):
    n_bath: int = Field(300, ge=1)
    mixing: float = Field(0.5, gt=0, le=1)
    max_iter: int = Field(8, ge=1)
    tol_sigma: float = Field(1e-3, gt=0)
    tol_spectral: float = Field(0.05, gt=0)
    bath_tolerance: float = Field(0.25, gt=0)
    causality_tolerance: float = Field(1e-6, ge=0)
    smoothing_window: int = Field(21, ge=0)
    smoothing_order: int = Field(3, ge=0)
    exact_harmonic: bool = True
    coupled: bool = False


class OutputSection(_Section):
    directory: str = '.'
    plot_scripts: bool = True
    dump_trajectories: bool = False


class RunSection(_Section):
    seed: int = Field(1729, ge=0)
    threads: int = Field(1, ge=1)


class ConfigFile(_Section):
    'Every section of a configuration file'
    model: ModelSection
    grid: GridSection = Field(default_factory=GridSection)
    scp: ScpSection = Field(default_factory=ScpSection)
    md: MdSection = Field(default_factory=MdSection)
    vdmft: VdmftSection = Field(default_factory=VdmftSection)
    output: OutputSection = Field(default_factory=OutputSection)
    run: RunSection = Field(default_factory=RunSection)


@dataclasses.dataclass
class GridOptions:
    '''
    Wavevector and frequency grids

    Attributes
    ----------
    n_k : int
        Uniform Brillouin-zone grid for zone averages
    n_display : int
        Points on each display path
    display_span : float
        Near-zone-center path extends to ``display_span * omega_m / c``
    n_omega : int
    omega_max_factor : float
        Frequency grid ends at ``omega_max_factor * omega_m``
    delta : float
        Lorentzian broadening (Hartree)
    '''
    n_k: int = 512
    n_display: int = 201
    display_span: float = 20.0
    n_omega: int = 4096
    omega_max_factor: float = 3.0
    delta: float = units.mev(1.0)

    def uniform(self, params: ModelParams) -> KGrid:
        return KGrid.uniform(params.a, self.n_k)

    def display(self, params: ModelParams) -> KGrid:
        return KGrid.display(params, self.n_display,
                             k_max=self.display_span * params.omega_m /
                             params.c)

    def full_zone(self, params: ModelParams) -> KGrid:
        return KGrid.full_zone(params.a, self.n_display)

    def omega_grid(self, params: ModelParams) -> np.ndarray:
        return frequency_grid(self.omega_max_factor * params.omega_m,
                              self.n_omega)


@dataclasses.dataclass
class OutputOptions:
    directory: pathlib.Path = pathlib.Path('.')
    plot_scripts: bool = True
    dump_trajectories: bool = False

    def __post_init__(self):
        self.directory = pathlib.Path(self.directory)


@dataclasses.dataclass
class RunConfig:
    '''
    Everything a run needs: parameters, per-stage options and provenance

    Attributes
    ----------
    params : ModelParams
        Coupled-model parameters (atomic units)
    grid : GridOptions
    scp : ScpOptions
    md : MdOptions
    vdmft : VdmftOptions
    output : OutputOptions
    seed : int
    threads : int
    md_coupled : bool
        Simulate the coupled chain instead of the isolated matter chain
    resolved : dict
        Every key with its final value as read or defaulted, by section
    source : str
    '''
    params: ModelParams
    grid: GridOptions
    scp: ScpOptions
    md: MdOptions
    vdmft: VdmftOptions
    output: OutputOptions
    seed: int = 1729
    threads: int = 1
    md_coupled: bool = False
    resolved: dict = dataclasses.field(default_factory=dict)
    source: str = None

    def replace(self, **changes) -> 'RunConfig':
        return dataclasses.replace(self, **changes)

    def with_seed(self, seed: int) -> 'RunConfig':
        resolved = _with_value(self.resolved, 'run', 'seed', seed)
        return self.replace(seed=seed, md=self.md.replace(seed=seed),
                            resolved=resolved)

    def with_threads(self, threads: int) -> 'RunConfig':
        if threads < 1:
            raise ConfigurationError('threads must be at least 1',
                                     key='threads')
        resolved = _with_value(self.resolved, 'run', 'threads', threads)
        return self.replace(threads=threads,
                            md=self.md.replace(threads=threads),
                            resolved=resolved)

    def with_output(self, directory) -> 'RunConfig':
        resolved = _with_value(self.resolved, 'output', 'directory',
                               str(directory))
        return self.replace(output=dataclasses.replace(
            self.output, directory=pathlib.Path(directory)),
            resolved=resolved)

    def echo(self) -> dict:
        'Resolved configuration for the run manifest'
        return {section: dict(values)
                for section, values in self.resolved.items()}


def _with_value(resolved, section, key, value):
    resolved = {name: dict(values) for name, values in resolved.items()}
    resolved.setdefault(section, {})[key] = value
    return resolved



def _load_document(text):
    'Sections of a YAML text and the line number of every key'
    yaml = YAML(typ='rt')
    try:
        document = yaml.load(text)
    except MarkedYAMLError as ex:
        mark = ex.problem_mark or ex.context_mark
        raise ConfigurationError(
            'Cannot parse configuration: {}'.format(ex.problem),
            line=mark.line + 1 if mark is not None else None) from None
    except YAMLError as ex:
        raise ConfigurationError(
            'Cannot parse configuration: {}'.format(ex)) from None

    if document is None:
        document = CommentedMap()
    if not isinstance(document, CommentedMap):
        raise ConfigurationError('Configuration must be a mapping of '
                                 'sections', line=1)

    lines = {}
    sections = {}
    for name, values in document.items():
        section = str(name)
        if values is None:
            values = CommentedMap()
        lines[(section, None)] = document.lc.key(name)[0] + 1
        if isinstance(values, CommentedMap):
            for key in values:
                lines[(section, str(key))] = values.lc.key(key)[0] + 1
            values = {str(key): value for key, value in values.items()}
        sections[section] = values
    sections.setdefault('model', {})
    return sections, lines


def _validation_error(ex, lines):
    'ConfigurationError naming the key and line of the first problem'
    errors = ex.errors()
    missing = [err['loc'][-1] for err in errors
               if err['type'] == 'missing' and len(err['loc']) == 2]
    if missing:
        return ConfigurationError('Missing required keys: {}'.format(
            ', '.join(str(key) for key in missing)))

    err = errors[0]
    section = str(err['loc'][0])
    key = str(err['loc'][1]) if len(err['loc']) > 1 else None
    line = lines.get((section, key), lines.get((section, None)))
    if err['type'] == 'extra_forbidden':
        if key is None:
            return ConfigurationError('Unknown section [{}]'.format(section),
                                      line=line)
        return ConfigurationError('Unknown key in [{}]'.format(section),
                                  key=key, line=line)
    return ConfigurationError(err['msg'], key=key, line=line)


def _build_params(model, lines):
    number, suffix = model.g
    g = abs(number) * model.omega_m ** 3 if suffix == 'omega_m^3' \
        else abs(number)
    omega_0 = model.omega_0 if model.omega_0 is not None else model.omega_m
    try:
        return ModelParams(a=model.a, omega_m=model.omega_m,
                           Omega_m=model.Omega_m, g=g, omega_0=omega_0,
                           eta=model.eta, T=model.T, n_sites=model.n_sites,
                           stencil_order=model.stencil_order)
    except ConfigurationError as ex:
        raise ConfigurationError(ex.reason, key=ex.key,
                                 line=lines.get(('model', ex.key))) from None


def _lab_units(values):
    'Resolved values in input units for the manifest echo'
    echo = {section: dict(keys) for section, keys in values.items()}
    model = echo['model']
    model['a'] = model['a'] / units.ANGSTROM_TO_BOHR
    for key in ('omega_m', 'Omega_m', 'omega_0'):
        if model[key] is not None:
            model[key] = units.to_mev(model[key])
    number, suffix = model['g']
    model['g'] = '{} {}'.format(number, suffix)
    echo['scp']['temperatures'] = list(echo['scp']['temperatures'])
    echo['grid']['delta'] = units.to_mev(echo['grid']['delta'])
    for key in ('dt', 'tau_damp'):
        if echo['md'][key] is not None:
            echo['md'][key] = echo['md'][key] * units.AU_TIME_TO_FS
    return echo


def parse_config_text(text: str, *, source: str = '<string>',
                      environ=None) -> RunConfig:
    """
    Parse configuration text

    Parameters
    ----------
    text : str
    source : str, optional
        Name used in log messages and the manifest
    environ : mapping, optional
        Environment for the thread-count override; ``os.environ`` by
        default

    Returns
    -------
    config : RunConfig

    Raises
    ------
    ConfigurationError
        Unknown or missing keys, bad unit suffixes and out-of-range values,
        with the key name and line number
    """
    sections, lines = _load_document(text)
    try:
        values = ConfigFile.model_validate(sections)
    except pydantic.ValidationError as ex:
        raise _validation_error(ex, lines) from None
    params = _build_params(values.model, lines)

    grid = GridOptions(**values.grid.model_dump())
    scp = ScpOptions(n_k=grid.n_k, **values.scp.model_dump())

    run = values.run
    md_values = values.md.model_dump()
    md_coupled = md_values.pop('coupled')
    md = MdOptions(seed=run.seed, threads=run.threads, **md_values)
    vdmft = VdmftOptions(n_omega=grid.n_omega,
                         omega_max_factor=grid.omega_max_factor,
                         delta_mev=units.to_mev(grid.delta), n_k=grid.n_k,
                         **values.vdmft.model_dump())
    output = OutputOptions(**values.output.model_dump())
    config = RunConfig(params=params, grid=grid, scp=scp, md=md, vdmft=vdmft,
                       output=output, seed=run.seed, threads=run.threads,
                       md_coupled=md_coupled,
                       resolved=_lab_units(values.model_dump()),
                       source=source)

    environ = os.environ if environ is None else environ
    if environ.get(THREADS_ENVIRONMENT):
        try:
            threads = int(environ[THREADS_ENVIRONMENT])
        except ValueError:
            raise ConfigurationError('{} must be an integer'.format(
                THREADS_ENVIRONMENT), key='threads') from None
        config = config.with_threads(threads)
        logger.debug('Thread count %d from %s', threads, THREADS_ENVIRONMENT)
    logger.debug('Parsed configuration from %s', source)
    return config


def parse_config(path, *, environ=None) -> RunConfig:
    """
    Read and validate a configuration file

    Parameters
    ----------
    path : str or pathlib.Path

    Returns
    -------
    config : RunConfig
    """
    path = pathlib.Path(path)
    if not path.exists():
        raise ConfigurationError('Configuration file {} does not exist'
                                 ''.format(path))
    return parse_config_text(path.read_text(), source=str(path),
                             environ=environ)
