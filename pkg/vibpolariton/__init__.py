from .base import Serializable
from .config import (GridOptions, OutputOptions, RunConfig, parse_config,
                     parse_config_text)
from .enums import (BasisTag, KGridKind, Method, SystemKind, TuningCase,
                    WindowKind)
from .exceptions import (BathReconstructionError, ConfigurationError,
                         ConvergenceFailure, GridMismatchError,
                         IncommensurateKError, InstabilityError,
                         PolaritonError, TimestepError)
from .experiments import Experiment, default_registry
from .lattice import (KGrid, LocalGF, MatrixGF, PhononBasis, diagonalize,
                      dynamical_matrix, harmonic_gf, phonon_basis)
from .manifest import RunManifest, code_version
from .md import (CorrelationEstimate, MdOptions, Trajectory, md_impurity_gf,
                 md_lattice_gf, run_trajectories)
from .model import (DisplacementState, ModelParams,
                    analytic_cavity_dispersion, effective_couplings, forces,
                    potential_energy)
from .registry import ExperimentRegistry
from .scp import ScpOptions, ScpResult, scp_dispersion, scp_solve
from .spectra import (Peak, RabiScan, SpectrumResult, find_peaks, rabi_scan,
                      rabi_splitting, spectral_function)
from .vdmft import (BathModel, Hybridization, SelfEnergy, VdmftOptions,
                    VdmftResult, assemble_polariton_gf, discretize_bath,
                    extract_self_energy, hybridization_update, lattice_gf,
                    local_gf, solve_impurity, vdmft_loop)

__version__ = code_version()

__all__ = [
    'BasisTag',
    'BathModel',
    'BathReconstructionError',
    'ConfigurationError',
    'ConvergenceFailure',
    'CorrelationEstimate',
    'DisplacementState',
    'Experiment',
    'ExperimentRegistry',
    'GridMismatchError',
    'GridOptions',
    'Hybridization',
    'IncommensurateKError',
    'InstabilityError',
    'KGrid',
    'KGridKind',
    'LocalGF',
    'MatrixGF',
    'MdOptions',
    'Method',
    'ModelParams',
    'OutputOptions',
    'Peak',
    'PhononBasis',
    'PolaritonError',
    'RabiScan',
    'RunConfig',
    'RunManifest',
    'ScpOptions',
    'ScpResult',
    'SelfEnergy',
    'Serializable',
    'SpectrumResult',
    'SystemKind',
    'TimestepError',
    'Trajectory',
    'TuningCase',
    'VdmftOptions',
    'VdmftResult',
    'WindowKind',
    'analytic_cavity_dispersion',
    'assemble_polariton_gf',
    'default_registry',
    'diagonalize',
    'discretize_bath',
    'dynamical_matrix',
    'effective_couplings',
    'extract_self_energy',
    'find_peaks',
    'forces',
    'harmonic_gf',
    'hybridization_update',
    'lattice_gf',
    'local_gf',
    'md_impurity_gf',
    'md_lattice_gf',
    'parse_config',
    'parse_config_text',
    'phonon_basis',
    'potential_energy',
    'rabi_scan',
    'rabi_splitting',
    'run_trajectories',
    'scp_dispersion',
    'scp_solve',
    'solve_impurity',
    'spectral_function',
    'vdmft_loop',
]
