import pathlib

from . import (harmonic_dispersion, harmonic_vdmft, impurity_spectrum,
               scp_hardening)

WATER_CONFIG = pathlib.Path(__file__).parent / 'water.yaml'

__all__ = ['harmonic_dispersion', 'harmonic_vdmft', 'impurity_spectrum',
           'scp_hardening', 'WATER_CONFIG']
