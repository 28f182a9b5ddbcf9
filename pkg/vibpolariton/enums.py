from enum import Enum


class KGridKind(str, Enum):
    uniform = 'uniform-BZ'
    display = 'display-path'


class BasisTag(str, Enum):
    site = 'site-coordinates'
    bands = 'phonon-bands'


class WindowKind(str, Enum):
    exponential = 'exponential'
    hann = 'hann'
    none = 'none'


class SystemKind(str, Enum):
    matter_chain = 'matter-chain'
    coupled_chain = 'coupled-chain'
    impurity = 'impurity+bath'


class Method(str, Enum):
    harmonic = 'harmonic'
    scp = 'SCP'
    vdmft = 'VDMFT'
    md = 'MD'


class TuningCase(str, Enum):
    bare = 'bare'
    scp = 'scp'
    vdmft = 'vdmft'
