'''
Unit conversions between laboratory units and atomic units

Everything inside the package is expressed in atomic units (hbar = 1,
mass-weighted coordinates); these constants are only used at the
configuration boundary and when writing tables.
'''

HARTREE_TO_MEV = 27211.386
BOHR_TO_ANGSTROM = 0.529177
BOLTZMANN_HARTREE_PER_K = 3.1668115e-6
AU_TIME_TO_FS = 0.0241888
HBAR_MEV_FS = 658.2119569
HARTREE_TO_CM = 219474.63
SPEED_OF_LIGHT = 137.035999

MEV_TO_HARTREE = 1.0 / HARTREE_TO_MEV
ANGSTROM_TO_BOHR = 1.0 / BOHR_TO_ANGSTROM
FS_TO_AU_TIME = 1.0 / AU_TIME_TO_FS


def mev(value):
    'meV -> Hartree'
    return value * MEV_TO_HARTREE


def to_mev(value):
    'Hartree -> meV'
    return value * HARTREE_TO_MEV


def kelvin_to_hartree(temperature):
    'Thermal energy k_B T in Hartree'
    return temperature * BOLTZMANN_HARTREE_PER_K


def lifetime_fs(fwhm_mev):
    '''
    Lifetime corresponding to a Lorentzian full width at half maximum

    Parameters
    ----------
    fwhm_mev : float
        Full width at half maximum in meV

    Returns
    -------
    tau : float
        hbar / FWHM in femtoseconds
    '''
    if fwhm_mev <= 0:
        return float('inf')
    return HBAR_MEV_FS / fwhm_mev
