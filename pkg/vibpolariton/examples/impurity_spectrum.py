'''
MD spectrum of a single quartic oscillator without a bath
'''
import logging

from vibpolariton import MdOptions, ModelParams, find_peaks, md_impurity_gf
from vibpolariton.lattice import frequency_grid
from vibpolariton.md import ImpuritySystem
from vibpolariton.units import mev

logger = logging.getLogger(__name__)


def main(n_trajectories=8, n_prod_steps=4096):
    params = ModelParams.water_defaults().matter_chain()
    system = ImpuritySystem(params.omega_m ** 2, params.g, params.kT)
    opts = MdOptions(n_trajectories=n_trajectories, n_equil_steps=1024,
                     n_prod_steps=n_prod_steps, batch_size=4, stride=4)
    omega = frequency_grid(3 * params.omega_m, 1024)
    gf = md_impurity_gf(system, omega, opts, delta=mev(10.0))
    peaks = find_peaks(omega, gf.spectral)
    for peak in peaks:
        print('peak at {:.1f} meV, FWHM {:.1f} meV'.format(peak.position_mev,
                                                        peak.fwhm_mev))
    return gf, peaks


if __name__ == '__main__':
    logging.basicConfig(level='DEBUG')
    main()
