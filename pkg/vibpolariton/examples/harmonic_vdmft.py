'''
VDMFT of a harmonic chain: the self-energy vanishes after one iteration
'''
import logging

import numpy as np

from vibpolariton import ModelParams, VdmftOptions, vdmft_loop

logger = logging.getLogger(__name__)


def main(n_k=128, n_omega=1024):
    params = ModelParams.water_defaults(g_omega_m3=0.0).matter_chain()
    opts = VdmftOptions(n_k=n_k, n_omega=n_omega, n_bath=200, max_iter=3,
                        bath_tolerance=1.0)
    result = vdmft_loop(params, opts)
    sigma = np.max(np.abs(result.sigma.values)) / params.omega_m ** 2
    print('converged: {} after {} iteration(s); max |Sigma| / omega_m^2 = '
          '{:.2e}'.format(result.converged, result.n_iterations, sigma))
    return result


if __name__ == '__main__':
    logging.basicConfig(level='DEBUG')
    main()
