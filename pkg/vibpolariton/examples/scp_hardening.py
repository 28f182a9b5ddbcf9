import logging

from vibpolariton import KGrid, ModelParams, scp_solve
from vibpolariton.scp import single_site_frequency
from vibpolariton.units import to_mev

logger = logging.getLogger(__name__)


def main(n_k=256, temperatures=(100.0, 300.0)):
    params = ModelParams.water_defaults().matter_chain()
    kgrid = KGrid.uniform(params.a, n_k)
    results = {}
    for temperature in temperatures:
        result = scp_solve(params, kgrid, T=temperature)
        shift = to_mev(result.gamma_frequencies()[0] - params.omega_m)
        single_site = to_mev(single_site_frequency(
            params.omega_m, params.g, result.params.kT) - params.omega_m)
        print('{:5.0f} K: zone-center hardening {:.1f} meV in {} iterations '
              '(isolated oscillator {:.1f} meV)'.format(
                  temperature, shift, result.iterations, single_site))
        results[temperature] = result
    return results


if __name__ == '__main__':
    logging.basicConfig(level='DEBUG')
    main()
