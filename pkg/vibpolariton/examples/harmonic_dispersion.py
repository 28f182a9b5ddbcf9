import logging

import numpy as np

from vibpolariton import KGrid, ModelParams, phonon_basis, rabi_splitting
from vibpolariton.lattice import (analytic_cavity_dispersion,
                                  cavity_band_squared)
from vibpolariton.units import to_mev

logger = logging.getLogger(__name__)


def main(n_points=101):
    params = ModelParams.water_defaults()
    kgrid = KGrid.display(params, n_points)
    basis = phonon_basis(params, kgrid)
    rabi = rabi_splitting(basis)
    print('Rabi splitting at the zone center: {:.2f} meV'.format(rabi))

    zone = KGrid.full_zone(params.a, n_points)
    analytic = analytic_cavity_dispersion(params, zone.points)
    for order in (2, 4, 6, 8):
        lattice = np.sqrt(cavity_band_squared(
            params.replace(stencil_order=order), zone.points))
        error = np.max(np.abs(lattice - analytic) / analytic)
        print('stencil order {}: largest photon band error {:.3%}'.format(
            order, error))

    gamma = kgrid.index_of(0.0)
    for band, light in enumerate(basis.light_fraction[gamma]):
        print('band {} at {:.2f} meV, light fraction {:.3f}'.format(
            band, to_mev(basis.frequencies[gamma, band]), light))
    return basis, rabi


if __name__ == '__main__':
    logging.basicConfig(level='DEBUG')
    main()
