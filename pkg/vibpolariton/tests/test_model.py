import numpy as np
import pytest

from vibpolariton import (ConfigurationError, DisplacementState, ModelParams,
                          effective_couplings, forces, potential_energy)
from vibpolariton import units
from vibpolariton.model import chain_potential


@pytest.fixture(scope='function')
def small(params):
    return params.replace(n_sites=8)


@pytest.fixture(scope='function', params=['coupled', 'matter'])
def chain(request, small):
    if request.param == 'matter':
        return small.matter_chain()
    return small


def random_state(params, rng, scale=0.5):
    n = params.n_sites
    return DisplacementState(x=rng.normal(scale=scale, size=n),
                             r=rng.normal(scale=scale, size=n))


def test_water_defaults(params):
    assert params.omega_m == pytest.approx(units.mev(440.0))
    assert params.Omega_m == pytest.approx(units.mev(215.0))
    assert params.omega_0 == pytest.approx(params.omega_m)
    assert params.g == pytest.approx(4.3 * params.omega_m ** 3)
    assert params.a == pytest.approx(3.0 / units.BOHR_TO_ANGSTROM)
    assert params.n_coords == 2
    assert params.matter_chain().n_coords == 1


def test_effective_couplings(params):
    G_lm, d_se = effective_couplings(params)
    assert G_lm == pytest.approx(0.2 * params.omega_m ** 2)
    assert d_se == pytest.approx(0.02 * params.omega_m ** 2)
    assert effective_couplings(params.replace(eta=0.0)) == (0.0, 0.0)


@pytest.mark.parametrize('key, value', [('a', 0.0),
                                        ('omega_m', -1.0),
                                        ('g', -0.1),
                                        ('n_sites', 1),
                                        ('stencil_order', 3),
                                        ])
def test_invalid_parameters(params, key, value):
    with pytest.raises(ConfigurationError) as info:
        params.replace(**{key: value})
    assert info.value.key == key


def test_matter_chain_rejects_coupling(params):
    with pytest.raises(ConfigurationError):
        ModelParams(a=params.a, omega_m=params.omega_m,
                    Omega_m=params.Omega_m, g=params.g,
                    omega_0=params.omega_0, eta=0.1, cavity=False)


def test_single_displaced_site(chain):
    q = 0.3
    state = DisplacementState.zeros(chain.n_sites)
    state.r[2] = q
    expected = (0.5 * chain.omega_m ** 2 * q ** 2 + 0.5 * chain.g * q ** 4 +
                chain.Omega_m ** 2 * q ** 2)
    expected += effective_couplings(chain).d_se * q ** 2
    assert potential_energy(chain, state) == pytest.approx(expected)


def test_rest_state_has_no_energy_or_force(chain):
    state = DisplacementState.zeros(chain.n_sites)
    assert potential_energy(chain, state) == 0.0
    f = forces(chain, state)
    assert np.all(f.x == 0.0)
    assert np.all(f.r == 0.0)


@pytest.mark.parametrize('scale', [0.05, 0.5])
@pytest.mark.parametrize('seed', range(10))
def test_forces_match_finite_differences(chain, seed, scale):
    state = random_state(chain, np.random.default_rng(seed), scale=scale)
    f = forces(chain, state)
    noise = 64 * np.finfo(float).eps * abs(potential_energy(chain, state))
    for name, analytic, h in (('x', f.x, 1e-5), ('r', f.r, 1e-3)):
        if name == 'x' and not chain.cavity:
            assert np.all(analytic == 0.0)
            continue
        numeric = np.zeros(chain.n_sites)
        for j in range(chain.n_sites):
            plus = DisplacementState(x=state.x.copy(), r=state.r.copy())
            minus = DisplacementState(x=state.x.copy(), r=state.r.copy())
            getattr(plus, name)[j] += h
            getattr(minus, name)[j] -= h
            numeric[j] = -(potential_energy(chain, plus) -
                           potential_energy(chain, minus)) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6,
                                   atol=max(1e-6 * np.max(np.abs(analytic)),
                                            noise / h))


@pytest.mark.parametrize('shift', [1, 3, -2])
def test_cyclic_relabeling(chain, rng, shift):
    state = random_state(chain, rng)
    rolled = state.rolled(shift)
    assert potential_energy(chain, rolled) == pytest.approx(
        potential_energy(chain, state), rel=1e-12)
    np.testing.assert_allclose(forces(chain, rolled).r,
                               np.roll(forces(chain, state).r, shift),
                               rtol=1e-10, atol=1e-14)


def test_potential_is_even(chain, rng):
    state = random_state(chain, rng)
    flipped = DisplacementState(x=-state.x, r=-state.r)
    assert potential_energy(chain, flipped) == pytest.approx(
        potential_energy(chain, state), rel=1e-12)


def test_batched_potential(chain, rng):
    states = [random_state(chain, rng) for _ in range(4)]
    x = np.stack([state.x for state in states])
    r = np.stack([state.r for state in states])
    np.testing.assert_allclose(
        chain_potential(chain, x, r),
        [potential_energy(chain, state) for state in states], rtol=1e-12)


def test_wrong_number_of_sites(small):
    with pytest.raises(ConfigurationError):
        potential_energy(small, DisplacementState.zeros(small.n_sites + 1))


def test_mismatched_arrays():
    with pytest.raises(ConfigurationError):
        DisplacementState(x=np.zeros(3), r=np.zeros(4))
