import pytest

from vibpolariton import ConfigurationError, parse_config, parse_config_text
from vibpolariton.config import ConfigFile, ModelSection
from vibpolariton.units import (ANGSTROM_TO_BOHR, FS_TO_AU_TIME, mev,
                                to_mev)

MINIMAL = '''\
model:
  a: 3.0 angstrom
  omega_m: 440 meV
  Omega_m: 215 meV
  g: 4.3 omega_m^3
  T: 300
'''


def parse(text, **environ):
    return parse_config_text(text, environ=environ)


def test_water_configuration(water_config_text):
    config = parse(water_config_text)
    params = config.params
    assert params.a == pytest.approx(3.0 * ANGSTROM_TO_BOHR)
    assert to_mev(params.omega_m) == pytest.approx(440.0)
    assert to_mev(params.Omega_m) == pytest.approx(215.0)
    assert params.g == pytest.approx(4.3 * params.omega_m ** 3)
    assert params.eta == 0.1
    assert params.n_sites == 128
    assert config.grid.n_k == 512
    assert config.grid.delta == pytest.approx(mev(1.0))
    assert config.md.dt == pytest.approx(4.0)
    assert config.md.n_prod_steps == 65536
    assert config.scp.tol == pytest.approx(1e-8)
    assert config.scp.temperatures == (100.0, 200.0, 300.0, 400.0)
    assert config.seed == config.md.seed == 1729
    assert config.vdmft.n_bath == 300


def test_defaults(params):
    config = parse(MINIMAL)
    assert config.params.omega_0 == pytest.approx(config.params.omega_m)
    assert config.params.eta == pytest.approx(params.eta)
    assert config.params.stencil_order == 2
    assert config.scp.temperatures == (100.0, 200.0, 300.0, 400.0)
    assert config.md.window.value == 'exponential'
    assert config.threads == 1


def test_section_models_forbid_extra_keys():
    for model in (ConfigFile, ModelSection):
        assert model.model_config['extra'] == 'forbid'


@pytest.mark.parametrize('value', ['0.44 eV', '440', '0.016169 hartree',
                                   '3548.8 cm-1'])
def test_energy_units(value):
    text = MINIMAL.replace('omega_m: 440 meV', 'omega_m: ' + value)
    assert to_mev(parse(text).params.omega_m) == pytest.approx(440.0,
                                                                rel=1e-4)


def test_other_units():
    config = parse(MINIMAL.replace('3.0 angstrom', '5.5 bohr') +
                   'md:\n  dt: 0.1 fs\n  tau_damp: 100 au\n')
    assert config.params.a == pytest.approx(5.5)
    assert config.md.dt == pytest.approx(0.1 * FS_TO_AU_TIME)
    assert config.md.tau_damp == pytest.approx(100.0)


def test_anharmonicity_in_atomic_units():
    config = parse(MINIMAL.replace('4.3 omega_m^3', '2.5e-5 au'))
    assert config.params.g == pytest.approx(2.5e-5)


@pytest.mark.parametrize('value', ['[100, 300]', '100, 300 K',
                                   '[100 K, 300 K]'])
def test_temperature_lists(value):
    config = parse(MINIMAL + 'scp:\n  temperatures: {}\n'.format(value))
    assert config.scp.temperatures == (100.0, 300.0)


def test_comments_are_ignored():
    text = ('# water chain\n' +
            MINIMAL.replace('T: 300', 'T: 300  # room temperature') +
            '# trailing comment\n')
    assert parse(text).params.T == pytest.approx(300.0)


def test_missing_keys_are_listed_together():
    for text in ('', 'grid:\n  n_k: 64\n', 'model:\n'):
        with pytest.raises(ConfigurationError) as info:
            parse(text)
        for key in ('a', 'omega_m', 'Omega_m', 'g', 'T'):
            assert key in info.value.reason


def test_keys_are_case_sensitive():
    with pytest.raises(ConfigurationError) as info:
        parse(MINIMAL + '  OMEGA_M: 440 meV\n')
    assert info.value.key == 'OMEGA_M'
    assert info.value.line == 7


@pytest.mark.parametrize('extra, key', [
    ('stencil_order: 3', 'stencil_order'),
    ('eta: -0.1', 'eta'),
    ('n_sites: 1', 'n_sites'),
    ('omega_0: 440 parsec', 'omega_0'),
    ('omega_0: 440 meV extra', 'omega_0'),
    ('n_sites: many', 'n_sites'),
    ('g: 4.3 meV', 'g'),
])
def test_bad_value_names_key_and_line(extra, key):
    with pytest.raises(ConfigurationError) as info:
        parse(MINIMAL + '  ' + extra + '\n')
    assert info.value.key == key
    assert info.value.line == 7


@pytest.mark.parametrize('section, extra, key', [
    ('scp', 'mixing: 1.5', 'mixing'),
    ('md', 'window: triangle', 'window'),
    ('md', 'dt: 0 fs', 'dt'),
    ('vdmft', 'max_iter: 0', 'max_iter'),
    ('run', 'threads: 0', 'threads'),
    ('output', 'plot_scripts: maybe', 'plot_scripts'),
])
def test_bad_section_value(section, extra, key):
    text = MINIMAL + 'grid:\n  n_k: 64\n{}:\n  {}\n'.format(section, extra)
    with pytest.raises(ConfigurationError) as info:
        parse(text)
    assert info.value.key == key
    assert info.value.line == 10


def test_unknown_key_in_section():
    with pytest.raises(ConfigurationError) as info:
        parse(MINIMAL + 'md:\n  dt: 4 au\n  timestep: 4 au\n')
    assert 'md' in info.value.reason
    assert info.value.key == 'timestep'
    assert info.value.line == 9


def test_unknown_section():
    with pytest.raises(ConfigurationError) as info:
        parse(MINIMAL + 'solver:\n  mixing: 0.5\n')
    assert 'solver' in info.value.reason
    assert info.value.line == 7


def test_duplicate_key():
    with pytest.raises(ConfigurationError) as info:
        parse(MINIMAL + '  # again\n  a: 4.0 angstrom\n')
    assert 'duplicate' in info.value.reason
    assert info.value.line == 8


@pytest.mark.parametrize('text, line', [
    ('model:\n  a: [3.0\n', None),
    ('- a\n- b\n', 1),
])
def test_malformed_document(text, line):
    with pytest.raises(ConfigurationError) as info:
        parse(text)
    if line is not None:
        assert info.value.line == line


def test_thread_override():
    config = parse(MINIMAL, VIBPOLARITON_THREADS='4')
    assert config.threads == config.md.threads == 4
    assert config.echo()['run']['threads'] == 4
    with pytest.raises(ConfigurationError):
        parse(MINIMAL, VIBPOLARITON_THREADS='four')


def test_run_overrides(tmp_path):
    config = parse(MINIMAL).with_seed(7).with_output(tmp_path)
    assert config.seed == config.md.seed == 7
    assert config.output.directory == tmp_path
    assert config.echo()['run']['seed'] == 7
    with pytest.raises(ConfigurationError):
        config.with_threads(0)


def test_echo_uses_input_units():
    echo = parse(MINIMAL).echo()
    assert echo['model']['a'] == pytest.approx(3.0)
    assert echo['model']['omega_m'] == pytest.approx(440.0)
    assert echo['model']['g'] == '4.3 omega_m^3'
    assert echo['grid']['delta'] == pytest.approx(1.0)
    assert echo['md']['dt'] == pytest.approx(4.0 / FS_TO_AU_TIME)
    assert echo['scp']['temperatures'] == [100.0, 200.0, 300.0, 400.0]


def test_config_file(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text(MINIMAL)
    config = parse_config(path, environ={})
    assert config.source == str(path)
    with pytest.raises(ConfigurationError):
        parse_config(tmp_path / 'missing.yaml', environ={})
