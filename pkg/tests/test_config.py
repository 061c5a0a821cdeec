'''test darktrack.config - uses py.test'''
import pytest
import yaml

from darktrack.config import RunConfig
from darktrack.exceptions import ConfigException, InputException


def test_defaults(tmp_path):
    '''the published defaults, dumped as YAML in declaration order'''
    path = str(tmp_path / 'config.yaml')
    RunConfig().dump(path)
    with open(path) as hndl:
        data = yaml.safe_load(hndl)
    assert data['dimension'] == 200
    assert data['min_cluster_size'] == 10
    assert data['tau0'] == 0.65
    assert data['tau1'] == 0.3
    assert data['min_packets'] == 5
    assert list(data) == RunConfig().fields
    assert list(data)[:3] == ['inputs', 'outdir', 'dimension']


def test_defaults_valid():
    '''the defaults pass validation'''
    cfg = RunConfig().validate()
    assert cfg.thresholds().tau0 == 0.65
    opts = cfg.train_opts()
    assert (opts.window, opts.negatives, opts.epochs) == (5, 5, 1)


def test_bad_tau1():
    '''tau1 = 0.6 is rejected with a message naming it'''
    cfg = RunConfig().update({'tau1': 0.6})
    with pytest.raises(ConfigException) as err:
        cfg.validate()
    assert err.value.field == 'tau1'
    assert 'tau1' in err.value.message


@pytest.mark.parametrize('setting, value', [
    ('dimension', 0), ('min_cluster_size', 1), ('max_services', 0),
    ('max_sentence_len', 1), ('min_packets', -1), ('history_horizon', 0),
    ('tau0', 0.3), ('window', 0), ('lr_end', 1.0),
])
def test_validate_ranges(setting, value):
    '''out of range values name their setting'''
    cfg = RunConfig().update({setting: value})
    with pytest.raises(ConfigException) as err:
        cfg.validate()
    assert err.value.field == setting


def test_update_skips_none():
    '''None means not given'''
    cfg = RunConfig().update({'dimension': None, 'outdir': None})
    assert cfg.dimension == 200
    assert cfg.outdir is None


def test_update_coerces():
    '''strings from the command line or YAML are converted'''
    cfg = RunConfig().update({'dimension': '64', 'tau0': '0.7',
                              'chunked': 'yes', 'collapse_runs': 'off',
                              'inputs': 'day.csv', 'history_horizon': 3.0})
    assert cfg.dimension == 64
    assert cfg.tau0 == 0.7
    assert cfg.chunked is True
    assert cfg.collapse_runs is False
    assert cfg.inputs == ['day.csv']
    assert cfg.history_horizon == 3


@pytest.mark.parametrize('value, expected', [
    ('12345678901234567891', 12345678901234567891),
    (2 ** 63 + 1, 2 ** 63 + 1),
    ('1e3', 1000),
    (' 42 ', 42),
])
def test_update_exact_ints(value, expected):
    '''integers keep every digit, integral float spellings are accepted'''
    assert RunConfig().update({'seed': value}).seed == expected


@pytest.mark.parametrize('setting, value', [
    ('dimension', 2.5), ('dimension', '2.5'), ('dimension', 'many'),
    ('chunked', 'maybe'),
    ('tau0', 'high'), ('seed', True),
])
def test_update_bad_values(setting, value):
    '''values of the wrong type are refused'''
    with pytest.raises(ConfigException) as err:
        RunConfig().update({setting: value})
    assert err.value.field == setting


def test_update_unknown():
    '''unknown settings are refused'''
    with pytest.raises(ConfigException) as err:
        RunConfig().update({'colour': 'red'})
    assert err.value.field == 'colour'


def test_from_file(tmp_path):
    '''YAML files override the defaults, validation is left to the
    caller'''
    path = tmp_path / 'config.yaml'
    path.write_text('dimension: 32\ntau1: 0.6\ninputs: [a.csv, b.csv]\n')
    cfg = RunConfig.from_file(str(path))
    assert cfg.dimension == 32
    assert cfg.inputs == ['a.csv', 'b.csv']
    with pytest.raises(ConfigException):
        cfg.validate()
    cfg.update({'tau1': 0.25}).validate()


def test_from_file_roundtrip(tmp_path):
    '''a dumped configuration reads back the same'''
    cfg = RunConfig().update({'inputs': ['x.csv'], 'seed': 9,
                              'history_horizon': 4, 'log': True})
    path = str(tmp_path / 'config.yaml')
    cfg.dump(path)
    assert RunConfig.from_file(path).as_dict() == cfg.as_dict()


@pytest.mark.parametrize('text', ['- a\n- b\n', 'key: [unclosed\n'])
def test_from_file_bad(tmp_path, text):
    '''lists and broken YAML are input errors'''
    path = tmp_path / 'config.yaml'
    path.write_text(text)
    with pytest.raises(InputException):
        RunConfig.from_file(str(path))


def test_from_file_missing(tmp_path):
    '''a missing file is an input error'''
    with pytest.raises(InputException):
        RunConfig.from_file(str(tmp_path / 'nope.yaml'))
