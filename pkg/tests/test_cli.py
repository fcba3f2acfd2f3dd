"""Tests for cli.py."""
import json
import os

import pytest
from nse_power_expansion.builtin.builtin import builtin_path, get_builtins
from nse_power_expansion.cli import get_args, main, probe_passed
from nse_power_expansion.config import ExperimentConfig
from nse_power_expansion.util import io_util
from nse_power_expansion.util.errors import ValidationError

SHEAR_FIELD = {'cutoff': 1, 'modes': [{'k': [1, 0, 0], 're': [0.0, 0.01, 0.0], 'im': [0.0, 0.0, 0.0]}]}


def small_config(tmp_path, name='small'):
    """Write a short experiment with a separate expansion file."""
    expansion = {'kind': 'force', 'cutoff': 1, 'terms': [{'mu': '1', 'field': SHEAR_FIELD}]}
    io_util.save_json(os.path.join(tmp_path, 'force_in.json'), expansion)
    config = {
        'name': name,
        'gammas': ['1'],
        'cutoff_mu': '3',
        'force': {'source': 'expansion', 'file': 'force_in.json'},
        'solver': {'cutoff': 2, 'dt': 0.1, 't_end': 30.0, 'scheme': 'if_rk4'},
        'u0': {'amplitude': 0.01, 'slope': 1.0},
        'analysis': {'N': [0, 1], 'window': [5.0, 30.0]},
        'seeds': [1, 2],
        'probe': {'samples': 50, 'cutoff': 2},
    }
    file = os.path.join(tmp_path, 'experiment.json')
    io_util.save_json(file, config)
    return file


def error_line(capsys):
    """Get the json error printed to stderr."""
    return json.loads(capsys.readouterr().err.strip().split('\n')[-1])


def test_exponents_stdout(capsys):
    """Test exponents printing json."""
    assert main(['exponents', '--gammas', '7/10', '--cutoff', '3']) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj['gammas'] == ['7/10']
    assert [e['mu'] for e in obj['exponents']] == ['7/10', '7/5', '17/10', '21/10', '12/5', '27/10', '14/5']
    assert obj['next'] == '31/10'


def test_exponents_output(tmp_path):
    """Test exponents with --output."""
    file = os.path.join(tmp_path, 'mus.json')
    assert main(['exponents', '--gammas', '1,3/2', '--cutoff', '3', '--output', file]) == 0
    obj = io_util.load_json(file)
    assert [e['mu'] for e in obj['exponents']] == ['1', '3/2', '2', '5/2', '3']
    assert [e['origin'] for e in obj['exponents']][:2] == ['gamma(1)', 'gamma(2)']


def test_exponents_from_config(capsys):
    """Test exponents reading gammas and the cutoff from a builtin."""
    assert main(['exponents', '--config', 'builtin:zeta1-only']) == 0
    obj = json.loads(capsys.readouterr().out)
    assert [e['mu'] for e in obj['exponents']] == ['1', '2', '3', '4']


@pytest.mark.parametrize('argv, msg', [
    (['exponents', '--gammas', '', '--cutoff', '3'], 'Gammas should not be empty.'),
    (['exponents', '--gammas', '1,1/2', '--cutoff', '3'], 'Gammas should be strictly increasing. ([1, 1/2])'),
    (['exponents', '--cutoff', '3'], 'exponents needs --gammas or --config.'),
    (['simulate'], 'simulate needs --config.'),
])
def test_invalid_input(capsys, argv, msg):
    """Test exit code 2 and the json error line."""
    assert main(argv) == 2
    err = error_line(capsys)
    assert err['error'] == 'ValidationError'
    if 'increasing' not in msg:
        assert err['message'] == msg


def test_unknown_builtin(capsys, tmp_path):
    """Test an unknown builtin name."""
    assert main(['simulate', '--config', 'builtin:nothing', '--out-dir', str(tmp_path)]) == 2
    assert error_line(capsys)['message'].startswith('Unknown builtin experiment. (nothing')


def test_threads_error():
    """Test the argument check of --threads."""
    with pytest.raises(SystemExit) as e:
        get_args(['simulate', '--threads', '0'])
    assert e.value.code == 2


def test_analyze_without_simulate(capsys, tmp_path):
    """Test analyze on an empty run folder."""
    config = small_config(tmp_path)
    out = os.path.join(tmp_path, 'runs')
    assert main(['analyze', '--config', config, '--out-dir', out]) == 2
    assert error_line(capsys)['message'].startswith('Trajectory not found. Run simulate first.')


def test_builtins():
    """Test builtin discovery."""
    builtins = get_builtins()
    for name in ['zeta1-only', 'divergent-factorial', 'fractional-tail', 'exp-remainder']:
        assert name in builtins
        assert builtin_path('builtin:' + name) == builtins[name]
        config = ExperimentConfig.load('builtin:' + name)
        assert config.name == name
    with pytest.raises(ValidationError):
        builtin_path('nothing')


def test_coeffs_divergent(tmp_path):
    """Test coeffs on the factorial example."""
    out = str(tmp_path)
    assert main(['coeffs', '--config', 'builtin:divergent-factorial', '--out-dir', out]) == 0
    folder = os.path.join(out, 'divergent-factorial')
    report = io_util.load_json(os.path.join(folder, 'coeffs_report.json'))
    assert report['direction'] == 'forward'
    assert report['series']['divergent']
    sol = io_util.load_json(os.path.join(folder, 'solution.json'))
    assert len(sol['terms']) == 12
    for file in ['config.json', 'summary.txt', 'manifest.json']:
        assert os.path.exists(os.path.join(folder, file))


def test_construct_and_inverse(tmp_path):
    """Test construct-force and the inverse direction on a zeta source."""
    out = str(tmp_path)
    assert main(['construct-force', '--config', 'builtin:zeta1-only', '--out-dir', out]) == 0
    folder = os.path.join(out, 'zeta1-only')
    report = io_util.load_json(os.path.join(folder, 'construction_report.json'))
    assert report['support'] == [1, 2]
    assert report['roundtrip_error'] < 1e-10
    assert main(['coeffs', '--config', 'builtin:zeta1-only', '--direction', 'inverse', '--out-dir', out]) == 0
    assert os.path.exists(os.path.join(folder, 'force.json'))


def test_construct_needs_zeta(capsys, tmp_path):
    """Test construct-force on a force source."""
    assert main(['construct-force', '--config', small_config(tmp_path), '--out-dir', str(tmp_path)]) == 2
    assert error_line(capsys)['message'] == 'construct-force needs a zeta force source.'


def test_pipeline(tmp_path):
    """Test every step on a short run."""
    config = small_config(tmp_path)
    out = os.path.join(tmp_path, 'runs')
    assert main(['pipeline', '--config', config, '--out-dir', out, '--threads', '2']) == 0
    folder = os.path.join(out, 'small')
    files = sorted(os.listdir(folder))
    for file in ['analysis.json', 'coeffs_report.json', 'config.json', 'manifest.json', 'probe.json',
                 'solution.json', 'summary.txt', 'traj_seed1.csv', 'traj_seed1.json', 'traj_seed2.csv',
                 'traj_seed2.json']:
        assert file in files

    analysis = io_util.load_json(os.path.join(folder, 'analysis.json'))
    summary = analysis['summary']
    assert summary['n_fits'] == 4
    assert set(summary) == {'n_fits', 'n_failed', 'monotone', 'exponential_pass', 'energy_holds', 'pass'}
    assert {fit['seed'] for fit in analysis['fits']} == {1, 2}
    assert summary['energy_holds']

    agreement = {row['N']: row for row in analysis['seed_agreement']}
    assert 0 in agreement
    assert set(agreement[0]) == {'N', 'alpha_eff', 'sigma', 'rho', 'spread', 'combined_stderr', 'agree'}
    assert agreement[0]['agree']
    exponents = [fit['exponent'] for fit in analysis['fits'] if fit['N'] == 0]
    assert agreement[0]['spread'] == pytest.approx(max(exponents) - min(exponents))

    probe = io_util.load_json(os.path.join(folder, 'probe.json'))
    assert probe['bilinear']['samples'] == 50
    assert probe['integral_bound_holds']
    assert probe['pass']
    assert probe['d0_max_error'] < 1e-6

    snapshot = io_util.load_json(os.path.join(folder, 'config.json'))
    assert snapshot['force']['expansion']['terms'][0]['field'] == SHEAR_FIELD
    manifest = io_util.load_json(os.path.join(folder, 'manifest.json'))
    assert 'manifest.json' not in manifest
    assert manifest['analysis.json'] == io_util.content_hash(os.path.join(folder, 'analysis.json'))

    with open(os.path.join(folder, 'summary.txt'), 'r', encoding='utf-8') as f:
        text = f.read()
    assert text.startswith('experiment: small\n')
    assert 'analyze:' in text
    assert 'probe: pass' in text


def test_seed_override(tmp_path):
    """Test --seed on simulate."""
    config = small_config(tmp_path)
    out = os.path.join(tmp_path, 'runs')
    assert main(['simulate', '--config', config, '--out-dir', out, '--seed', '5']) == 0
    files = os.listdir(os.path.join(out, 'small'))
    assert 'traj_seed5.csv' in files
    assert 'traj_seed1.csv' not in files


def test_reproducible(tmp_path):
    """Test that two runs give the same files."""
    config = small_config(tmp_path)
    manifests = []
    for out in ['a', 'b']:
        out_dir = os.path.join(tmp_path, out)
        assert main(['pipeline', '--config', config, '--out-dir', out_dir, '--threads', '2']) == 0
        manifests.append(io_util.load_json(os.path.join(out_dir, 'small', 'manifest.json')))
    assert manifests[0] == manifests[1]


@pytest.mark.slow
def test_zeta1_only_acceptance(tmp_path):
    """Test the prescribed single-coefficient run end to end."""
    out = str(tmp_path)
    assert main(['pipeline', '--config', 'builtin:zeta1-only', '--out-dir', out, '--check']) == 0
    analysis = io_util.load_json(os.path.join(out, 'zeta1-only', 'analysis.json'))
    assert analysis['summary']['pass']
    assert all(fit['pass'] for fit in analysis['fits'])
    assert {fit['N'] for fit in analysis['fits']} == {0, 1, 2}


def good_probe():
    """Get a probe report where every check holds."""
    return {'d0_max_error': 1e-10, 'integral_bound_holds': True, 'mx2': [{'holds': True}, {'holds': True}],
            'heat': [{'holds': True}]}


@pytest.mark.parametrize('key, value, passed', [
    (None, None, True),
    ('d0_max_error', 1e-3, False),
    ('integral_bound_holds', False, False),
    ('mx2', [{'holds': True}, {'holds': False}], False),
    ('heat', [{'holds': False}], False),
])
def test_probe_passed(key, value, passed):
    """Test the probe verdict used by pipeline --check."""
    obj = good_probe()
    if key is not None:
        obj[key] = value
    assert probe_passed(obj) == passed


@pytest.mark.slow
@pytest.mark.parametrize('name, ns', [('exp-remainder', {0, 1}), ('fractional-tail', {0, 1, 2, 3, 4, 5})])
def test_builtin_acceptance(tmp_path, name, ns):
    """Test a builtin experiment end to end with --check."""
    out = str(tmp_path)
    assert main(['pipeline', '--config', 'builtin:' + name, '--out-dir', out, '--check']) == 0
    analysis = io_util.load_json(os.path.join(out, name, 'analysis.json'))
    assert analysis['summary']['pass']
    assert {fit['N'] for fit in analysis['fits']} == ns
    assert all(fit['pass'] for fit in analysis['fits'])
    assert io_util.load_json(os.path.join(out, name, 'probe.json'))['pass']
