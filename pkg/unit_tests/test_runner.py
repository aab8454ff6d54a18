import io
import json
import math
import os

import pytest

from pekerisrefocus import ConfigError, ExperimentRunner
from pekerisrefocus.cli import main, overrides_from, _parser

from .conftest import wavenumber_for

WAVEGUIDE = {'d': 20.0, 'n1': 2.0, 'omega': math.pi, 'c_bar': 1.0}
MEDIUM = {'kernel': 'exponential', 'a': 1.0}


def run(config, subcommand=None, preset=None, overrides=None):
    stream = io.StringIO()
    runner = ExperimentRunner(config=config, overrides=overrides, stream=stream)
    code = runner.run(subcommand, preset=preset)
    return code, json.loads(stream.getvalue()), runner


def test_modes(tmp_path):
    out = str(tmp_path / 'modes')
    code, summary, _ = run({'waveguide': WAVEGUIDE, 'run': {'out': out}}, 'modes')
    assert code == 0
    assert summary['status'] == 'ok'
    assert summary['results']['N'] == 34
    assert summary['artifacts'] == ['modes.csv']
    with open(os.path.join(out, 'modes.csv'), newline='') as f:
        lines = f.read().split('\r\n')
    assert lines[0] == 'j,sigma,beta,zeta,amp,beta_prime,beta_second'
    assert len([line for line in lines[1:] if line]) == 34


def test_unknown_key_writes_nothing(tmp_path):
    out = str(tmp_path / 'bad')
    code, summary, _ = run({'waveguide': dict(WAVEGUIDE, depth=20.0), 'run': {'out': out}}, 'modes')
    assert code == 2
    assert summary['status'] == 'config_error'
    assert 'depth' in summary['error']['message']
    assert not os.path.exists(out)


@pytest.mark.parametrize('config, subcommand', [
    ({}, 'modes'),
    ({'waveguide': {'d': 20.0, 'n1': 2.0}}, 'modes'),
    ({'waveguide': WAVEGUIDE}, 'coupling'),
    ({'waveguide': dict(WAVEGUIDE, omega='fast')}, 'modes'),
    ({'waveguide': dict(WAVEGUIDE, n1=0.5)}, 'modes'),
    ({'diffusion': {'a0': 1.0, 'd': 20.0}}, 'diffusion'),
    ({'waveguide': WAVEGUIDE}, 'spectrum'),
    ({'diffusion': {'a0': 1.0, 'a': 1e10, 'd': 20.0, 'n1': 1e10}}, 'diffusion'),
    ({'waveguide': WAVEGUIDE, 'medium': MEDIUM, 'run': {'z_max': -1.0}}, 'power'),
    ({'waveguide': WAVEGUIDE, 'medium': MEDIUM, 'run': {'checkpoints': 1}}, 'power'),
    ({'waveguide': WAVEGUIDE, 'medium': MEDIUM, 'run': {'nearest_neighbor': True, 'loss_modes': 3}}, 'power'),
    ({'waveguide': WAVEGUIDE, 'medium': MEDIUM, 'run': {'tau_sweep': [1.0, 0.0]}}, 'power'),
    ({'waveguide': WAVEGUIDE, 'medium': MEDIUM, 'run': {'mc_paths': 0}}, 'power'),
    ({'waveguide': WAVEGUIDE, 'medium': MEDIUM, 'montecarlo': {'mode_in': 99}}, 'montecarlo'),
    ({'waveguide': WAVEGUIDE, 'medium': MEDIUM, 'montecarlo': {'mode_in': 0}}, 'montecarlo'),
    ({'diffusion': {'a0': 1.0, 'a': 1.0, 'd': 20.0, 'n1': 2.0}, 'run': {'x_tilde_points': 2}}, 'diffusion'),
])
def test_configuration_errors(tmp_path, config, subcommand):
    config = dict(config, run=dict(config.get('run', {}), out=str(tmp_path / 'out')))
    code, summary, _ = run(config, subcommand)
    assert code == 2
    assert summary['status'] == 'config_error'
    assert summary['error']['type'] == 'ConfigError'
    assert not os.path.exists(str(tmp_path / 'out'))


def test_unknown_preset():
    code, summary, _ = run(None, preset='fig-nothing')
    assert code == 2
    assert 'fig-nothing' in summary['error']['message']


def test_preset_configuration():
    runner = ExperimentRunner(overrides={'run': {'L': [0.0, 10.0]}})
    config = runner.prepare(None, preset='fig-profiles')
    assert runner.subcommand == 'profile'
    assert config['run']['L'] == [0.0, 10.0]
    assert config['run']['x0'] == 10.0
    assert config['mirror']['d_tilde_1'] == 5.0
    assert runner.diffusion((0.0,)).theta == pytest.approx(math.sqrt(0.75))


def test_ini_configuration(tmp_path):
    path = tmp_path / 'case.ini'
    path.write_text('[waveguide]\nd = 20\nn1 = 2\nomega = 3.141592653589793\nc_bar = 1\n\n'
                    '[run]\nz = 0, 0.5 1\nlossless = yes\nthreads = 2\n')
    runner = ExperimentRunner(config=str(path))
    config = runner.prepare('modes')
    assert config['waveguide']['d'] == 20.0
    assert config['run']['z'] == [0.0, 0.5, 1.0]
    assert config['run']['lossless'] is True
    assert runner.threads == 2


def test_ini_bad_value(tmp_path):
    path = tmp_path / 'case.ini'
    path.write_text('[run]\nlossless = maybe\n')
    with pytest.raises(ConfigError):
        ExperimentRunner(config=str(path)).prepare('modes')


def test_numerical_failure_writes_report(tmp_path):
    out = str(tmp_path / 'coarse')
    config = {'diffusion': {'a0': 1.0, 'a': 1.0, 'd': 20.0, 'n1': 2.0, 'cells': 8},
              'run': {'out': out, 'z': [0.001]}}
    code, summary, _ = run(config, 'diffusion')
    assert code == 3
    assert summary['error']['type'] == 'GridTooCoarse'
    assert summary['error']['Module'] == 'diffusion'
    assert os.listdir(out) == ['failure_report.json']
    with open(os.path.join(out, 'failure_report.json')) as f:
        report = json.load(f)
    assert report['Error Type'] == 'GridTooCoarse'
    assert report['Operation'] == 'solve_diffusion'
    assert report['Subcommand'] == 'diffusion'
    assert report['Config']['diffusion']['cells'] == 8
    assert report['Traceback']


def test_diffusion_run(tmp_path):
    out = str(tmp_path / 'diffusion')
    config = {'diffusion': {'a0': 1.0, 'a': 1.0, 'd': 20.0, 'n1': 2.0},
              'run': {'out': out, 'z': [0.0, 1.0], 'x_tilde_points': 121}}
    code, summary, _ = run(config, 'diffusion')
    assert code == 0
    assert sorted(os.listdir(out)) == ['diffusion.svg', 'diffusion_H.csv', 'diffusion_T.csv']
    results = summary['results']
    assert results['mean_power'][0] == pytest.approx(1.0)
    assert results['mean_power'][1] < 1.0
    assert results['eigenmode']['lambda_1'] < 0


def test_power_run_with_sweep_and_markov(tmp_path):
    out = str(tmp_path / 'power')
    waveguide = {'d': 20.0, 'n1': 2.0, 'omega': wavenumber_for(4), 'c_bar': 1.0}
    config = {'waveguide': waveguide, 'medium': MEDIUM,
              'run': {'out': out, 'z_max': 0.5, 'checkpoints': 5, 'tau_sweep': [1.0, 0.1], 'mc_paths': 4000}}
    code, summary, _ = run(config, 'power')
    assert code == 0
    assert sorted(os.listdir(out)) == ['markov.csv', 'power.csv', 'power.svg', 'tau_sweep.csv']
    results = summary['results']
    assert results['N'] == 4
    assert [row['tau'] for row in results['tau_sweep']['rows']] == [1.0, 0.1]
    assert results['markov']['n_paths'] == 4000
    assert results['markov']['z'] == pytest.approx(0.5)
    assert results['markov']['max_standard_errors'] < 5.0
    with open(os.path.join(out, 'tau_sweep.csv'), newline='') as f:
        assert f.readline().strip() == 'tau,lambda_inf_strong,lambda_inf_weak,strong_deviation'
    with open(os.path.join(out, 'markov.csv'), newline='') as f:
        lines = [line for line in f.read().split('\r\n') if line]
    assert lines[0] == 'j,markov_mean,markov_stderr,ode,standard_errors'
    assert len(lines) == 5


def test_power_run_without_extras(tmp_path):
    out = str(tmp_path / 'power')
    waveguide = {'d': 20.0, 'n1': 2.0, 'omega': wavenumber_for(4), 'c_bar': 1.0}
    code, summary, _ = run({'waveguide': waveguide, 'medium': MEDIUM, 'run': {'out': out, 'z_max': 0.5}}, 'power')
    assert code == 0
    assert sorted(os.listdir(out)) == ['power.csv', 'power.svg']
    assert 'tau_sweep' not in summary['results']
    assert 'markov' not in summary['results']


def test_cli_overrides():
    args = _parser().parse_args(['profile', '--mirror-half-widths', '2', '3', '--L', '0', '5', '--lossless'])
    overrides = overrides_from(args)
    assert overrides['mirror'] == {'d_tilde_1': 2.0, 'd_tilde_2': 3.0}
    assert overrides['run'] == {'L': [0.0, 5.0], 'lossless': True}
    assert 'diffusion' not in overrides


def test_cli_main(tmp_path, capsys):
    config = tmp_path / 'waveguide.json'
    config.write_text(json.dumps({'waveguide': WAVEGUIDE}))
    out = str(tmp_path / 'cli')
    assert main(['modes', '--config', str(config), '--out', out]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary['out'] == out
    assert os.path.exists(os.path.join(out, 'modes.csv'))


def test_cli_power_overrides():
    args = _parser().parse_args(['power', '--z-max', '2', '--checkpoints', '21', '--tau-sweep', '1', '0.01',
                                 '--mc-paths', '500'])
    assert overrides_from(args) == {'run': {'z_max': 2.0, 'checkpoints': 21, 'tau_sweep': [1.0, 0.01],
                                            'mc_paths': 500}}


def test_profile_width_independent_of_mirror_exponent(tmp_path):
    widths = []
    for alpha in (0.0, 1.0):
        config = {'diffusion': {'a0': 1.0, 'a': 1.0, 'd': 20.0, 'n1': 2.0},
                  'mirror': {'d_M': 10.0, 'd_tilde_1': 5.0, 'd_tilde_2': 5.0, 'alpha_M': alpha},
                  'run': {'out': str(tmp_path / ('alpha%g' % alpha)), 'L': [75.0]}}
        code, summary, _ = run(config, 'profile')
        assert code == 0
        widths.append(summary['results']['metrics']['75']['continuum']['fwhm'])
    assert abs(widths[0] - widths[1]) <= 6.0 / 600
