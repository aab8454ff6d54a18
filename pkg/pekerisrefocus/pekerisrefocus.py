import configparser
import copy
import datetime
import json
import logging
import math
import os
import sys

import numpy as np

from .diffusion import (DiffusionConfig, diffusion_coupling, eigenmode_profile, principal_eigenmode, refocus_kernel,
                        s0_to_a0, solve_diffusion)
from .errors import ConfigError, NoRadiativeLoss, NotIrreducible, NumericalError, RefocusError
from .medium import (MediumStats, assemble_coupling, band_limited_filter, lambda_xi_convergence, make_kernel)
from .montecarlo import MCConfig, estimate_mean_powers, power_equation_reference
from .plotting import render_figure
from .power import coupling_strength_sweep, decay_rate, integrate_power, markov_estimate, total_power_slope
from .profile import refocus_metrics, sinc_profile
from .spectrum import WaveguideConfig, modal_derivatives, solve_dispersion
from .timereversal import MirrorSpec, continuum_consistency, continuum_profile, random_profile, resolution_sweep
from .tools import analyze_traceback, atomic_write, csv_text
from .validate import ValidationContext, render_report, validate_suite

FLOAT, INT, BOOL, STR, FLOATS = 'float', 'int', 'bool', 'str', 'floats'

SCHEMA = {
    'waveguide': {'d': FLOAT, 'n1': FLOAT, 'omega': FLOAT, 'c_bar': FLOAT},
    'medium': {'kernel': STR, 'sigma': FLOAT, 'correlation_length': FLOAT, 'a': FLOAT},
    'mirror': {'d_M': FLOAT, 'd_tilde_1': FLOAT, 'd_tilde_2': FLOAT, 'alpha_M': FLOAT},
    'diffusion': {'a0': FLOAT, 'a': FLOAT, 'd': FLOAT, 'n1': FLOAT, 'bc': STR, 'cells': INT, 'tolerance': FLOAT,
                  'scheme': STR},
    'montecarlo': {'epsilon': FLOAT, 'realizations': INT, 'bins': INT, 'L': FLOAT, 'z_step': FLOAT, 'mode_in': INT,
                   'mercer_terms': INT, 'nearest_neighbor': BOOL, 'seed': INT},
    'run': {'seed': INT, 'out': STR, 'threads': INT, 'z': FLOATS, 'L': FLOATS, 'z_max': FLOAT, 'checkpoints': INT,
            'x0': FLOAT, 'lossless': BOOL, 'nearest_neighbor': BOOL, 'loss_modes': INT, 'x_tilde_span': FLOAT,
            'x_tilde_points': INT, 'omega': FLOATS, 'slow': BOOL, 'medium': STR, 'tau_sweep': FLOATS,
            'mc_paths': INT},
}

REQUIRED = {
    'modes': {'waveguide': ('d', 'n1', 'omega')},
    'coupling': {'waveguide': ('d', 'n1', 'omega'), 'medium': ('kernel', 'a')},
    'power': {'waveguide': ('d', 'n1', 'omega'), 'medium': ('kernel', 'a')},
    'diffusion': {},
    'profile': {'mirror': ('d_M', 'd_tilde_1', 'd_tilde_2')},
    'resolution': {},
    'montecarlo': {'waveguide': ('d', 'n1', 'omega'), 'medium': ('kernel', 'a')},
    'validate': {},
}

_FIGURE_BASE = {'diffusion': {'a0': 1.0, 'a': 1.0, 'd': 20.0, 'n1': 2.0, 'bc': 'absorbing'},
                'waveguide': {'d': 20.0, 'n1': 2.0, 'omega': math.pi, 'c_bar': 1.0},
                'mirror': {'d_M': 10.0, 'd_tilde_1': 5.0, 'd_tilde_2': 5.0, 'alpha_M': 0.0}}

PRESETS = {
    'fig-tau1': ('diffusion', {'run': {'z': [0.01, 0.1, 0.5, 1.0, 10.0, 75.0, 250.0]}}),
    'fig-profiles': ('profile', {'run': {'L': [0.0, 75.0, 250.0], 'x0': 10.0}}),
    'fig-resolution': ('resolution', {'run': {'L': [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0,
                                                    3.0, 5.0, 10.0, 25.0, 50.0, 75.0, 100.0, 150.0, 200.0, 250.0]}}),
}


class ExperimentRunner(object):
    """
    Run one subcommand from a configuration, stage its artifacts in memory and commit them to the output directory
    only when the whole computation succeeded. A one-line JSON summary is printed on stdout.

    Exit codes: 0 success, 2 configuration error (nothing written), 3 numerical failure (a failure report is written
    to the output directory, with the traceback analysis of the failing frame).

    Runner Customizing Attributes:

    out: output directory
    seed: root seed of every random draw
    threads: worker processes for Monte Carlo batches
    x_tilde_span, x_tilde_points: default profile grid, x~ in [-span, span]
    max_string_length: longest variable representation kept in failure reports
    inspection_level: number of innermost frames whose variables are recorded in failure reports

    :param config: path of a JSON (.json) or INI (any other extension) configuration file, or a dict
    :param overrides: dict of blocks whose keys replace the file values (command line flags)
    :param logger: optional logger to use
    """
    schema_version = 1
    out = 'results'
    seed = 0
    threads = 1
    x_tilde_span = 3.0
    x_tilde_points = 601
    max_string_length = 1000
    inspection_level = 1
    _failure_report_name = 'failure_report.json'

    def __init__(self, config=None, overrides=None, logger=None, stream=None):
        self.logger = logger if logger else logging.getLogger('PekerisRefocus')
        self.stream = stream if stream is not None else sys.stdout
        self._config_source = config
        self._overrides = overrides or {}
        self.config = {}
        self.subcommand = None
        self.preset = None
        self.artifacts = {}
        self.results = {}

    # configuration

    def load_configuration(self, config):
        """
        Read a configuration file. JSON files hold one object per block; any other extension is read with
        configparser, one section per block.
        """
        ext = os.path.splitext(config)[1].lower()
        try:
            with open(config, 'r') as _f:
                if ext == '.json':
                    raw = json.load(_f)
                    from_text = False
                else:
                    cfg = configparser.ConfigParser()
                    cfg.optionxform = str
                    cfg.read_file(_f)
                    raw = {section: dict(cfg.items(section)) for section in cfg.sections()}
                    from_text = True
        except (OSError, ValueError, configparser.Error) as e:
            raise ConfigError('Could not read configuration %s: %s' % (config, e))
        if not isinstance(raw, dict) or not all(isinstance(v, dict) for v in raw.values()):
            raise ConfigError('Configuration must map block names to key/value blocks')
        return self._coerce(raw, from_text)

    @staticmethod
    def _coerce_value(block, key, kind, value, from_text):
        where = '%s.%s' % (block, key)
        try:
            if kind == FLOATS:
                if from_text and isinstance(value, str):
                    value = [v for v in value.replace(',', ' ').split()]
                if not isinstance(value, (list, tuple)):
                    value = [value]
                return [ExperimentRunner._coerce_value(block, key, FLOAT, v, from_text) for v in value]
            if kind == BOOL:
                if isinstance(value, bool):
                    return value
                if from_text and str(value).lower() in ('1', 'true', 'yes', 'on', '0', 'false', 'no', 'off'):
                    return str(value).lower() in ('1', 'true', 'yes', 'on')
                raise ValueError('not a boolean')
            if kind == STR:
                if isinstance(value, str):
                    return value
                raise ValueError('not a string')
            if isinstance(value, bool):
                raise ValueError('booleans are not numbers')
            if isinstance(value, str) and not from_text:
                raise ValueError('expected a number')
            if kind == INT:
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError('not an integer')
                return int(value)
            number = float(value)
            if not math.isfinite(number):
                raise ValueError('not finite')
            return number
        except (TypeError, ValueError) as e:
            raise ConfigError('%s: invalid %s value %r (%s)' % (where, kind, value, e))

    def _coerce(self, raw, from_text=False):
        config = {}
        for block, values in raw.items():
            if block not in SCHEMA:
                raise ConfigError('Unknown configuration block %r' % block)
            config[block] = {}
            for key, value in values.items():
                if key not in SCHEMA[block]:
                    raise ConfigError('Unknown key %r in block %r' % (key, block))
                config[block][key] = self._coerce_value(block, key, SCHEMA[block][key], value, from_text)
        return config

    def _merge(self, base, extra):
        merged = copy.deepcopy(base)
        for block, values in extra.items():
            merged.setdefault(block, {}).update({k: v for k, v in values.items() if v is not None})
        return merged

    def prepare(self, subcommand, preset=None):
        """ Resolve preset, file and overrides into a checked configuration. Raises ConfigError only. """
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError('Unknown preset %r (choose from %s)' % (preset, ', '.join(sorted(PRESETS))))
            subcommand, extra = PRESETS[preset]
            config = self._merge(_FIGURE_BASE, extra)
        else:
            config = {}
        if subcommand not in REQUIRED:
            raise ConfigError('Unknown subcommand %r' % subcommand)
        if isinstance(self._config_source, dict):
            config = self._merge(config, self._coerce(self._config_source))
        elif self._config_source:
            config = self._merge(config, self.load_configuration(self._config_source))
        config = self._merge(config, self._coerce(self._overrides))
        for block, keys in REQUIRED[subcommand].items():
            if block not in config:
                raise ConfigError('Subcommand %r needs a %r block' % (subcommand, block))
            missing = [k for k in keys if k not in config[block]]
            if missing:
                raise ConfigError('Block %r is missing %s' % (block, ', '.join(missing)))
        self.subcommand = subcommand
        self.preset = preset
        self.config = config
        run = config.get('run', {})
        self.out = run.get('out', ExperimentRunner.out)
        self.seed = run.get('seed', ExperimentRunner.seed)
        self.threads = run.get('threads', ExperimentRunner.threads)
        return config

    def _build_objects(self):
        """ Construct every domain config the subcommand uses so that invalid values fail before any work. """
        sub = self.subcommand
        if sub in ('modes', 'coupling', 'power', 'montecarlo') or (sub == 'profile' and 'waveguide' in self.config):
            self.waveguide()
        if sub in ('coupling', 'power', 'montecarlo'):
            self.medium()
        if sub == 'profile':
            self.mirror()
        if sub == 'montecarlo':
            self.montecarlo()
        if sub in ('diffusion', 'profile', 'resolution'):
            self.diffusion((0.0,))
        self._check_run_options()

    def _check_run_options(self):
        """ Range checks of the run block and montecarlo.mode_in, which the domain objects do not own. """
        def fail(message):
            raise ConfigError(message, operation='_build_objects')

        if not self.run_option('z_max', 1.0) > 0:
            fail('run.z_max must be > 0, got %r' % self.run_option('z_max'))
        if self.run_option('checkpoints', 11) < 2:
            fail('run.checkpoints must be >= 2, got %r' % self.run_option('checkpoints'))
        if self.run_option('loss_modes', 1) not in (1, 2):
            fail('run.loss_modes must be 1 or 2, got %r' % self.run_option('loss_modes'))
        taus = self.run_option('tau_sweep', [])
        if any(not tau > 0 for tau in taus):
            fail('run.tau_sweep values must be > 0, got %r' % taus)
        if self.run_option('mc_paths', 1) < 1:
            fail('run.mc_paths must be >= 1, got %r' % self.run_option('mc_paths'))
        if not self.run_option('x_tilde_span', self.x_tilde_span) > 0:
            fail('run.x_tilde_span must be > 0, got %r' % self.run_option('x_tilde_span'))
        if self.run_option('x_tilde_points', self.x_tilde_points) < 3:
            fail('run.x_tilde_points must be >= 3, got %r' % self.run_option('x_tilde_points'))
        if self.threads < 1:
            fail('run.threads must be >= 1, got %r' % self.threads)
        if self.config.get('montecarlo', {}).get('mode_in', 1) < 1:
            fail('montecarlo.mode_in must be >= 1, got %r' % self.config['montecarlo']['mode_in'])

    def waveguide(self):
        block = self.config['waveguide']
        return WaveguideConfig(d=block['d'], n1=block['n1'], omega=block['omega'], c_bar=block.get('c_bar', 1500.0))

    def medium(self):
        block = self.config['medium']
        d = self.config.get('waveguide', {}).get('d', self.config.get('diffusion', {}).get('d'))
        if d is None:
            raise ConfigError('The medium block needs a depth from the waveguide or diffusion block')
        kernel = make_kernel(block['kernel'], d, sigma=block.get('sigma', 1.0),
                             correlation_length=block.get('correlation_length'))
        medium = MediumStats(kernel, block['a'])
        medium.check_kernel(d)
        return medium

    def mirror(self):
        block = self.config['mirror']
        return MirrorSpec(d_M=block['d_M'], d_tilde_1=block['d_tilde_1'], d_tilde_2=block['d_tilde_2'],
                          alpha_M=block.get('alpha_M', 0.0))

    def diffusion(self, z_checkpoints):
        block = dict(self.config.get('diffusion', {}))
        waveguide = self.config.get('waveguide', {})
        for key in ('d', 'n1'):
            if key not in block and key in waveguide:
                block[key] = waveguide[key]
        if 'a' not in block and 'a' in self.config.get('medium', {}):
            block['a'] = self.config['medium']['a']
        missing = [k for k in ('a', 'd', 'n1') if k not in block]
        if missing:
            raise ConfigError('Diffusion parameters missing: %s' % ', '.join(missing))
        if self.run_option('lossless', False):
            block['bc'] = 'reflecting'
        options = {'bc_bottom': block.get('bc', 'absorbing'), 'cells': block.get('cells', 1024),
                   'scheme': block.get('scheme', 'exponential'), 'tolerance': block.get('tolerance', 1e-3),
                   'z_checkpoints': tuple(z_checkpoints)}
        if 'a0' not in block:
            if 'medium' not in self.config:
                raise ConfigError('diffusion.a0 is missing and there is no medium block to derive it from')
            unit = DiffusionConfig(a0=1.0, a=block['a'], d=block['d'], n1=block['n1'])
            block['a0'] = s0_to_a0(self.medium(), unit)
            if block['a0'] == 0:
                raise ConfigError('The medium has S0 = 0: diffusion is disabled', operation='s0_to_a0')
        return DiffusionConfig(a0=block['a0'], a=block['a'], d=block['d'], n1=block['n1'], **options)

    def montecarlo(self):
        block = self.config.get('montecarlo', {})
        return MCConfig(epsilon=block.get('epsilon', MCConfig.epsilon),
                        realizations=block.get('realizations', MCConfig.realizations),
                        radiation_bins=block.get('bins', MCConfig.radiation_bins),
                        seed=self.config.get('run', {}).get('seed', block.get('seed', MCConfig.seed)),
                        L=block.get('L', MCConfig.L), z_step=block.get('z_step', MCConfig.z_step),
                        nearest_neighbor=block.get('nearest_neighbor', MCConfig.nearest_neighbor),
                        mercer_terms=block.get('mercer_terms'))

    def run_option(self, key, default=None):
        return self.config.get('run', {}).get(key, default)

    def x_tilde(self):
        span = self.run_option('x_tilde_span', self.x_tilde_span)
        return np.linspace(-span, span, self.run_option('x_tilde_points', self.x_tilde_points))

    # artifacts

    def stage(self, name, text):
        self.artifacts[name] = text

    def stage_csv(self, name, header, rows):
        self.stage(name, csv_text(header, rows))

    def stage_figure(self, name, title, xlabel, ylabel, series, dashed=()):
        metadata = {'subcommand': self.subcommand, 'preset': self.preset, 'config': self.config,
                    'schema_version': self.schema_version}
        self.stage(name, render_figure(title, xlabel, ylabel, series, metadata=metadata, dashed=dashed))

    def commit(self):
        os.makedirs(self.out, exist_ok=True)
        for name in sorted(self.artifacts):
            atomic_write(os.path.join(self.out, name), self.artifacts[name])
        self.logger.info('PekerisRefocus: %d artifacts committed to %s', len(self.artifacts), self.out)

    def summary(self, status, exit_code, error=None):
        info = {'schema_version': self.schema_version, 'subcommand': self.subcommand, 'preset': self.preset,
                'status': status, 'exit_code': exit_code, 'out': self.out, 'artifacts': sorted(self.artifacts)}
        if error is not None:
            info['error'] = {'type': type(error).__name__, 'message': str(error)}
            info['error'].update(error.provenance() if isinstance(error, RefocusError) else {})
        if status == 'ok':
            info['results'] = self.results
        return info

    def generate_payload(self, error, tb):
        dt = datetime.datetime.now()
        payload = {'Error Type': type(error).__name__,
                   'Error Message': '%s' % error,
                   'Module': getattr(error, 'module', None),
                   'Operation': getattr(error, 'operation', None),
                   'Subcommand': self.subcommand,
                   'Preset': self.preset,
                   'Config': self.config,
                   'Date': dt.strftime('%d %B %Y'),
                   'Time': dt.strftime('%I:%M %p'),
                   'Traceback': analyze_traceback(tb, inspection_level=self.inspection_level,
                                                  max_string_length=self.max_string_length)}
        worker = getattr(error, 'payload', None)
        if worker:
            payload['Worker'] = worker
        return payload

    def store_report(self, payload):
        os.makedirs(self.out, exist_ok=True)
        path = os.path.join(self.out, self._failure_report_name)
        atomic_write(path, json.dumps(payload, indent=1, default=str))
        return path

    # dispatch

    def run(self, subcommand=None, preset=None):
        """
        :return: exit code
        """
        self.artifacts = {}
        self.results = {}
        self.subcommand = subcommand
        try:
            self.prepare(subcommand, preset)
        except ConfigError as e:
            self.logger.error('PekerisRefocus: configuration error: %s', e)
            self.artifacts = {}
            self._emit(self.summary('config_error', 2, e))
            return 2
        self.logger.info('PekerisRefocus: running %s%s', self.subcommand,
                         ' (preset %s)' % preset if preset else '')
        try:
            self._build_objects()
            getattr(self, 'run_' + self.subcommand)()
        except ConfigError as e:
            self.logger.error('PekerisRefocus: configuration error: %s', e)
            self.artifacts = {}
            self._emit(self.summary('config_error', 2, e))
            return 2
        except NumericalError as e:
            self.logger.error('PekerisRefocus: %s in %s.%s: %s', type(e).__name__, e.module, e.operation, e)
            self.artifacts = {}
            path = self.store_report(self.generate_payload(e, sys.exc_info()[2]))
            self.logger.info('PekerisRefocus: failure report stored %s', path)
            self._emit(self.summary('numerical_error', 3, e))
            return 3
        self.commit()
        self._emit(self.summary('ok', 0))
        return 0

    def _emit(self, info):
        self.stream.write(json.dumps(info, sort_keys=True, default=_jsonable) + '\n')
        self.stream.flush()

    # subcommands

    def run_modes(self):
        mode_set = solve_dispersion(self.waveguide())
        slowness, curvature = modal_derivatives(mode_set)
        self.stage_csv('modes.csv', ['j', 'sigma', 'beta', 'zeta', 'amp', 'beta_prime', 'beta_second'],
                       ((m.index, m.sigma, m.beta, m.zeta, m.amp, float(slowness[i]), float(curvature[i]))
                        for i, m in enumerate(mode_set.modes)))
        cfg = mode_set.config
        self.results = {'N': mode_set.N, 'k': cfg.k, 'theta': cfg.theta, 'lambda_oc': cfg.lambda_oc,
                        'cutoff': cfg.cutoff, 'max_tail_mass': float(mode_set.tail_mass().max())}

    def _coupling(self, mode_set):
        coupling = assemble_coupling(mode_set, self.medium())
        if self.run_option('nearest_neighbor', False):
            coupling = band_limited_filter(coupling, self.run_option('loss_modes', 1))
        return coupling

    def run_coupling(self):
        mode_set = solve_dispersion(self.waveguide())
        medium = self.medium()
        coupling = self._coupling(mode_set)
        n = coupling.N
        self.stage_csv('coupling.csv', ['j', 'l', 'gamma_c', 'gamma_s', 'gamma_1'],
                       ((j + 1, l + 1, float(coupling.gamma_c[j, l]), float(coupling.gamma_s[j, l]),
                         float(coupling.gamma_1[j, l])) for j in range(n) for l in range(n)))
        self.stage_csv('losses.csv', ['j', 'lambda_c', 'lambda_s'],
                       ((j + 1, float(coupling.lambda_c[j]), float(coupling.lambda_s[j])) for j in range(n)))
        try:
            decay = decay_rate(coupling).to_dict()
        except (NotIrreducible, NoRadiativeLoss) as e:
            self.logger.warning('PekerisRefocus: no decay rate: %s', e)
            decay = None
        self.results = {'coupling': coupling.to_dict(), 'decay': decay,
                        'lambda_xi_change': lambda_xi_convergence(mode_set, medium)}

    def run_power(self):
        mode_set = solve_dispersion(self.waveguide())
        coupling = self._coupling(mode_set)
        z_max = self.run_option('z_max', 1.0)
        evolution = integrate_power(coupling, z_max, checkpoints=self.run_option('checkpoints', 11), rescale=True)
        self.stage_csv('power.csv', ['z', 'j', 'l', 'T'], evolution.rows())
        total = evolution.total_power()
        self.stage_figure('power.svg', 'Total mode power', 'z', 'sum_j T_j^l(z)',
                          [('l=%d' % l, evolution.z_grid, total[:, l - 1])
                           for l in sorted({1, max(1, coupling.N // 2), coupling.N})])
        self.results = {'N': coupling.N, 'z_max': z_max, 'loss_model': coupling.loss_model,
                        'total_power_slope': total_power_slope(evolution, 1)}
        try:
            self.results['decay'] = decay_rate(coupling).to_dict()
        except (NotIrreducible, NoRadiativeLoss) as e:
            self.logger.warning('PekerisRefocus: no decay rate: %s', e)
        taus = self.run_option('tau_sweep')
        if taus:
            self._tau_sweep(coupling, taus, z_max)
        paths = self.run_option('mc_paths')
        if paths:
            self._markov(coupling, evolution, paths)

    def _tau_sweep(self, coupling, taus, z_max):
        try:
            sweep = coupling_strength_sweep(coupling, taus, z_max)
        except (NotIrreducible, NoRadiativeLoss) as e:
            self.logger.warning('PekerisRefocus: no coupling-strength sweep: %s', e)
            return
        header = ['tau', 'lambda_inf_strong', 'lambda_inf_weak', 'strong_deviation']
        self.stage_csv('tau_sweep.csv', header, ([row[key] for key in header] for row in sweep.rows))
        self.results['tau_sweep'] = sweep.to_dict()

    def _markov(self, coupling, evolution, paths):
        """ Jump Markov estimate of the first column of T at z_max next to the power equations. """
        z = float(evolution.z_grid[-1])
        estimate = markov_estimate(coupling, z, 1, paths, seed=self.seed)
        exact = evolution.matrix(z)[:, 0]
        se = np.maximum(estimate.stderr, 1e-300)
        deviations = np.abs(estimate.mean - exact) / se
        self.stage_csv('markov.csv', ['j', 'markov_mean', 'markov_stderr', 'ode', 'standard_errors'],
                       ((j + 1, float(estimate.mean[j]), float(estimate.stderr[j]), float(exact[j]),
                         float(deviations[j])) for j in range(coupling.N)))
        self.results['markov'] = {'z': z, 'n_paths': estimate.n_paths,
                                  'max_standard_errors': float(deviations.max())}

    def run_diffusion(self):
        z = self.run_option('z', [0.0, 0.1, 1.0])
        config = self.diffusion(z)
        field = solve_diffusion(config)
        peaks = np.max(field.shapes, axis=1)
        self.stage_csv('diffusion_T.csv', ['z', 'u', 'T1', 'T1_shape'],
                       ((float(field.z_grid[i]), float(u), float(field.values[i, c]),
                         float(field.shapes[i, c] / peaks[i]))
                        for i in range(len(field.z_grid)) for c, u in enumerate(field.u_centers)))
        x_tilde = self.x_tilde()
        kernels = [refocus_kernel(field, i, x_tilde) for i in range(len(field.z_grid))]
        self.stage_csv('diffusion_H.csv', ['z', 'x_tilde', 'H'], (row for k in kernels for row in k.rows()))
        self.stage_figure('diffusion.svg', 'T1(L,u) normalized by its maximum', 'u', 'T1 / max T1',
                          [('L=%g' % z_i, field.u_centers, field.shapes[i] / peaks[i])
                           for i, z_i in enumerate(field.z_grid)])
        self.results = {'diffusion': config.to_dict(), 'mean_power': field.mean_power().tolist(),
                        'log_mean_power': [field.log_mean_power(i) for i in range(len(field.z_grid))],
                        'richardson_estimate': field.meta.get('richardson_estimate')}
        if config.bc_bottom == 'absorbing':
            self.results['eigenmode'] = principal_eigenmode(config).to_dict()

    def run_profile(self):
        L = self.run_option('L', [0.0, 75.0, 250.0])
        config = self.diffusion(sorted(set(L)))
        mirror = self.mirror()
        field = solve_diffusion(config)
        x_tilde = self.x_tilde()
        reference = sinc_profile(x_tilde)
        columns, rows, series = {}, {}, [('lossless sinc', x_tilde, reference)]
        metrics = {}
        for i, z in enumerate(field.z_grid):
            kernel = continuum_profile(refocus_kernel(field, i, x_tilde), mirror, config.d, config.theta)
            columns[z] = kernel.normalized().values
            metrics[z] = {'continuum': refocus_metrics(kernel).to_dict()}
            series.append(('L=%g' % z, x_tilde, columns[z]))
        discrete = {}
        if 'waveguide' in self.config:
            discrete = self._discrete_profiles(field, mirror, x_tilde, config, metrics)
        for z in field.z_grid:
            for i, x in enumerate(x_tilde):
                rows.setdefault(z, []).append((float(z), float(x), float(columns[z][i]), float(reference[i]),
                                               float(discrete[z][i]) if z in discrete else ''))
        self.stage_csv('profile.csv', ['L', 'x_tilde', 'H_normalized', 'sinc', 'discrete_normalized'],
                       (row for z in field.z_grid for row in rows[z]))
        self.stage_figure('profile.svg', 'Normalized transverse profile', 'x~', 'H(x~,L) / H(0,L)', series,
                          dashed=('lossless sinc',))
        self.results = {'mirror': mirror.to_dict(), 'metrics': {'%g' % z: m for z, m in metrics.items()}}

    def _discrete_profiles(self, field, mirror, x_tilde, config, metrics):
        """ Nearest-neighbour discrete profiles at the waveguide frequency and their distance to the continuum. """
        mode_set = solve_dispersion(self.waveguide())
        coupling = diffusion_coupling(config, mode_set.N)
        grid = sorted(set(float(z) for z in field.z_grid) | {0.0})
        top = max(grid) if max(grid) > 0 else 1.0
        evolution = integrate_power(coupling, top, checkpoints=grid, rescale=True)
        x0 = self.run_option('x0', 0.5 * mode_set.config.d)
        profiles = {}
        for i, z in enumerate(field.z_grid):
            profile = random_profile(mode_set, mirror, evolution, x0, float(z), x_tilde, normalization='scaled')
            continuum = continuum_profile(refocus_kernel(field, i, x_tilde), mirror, config.d, config.theta)
            report = continuum_consistency([profile], continuum, labels=['omega=%g' % mode_set.config.omega])
            metrics[z]['discrete'] = refocus_metrics(profile).to_dict()
            metrics[z]['sup_discrepancy'] = report.discrepancies[0]
            profiles[z] = profile.normalized().values
        return profiles

    def run_resolution(self):
        L = sorted(set(self.run_option('L', [0.0, 1.0, 10.0, 75.0, 250.0])))
        config = self.diffusion(L)
        field = solve_diffusion(config)
        x_tilde = self.x_tilde()
        rows = resolution_sweep([refocus_kernel(field, i, x_tilde) for i in range(len(field.z_grid))])
        self.stage_csv('resolution.csv', ['L', 'fwhm', 'peak', 'log_peak', 'first_null', 'fwhm_ratio'],
                       ((float(z), m.fwhm, m.peak, m.log_peak, '' if m.first_null is None else m.first_null,
                         m.fwhm_ratio) for z, m in rows))
        fwhm = [m.fwhm for _, m in rows]
        series = [('FWHM(L)', [z for z, _ in rows], fwhm)]
        self.results = {'L': [z for z, _ in rows], 'fwhm': fwhm,
                        'nondecreasing': all(b >= a - (x_tilde[1] - x_tilde[0]) for a, b in zip(fwhm, fwhm[1:]))}
        if config.bc_bottom == 'absorbing':
            eigenmode = principal_eigenmode(config)
            asymptote = refocus_metrics(eigenmode_profile(eigenmode, x_tilde)).fwhm
            saturation = math.log(1e-3) / (eigenmode.second_eigenvalue - eigenmode.eigenvalue)
            series.append(('eigenmode asymptote', [L[0], L[-1]], [asymptote, asymptote]))
            self.results.update({'eigenmode': eigenmode.to_dict(), 'asymptote_fwhm': asymptote,
                                 'saturation_L': saturation})
        self.stage_figure('resolution.svg', 'Resolution against propagation distance', 'L', 'FWHM (x~ units)',
                          series, dashed=('eigenmode asymptote',))

    def run_montecarlo(self):
        mode_set = solve_dispersion(self.waveguide())
        medium = self.medium()
        mc = self.montecarlo()
        l0 = self.config.get('montecarlo', {}).get('mode_in', 1)
        if l0 > mode_set.N:
            raise ConfigError('montecarlo.mode_in=%d but the waveguide has %d propagating modes' % (l0, mode_set.N),
                              operation='run_montecarlo')
        estimate = estimate_mean_powers(mode_set, medium, mc, l0, threads=self.threads)
        self.stage_csv('montecarlo.csv', ['realization', 'j', 'power'], estimate.rows())
        self.results = estimate.to_dict()
        if mc.L > 0:
            reference, radiated = power_equation_reference(mode_set, medium, mc, l0)
            se = np.maximum(estimate.stderr, 1e-300)
            self.results.update({'ode': reference.tolist(), 'ode_radiated': radiated,
                                 'max_standard_errors': float((np.abs(estimate.mean - reference) / se).max())})
        self.results['cross_moment_abs'] = np.abs(estimate.cross_moment).tolist()

    def run_validate(self):
        context = ValidationContext(medium_preset=self.run_option('medium', 'exponential'), seed=self.seed,
                                    threads=self.threads)
        report = validate_suite(context, include_slow=self.run_option('slow', False))
        self.stage('validate.json', json.dumps(report, indent=1, sort_keys=True, default=_jsonable))
        self.stage('validate_report.html', render_report(report))
        self.results = {'passed': report['passed'], 'counts': report['counts'],
                        'failed': [c['name'] for c in report['checks'] if c['status'] == 'fail']}


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return str(value)
