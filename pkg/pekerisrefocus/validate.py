"""
Invariant and acceptance battery. Every check is registered with the invariant it guards; a check either returns a
detail dict (pass), raises CheckFailed (fail) or SkipCheck (skip). Any other exception is a failure as well.
"""
import logging
import math
import os
from collections import OrderedDict

import jinja2
import numpy as np
from scipy.linalg import expm

from .diffusion import (DiffusionConfig, cosine_series, eigenmode_profile, principal_eigenmode, refocus_kernel,
                        solve_diffusion)
from .errors import InvalidGenerator, NotIrreducible
from .medium import MediumStats, assemble_coupling, make_kernel
from .montecarlo import MCConfig, epsilon_bias, estimate_mean_powers, power_equation_reference
from .power import (check_generator, coupling_strength_sweep, decay_rate, integrate_power, markov_estimate,
                    spectral_gap, total_power_slope)
from .profile import default_x_tilde, refocus_metrics, sinc_profile
from .spectrum import (WaveguideConfig, asymptotic_spacing_report, dispersion_residual, modal_derivatives,
                       solve_dispersion)
from .timereversal import (MirrorSpec, PulseSpec, continuum_profile, dispersion_kernel, homogeneous_profile,
                           mirror_matrix)

logger = logging.getLogger('PekerisRefocus')

html_template = os.path.join(os.path.dirname(os.path.realpath(__file__)), 'validate_report.html')

CHECKS = OrderedDict()

# n1 = 2, d = 20 as in the figure presets
DEPTH = 20.0
INDEX = 2.0


class CheckFailed(Exception):
    pass


class SkipCheck(Exception):
    pass


def check(name, invariant, slow=False):
    def register(func):
        CHECKS[name] = {'func': func, 'invariant': invariant, 'slow': slow}
        return func
    return register


def wavenumber_for(n_modes, offset=0.3):
    """ k giving n_modes propagating modes with C/pi = n_modes + offset. """
    theta = math.sqrt(1.0 - 1.0 / INDEX ** 2)
    return (n_modes + offset) * math.pi / (INDEX * DEPTH * theta)


def waveguide_for(n_modes):
    return WaveguideConfig.from_wavenumber(wavenumber_for(n_modes), DEPTH, INDEX)


class ValidationContext(object):
    """
    :param assemble: coupling assembly used by the transport checks (swappable for mutation testing)
    :param medium_preset: kernel preset of the random medium
    """

    def __init__(self, assemble=assemble_coupling, medium_preset='exponential', sigma=1.0, a=1.0, seed=0,
                 threads=1):
        self.assemble = assemble
        self.medium_preset = medium_preset
        self.medium = MediumStats(make_kernel(medium_preset, DEPTH, sigma=sigma), a)
        self.seed = seed
        self.threads = threads
        self._coupling = None

    def small_system(self):
        if self._coupling is None:
            mode_set = solve_dispersion(waveguide_for(8))
            self._coupling = (mode_set, self.assemble(mode_set, self.medium))
        return self._coupling

    def require_medium(self):
        if self.medium.kernel.is_zero:
            raise SkipCheck('medium preset %r has no fluctuations' % self.medium_preset)


@check('dispersion-brackets', 'one root per bracket, residual below 1e-10, N = floor(C/pi)')
def check_dispersion(ctx):
    counts = {}
    for n in (5, 10, 34, 100):
        mode_set = solve_dispersion(waveguide_for(n))
        cutoff = mode_set.config.cutoff
        j = np.arange(1, mode_set.N + 1)
        inside = np.all((mode_set.sigma > (j - 0.5) * math.pi) & (mode_set.sigma <= j * math.pi))
        residual = float(np.abs(dispersion_residual(mode_set.sigma, cutoff)).max())
        if mode_set.N != int(math.floor(cutoff / math.pi)) or not inside or residual >= 1e-10:
            raise CheckFailed('N=%d: count %d, brackets %s, residual %.2e' % (n, mode_set.N, inside, residual))
        counts[n] = residual
    return {'max_residual': max(counts.values())}


@check('spacing-trend', 'pi-lattice spacing error shrinks under frequency doubling')
def check_spacing(ctx):
    k0 = wavenumber_for(34)
    values = []
    for i in range(4):
        cfg = WaveguideConfig.from_wavenumber(k0 * 2 ** i, DEPTH, INDEX)
        values.append(asymptotic_spacing_report(solve_dispersion(cfg), 0.6).first_difference)
    if not all(b < a for a, b in zip(values, values[1:])) or values[0] < 2 * values[-1]:
        raise CheckFailed('spacing statistics %s' % values)
    return {'first_difference': values}


@check('sinc-limit', 'scaled homogeneous profile approaches (d1+d2)/d sinc')
def check_sinc_limit(ctx):
    mirror = MirrorSpec(d_M=10.0, d_tilde_1=5.0, d_tilde_2=5.0, alpha_M=0.0)
    level = mirror.half_widths / DEPTH
    gaps = []
    for n in (34, 68, 136):
        profile = homogeneous_profile(solve_dispersion(waveguide_for(n)), mirror, 10.0, normalization='scaled')
        gaps.append(float(np.abs(profile.values - level * sinc_profile(profile.x_tilde)).max()))
    if not all(b < a for a, b in zip(gaps, gaps[1:])) or gaps[-1] >= 0.05 * level:
        raise CheckFailed('sup distances %s' % gaps)
    return {'sup_distance': gaps}


@check('mirror-symmetry', 'mirror matrix symmetric with diagonal in [0, 1]')
def check_mirror(ctx):
    mode_set = solve_dispersion(waveguide_for(10))
    m = mirror_matrix(mode_set, MirrorSpec(d_M=8.0, d_tilde_1=3.0, d_tilde_2=4.0))
    diag = np.diag(m)
    if not np.allclose(m, m.T, atol=1e-14) or diag.min() < 0 or diag.max() > 1 + 1e-12:
        raise CheckFailed('asymmetry %.2e, diagonal range [%.3g, %.3g]'
                          % (np.abs(m - m.T).max(), diag.min(), diag.max()))
    return {'max_diagonal': float(diag.max())}


@check('power-conservation', 'lossless transport conserves total power and keeps T nonnegative')
def check_conservation(ctx):
    mode_set, coupling = ctx.small_system()
    try:
        check_generator(coupling.gamma_c)
    except InvalidGenerator as e:
        raise CheckFailed('transport matrix is not a generator: %s' % e)
    scale = max(float(np.abs(coupling.gamma_c).max()), 1e-300)
    worst_sum, worst_low = 0.0, 0.0
    for z in (0.1, 1.0, 10.0):
        t = expm(coupling.gamma_c * z / scale)
        worst_sum = max(worst_sum, float(np.abs(t.sum(axis=0) - 1.0).max()))
        worst_low = min(worst_low, float(t.min()))
    if worst_sum >= 1e-9 or worst_low < -1e-12:
        raise CheckFailed('column sum error %.2e, smallest entry %.2e' % (worst_sum, worst_low))
    return {'column_sum_error': worst_sum}


@check('equidistribution', 'lossless powers equidistribute at z = 50 / spectral gap')
def check_equidistribution(ctx):
    ctx.require_medium()
    mode_set, coupling = ctx.small_system()
    try:
        gap = spectral_gap(coupling)
    except NotIrreducible as e:
        raise CheckFailed(str(e))
    t = expm(coupling.gamma_c * 50.0 / gap)
    error = float(np.abs(t - 1.0 / mode_set.N).max())
    if error >= 1e-6:
        raise CheckFailed('max |T - 1/N| = %.2e' % error)
    return {'spectral_gap': gap, 'max_error': error}


@check('decay-bounds', 'Lambda_min <= Lambda_inf <= Lambda_bar and total power decays at Lambda_inf')
def check_decay(ctx):
    ctx.require_medium()
    mode_set, coupling = ctx.small_system()
    if not np.any(coupling.lambda_c > 0):
        raise SkipCheck('no radiative loss')
    report = decay_rate(coupling)
    rates = np.linalg.eigvalsh(-coupling.gamma_c + np.diag(coupling.lambda_c))
    horizon = 40.0 / (rates[1] - rates[0])
    evolution = integrate_power(coupling, horizon, checkpoints=[0.0, 0.99 * horizon, horizon], rescale=True)
    slope = total_power_slope(evolution, 1)
    error = abs(-slope - report.lambda_inf) / report.lambda_inf
    if error >= 0.01:
        raise CheckFailed('log slope %.6g against Lambda_inf %.6g' % (slope, report.lambda_inf))
    return report.to_dict()


@check('coupling-strength-limits', 'Lambda_inf tends to Lambda_bar under strong and to Lambda_min under weak coupling')
def check_coupling_strength(ctx):
    ctx.require_medium()
    mode_set, coupling = ctx.small_system()
    if not np.any(coupling.lambda_c > 0):
        raise SkipCheck('no radiative loss')
    z_max = 1.0 / float(np.mean(coupling.lambda_c))
    report = coupling_strength_sweep(coupling, [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6], z_max)
    last = report.rows[-1]
    strong = abs(last['lambda_inf_strong'] - report.lambda_bar) / report.lambda_bar
    weak = abs(last['lambda_inf_weak'] - report.lambda_min) / report.lambda_min
    if not (report.strong_monotone and report.weak_monotone):
        raise CheckFailed('sweep is not monotone (strong %s, weak %s)' % (report.strong_monotone,
                                                                          report.weak_monotone))
    if strong >= 1e-2 or weak >= 1e-2 or last['strong_deviation'] >= 1e-2:
        raise CheckFailed('at tau=%g: strong gap %.2e, weak gap %.2e, |T - exp(-Lambda_bar L)/N| %.2e'
                          % (last['tau'], strong, weak, last['strong_deviation']))
    return {'tau': last['tau'], 'strong_gap': strong, 'weak_gap': weak,
            'strong_deviation': last['strong_deviation']}


@check('markov-consistency', 'jump Markov estimate agrees with the power equations')
def check_markov(ctx):
    ctx.require_medium()
    mode_set, coupling = ctx.small_system()
    z = 1.0 / spectral_gap(coupling)
    exact = integrate_power(coupling, z, checkpoints=[0.0, z]).matrix(z)[:, 0]
    estimate = markov_estimate(coupling, z, 1, 20000, seed=ctx.seed)
    worst = float((np.abs(estimate.mean - exact) / np.maximum(estimate.stderr, 1e-12)).max())
    if worst > 3.0:
        raise CheckFailed('largest deviation %.2f standard errors' % worst)
    return {'max_standard_errors': worst}


@check('diffusion-reflecting', 'reflecting bottom keeps T identically 1')
def check_reflecting(ctx):
    field = solve_diffusion(DiffusionConfig(a0=1.0, a=1.0, d=DEPTH, n1=INDEX, bc_bottom='reflecting',
                                            z_checkpoints=(0.0, 1.0, 10.0, 100.0)))
    error = float(np.abs(field.values - 1.0).max())
    if error >= 1e-10:
        raise CheckFailed('max |T - 1| = %.2e' % error)
    return {'max_error': error}


@check('diffusion-series', 'constant coefficient solution matches the cosine series')
def check_series(ctx):
    config = DiffusionConfig(a0=1.0, a=math.pi / DEPTH, d=DEPTH, n1=INDEX, z_checkpoints=(0.1, 1.0))
    field = solve_diffusion(config)
    error = max(float(np.abs(field.values[i] - cosine_series(1.0, field.u_centers, z)).max())
                for i, z in enumerate(field.z_grid))
    if error >= 1e-6:
        raise CheckFailed('sup-norm error %.2e' % error)
    return {'sup_error': error}


@check('diffusion-order', 'diffusion error falls as the square of the cell width')
def check_diffusion_order(ctx):
    errors = []
    for cells in (64, 128, 256):
        config = DiffusionConfig(a0=1.0, a=math.pi / DEPTH, d=DEPTH, n1=INDEX, cells=cells, tolerance=None,
                                 z_checkpoints=(0.1,))
        field = solve_diffusion(config)
        errors.append(float(np.abs(field.values[0] - cosine_series(1.0, field.u_centers, 0.1)).max()))
    ratios = [a / b for a, b in zip(errors, errors[1:])]
    if min(ratios) <= 3.0:
        raise CheckFailed('error ratios under halving %s (errors %s)' % (ratios, errors))
    return {'errors': errors, 'observed_order': [math.log2(r) for r in ratios]}


@check('profile-widening', 'refocused spot widens with distance and saturates at the eigenmode width')
def check_profile_widening(ctx):
    x = default_x_tilde()
    cell = float(x[1] - x[0])
    base = DiffusionConfig(a0=1.0, a=1.0, d=DEPTH, n1=INDEX)
    eigenmode = principal_eigenmode(base)
    saturation = math.log(1e-3) / (eigenmode.second_eigenvalue - eigenmode.eigenvalue)
    distances = sorted({0.0, 75.0, 250.0, saturation})
    field = solve_diffusion(base._replace(z_checkpoints=tuple(distances)))
    fwhm = dict((z, refocus_metrics(refocus_kernel(field, i, x)).fwhm) for i, z in enumerate(field.z_grid))
    asymptote = refocus_metrics(eigenmode_profile(eigenmode, x)).fwhm
    if not fwhm[75.0] > fwhm[0.0] or fwhm[250.0] < fwhm[75.0] - cell:
        raise CheckFailed('FWHM(0)=%.4f FWHM(75)=%.4f FWHM(250)=%.4f' % (fwhm[0.0], fwhm[75.0], fwhm[250.0]))
    ordered = [fwhm[z] for z in distances]
    if not all(b >= a - cell for a, b in zip(ordered, ordered[1:])):
        raise CheckFailed('FWHM decreases along %s: %s' % (distances, ordered))
    gap = abs(fwhm[saturation] - asymptote) / asymptote
    if gap >= 0.02:
        raise CheckFailed('FWHM %.4f at L=%.3g is %.1f%% from the eigenmode width %.4f'
                          % (fwhm[saturation], saturation, 100 * gap, asymptote))
    return {'fwhm': ordered, 'distances': distances, 'asymptote': asymptote, 'saturation_gap': gap}


@check('alpha-independence', 'mirror size exponent does not change the scaled random profile width')
def check_alpha_independence(ctx):
    x = default_x_tilde()
    config = DiffusionConfig(a0=1.0, a=1.0, d=DEPTH, n1=INDEX, z_checkpoints=(75.0,))
    kernel = refocus_kernel(solve_diffusion(config), 0, x)
    widths = []
    for alpha in (0.0, 1.0):
        mirror = MirrorSpec(d_M=10.0, d_tilde_1=5.0, d_tilde_2=5.0, alpha_M=alpha)
        widths.append(refocus_metrics(continuum_profile(kernel, mirror, DEPTH, config.theta)).fwhm)
    if abs(widths[0] - widths[1]) > x[1] - x[0]:
        raise CheckFailed('FWHM %.4f (alpha_M=0) against %.4f (alpha_M=1)' % tuple(widths))
    return {'fwhm': widths}


@check('dispersion-kernel', 'pair kernels are pure phase filters and the diagonal kernel is the identity')
def check_kernel(ctx):
    mode_set = solve_dispersion(waveguide_for(10))
    pulse = PulseSpec.gaussian()
    norm = np.linalg.norm(pulse.samples)
    ratio = float(np.linalg.norm(dispersion_kernel(mode_set, 1, 4, 50.0, pulse)) / norm)
    identity = float(np.abs(dispersion_kernel(mode_set, 3, 3, 50.0, pulse) - pulse.samples).max())
    if abs(ratio - 1.0) > 1e-10 or identity > 1e-12:
        raise CheckFailed('norm ratio %.12f, identity error %.2e' % (ratio, identity))
    return {'norm_ratio': ratio}


@check('gaussian-kernel', 'dispersion kernel of a Gaussian pulse is the closed-form chirped Gaussian')
def check_gaussian_kernel(ctx):
    mode_set = solve_dispersion(waveguide_for(10))
    pulse = PulseSpec.gaussian()
    _, curvature = modal_derivatives(mode_set)
    phi = 2.0
    out = dispersion_kernel(mode_set, 1, 4, phi / (curvature[0] - curvature[3]), pulse)
    t = pulse.times
    expected = np.exp(-t ** 2 / (2 * (1 - 1j * phi))) / np.sqrt(1 - 1j * phi)
    error = float(np.abs(out - expected).max())
    if error >= 1e-8:
        raise CheckFailed('max deviation from the chirped Gaussian %.2e' % error)
    return {'max_error': error}


@check('montecarlo-vs-ode', 'Monte Carlo mean powers agree with the power equations', slow=True)
def check_montecarlo(ctx):
    ctx.require_medium()
    mode_set = solve_dispersion(waveguide_for(3))
    medium = MediumStats(make_kernel(ctx.medium_preset, DEPTH, sigma=30.0), 1.0)
    mc = MCConfig(epsilon=1e-3, realizations=200, seed=ctx.seed, L=1.0, nearest_neighbor=True)
    reference, _ = power_equation_reference(mode_set, medium, mc, 1)
    estimate = estimate_mean_powers(mode_set, medium, mc, 1, threads=ctx.threads)
    worst = float((np.abs(estimate.mean - reference) / np.maximum(estimate.stderr, 1e-12)).max())
    if worst > 3.0 or estimate.max_drift >= 1e-8:
        raise CheckFailed('deviation %.2f SE, unitarity drift %.2e' % (worst, estimate.max_drift))
    return {'max_standard_errors': worst, 'max_drift': estimate.max_drift}


@check('epsilon-bias', 'Monte Carlo bias against the power equations shrinks with epsilon', slow=True)
def check_epsilon_bias(ctx):
    ctx.require_medium()
    mode_set = solve_dispersion(waveguide_for(3))
    medium = MediumStats(make_kernel(ctx.medium_preset, DEPTH, sigma=30.0), 1.0)
    mc = MCConfig(epsilon=0.08, realizations=200, seed=ctx.seed, L=1.0, nearest_neighbor=True)
    report = epsilon_bias(mode_set, medium, mc, 1, threads=ctx.threads, factor=0.25)
    if not report.shrinks:
        raise CheckFailed('max |MC - ODE| %s at epsilon %s' % (report.errors, report.epsilons))
    return report.to_dict()


def validate_suite(context=None, include_slow=False, names=None):
    """
    Run the registered checks.

    :param context: ValidationContext (default: exponential medium, standard assembly)
    :param include_slow: also run the Monte Carlo acceptance checks
    :param names: restrict to these check names
    :return: report dict
    """
    ctx = context or ValidationContext()
    results = []
    for name, spec in CHECKS.items():
        if names is not None and name not in names:
            continue
        entry = {'name': name, 'invariant': spec['invariant']}
        if spec['slow'] and not include_slow:
            entry.update(status='skip', detail='slow check, run with --slow')
        else:
            try:
                entry.update(status='pass', detail=spec['func'](ctx))
            except SkipCheck as e:
                entry.update(status='skip', detail=str(e))
            except CheckFailed as e:
                entry.update(status='fail', detail=str(e))
            except Exception as e:
                entry.update(status='fail', detail='%s: %s' % (type(e).__name__, e))
        logger.info('PekerisRefocus: check %s %s', name, entry['status'])
        results.append(entry)
    counts = {s: sum(1 for r in results if r['status'] == s) for s in ('pass', 'fail', 'skip')}
    return {'schema_version': 1, 'medium': ctx.medium_preset, 'checks': results, 'counts': counts,
            'passed': counts['fail'] == 0}


def render_report(report):
    with open(html_template, 'r') as _f:
        template = jinja2.Template(_f.read(), autoescape=True)
    return template.render(info=report)
