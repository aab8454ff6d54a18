"""
Time-reversal refocusing: mirror coupling matrix, refocused transverse profiles in homogeneous and random waveguides,
arrival times of the coherent pair contributions and the dispersion kernels that shape them.

Profiles are sampled at x = x0 + (lambda_oc / theta) x~. Mode shapes are extended to x < 0 as odd functions, the
image across the pressure-release surface.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MirrorOutsideOcean
from .power import coherent_pair_amplitude
from .profile import RefocusProfile, default_x_tilde, refocus_metrics
from .spectrum import check_index, modal_derivatives, mode_shapes

logger = logging.getLogger('TimeReversal')


@dataclass(frozen=True)
class MirrorSpec:
    """
    Time-reversal mirror [d_M - lambda_oc^alpha_M d~1, d_M + lambda_oc^alpha_M d~2].
    """
    d_M: float
    d_tilde_1: float
    d_tilde_2: float
    alpha_M: float = 0.0

    def __post_init__(self):
        if not (self.d_tilde_1 > 0 and self.d_tilde_2 > 0):
            raise ConfigError('mirror.d_tilde_1 and mirror.d_tilde_2 must be > 0', module='timereversal',
                              operation='MirrorSpec')
        if not 0.0 <= self.alpha_M <= 1.0:
            raise ConfigError('mirror.alpha_M must lie in [0, 1], got %r' % self.alpha_M, module='timereversal',
                              operation='MirrorSpec')

    @property
    def half_widths(self):
        return self.d_tilde_1 + self.d_tilde_2

    def bounds(self, config):
        """ (d1, d2) for the carrier wavelength of `config`. """
        size = config.lambda_oc ** self.alpha_M
        d1 = self.d_M - size * self.d_tilde_1
        d2 = self.d_M + size * self.d_tilde_2
        if not 0.0 <= d1 < d2 <= config.d:
            raise MirrorOutsideOcean('Mirror [%g, %g] is not inside the ocean layer [0, %g]' % (d1, d2, config.d))
        return d1, d2

    def scale_factor(self, config):
        """ 2 lambda_oc^(1 - alpha_M) / theta, which maps discrete profiles onto (d~1 + d~2)/d sinc. """
        return 2.0 * config.lambda_oc ** (1.0 - self.alpha_M) / config.theta

    def to_dict(self):
        return {'d_M': self.d_M, 'd_tilde_1': self.d_tilde_1, 'd_tilde_2': self.d_tilde_2, 'alpha_M': self.alpha_M}


@dataclass(frozen=True)
class PulseSpec:
    """
    Baseband envelope of the emitted pulse.

    :param samples: envelope samples in time
    :param sample_rate: samples per unit time
    :param omega0: carrier frequency
    :param q: bandwidth exponent
    """
    samples: np.ndarray
    sample_rate: float
    omega0: float = 1.0
    q: float = 0.5

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1 or not np.all(np.isfinite(samples)):
            raise ConfigError('Pulse envelope must be a finite 1-d array', module='timereversal',
                              operation='PulseSpec')
        if not self.sample_rate > 0:
            raise ConfigError('Pulse sample rate must be > 0', module='timereversal', operation='PulseSpec')
        if not 0.0 < self.q < 1.0:
            raise ConfigError('Pulse bandwidth exponent q must lie in (0, 1)', module='timereversal',
                              operation='PulseSpec')
        object.__setattr__(self, 'samples', samples)

    @classmethod
    def gaussian(cls, duration=40.0, sample_rate=20.0, omega0=1.0):
        t = np.arange(-duration / 2, duration / 2, 1.0 / sample_rate)
        return cls(samples=np.exp(-t ** 2 / 2), sample_rate=sample_rate, omega0=omega0)

    @property
    def times(self):
        n = len(self.samples)
        return (np.arange(n) - n // 2) / self.sample_rate

    def energy(self):
        return float(np.sum(np.abs(self.samples) ** 2) / self.sample_rate)


def _sine_product_integral(c, d1, d2):
    """ int_{d1}^{d2} cos(c x) dx, finite at c = 0. """
    width = d2 - d1
    return width * np.cos(c * 0.5 * (d1 + d2)) * np.sinc(c * width / (2 * math.pi))


def aperture_matrix(mode_set, d1, d2):
    """
    M_jl = int_{d1}^{d2} phi_j phi_l dx for 0 <= d1 <= d2 <= d, by the exact antiderivative of sine products.
    """
    d = mode_set.config.d
    if not 0.0 <= d1 <= d2 <= d:
        raise MirrorOutsideOcean('Interval [%g, %g] is not inside the ocean layer [0, %g]' % (d1, d2, d))
    wave = mode_set.sigma / d
    minus = wave[:, None] - wave[None, :]
    plus = wave[:, None] + wave[None, :]
    amp = np.outer(mode_set.amp, mode_set.amp)
    m = 0.5 * amp * (_sine_product_integral(minus, d1, d2) - _sine_product_integral(plus, d1, d2))
    return 0.5 * (m + m.T)


def mirror_matrix(mode_set, mirror):
    """
    Time-reversal coupling matrix of `mirror`.

    :return: symmetric N x N array
    """
    d1, d2 = mirror.bounds(mode_set.config)
    return aperture_matrix(mode_set, d1, d2)


def mirror_matrix_closed_form(mode_set, mirror):
    """
    Product-to-sum closed form A_j A_l [S(a-b) - S(a+b)], S(c) = (sin(c d2) - sin(c d1)) / c. It is twice the
    integral returned by `mirror_matrix`.
    """
    d1, d2 = mirror.bounds(mode_set.config)
    wave = mode_set.sigma / mode_set.config.d
    minus = wave[:, None] - wave[None, :]
    plus = wave[:, None] + wave[None, :]
    with np.errstate(divide='ignore', invalid='ignore'):
        s_minus = (np.sin(minus * d2) - np.sin(minus * d1)) / minus
    np.fill_diagonal(s_minus, d2 - d1)
    s_plus = (np.sin(plus * d2) - np.sin(plus * d1)) / plus
    return np.outer(mode_set.amp, mode_set.amp) * (s_minus - s_plus)


def _check_source(mode_set, x0, operation):
    if not 0.0 < x0 < mode_set.config.d:
        raise ConfigError('Source depth x0=%g must lie in (0, %g)' % (x0, mode_set.config.d),
                          module='timereversal', operation=operation)


def _line_shapes(mode_set, x0, x_tilde):
    """ phi_l(x0) and phi_l(x0 + lambda_oc/theta x~) for all modes. """
    cfg = mode_set.config
    x = x0 + cfg.lambda_oc / cfg.theta * np.asarray(x_tilde, dtype=float)
    at_source = mode_shapes(mode_set, np.array(x0))
    on_line = np.sign(x) * mode_shapes(mode_set, np.abs(x))
    return at_source, on_line


def _profile(mode_set, mirror, weights, x0, x_tilde, L, normalization, log_scale=0.0):
    at_source, on_line = _line_shapes(mode_set, x0, x_tilde)
    values = 0.25 * (weights * at_source) @ on_line
    if normalization == 'scaled':
        values = values * mirror.scale_factor(mode_set.config)
    elif normalization != 'raw':
        raise ValueError('normalization must be raw or scaled, got %r' % normalization)
    return RefocusProfile(x_tilde=np.asarray(x_tilde, dtype=float), values=values, L=float(L),
                          normalization=normalization, log_scale=log_scale)


def homogeneous_profile(mode_set, mirror, x0, x_tilde_grid=None, normalization='raw'):
    """
    Refocused profile in the unperturbed waveguide, (1/4) sum_j M_jj phi_j(x0) phi_j(x).

    :param normalization: 'raw' or 'scaled' (multiplied by 2 lambda_oc^(1 - alpha_M) / theta)
    """
    _check_source(mode_set, x0, 'homogeneous_profile')
    x_tilde = default_x_tilde() if x_tilde_grid is None else x_tilde_grid
    weights = np.diag(mirror_matrix(mode_set, mirror))
    return _profile(mode_set, mirror, weights, x0, x_tilde, 0.0, normalization)


def random_profile(mode_set, mirror, power, x0, L, x_tilde_grid=None, normalization='raw'):
    """
    Mean refocused profile after propagation through the random section,
    (1/4) sum_{j,l} M_jj T_j^l(L) phi_l(x0) phi_l(x).

    :param power: PowerEvolution holding a checkpoint at L
    """
    _check_source(mode_set, x0, 'random_profile')
    x_tilde = default_x_tilde() if x_tilde_grid is None else x_tilde_grid
    transfer, log_scale = power.scaled(L)
    if transfer.shape[0] != mode_set.N:
        raise ValueError('Power evolution has %d modes, mode set has %d' % (transfer.shape[0], mode_set.N))
    weights = np.diag(mirror_matrix(mode_set, mirror)) @ transfer
    return _profile(mode_set, mirror, weights, x0, x_tilde, L, normalization, log_scale)


def equidistributed_profile(mode_set, mirror, x0, x_tilde_grid=None, normalization='raw'):
    """
    Lossless large-L limit, energy spread evenly over the modes: (1/4)(sum_j M_jj)(1/N) sum_l phi_l(x0) phi_l(x).
    """
    _check_source(mode_set, x0, 'equidistributed_profile')
    x_tilde = default_x_tilde() if x_tilde_grid is None else x_tilde_grid
    total = float(np.trace(mirror_matrix(mode_set, mirror)))
    weights = np.full(mode_set.N, total / mode_set.N)
    return _profile(mode_set, mirror, weights, x0, x_tilde, math.inf, normalization)


def continuum_profile(kernel, mirror, d, theta):
    """
    Continuum limit of the scaled random profile: (d~1 + d~2)/d H(x~, L), with an extra factor theta for a mirror of
    the size of the wavelength (alpha_M = 1).

    :param kernel: RefocusProfile from diffusion.refocus_kernel
    """
    factor = mirror.half_widths / d
    if mirror.alpha_M == 1.0:
        factor *= theta
    profile = kernel.rescaled(factor)
    profile.normalization = 'scaled'
    return profile


@dataclass
class ConsistencyReport:
    labels: list
    discrepancies: list
    decreasing: bool
    span: float = 3.0
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        info = dict(self.meta)
        info.update({'labels': list(self.labels), 'sup_discrepancy': list(self.discrepancies),
                     'decreasing': self.decreasing, 'span': self.span})
        return info


def continuum_consistency(profiles, continuum, labels=None, span=3.0):
    """
    Relative sup-norm distance on |x~| <= span between scaled discrete profiles (one per frequency, in increasing
    order) and the scaled continuum profile.

    :return: ConsistencyReport
    """
    labels = list(range(len(profiles))) if labels is None else list(labels)
    x_ref = np.asarray(continuum.x_tilde, dtype=float)
    reference_peak = float(np.max(np.abs(continuum.values)))
    discrepancies = []
    for label, profile in zip(labels, profiles):
        x = np.asarray(profile.x_tilde, dtype=float)
        window = np.abs(x) <= span + 1e-12
        target = np.interp(x[window], x_ref, continuum.values)
        # compare on the continuum's log scale
        discrete = profile.values[window] * math.exp(profile.log_scale - continuum.log_scale)
        gap = float(np.max(np.abs(discrete - target)) / reference_peak)
        logger.info('TimeReversal: %s sup discrepancy to the continuum profile %.4f', label, gap)
        discrepancies.append(gap)
    decreasing = all(b < a for a, b in zip(discrepancies, discrepancies[1:]))
    return ConsistencyReport(labels=labels, discrepancies=discrepancies, decreasing=decreasing, span=span,
                             meta={'L': continuum.L})


def arrival_times(mode_set, L, t1=0.0):
    """
    Arrival times t_jm = t1 + (beta'_m - beta'_j) L of the coherent pair contributions.

    :return: N x N array, entry [j-1, m-1]
    """
    slowness, _ = modal_derivatives(mode_set)
    return t1 + (slowness[None, :] - slowness[:, None]) * L


def dispersion_kernel(mode_set, j, m, L, pulse, derivatives=None):
    """
    Envelope of the pair (j, m) contribution: the pulse filtered by the pure phase
    exp(i (beta''_j - beta''_m) L w^2 / 2).

    :param derivatives: precomputed (beta', beta'') of `mode_set`
    :return: complex samples on the pulse's time grid
    """
    check_index(mode_set, j, 'dispersion_kernel')
    check_index(mode_set, m, 'dispersion_kernel')
    samples = np.asarray(pulse.samples)
    if j == m:
        return samples.astype(complex)
    _, curvature = modal_derivatives(mode_set) if derivatives is None else derivatives
    chirp = (curvature[j - 1] - curvature[m - 1]) * L
    w = 2 * math.pi * np.fft.fftfreq(len(samples), d=1.0 / pulse.sample_rate)
    return np.fft.ifft(np.fft.fft(samples) * np.exp(0.5j * chirp * w ** 2))


def pair_signal(mode_set, coupling, j, m, L, pulse):
    """
    Mean refocused contribution of the pair (j, m) around t_jm: exp(Q_jm L) times the dispersed envelope.
    """
    return coherent_pair_amplitude(coupling, j, m, L) * dispersion_kernel(mode_set, j, m, L, pulse)


def resolution_sweep(profiles):
    """ (L, metrics) for each profile, in the order given. """
    rows = []
    for profile in profiles:
        metrics = refocus_metrics(profile)
        logger.info('TimeReversal: L=%g fwhm=%.4f first_null=%s', profile.L, metrics.fwhm, metrics.first_null)
        rows.append((profile.L, metrics))
    return rows
