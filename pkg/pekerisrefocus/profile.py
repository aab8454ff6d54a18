"""
Transverse refocused profiles and their resolution metrics.
"""
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .errors import LobeNotResolved

# half-maximum crossing of sin(y)/y, mapped to x~ = y / (2 pi) and doubled
SINC_HALF_MAX = brentq(lambda y: math.sin(y) / y - 0.5, 1.0, 3.0, xtol=1e-15)
SINC_FWHM = SINC_HALF_MAX / math.pi


def default_x_tilde(span=3.0, points=601):
    return np.linspace(-span, span, points)


def sinc_profile(x_tilde):
    """ sinc(2 pi x~) with sinc(y) = sin(y) / y. """
    return np.sinc(2.0 * np.asarray(x_tilde, dtype=float))


@dataclass
class RefocusProfile:
    """
    Refocused amplitude on a grid of offsets x~ measured in units of lambda_oc / theta. The amplitude is
    `values * exp(log_scale)`; metrics only depend on the shape.
    """
    x_tilde: np.ndarray
    values: np.ndarray
    L: float = 0.0
    normalization: str = 'raw'
    log_scale: float = 0.0

    def amplitude(self):
        return self.values * math.exp(self.log_scale)

    def normalized(self):
        i0 = int(np.argmin(np.abs(self.x_tilde)))
        return replace(self, values=self.values / self.values[i0], log_scale=0.0,
                       normalization=self.normalization + '/peak')

    def rescaled(self, factor):
        return replace(self, values=self.values * factor)

    def rows(self):
        scale = math.exp(self.log_scale)
        for x, v in zip(self.x_tilde, self.values):
            yield self.L, x, v * scale


@dataclass(frozen=True)
class ResolutionMetrics:
    peak: float
    log_peak: float
    fwhm: float
    first_null: float
    fwhm_ratio: float

    def to_dict(self):
        return {'peak': self.peak, 'log_peak': self.log_peak, 'fwhm': self.fwhm, 'first_null': self.first_null,
                'fwhm_ratio': self.fwhm_ratio}


def _crossing(x, v, level, start, step):
    i = start
    while 0 <= i + step < len(v):
        i += step
        if v[i] < level:
            prev = i - step
            if abs(prev - start) < 1:
                raise LobeNotResolved('Main lobe spans fewer than two grid points')
            return x[prev] + (v[prev] - level) * (x[i] - x[prev]) / (v[prev] - v[i])
    raise LobeNotResolved('Grid does not reach the half-maximum of the main lobe')


def refocus_metrics(profile):
    """
    Peak amplitude at x~ = 0, full width at half maximum and first null of the main lobe, in units of
    lambda_oc / theta.

    :return: ResolutionMetrics
    """
    x = np.asarray(profile.x_tilde, dtype=float)
    v = np.asarray(profile.values, dtype=float)
    i0 = int(np.argmin(np.abs(x)))
    peak = v[i0]
    if not np.isfinite(peak) or peak <= 0:
        raise LobeNotResolved('Profile has no positive peak at x~=0')
    half = 0.5 * peak
    right = _crossing(x, v, half, i0, 1)
    left = _crossing(x, v, half, i0, -1)

    first_null = None
    for i in range(i0 + 1, len(v)):
        if v[i] <= 0:
            first_null = x[i - 1] + v[i - 1] * (x[i] - x[i - 1]) / (v[i - 1] - v[i])
            break
    if first_null is None:
        for i in range(i0 + 1, len(v) - 1):
            if v[i] < v[i - 1] and v[i] <= v[i + 1]:
                first_null = x[i]
                break

    fwhm = right - left
    return ResolutionMetrics(peak=float(peak * math.exp(profile.log_scale)),
                             log_peak=float(math.log(peak) + profile.log_scale),
                             fwhm=float(fwhm), first_null=None if first_null is None else float(first_null),
                             fwhm_ratio=float(fwhm / SINC_FWHM))
