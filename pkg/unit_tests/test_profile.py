import numpy as np
import pytest

from pekerisrefocus.errors import LobeNotResolved
from pekerisrefocus.profile import SINC_FWHM, RefocusProfile, default_x_tilde, refocus_metrics, sinc_profile


def test_sinc_constants():
    assert SINC_FWHM == pytest.approx(0.6033, abs=1e-4)
    x = default_x_tilde()
    assert x[0] == -3.0 and x[-1] == 3.0 and len(x) == 601
    assert sinc_profile(0.5) == pytest.approx(0.0, abs=1e-15)


def test_metrics_of_sinc():
    x = default_x_tilde()
    metrics = refocus_metrics(RefocusProfile(x, 2.0 * sinc_profile(x), log_scale=1.0))
    assert metrics.peak == pytest.approx(2.0 * np.e)
    assert metrics.log_peak == pytest.approx(np.log(2.0) + 1.0)
    assert metrics.fwhm == pytest.approx(SINC_FWHM, abs=1e-4)
    assert metrics.fwhm_ratio == pytest.approx(1.0, abs=1e-3)
    assert metrics.first_null == pytest.approx(0.5, abs=1e-6)


def test_normalized_profile():
    x = default_x_tilde()
    profile = RefocusProfile(x, 3.0 * sinc_profile(x), L=7.0, normalization='scaled', log_scale=-4.0)
    unit = profile.normalized()
    assert unit.values[300] == 1.0
    assert unit.log_scale == 0.0
    assert unit.normalization == 'scaled/peak'
    assert unit.L == 7.0
    rows = list(profile.rows())
    assert rows[300] == (7.0, x[300], pytest.approx(3.0 * np.exp(-4.0)))


def test_unresolved_lobes():
    x = default_x_tilde()
    with pytest.raises(LobeNotResolved):
        refocus_metrics(RefocusProfile(x, -sinc_profile(x)))
    with pytest.raises(LobeNotResolved):
        refocus_metrics(RefocusProfile(x, np.ones_like(x)))
    spike = np.zeros_like(x)
    spike[300] = 1.0
    with pytest.raises(LobeNotResolved):
        refocus_metrics(RefocusProfile(x, spike))
