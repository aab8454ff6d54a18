import math

import numpy as np
import pytest

from pekerisrefocus.diffusion import DiffusionConfig, diffusion_coupling, refocus_kernel, solve_diffusion
from pekerisrefocus.errors import ConfigError, IndexOutOfRange, MirrorOutsideOcean
from pekerisrefocus.medium import CouplingMatrices
from pekerisrefocus.power import integrate_power, spectral_gap
from pekerisrefocus.profile import default_x_tilde, refocus_metrics, sinc_profile
from pekerisrefocus.spectrum import WaveguideConfig, modal_derivatives, solve_dispersion
from pekerisrefocus.timereversal import (MirrorSpec, PulseSpec, aperture_matrix, arrival_times, continuum_consistency,
                                         continuum_profile, dispersion_kernel, equidistributed_profile,
                                         homogeneous_profile, mirror_matrix, mirror_matrix_closed_form, pair_signal,
                                         random_profile, resolution_sweep)

from .conftest import DEPTH, INDEX, wavenumber_for


def test_mirror_validation(figure_waveguide):
    with pytest.raises(ConfigError):
        MirrorSpec(d_M=10.0, d_tilde_1=0.0, d_tilde_2=1.0)
    with pytest.raises(ConfigError):
        MirrorSpec(d_M=10.0, d_tilde_1=1.0, d_tilde_2=1.0, alpha_M=2.0)
    with pytest.raises(MirrorOutsideOcean):
        MirrorSpec(d_M=18.0, d_tilde_1=1.0, d_tilde_2=5.0).bounds(figure_waveguide)
    assert MirrorSpec(d_M=10.0, d_tilde_1=5.0, d_tilde_2=5.0).bounds(figure_waveguide) == (5.0, 15.0)


def test_mirror_matrix_properties(small_modes):
    m = mirror_matrix(small_modes, MirrorSpec(d_M=8.0, d_tilde_1=3.0, d_tilde_2=4.0))
    np.testing.assert_allclose(m, m.T, atol=1e-14)
    assert np.all(np.diag(m) >= 0) and np.all(np.diag(m) <= 1)


def test_mirror_matrix_forms_agree(small_modes):
    mirror = MirrorSpec(d_M=8.0, d_tilde_1=3.0, d_tilde_2=4.0)
    np.testing.assert_allclose(mirror_matrix_closed_form(small_modes, mirror), 2 * mirror_matrix(small_modes, mirror),
                               atol=1e-12)


def test_full_aperture_is_nearly_identity(small_modes):
    m = aperture_matrix(small_modes, 0.0, DEPTH)
    # the remainder is the energy below the ocean layer
    np.testing.assert_allclose(np.diag(m), 1.0 - small_modes.tail_mass(), atol=1e-12)
    with pytest.raises(MirrorOutsideOcean):
        aperture_matrix(small_modes, -1.0, 5.0)


def test_homogeneous_profile_approaches_sinc(figure_modes, centered_mirror):
    profile = homogeneous_profile(figure_modes, centered_mirror, 10.0, normalization='scaled')
    level = centered_mirror.half_widths / DEPTH
    assert np.abs(profile.values - level * sinc_profile(profile.x_tilde)).max() < 0.2 * level
    assert profile.normalization == 'scaled'
    with pytest.raises(ConfigError):
        homogeneous_profile(figure_modes, centered_mirror, 0.0)
    with pytest.raises(ValueError):
        homogeneous_profile(figure_modes, centered_mirror, 10.0, normalization='peak')


def test_sinc_limit_improves_with_frequency(centered_mirror):
    level = centered_mirror.half_widths / DEPTH
    gaps = []
    for n in (34, 68):
        mode_set = solve_dispersion(WaveguideConfig.from_wavenumber(wavenumber_for(n), DEPTH, INDEX))
        profile = homogeneous_profile(mode_set, centered_mirror, 10.0, normalization='scaled')
        gaps.append(np.abs(profile.values - level * sinc_profile(profile.x_tilde)).max())
    assert gaps[1] < gaps[0]


def test_random_profile_at_zero_distance_is_homogeneous(small_modes, small_coupling, centered_mirror):
    power = integrate_power(small_coupling, 1.0, checkpoints=[0.0, 1.0])
    random = random_profile(small_modes, centered_mirror, power, 10.0, 0.0)
    homogeneous = homogeneous_profile(small_modes, centered_mirror, 10.0)
    np.testing.assert_allclose(random.values, homogeneous.values, atol=1e-14)
    later = random_profile(small_modes, centered_mirror, power, 10.0, 1.0)
    assert later.L == 1.0


def test_equidistributed_profile_limit(small_modes, small_coupling, centered_mirror):
    lossless = CouplingMatrices.from_transport(small_coupling.gamma_c, loss_model='lossless')
    z = 50.0 / spectral_gap(lossless)
    power = integrate_power(lossless, z, checkpoints=[0.0, z])
    late = random_profile(small_modes, centered_mirror, power, 10.0, z)
    limit = equidistributed_profile(small_modes, centered_mirror, 10.0)
    assert math.isinf(limit.L)
    np.testing.assert_allclose(late.values, limit.values, atol=1e-8 * np.abs(limit.values).max())


def test_continuum_profile_scaling(centered_mirror):
    config = DiffusionConfig(a0=1.0, a=1.0, d=DEPTH, n1=INDEX, z_checkpoints=(0.0,))
    kernel = refocus_kernel(solve_diffusion(config), 0, default_x_tilde())
    profile = continuum_profile(kernel, centered_mirror, DEPTH, config.theta)
    np.testing.assert_allclose(profile.values, 0.5 * sinc_profile(kernel.x_tilde), atol=1e-10)
    wide = MirrorSpec(d_M=10.0, d_tilde_1=5.0, d_tilde_2=5.0, alpha_M=1.0)
    np.testing.assert_allclose(continuum_profile(kernel, wide, DEPTH, config.theta).values,
                               config.theta * profile.values)


def test_scaled_width_does_not_depend_on_mirror_exponent():
    config = DiffusionConfig(a0=1.0, a=1.0, d=DEPTH, n1=INDEX, z_checkpoints=(75.0,))
    x = default_x_tilde()
    kernel = refocus_kernel(solve_diffusion(config), 0, x)
    widths = []
    for alpha in (0.0, 1.0):
        mirror = MirrorSpec(d_M=10.0, d_tilde_1=5.0, d_tilde_2=5.0, alpha_M=alpha)
        widths.append(refocus_metrics(continuum_profile(kernel, mirror, DEPTH, config.theta).normalized()).fwhm)
    assert abs(widths[0] - widths[1]) <= x[1] - x[0]
    assert widths[0] == pytest.approx(refocus_metrics(kernel).fwhm, abs=x[1] - x[0])


def test_discrete_profiles_track_the_continuum(figure_modes, centered_mirror):
    config = DiffusionConfig(a0=1.0, a=1.0, d=DEPTH, n1=INDEX, z_checkpoints=(0.0, 1.0))
    x = default_x_tilde()
    field = solve_diffusion(config)
    coupling = diffusion_coupling(config, figure_modes.N)
    power = integrate_power(coupling, 1.0, checkpoints=[0.0, 1.0], rescale=True)
    profiles, continua = [], []
    for i, L in enumerate(field.z_grid):
        profiles.append(random_profile(figure_modes, centered_mirror, power, 10.0, L, x, normalization='scaled'))
        continua.append(continuum_profile(refocus_kernel(field, i, x), centered_mirror, DEPTH, config.theta))
    for profile, continuum in zip(profiles, continua):
        report = continuum_consistency([profile], continuum)
        assert report.discrepancies[0] < 0.25
        assert report.to_dict()['L'] == continuum.L


def test_arrival_times(small_modes):
    times = arrival_times(small_modes, 10.0, t1=2.0)
    slowness, _ = modal_derivatives(small_modes)
    assert times[0, 0] == 2.0
    assert times[0, 2] == pytest.approx(2.0 + (slowness[2] - slowness[0]) * 10.0)
    np.testing.assert_allclose(times + times.T, 4.0)


def test_dispersion_kernel_is_gaussian_chirp(small_modes):
    pulse = PulseSpec.gaussian()
    _, curvature = modal_derivatives(small_modes)
    phi = 2.0
    L = phi / (curvature[0] - curvature[3])
    out = dispersion_kernel(small_modes, 1, 4, L, pulse)
    t = pulse.times
    expected = np.exp(-t ** 2 / (2 * (1 - 1j * phi))) / np.sqrt(1 - 1j * phi)
    np.testing.assert_allclose(out, expected, atol=1e-8)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(pulse.samples), rel=1e-10)
    np.testing.assert_array_equal(dispersion_kernel(small_modes, 2, 2, L, pulse), pulse.samples)
    with pytest.raises(IndexOutOfRange):
        dispersion_kernel(small_modes, 0, 2, L, pulse)


def test_pair_signal_is_damped(small_modes, small_coupling):
    pulse = PulseSpec.gaussian()
    signal = pair_signal(small_modes, small_coupling, 1, 2, 5.0, pulse)
    assert np.abs(signal).max() <= np.abs(pulse.samples).max() * (1 + 1e-9)


def test_pulse_validation():
    with pytest.raises(ConfigError):
        PulseSpec(samples=np.ones(4), sample_rate=0.0)
    with pytest.raises(ConfigError):
        PulseSpec(samples=np.ones(4), sample_rate=1.0, q=1.5)
    assert PulseSpec.gaussian().energy() == pytest.approx(math.sqrt(math.pi), rel=1e-6)


def test_resolution_sweep_keeps_order(figure_diffusion):
    field = solve_diffusion(figure_diffusion)
    x = default_x_tilde()
    rows = resolution_sweep([refocus_kernel(field, i, x) for i in range(len(field.z_grid))])
    assert [L for L, _ in rows] == list(field.z_grid)
    assert rows[-1][1].fwhm >= rows[0][1].fwhm
