import math

import numpy as np
import pytest
from scipy.linalg import expm

from pekerisrefocus.errors import (BoundsViolation, CheckpointMissing, IndexOutOfRange, InvalidGenerator,
                                   NoRadiativeLoss, NotIrreducible)
from pekerisrefocus.medium import CouplingMatrices, assemble_coupling, band_limited_filter
from pekerisrefocus.power import (check_generator, coherent_pair_amplitude, coupling_strength_sweep, decay_rate,
                                  integrate_power, is_irreducible, markov_estimate, q_phase, spectral_gap,
                                  total_power_slope)
from pekerisrefocus.spectrum import WaveguideConfig, solve_dispersion

from .conftest import DEPTH, INDEX, wavenumber_for


@pytest.fixture
def two_mode():
    """ Unit exchange rate, the second mode radiates at rate 1. """
    return CouplingMatrices.from_transport(np.array([[0.0, 1.0], [1.0, 0.0]]), [0.0, 1.0], loss_model='full')


def test_two_mode_decay_rate(two_mode):
    report = decay_rate(two_mode)
    assert report.lambda_inf == pytest.approx(1.5 - math.sqrt(1.25), rel=1e-12)
    assert report.lambda_min == 0.0
    assert report.lambda_bar == 0.5
    assert np.all(report.perron_vector > 0)
    assert np.linalg.norm(report.perron_vector) == pytest.approx(1.0)


def test_two_mode_power_matches_expm(two_mode):
    evolution = integrate_power(two_mode, 2.0, checkpoints=5)
    np.testing.assert_allclose(evolution.z_grid, [0.0, 0.5, 1.0, 1.5, 2.0])
    np.testing.assert_allclose(evolution.matrix(1.5), expm(1.5 * two_mode.generator()), rtol=1e-12)
    np.testing.assert_allclose(evolution.matrix(0.0), np.eye(2))
    with pytest.raises(CheckpointMissing):
        evolution.matrix(0.7)


def test_rescaled_evolution_keeps_values(two_mode):
    plain = integrate_power(two_mode, 30.0, checkpoints=[0.0, 10.0, 30.0])
    scaled = integrate_power(two_mode, 30.0, checkpoints=[0.0, 10.0, 30.0], rescale=True)
    assert scaled.log_scale[-1] < 0
    np.testing.assert_allclose(scaled.matrix(30.0), plain.matrix(30.0), rtol=1e-10)
    np.testing.assert_allclose(scaled.total_power(), plain.total_power(), rtol=1e-10)


def test_total_power_slope_reaches_decay_rate(two_mode):
    evolution = integrate_power(two_mode, 40.0, checkpoints=[0.0, 39.0, 40.0], rescale=True)
    assert -total_power_slope(evolution, 1) == pytest.approx(decay_rate(two_mode).lambda_inf, rel=1e-6)


def test_lossless_transport_conserves_power(small_coupling):
    lossless = CouplingMatrices.from_transport(small_coupling.gamma_c, loss_model='lossless')
    evolution = integrate_power(lossless, 1.0 / spectral_gap(lossless), checkpoints=4)
    np.testing.assert_allclose(evolution.total_power(), 1.0, atol=1e-10)
    assert evolution.T.min() >= 0


def test_equidistribution(small_coupling):
    gap = spectral_gap(small_coupling)
    z = 50.0 / gap
    lossless = CouplingMatrices.from_transport(small_coupling.gamma_c, loss_model='lossless')
    t = integrate_power(lossless, z, checkpoints=[0.0, z]).matrix(z)
    np.testing.assert_allclose(t, 1.0 / small_coupling.N, atol=1e-6)


def test_decay_bounds(small_coupling):
    report = decay_rate(small_coupling)
    assert report.lambda_min <= report.lambda_inf <= report.lambda_bar


def test_stiff_integrator_agrees_with_expm(small_coupling):
    z = 0.5 / spectral_gap(small_coupling)
    direct = integrate_power(small_coupling, z, checkpoints=3)
    stiff = integrate_power(small_coupling, z, checkpoints=3, max_expm_modes=1)
    np.testing.assert_allclose(stiff.T, direct.T, atol=1e-8)


def test_reducible_transport():
    blocks = CouplingMatrices.from_transport(np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0.0]]),
                                             [0.0, 1.0, 0.0, 1.0])
    assert not is_irreducible(blocks.gamma_c)
    with pytest.raises(NotIrreducible):
        decay_rate(blocks)


def test_coupling_strength_limits(two_mode):
    report = coupling_strength_sweep(two_mode, [1.0, 0.1, 0.01, 0.001, 0.0001], 1.0 / 0.5)
    assert report.strong_monotone and report.weak_monotone
    assert [row['tau'] for row in report.rows] == [1.0, 0.1, 0.01, 0.001, 0.0001]
    last = report.rows[-1]
    assert abs(last['lambda_inf_strong'] - report.lambda_bar) / report.lambda_bar < 1e-2
    assert last['strong_deviation'] < 1e-2
    assert last['lambda_inf_weak'] == pytest.approx(report.lambda_min, abs=1e-3)
    assert report.rows[0]['strong_deviation'] > last['strong_deviation']
    with pytest.raises(ValueError):
        coupling_strength_sweep(two_mode, [0.0], 1.0)


def test_coupling_strength_limits_on_waveguide(small_coupling):
    z_max = 1.0 / float(np.mean(small_coupling.lambda_c))
    report = coupling_strength_sweep(small_coupling, [1.0, 1e-2, 1e-4, 1e-6], z_max)
    assert report.strong_monotone and report.weak_monotone
    last = report.rows[-1]
    assert abs(last['lambda_inf_strong'] - report.lambda_bar) / report.lambda_bar < 1e-2
    assert abs(last['lambda_inf_weak'] - report.lambda_min) / report.lambda_min < 1e-2
    assert last['strong_deviation'] < 1e-2


def test_lossless_transport_has_no_decay_rate():
    lossless = CouplingMatrices.from_transport(np.array([[0.0, 1.0], [1.0, 0.0]]), loss_model='lossless')
    with pytest.raises(NoRadiativeLoss):
        decay_rate(lossless)


def test_semigroup(small_coupling):
    gap = spectral_gap(small_coupling)
    z1, z2 = 0.3 / gap, 0.7 / gap
    evolution = integrate_power(small_coupling, 1.0 / gap, checkpoints=[0.0, z1, z2, 1.0 / gap])
    np.testing.assert_allclose(evolution.matrix(1.0 / gap), evolution.matrix(z2) @ evolution.matrix(z1), atol=1e-8)


def test_check_generator():
    check_generator(np.array([[-1.0, 1.0], [1.0, -1.0]]))
    with pytest.raises(InvalidGenerator):
        check_generator(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    with pytest.raises(InvalidGenerator):
        check_generator(np.array([[-1.0, 1.0], [1.0, 0.0]]))


def test_markov_estimate_matches_power_equations(two_mode):
    exact = expm(1.0 * two_mode.generator())[:, 0]
    estimate = markov_estimate(two_mode, 1.0, 1, 20000, seed=3)
    assert np.all(np.abs(estimate.mean - exact) <= 3.0 * estimate.stderr)
    again = markov_estimate(two_mode, 1.0, 1, 20000, seed=3)
    np.testing.assert_array_equal(estimate.mean, again.mean)
    with pytest.raises(IndexOutOfRange):
        markov_estimate(two_mode, 1.0, 3, 10)


def test_q_phase(small_coupling):
    q = q_phase(small_coupling, 1, 2)
    assert q.real <= 1e-12
    assert coherent_pair_amplitude(small_coupling, 1, 2, 0.0) == 1.0
    assert abs(coherent_pair_amplitude(small_coupling, 1, 2, 1.0)) == pytest.approx(math.exp(q.real))
    with pytest.raises(ValueError):
        q_phase(small_coupling, 2, 2)
    with pytest.raises(IndexOutOfRange):
        q_phase(small_coupling, 1, small_coupling.N + 1)


def test_markov_estimate_on_nearest_neighbour_waveguide(exponential_medium):
    mode_set = solve_dispersion(WaveguideConfig.from_wavenumber(wavenumber_for(10), DEPTH, INDEX))
    coupling = band_limited_filter(assemble_coupling(mode_set, exponential_medium))
    assert coupling.N == 10
    z = 1.0 / spectral_gap(coupling)
    exact = integrate_power(coupling, z, checkpoints=[0.0, z]).matrix(z)[:, 0]
    estimate = markov_estimate(coupling, z, 1, 100000, seed=7)
    assert np.all(np.abs(estimate.mean - exact) <= 3.0 * estimate.stderr)


def test_markov_streams(two_mode):
    base = markov_estimate(two_mode, 1.0, 1, 5000, seed=1, block_size=1000)
    again = markov_estimate(two_mode, 1.0, 1, 5000, seed=1, block_size=1000)
    np.testing.assert_array_equal(base.mean, again.mean)
    np.testing.assert_array_equal(base.stderr, again.stderr)
    other_seed = markov_estimate(two_mode, 1.0, 1, 5000, seed=2, block_size=1000)
    assert not np.array_equal(base.mean, other_seed.mean)
    regrouped = markov_estimate(two_mode, 1.0, 1, 5000, seed=1, block_size=4096)
    assert not np.array_equal(base.mean, regrouped.mean)
    assert np.all(np.abs(base.mean - regrouped.mean) <= 5.0 * np.hypot(base.stderr, regrouped.stderr))


def test_q_phase_growing_pair():
    zero = np.zeros((2, 2))
    growing = CouplingMatrices(gamma_c=zero, gamma_s=zero, gamma_1=np.array([[0.0, 1.0], [1.0, 0.0]]),
                               lambda_c=np.zeros(2), lambda_s=np.zeros(2))
    with pytest.raises(BoundsViolation):
        q_phase(growing, 1, 2)
    with pytest.raises(BoundsViolation):
        coherent_pair_amplitude(growing, 2, 1, 1.0)
