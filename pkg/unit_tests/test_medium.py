import math

import numpy as np
import pytest

from pekerisrefocus.errors import ConfigError, ConvergenceFailure, SpectralParameterOutOfRange
from pekerisrefocus.medium import (CouplingMatrices, MediumStats, TabulatedKernel, assemble_coupling,
                                   band_limited_filter, cosine_overlap, laplace_cosine, laplace_sine,
                                   lambda_xi_convergence, make_kernel, overlap_matrix_pp, overlap_pp, overlap_pr,
                                   refine, truncated_laplace)

from .conftest import DEPTH


def test_kernel_presets():
    assert make_kernel('cosine', DEPTH)(0.0, DEPTH) == pytest.approx(-1.0)
    assert make_kernel('constant', DEPTH, sigma=2.0)(1.0, 5.0) == pytest.approx(4.0)
    assert make_kernel('zero', DEPTH).is_zero
    assert make_kernel('exponential', DEPTH, correlation_length=2.0)(0.0, 2.0) == pytest.approx(math.exp(-1))
    with pytest.raises(ConfigError):
        make_kernel('gaussian', DEPTH)


def test_medium_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        MediumStats(make_kernel('constant', DEPTH), 0.0)
    grid = np.linspace(0.0, DEPTH, 2)
    indefinite = MediumStats(TabulatedKernel(grid, [[0.0, 1.0], [1.0, 0.0]]), 1.0)
    with pytest.raises(ConfigError):
        indefinite.check_kernel(DEPTH)
    with pytest.raises(ConfigError):
        TabulatedKernel(grid, [[0.0, 1.0], [2.0, 0.0]])


def test_kernel_psd_check_passes_for_presets():
    for name in ('constant', 'cosine', 'exponential'):
        MediumStats(make_kernel(name, DEPTH), 1.0).check_kernel(DEPTH)


@pytest.mark.parametrize('b', [0.0, 0.3, -2.5])
def test_closed_form_laplace_transforms(b):
    assert laplace_cosine(0.7, b) == pytest.approx(truncated_laplace(0.7, b, 'cos'), rel=1e-9, abs=1e-12)
    assert laplace_sine(0.7, b) == pytest.approx(truncated_laplace(0.7, b, 'sin'), rel=1e-9, abs=1e-12)


def test_cosine_kernel_overlap():
    medium = MediumStats(make_kernel('cosine', DEPTH), 1.0)
    assert cosine_overlap(medium, DEPTH) == pytest.approx((DEPTH / 2) ** 2, rel=1e-10)
    assert cosine_overlap(MediumStats(make_kernel('zero', DEPTH), 1.0), DEPTH) == 0.0


def test_overlaps_are_symmetric_and_consistent(small_modes, exponential_medium):
    g = overlap_matrix_pp(small_modes, exponential_medium)
    np.testing.assert_allclose(g, g.T, atol=1e-14)
    assert np.all(np.diag(g) > 0)
    assert overlap_pp(small_modes, exponential_medium, 2, 4) == pytest.approx(g[1, 3], rel=1e-8)


def test_overlap_pr_domain(small_modes, exponential_medium):
    k2 = small_modes.config.k ** 2
    assert overlap_pr(small_modes, exponential_medium, 1, 0.5 * k2) >= 0
    with pytest.raises(SpectralParameterOutOfRange):
        overlap_pr(small_modes, exponential_medium, 1, 2 * k2)


def test_coupling_structure(small_coupling):
    gc = small_coupling.gamma_c
    n = small_coupling.N
    off = ~np.eye(n, dtype=bool)
    np.testing.assert_allclose(gc, gc.T, atol=1e-12 * np.abs(gc).max())
    assert gc[off].min() >= 0
    np.testing.assert_allclose(gc.sum(axis=1), 0.0, atol=1e-12 * np.abs(gc).max())
    gs = small_coupling.gamma_s
    np.testing.assert_allclose(gs[off], -gs.T[off], atol=1e-12 * np.abs(gs).max())
    assert np.all(small_coupling.lambda_c >= 0)
    np.testing.assert_allclose(small_coupling.generator(), gc - np.diag(small_coupling.lambda_c))
    assert small_coupling.loss_model == 'full'
    assert small_coupling.to_dict()['kernel'] == 'exponential'


def test_zero_medium_gives_zero_coupling(small_modes):
    coupling = assemble_coupling(small_modes, MediumStats(make_kernel('zero', DEPTH), 1.0))
    assert not np.any(coupling.gamma_c)
    assert not np.any(coupling.lambda_c)


def test_band_limited_filter(small_coupling):
    n = small_coupling.N
    filtered = band_limited_filter(small_coupling)
    far = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) > 1
    assert not np.any(filtered.gamma_c[far])
    assert filtered.loss_model == 'nearest_neighbor'
    assert not np.any(filtered.lambda_c[:-1])
    assert filtered.lambda_c[-1] == small_coupling.lambda_c[-1]
    two = band_limited_filter(small_coupling, loss_modes=2)
    assert np.count_nonzero(two.lambda_c) == 2
    with pytest.raises(ValueError):
        band_limited_filter(small_coupling, loss_modes=3)


def test_from_transport_fills_diagonal():
    coupling = CouplingMatrices.from_transport(np.array([[5.0, 1.0], [1.0, 7.0]]), [0.0, 1.0], source='test')
    np.testing.assert_allclose(coupling.gamma_c, [[-1.0, 1.0], [1.0, -1.0]])
    assert coupling.meta == {'source': 'test'}
    assert not np.any(coupling.gamma_s)


def test_radiative_loss_insensitive_to_xi(small_modes, exponential_medium):
    assert lambda_xi_convergence(small_modes, exponential_medium) < 1e-2


def test_refine_stops_when_converged():
    calls = []

    def compute(panels):
        calls.append(panels)
        return np.array([2.0, 1.0])

    np.testing.assert_array_equal(refine(compute, 8), [2.0, 1.0])
    assert calls == [8, 16]


def test_refine_accepts_slow_algebraic_convergence(caplog):
    with caplog.at_level('WARNING', logger='Medium'):
        value = refine(lambda p: np.array([1.0 + 1e-4 / p ** 2]), 1, label='slow')
    assert value[0] == pytest.approx(1.0 + 1e-4 / 16)
    assert 'slow not converged' in caplog.text


def test_refine_fails_without_convergence():
    with pytest.raises(ConvergenceFailure) as info:
        refine(lambda p: np.array([1.0 + 1.0 / p]), 1)
    assert info.value.module == 'medium'
    assert info.value.operation == 'refine'
