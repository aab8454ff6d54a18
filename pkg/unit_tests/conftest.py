import math

import pytest

from pekerisrefocus.diffusion import DiffusionConfig
from pekerisrefocus.medium import MediumStats, assemble_coupling, make_kernel
from pekerisrefocus.spectrum import WaveguideConfig, solve_dispersion
from pekerisrefocus.timereversal import MirrorSpec

DEPTH = 20.0
INDEX = 2.0
THETA = math.sqrt(0.75)


def wavenumber_for(n_modes, offset=0.3):
    return (n_modes + offset) * math.pi / (INDEX * DEPTH * THETA)


@pytest.fixture(scope='session')
def figure_waveguide():
    """ k = pi, d = 20, n1 = 2: 34 propagating modes. """
    return WaveguideConfig(d=DEPTH, n1=INDEX, omega=math.pi, c_bar=1.0)


@pytest.fixture(scope='session')
def figure_modes(figure_waveguide):
    return solve_dispersion(figure_waveguide)


@pytest.fixture(scope='session')
def small_modes():
    return solve_dispersion(WaveguideConfig.from_wavenumber(wavenumber_for(6), DEPTH, INDEX))


@pytest.fixture(scope='session')
def exponential_medium():
    return MediumStats(make_kernel('exponential', DEPTH, sigma=1.0), 1.0)


@pytest.fixture(scope='session')
def small_coupling(small_modes, exponential_medium):
    return assemble_coupling(small_modes, exponential_medium)


@pytest.fixture
def figure_diffusion():
    return DiffusionConfig(a0=1.0, a=1.0, d=DEPTH, n1=INDEX, z_checkpoints=(0.0, 0.1, 1.0))


@pytest.fixture
def centered_mirror():
    return MirrorSpec(d_M=10.0, d_tilde_1=5.0, d_tilde_2=5.0, alpha_M=0.0)
