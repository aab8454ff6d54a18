"""
Spectral data of the unperturbed Pekeris waveguide: propagating modes (discrete spectrum), radiating modes
(continuous spectrum) and the quadrature grid used to integrate over the radiating band.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .errors import (ConfigError, ConvergenceFailure, IndexOutOfRange, NoPropagatingModes,
                     SpectralParameterOutOfRange)

logger = logging.getLogger('Spectrum')


@dataclass(frozen=True)
class WaveguideConfig:
    """
    Geometry and frequency of the waveguide.

    :param d: ocean depth
    :param n1: refractive index of the ocean layer (> 1)
    :param omega: angular frequency
    :param c_bar: reference sound speed
    """
    d: float
    n1: float
    omega: float
    c_bar: float = 1500.0

    def __post_init__(self):
        for name in ('d', 'omega', 'c_bar'):
            value = getattr(self, name)
            if not value > 0 or not math.isfinite(value):
                raise ConfigError('waveguide.%s must be a finite positive number, got %r' % (name, value),
                                  module='spectrum', operation='WaveguideConfig')
        if not self.n1 > 1 or not math.isfinite(self.n1):
            raise ConfigError('waveguide.n1 must be > 1, got %r' % self.n1,
                              module='spectrum', operation='WaveguideConfig')

    @classmethod
    def from_wavenumber(cls, k, d, n1, c_bar=1.0):
        return cls(d=d, n1=n1, omega=k * c_bar, c_bar=c_bar)

    @property
    def k(self):
        return self.omega / self.c_bar

    @property
    def theta(self):
        return math.sqrt(1.0 - 1.0 / self.n1 ** 2)

    @property
    def cutoff(self):
        """ n1 k d theta, the upper end of the sigma range. """
        return self.n1 * self.k * self.d * self.theta

    @property
    def lambda_oc(self):
        """ Carrier wavelength in the ocean layer. """
        return 2 * math.pi * self.c_bar / (self.n1 * self.omega)

    def scaled(self, omega):
        return WaveguideConfig(d=self.d, n1=self.n1, omega=omega, c_bar=self.c_bar)

    def to_dict(self):
        return {'d': self.d, 'n1': self.n1, 'omega': self.omega, 'c_bar': self.c_bar}


@dataclass(frozen=True)
class PropagatingMode:
    index: int
    sigma: float
    beta: float
    zeta: float
    amp: float

    def to_dict(self):
        return {'j': self.index, 'sigma': self.sigma, 'beta': self.beta, 'zeta': self.zeta, 'amp': self.amp}


class RadiationGrid(object):
    """
    Gauss-Legendre quadrature over the radiating band gamma in (xi, k^2), built in the variable s = sqrt(gamma) so that
    the 1/sqrt(gamma) factors of the loss integrals are regular.

    `weights` integrate in d(gamma), `s_weights` in ds.
    """

    def __init__(self, xi_cutoff, k, panels=8, order=8):
        if panels < 1 or order < 1:
            raise ValueError('RadiationGrid: panels and order must be positive')
        self.xi_cutoff = float(xi_cutoff)
        self.k = float(k)
        self.panels = int(panels)
        self.order = int(order)
        s_min = math.sqrt(self.xi_cutoff)
        edges = np.linspace(s_min, self.k, self.panels + 1)
        x, w = leggauss(self.order)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        self.s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        self.s_weights = (half[:, None] * w[None, :]).ravel()
        self.gamma = self.s ** 2
        self.weights = 2 * self.s * self.s_weights

    def __len__(self):
        return self.s.size

    def to_dict(self):
        return {'xi_cutoff': self.xi_cutoff, 'panels': self.panels, 'order': self.order, 'nodes': len(self)}


def transverse_quadrature(lower, upper, panels, order=8):
    """
    Composite Gauss-Legendre rule on [lower, upper].

    :return: (nodes, weights)
    """
    edges = np.linspace(lower, upper, int(panels) + 1)
    x, w = leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class ModeSet(object):
    """
    Discrete spectrum (sigma_j, beta_j, zeta_j, A_j) of the Pekeris operator plus a quadrature grid over the radiating
    continuum. Arrays are indexed from 0 while mode numbers j start at 1.
    """

    def __init__(self, config, modes, radiation_grid):
        self.config = config
        self.modes = tuple(modes)
        self.radiation_grid = radiation_grid
        self.sigma = np.array([m.sigma for m in self.modes])
        self.beta = np.array([m.beta for m in self.modes])
        self.zeta = np.array([m.zeta for m in self.modes])
        self.amp = np.array([m.amp for m in self.modes])
        for arr in (self.sigma, self.beta, self.zeta, self.amp):
            arr.setflags(write=False)

    @property
    def N(self):
        return len(self.modes)

    @property
    def xi_cutoff(self):
        return self.radiation_grid.xi_cutoff

    def mode(self, j):
        check_index(self, j, 'mode')
        return self.modes[j - 1]

    def with_radiation_grid(self, panels=8, order=8, xi_cutoff=None):
        xi = self.xi_cutoff if xi_cutoff is None else xi_cutoff
        return ModeSet(self.config, self.modes, RadiationGrid(xi, self.config.k, panels=panels, order=order))

    def tail_mass(self):
        """ Fraction of each mode's energy carried below the ocean layer. """
        d = self.config.d
        return self.amp ** 2 * np.sin(self.sigma) ** 2 * d / (2 * self.zeta)

    def to_dict(self):
        cfg = self.config
        return {'config': cfg.to_dict(),
                'k': cfg.k,
                'theta': cfg.theta,
                'N': self.N,
                'modes': [m.to_dict() for m in self.modes],
                'radiation_grid': self.radiation_grid.to_dict()}


def check_index(mode_set, j, operation):
    if not (1 <= int(j) <= mode_set.N) or int(j) != j:
        raise IndexOutOfRange('Mode index %r outside 1..%d' % (j, mode_set.N), module='spectrum',
                              operation=operation)


def dispersion_residual(y, cutoff):
    """
    Dispersion relation tan(y) = -y / sqrt(C^2 - y^2) written without the poles of tan:
    sin(y) sqrt(C^2 - y^2) + y cos(y).
    """
    r = np.sqrt(np.maximum((cutoff - y) * (cutoff + y), 0.0))
    return np.sin(y) * r + y * np.cos(y)


def _dispersion_slope(y, cutoff):
    r = math.sqrt((cutoff - y) * (cutoff + y))
    return math.cos(y) * r - y * math.sin(y) / r + math.cos(y) - y * math.sin(y)


def _solve_root(j, cutoff, residual_tol):
    lo = (j - 0.5) * math.pi
    hi = min(j * math.pi, cutoff)
    f = lambda y: float(dispersion_residual(y, cutoff))
    try:
        root, info = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200, full_output=True)
    except ValueError as e:
        raise ConvergenceFailure('Bracket (%r, %r) of mode %d does not change sign: %s' % (lo, hi, j, e),
                                 module='spectrum', operation='solve_dispersion')
    # Newton polish, kept inside the bracket and only while it improves the residual
    best = abs(f(root))
    for _ in range(3):
        slope = _dispersion_slope(root, cutoff)
        if slope == 0:
            break
        candidate = root - f(root) / slope
        if not lo < candidate < hi or abs(f(candidate)) >= best:
            break
        root, best = candidate, abs(f(candidate))
    if not info.converged or best > residual_tol:
        raise ConvergenceFailure('Mode %d: residual %.3e after %d iterations' % (j, best, info.iterations),
                                 module='spectrum', operation='solve_dispersion')
    logger.debug('Spectrum: mode %d sigma=%.15g residual=%.2e', j, root, best)
    return root


def solve_dispersion(config, xi_fraction=1e-6, radiation_panels=8, radiation_order=8, residual_tol=1e-10):
    """
    Compute every propagating mode of the Pekeris operator and the radiating-band quadrature grid.

    :param config: WaveguideConfig
    :param xi_fraction: lower cutoff of the radiating band as a fraction of k^2
    :param radiation_panels: number of Gauss-Legendre panels over s = sqrt(gamma)
    :param radiation_order: nodes per panel
    :param residual_tol: largest accepted |F(sigma_j)|
    :return: ModeSet
    """
    cutoff = config.cutoff
    if cutoff <= math.pi / 2:
        raise NoPropagatingModes('n1*k*d*theta = %.6g <= pi/2: no propagating mode' % cutoff)
    n_modes = max(1, int(math.floor(cutoff / math.pi)))
    if (cutoff / math.pi) % 1.0 > 0.5 and cutoff > math.pi:
        logger.debug('Spectrum: root near cutoff in (%.6g, %.6g) not counted as a propagating mode',
                     (n_modes + 0.5) * math.pi, cutoff)

    k, d, n1 = config.k, config.d, config.n1
    modes = []
    for j in range(1, n_modes + 1):
        sigma = _solve_root(j, cutoff, residual_tol)
        beta = math.sqrt(n1 ** 2 * k ** 2 - (sigma / d) ** 2)
        zeta = math.sqrt((cutoff - sigma) * (cutoff + sigma))
        amp = math.sqrt((2.0 / d) / (1.0 + math.sin(sigma) ** 2 / zeta - math.sin(2 * sigma) / (2 * sigma)))
        modes.append(PropagatingMode(index=j, sigma=sigma, beta=beta, zeta=zeta, amp=amp))

    grid = RadiationGrid(xi_fraction * k ** 2, k, panels=radiation_panels, order=radiation_order)
    logger.info('Spectrum: %d propagating modes at omega=%g (k=%g, C=%g)', n_modes, config.omega, k, cutoff)
    return ModeSet(config, modes, grid)


def mode_shapes(mode_set, x):
    """
    All propagating mode shapes evaluated at x.

    :return: array of shape (N,) + x.shape
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise SpectralParameterOutOfRange('Transverse coordinate must be >= 0', module='spectrum',
                                          operation='mode_shape')
    d = mode_set.config.d
    sigma = mode_set.sigma.reshape((-1,) + (1,) * x.ndim)
    amp = mode_set.amp.reshape(sigma.shape)
    zeta = mode_set.zeta.reshape(sigma.shape)
    inside = amp * np.sin(sigma * np.minimum(x, d) / d)
    outside = amp * np.sin(sigma) * np.exp(-zeta * np.maximum(x - d, 0.0) / d)
    return np.where(x <= d, inside, outside)


def mode_shape(mode_set, j, x):
    """
    Propagating mode phi_j at x (scalar or array).

    :param mode_set: ModeSet
    :param j: mode number, 1 <= j <= N
    :param x: transverse coordinate(s), x >= 0
    """
    check_index(mode_set, j, 'mode_shape')
    mode = mode_set.modes[j - 1]
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise SpectralParameterOutOfRange('Transverse coordinate must be >= 0', module='spectrum',
                                          operation='mode_shape')
    d = mode_set.config.d
    inside = mode.amp * np.sin(mode.sigma * np.minimum(x, d) / d)
    outside = mode.amp * math.sin(mode.sigma) * np.exp(-mode.zeta * np.maximum(x - d, 0.0) / d)
    return np.where(x <= d, inside, outside)


def radiating_shapes(mode_set, gamma, x):
    """
    Radiating modes phi_gamma(x) for every gamma (1-d) and x.

    :return: array of shape gamma.shape + x.shape
    """
    cfg = mode_set.config
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    x = np.asarray(x, dtype=float)
    k2 = cfg.k ** 2
    if np.any(gamma <= mode_set.xi_cutoff) or np.any(gamma >= k2):
        raise SpectralParameterOutOfRange('gamma must lie in (%g, %g)' % (mode_set.xi_cutoff, k2),
                                          module='spectrum', operation='radiating_shape')
    if np.any(x < 0):
        raise SpectralParameterOutOfRange('Transverse coordinate must be >= 0', module='spectrum',
                                          operation='radiating_shape')
    d = cfg.d
    g = gamma.reshape(gamma.shape + (1,) * x.ndim)
    eta = d * np.sqrt(cfg.n1 ** 2 * k2 - g)
    xig = d * np.sqrt(k2 - g)
    amp = np.sqrt(d * xig / (math.pi * (xig ** 2 * np.sin(eta) ** 2 + eta ** 2 * np.cos(eta) ** 2)))
    inside = amp * np.sin(eta * np.minimum(x, d) / d)
    s = np.maximum(x - d, 0.0) / d
    # eta/xi * sin(xi s) written through np.sinc so that xi -> 0 stays finite
    outside = amp * (np.sin(eta) * np.cos(xig * s) + eta * np.cos(eta) * s * np.sinc(xig * s / math.pi))
    return np.where(x <= d, inside, outside)


def radiating_shape(mode_set, gamma, x):
    """
    Radiating mode phi_gamma at x, xi < gamma < k^2. Not square integrable.
    """
    values = radiating_shapes(mode_set, np.atleast_1d(gamma), x)
    return values[0] if np.ndim(gamma) == 0 else values


@dataclass
class ModalProjection:
    """
    Coefficients of a function on the propagating modes and on the radiation grid nodes, and its resummation
    sum_j c_j phi_j + int c_gamma phi_gamma d(gamma) at the sample points.
    """
    propagating: np.ndarray
    radiating: np.ndarray
    resummed: np.ndarray

    def relative_error(self, values, weights):
        """ L2 distance of the resummation to `values`, relative to the L2 norm of `values`. """
        values = np.asarray(values, dtype=float)
        return float(np.sqrt(np.sum(weights * (self.resummed - values) ** 2) / np.sum(weights * values ** 2)))


def project_on_modes(mode_set, values, x, weights):
    """
    Project samples of a function supported in the ocean layer on the propagating modes and on the radiating modes at
    the nodes of `mode_set.radiation_grid`. The evanescent band is left out, so the resummation only reproduces
    functions whose transverse wavenumbers stay below n1 k.

    :param values: samples at the quadrature nodes x
    :param weights: quadrature weights on [0, d]
    :return: ModalProjection
    """
    values = np.asarray(values, dtype=float)
    grid = mode_set.radiation_grid
    phi = mode_shapes(mode_set, x)
    rad = radiating_shapes(mode_set, grid.gamma, x)
    propagating = phi @ (weights * values)
    radiating = rad @ (weights * values)
    resummed = propagating @ phi + (grid.weights * radiating) @ rad
    return ModalProjection(propagating=propagating, radiating=radiating, resummed=resummed)


@dataclass(frozen=True)
class SpacingReport:
    alpha: float
    n_modes: int
    first_difference: float = None
    second_difference: float = None
    low_order_offset: float = None

    def to_dict(self):
        return {'alpha': self.alpha, 'N': self.n_modes, 'first_difference': self.first_difference,
                'second_difference': self.second_difference, 'low_order_offset': self.low_order_offset}


def asymptotic_spacing_report(mode_set, alpha):
    """
    Spacing statistics of the sigma_j against the pi-lattice: sup |s_{j+1} - s_j - pi| for j <= N - N^alpha - 1,
    sup |s_{j+2} - 2 s_{j+1} + s_j| for j <= N - N^alpha - 2 and sup |s_j - j pi| for j <= N^alpha. Empty index ranges
    are reported as None.
    """
    if not 1.0 / 3.0 < alpha < 1.0:
        raise ValueError('alpha must lie in (1/3, 1), got %r' % alpha)
    sigma = mode_set.sigma
    n = mode_set.N
    m = int(math.floor(n ** alpha))
    first = np.abs(np.diff(sigma) - math.pi)[:max(n - m - 1, 0)]
    second = np.abs(np.diff(sigma, 2))[:max(n - m - 2, 0)]
    low = np.abs(sigma[:m] - math.pi * np.arange(1, m + 1))
    sup = lambda a: float(a.max()) if a.size else None
    return SpacingReport(alpha=alpha, n_modes=n, first_difference=sup(first), second_difference=sup(second),
                         low_order_offset=sup(low))


def modal_derivatives(mode_set):
    """
    Frequency derivatives of the modal wavenumbers by implicit differentiation of the dispersion relation.

    :return: (beta', beta'') arrays of length N (d/d omega)
    """
    cfg = mode_set.config
    s = mode_set.sigma
    r = mode_set.zeta
    c = cfg.cutoff
    d, n1, k = cfg.d, cfg.n1, cfg.k
    dk = 1.0 / cfg.c_bar
    dc = n1 * d * cfg.theta * dk
    sin, cos = np.sin(s), np.cos(s)

    f_s = cos * r - s * sin / r + cos - s * sin
    f_c = sin * c / r
    f_ss = -r * sin - 2 * s * cos / r - sin / r - s ** 2 * sin / r ** 3 - 2 * sin - s * cos
    f_sc = c * cos / r + s * c * sin / r ** 3
    f_cc = -s ** 2 * sin / r ** 3

    ds = -f_c * dc / f_s
    d2s = -(f_ss * ds ** 2 + 2 * f_sc * ds * dc + f_cc * dc ** 2) / f_s
    beta = mode_set.beta
    db = (n1 ** 2 * k * dk - s * ds / d ** 2) / beta
    d2b = (n1 ** 2 * dk ** 2 - (ds ** 2 + s * d2s) / d ** 2 - db ** 2) / beta
    return db, d2b
