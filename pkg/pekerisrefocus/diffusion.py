"""
Continuum limit of the mode-power transport: the diffusion equation

    d/dz T(z,u) = d/du ( a_inf(u) d/du T(z,u) ),   T(0,u) = 1,

on u in [0,1] with a reflecting condition at u=0 and an absorbing (T=0) or reflecting condition at u=1.

The operator is discretized by cell-centred finite volumes with harmonic-mean face coefficients. The resulting
symmetric tridiagonal system is propagated exactly in z through its eigen-decomposition by default; implicit Euler
and Crank-Nicolson steppers are kept as alternatives.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal, solve_banded

from .errors import CheckpointMissing, CoefficientSingular, ConfigError, ConvergenceFailure, GridTooCoarse
from .medium import CouplingMatrices, cosine_overlap
from .profile import RefocusProfile

logger = logging.getLogger('Diffusion')

BOUNDARY_CONDITIONS = ('absorbing', 'reflecting')
SCHEMES = ('exponential', 'implicit_euler', 'crank_nicolson')


@dataclass(frozen=True)
class DiffusionConfig:
    """
    :param a0: diffusion scale
    :param a: longitudinal decorrelation rate of the medium
    :param d: ocean depth
    :param n1: refractive index of the ocean layer
    :param bc_bottom: 'absorbing' or 'reflecting' condition at u=1
    :param cells: number of finite volumes on [0,1]
    :param z_checkpoints: propagation distances at which T is stored
    :param scheme: 'exponential', 'implicit_euler' or 'crank_nicolson'
    :param tolerance: Richardson error bound; None disables the check
    :param dz_max: largest z step of the implicit schemes
    """
    a0: float
    a: float
    d: float
    n1: float
    bc_bottom: str = 'absorbing'
    cells: int = 1024
    z_checkpoints: tuple = (0.0,)
    scheme: str = 'exponential'
    tolerance: float = 1e-3
    dz_max: float = 1e-3

    def __post_init__(self):
        for name in ('a0', 'a', 'd'):
            value = getattr(self, name)
            if not value > 0 or not math.isfinite(value):
                raise ConfigError('diffusion.%s must be a finite positive number, got %r' % (name, value),
                                  module='diffusion', operation='DiffusionConfig')
        if not self.n1 > 1:
            raise ConfigError('diffusion.n1 must be > 1, got %r' % self.n1,
                              module='diffusion', operation='DiffusionConfig')
        if self.bc_bottom not in BOUNDARY_CONDITIONS:
            raise ConfigError('diffusion.bc_bottom must be one of %s' % ', '.join(BOUNDARY_CONDITIONS),
                              module='diffusion', operation='DiffusionConfig')
        if self.scheme not in SCHEMES:
            raise ConfigError('diffusion.scheme must be one of %s' % ', '.join(SCHEMES),
                              module='diffusion', operation='DiffusionConfig')
        if int(self.cells) < 4:
            raise ConfigError('diffusion.cells must be at least 4', module='diffusion', operation='DiffusionConfig')
        z = np.asarray(self.z_checkpoints, dtype=float)
        if z.ndim != 1 or len(z) == 0 or np.any(z < 0) or np.any(np.diff(z) <= 0):
            raise ConfigError('diffusion.z_checkpoints must be a nonempty increasing list of distances >= 0',
                              module='diffusion', operation='DiffusionConfig')
        object.__setattr__(self, 'z_checkpoints', tuple(float(v) for v in z))
        object.__setattr__(self, 'cells', int(self.cells))
        if self.factor >= 1.0:
            raise ConfigError('diffusion: a_inf is singular on [0,1], (1 - pi^2/(a^2 d^2)) theta^2 = %g >= 1'
                              % self.factor, module='diffusion', operation='DiffusionConfig')

    @property
    def theta(self):
        return math.sqrt(1.0 - 1.0 / self.n1 ** 2)

    @property
    def factor(self):
        return (1.0 - math.pi ** 2 / (self.a * self.d) ** 2) * self.theta ** 2

    def with_cells(self, cells):
        return self._replace(cells=cells)

    def _replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return DiffusionConfig(**values)

    def to_dict(self):
        return {'a0': self.a0, 'a': self.a, 'd': self.d, 'n1': self.n1, 'bc_bottom': self.bc_bottom,
                'cells': self.cells, 'z_checkpoints': list(self.z_checkpoints), 'scheme': self.scheme,
                'tolerance': self.tolerance, 'dz_max': self.dz_max}


def a_infinity(config, u):
    """
    Diffusion coefficient a0 / (1 - (1 - pi^2/(a^2 d^2)) (theta u)^2).
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u > 1):
        raise ValueError('u must lie in [0, 1]')
    denominator = 1.0 - config.factor * u ** 2
    if np.any(denominator <= 0):
        raise CoefficientSingular('Denominator of a_inf is not positive', operation='a_infinity')
    return config.a0 / denominator


def s0_to_a0(medium, config, panels=64):
    """
    Diffusion scale a0 = pi^2 S0 / (2 a n1^4 d^4 theta^2) of a medium, with S0 the cosine overlap of its kernel.

    :param medium: MediumStats
    :param config: any configuration with d, n1 and theta (WaveguideConfig or DiffusionConfig)
    """
    s0 = cosine_overlap(medium, config.d, panels=panels)
    a0 = math.pi ** 2 * s0 / (2.0 * medium.a * config.n1 ** 4 * config.d ** 4 * config.theta ** 2)
    if a0 == 0:
        logger.warning('Diffusion: S0 vanishes for the %s kernel, diffusion is disabled', medium.kernel.name)
    else:
        logger.info('Diffusion: S0=%.6g gives a0=%.6g', s0, a0)
    return a0


def _operator(config, cells):
    """ Diagonal and off-diagonal of the symmetric finite-volume operator on `cells` volumes. """
    h = 1.0 / cells
    centers = (np.arange(cells) + 0.5) * h
    coefficient = a_infinity(config, centers)
    faces = 2.0 * coefficient[:-1] * coefficient[1:] / (coefficient[:-1] + coefficient[1:])
    off = faces / h ** 2
    diag = np.zeros(cells)
    diag[:-1] -= off
    diag[1:] -= off
    if config.bc_bottom == 'absorbing':
        # T=0 at u=1, half a cell away from the last centre
        diag[-1] -= 2.0 * float(a_infinity(config, 1.0)) / h ** 2
    return diag, off, centers


def _apply(diag, off, values):
    result = diag * values
    result[:-1] += off * values[1:]
    result[1:] += off * values[:-1]
    return result


def _propagate_exponential(config, cells):
    diag, off, centers = _operator(config, cells)
    try:
        w, v = eigh_tridiagonal(diag, off)
    except LinAlgError as e:
        raise ConvergenceFailure('Tridiagonal eigensolver failed: %s' % e, module='diffusion',
                                 operation='solve_diffusion')
    coefficients = v.T @ np.ones(cells)
    top = w[-1] if config.bc_bottom == 'absorbing' else 0.0
    shapes, scales = [], []
    for z in config.z_checkpoints:
        shapes.append(v @ (np.exp((w - top) * z) * coefficients))
        scales.append(top * z)
    return centers, np.array(shapes), np.array(scales)


def _propagate_implicit(config, cells):
    diag, off, centers = _operator(config, cells)
    weight = 1.0 if config.scheme == 'implicit_euler' else 0.5
    values = np.ones(cells)
    z = 0.0
    shapes = []
    for target in config.z_checkpoints:
        gap = target - z
        steps = int(math.ceil(gap / config.dz_max - 1e-12)) if gap > 0 else 0
        if steps:
            dz = gap / steps
            banded = np.zeros((3, cells))
            banded[0, 1:] = -dz * weight * off
            banded[1] = 1.0 - dz * weight * diag
            banded[2, :-1] = -dz * weight * off
            for _ in range(steps):
                rhs = values if weight == 1.0 else values + dz * (1.0 - weight) * _apply(diag, off, values)
                values = solve_banded((1, 1), banded, rhs)
        z = target
        shapes.append(values.copy())
    return centers, np.array(shapes), np.zeros(len(shapes))


def _propagate(config, cells):
    if config.scheme == 'exponential':
        return _propagate_exponential(config, cells)
    return _propagate_implicit(config, cells)


@dataclass
class DiffusionField:
    """
    T(z,u) on cell centres, one row per checkpoint; the field is `shapes * exp(log_scale)`.
    """
    z_grid: np.ndarray
    u_centers: np.ndarray
    shapes: np.ndarray
    log_scale: np.ndarray
    bc_bottom: str = 'absorbing'
    meta: dict = field(default_factory=dict)

    @property
    def cell_width(self):
        return 1.0 / len(self.u_centers)

    @property
    def values(self):
        return self.shapes * np.exp(self.log_scale)[:, None]

    def index(self, z):
        hits = np.flatnonzero(np.isclose(self.z_grid, z, rtol=1e-12, atol=1e-12))
        if len(hits) == 0:
            raise CheckpointMissing('z=%g is not a diffusion checkpoint' % z, module='diffusion',
                                    operation='refocus_kernel')
        return int(hits[0])

    @property
    def u_grid(self):
        """ Nodes 0, cell centres, 1. """
        return np.concatenate(([0.0], self.u_centers, [1.0]))

    def nodal(self, i):
        """
        T at `u_grid` for checkpoint i. The u=0 value comes from the even extension, the u=1 value from the bottom
        condition.
        """
        t = self.values[i]
        top = (9.0 * t[0] - t[1]) / 8.0
        bottom = 0.0 if self.bc_bottom == 'absorbing' else (9.0 * t[-1] - t[-2]) / 8.0
        return np.concatenate(([top], t, [bottom]))

    def log_mean_power(self, i):
        return math.log(self.cell_width * float(np.sum(self.shapes[i]))) + float(self.log_scale[i])

    def mean_power(self):
        """ int_0^1 T(z,u) du per checkpoint. """
        return self.cell_width * np.sum(self.values, axis=1)

    def rows(self):
        for i, z in enumerate(self.z_grid):
            for u, t in zip(self.u_centers, self.values[i]):
                yield z, u, t


def _richardson(config, centers, shapes, scales):
    coarse_centers, coarse, coarse_scales = _propagate(config, config.cells // 2)
    pairs = 0.5 * (shapes[:, 0::2] + shapes[:, 1::2])
    coarse = coarse * np.exp(coarse_scales - scales)[:, None]
    reference = np.max(np.abs(shapes), axis=1)
    reference[reference == 0] = 1.0
    # second order: the fine error is about a third of the coarse-fine gap
    return float(np.max(np.abs(coarse - pairs[:, :coarse.shape[1]]).max(axis=1) / reference) / 3.0)


def solve_diffusion(config):
    """
    Solve the diffusion equation from T(0,u) = 1 and store T at each checkpoint.

    :param config: DiffusionConfig
    :return: DiffusionField
    """
    centers, shapes, scales = _propagate(config, config.cells)
    meta = {'scheme': config.scheme, 'cells': config.cells}
    if config.tolerance is not None and config.cells % 2 == 0:
        estimate = _richardson(config, centers, shapes, scales)
        meta['richardson_estimate'] = estimate
        logger.debug('Diffusion: Richardson estimate %.3e with %d cells', estimate, config.cells)
        if estimate > config.tolerance:
            raise GridTooCoarse('Estimated discretization error %.3e exceeds tolerance %.3e with %d cells'
                                % (estimate, config.tolerance, config.cells), module='diffusion',
                                operation='solve_diffusion')
    logger.info('Diffusion: solved %s bottom, %d cells, %d checkpoints', config.bc_bottom, config.cells,
                len(config.z_checkpoints))
    return DiffusionField(z_grid=np.array(config.z_checkpoints), u_centers=centers, shapes=shapes, log_scale=scales,
                          bc_bottom=config.bc_bottom, meta=meta)


@dataclass(frozen=True)
class Eigenmode:
    eigenvalue: float
    second_eigenvalue: float
    u_centers: np.ndarray
    mode: np.ndarray

    @property
    def cell_width(self):
        return 1.0 / len(self.u_centers)

    @property
    def mass(self):
        """ int_0^1 phi du """
        return self.cell_width * float(np.sum(self.mode))

    def to_dict(self):
        return {'lambda_1': self.eigenvalue, 'lambda_2': self.second_eigenvalue, 'cells': len(self.u_centers)}


def principal_eigenmode(config):
    """
    Least negative eigenvalue and its eigenfunction, normalized in L2(0,1) and nonnegative.

    :return: Eigenmode
    """
    if config.bc_bottom != 'absorbing':
        raise ValueError('principal_eigenmode needs an absorbing bottom')
    diag, off, centers = _operator(config, config.cells)
    n = config.cells
    try:
        w, v = eigh_tridiagonal(diag, off, select='i', select_range=(n - 2, n - 1))
    except LinAlgError as e:
        raise ConvergenceFailure('Tridiagonal eigensolver failed: %s' % e, module='diffusion',
                                 operation='principal_eigenmode')
    mode = v[:, 1] / math.sqrt(1.0 / n)
    if mode.sum() < 0:
        mode = -mode
    logger.info('Diffusion: lambda_1=%.6g lambda_2=%.6g', w[1], w[0])
    return Eigenmode(eigenvalue=float(w[1]), second_eigenvalue=float(w[0]), u_centers=centers, mode=mode)


def _cosine_transform(values, centers, x_tilde):
    """ int_0^1 f(u) cos(2 pi u x~) du for f piecewise constant on the cells, exactly. """
    h = 1.0 / len(centers)
    x = np.asarray(x_tilde, dtype=float)
    return h * np.sinc(h * x) * (np.cos(2.0 * math.pi * np.outer(x, centers)) @ values)


def refocus_kernel(field, z_index, x_tilde_grid):
    """
    Low pass filter H(x~, L) = int_0^1 T(L,u) cos(2 pi u x~) du at the checkpoint z_index.

    :return: RefocusProfile
    """
    values = _cosine_transform(field.shapes[z_index], field.u_centers, x_tilde_grid)
    return RefocusProfile(x_tilde=np.asarray(x_tilde_grid, dtype=float), values=values,
                          L=float(field.z_grid[z_index]), normalization='continuum',
                          log_scale=float(field.log_scale[z_index]))


def eigenmode_profile(eigenmode, x_tilde_grid):
    """ int_0^1 phi(u) cos(2 pi u x~) du, the shape H converges to at large L. """
    values = _cosine_transform(eigenmode.mode, eigenmode.u_centers, x_tilde_grid)
    return RefocusProfile(x_tilde=np.asarray(x_tilde_grid, dtype=float), values=values, normalization='eigenmode')


def asymptotic_kernel(eigenmode, L, x_tilde_grid):
    """ exp(lambda_1 L) (int phi) (int phi cos(2 pi u x~)), the leading term of H at large L. """
    profile = eigenmode_profile(eigenmode, x_tilde_grid)
    profile.values = profile.values * eigenmode.mass
    profile.L = float(L)
    profile.log_scale = eigenmode.eigenvalue * L
    profile.normalization = 'continuum'
    return profile


def diffusion_coupling(config, n_modes):
    """
    Nearest-neighbour transport on n_modes whose continuum limit is the diffusion operator: mode j sits at
    u = (j - 1/2)/n_modes, Gamma_{j,j+1} = n_modes^2 a_inf at the face between them and the last mode radiates
    2 n_modes^2 a_inf(1) when the bottom is absorbing.

    :return: CouplingMatrices
    """
    diag, off, centers = _operator(config, n_modes)
    gamma_c = np.diag(off, 1) + np.diag(off, -1)
    loss = np.zeros(n_modes)
    if config.bc_bottom == 'absorbing':
        loss[-1] = 2.0 * float(a_infinity(config, 1.0)) * n_modes ** 2
    return CouplingMatrices.from_transport(gamma_c, loss, loss_model='nearest_neighbor', source='diffusion',
                                           a0=config.a0, bc_bottom=config.bc_bottom)


def cosine_series(a0, u, z, terms=50):
    """
    Separation-of-variables solution for a constant coefficient a0 and an absorbing bottom:
    sum_k 2 (-1)^k / mu_k exp(-a0 mu_k^2 z) cos(mu_k u), mu_k = (k + 1/2) pi.
    """
    u = np.asarray(u, dtype=float)
    mu = (np.arange(terms) + 0.5) * math.pi
    signs = np.where(np.arange(terms) % 2 == 0, 1.0, -1.0)
    return (2.0 * signs / mu * np.exp(-a0 * mu ** 2 * z)) @ np.cos(np.outer(mu, u))
