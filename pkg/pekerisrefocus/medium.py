"""
Statistics of the random perturbation and the coupling coefficients they induce between modes.

The perturbation V(x, z) is supported in the ocean layer with E[V(x1, z1) V(x2, z2)] = gamma0(x1, x2) exp(-a |z1 - z2|).
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError, ConvergenceFailure, SpectralParameterOutOfRange
from .spectrum import check_index, mode_shapes, radiating_shapes, transverse_quadrature

logger = logging.getLogger('Medium')


class CovarianceKernel(object):
    """
    Transverse covariance gamma0(x1, x2) on [0, d]^2. Subclasses implement `__call__` with numpy broadcasting and,
    when the kernel is rank one, `factor` so that gamma0(x1, x2) = factor(x1) factor(x2).
    """
    name = 'kernel'

    def __init__(self, sigma=1.0):
        self.sigma = float(sigma)

    def __call__(self, x1, x2):
        raise NotImplementedError

    def factor(self, x):
        return None

    @property
    def is_zero(self):
        return self.sigma == 0

    def gram(self, x):
        x = np.asarray(x, dtype=float)
        return self(x[:, None], x[None, :])

    def to_dict(self):
        return {'kernel': self.name, 'sigma': self.sigma}


class ConstantKernel(CovarianceKernel):
    name = 'constant'

    def __call__(self, x1, x2):
        return self.sigma ** 2 * np.ones(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)

    def factor(self, x):
        return self.sigma * np.ones(np.shape(x))


class SeparableKernel(CovarianceKernel):
    """ sigma^2 g(x1) g(x2) """
    name = 'separable'

    def __init__(self, g, sigma=1.0):
        super(SeparableKernel, self).__init__(sigma)
        self.g = g

    def __call__(self, x1, x2):
        return self.sigma ** 2 * self.g(np.asarray(x1, dtype=float)) * self.g(np.asarray(x2, dtype=float))

    def factor(self, x):
        return self.sigma * self.g(np.asarray(x, dtype=float))


class CosineKernel(SeparableKernel):
    """ sigma^2 cos(pi x1 / d) cos(pi x2 / d) """
    name = 'cosine'

    def __init__(self, d, sigma=1.0):
        self.d = float(d)
        super(CosineKernel, self).__init__(lambda x: np.cos(math.pi * x / self.d), sigma)


class ExponentialKernel(CovarianceKernel):
    """ sigma^2 exp(-|x1 - x2| / correlation_length) """
    name = 'exponential'

    def __init__(self, sigma=1.0, correlation_length=1.0):
        super(ExponentialKernel, self).__init__(sigma)
        if not correlation_length > 0:
            raise ConfigError('medium.correlation_length must be positive', module='medium',
                              operation='ExponentialKernel')
        self.correlation_length = float(correlation_length)

    def __call__(self, x1, x2):
        return self.sigma ** 2 * np.exp(-np.abs(np.asarray(x1) - np.asarray(x2)) / self.correlation_length)

    def to_dict(self):
        info = super(ExponentialKernel, self).to_dict()
        info['correlation_length'] = self.correlation_length
        return info


class TabulatedKernel(CovarianceKernel):
    """ Kernel given by its values on a tensor grid, interpolated bilinearly. """
    name = 'tabulated'

    def __init__(self, grid, values):
        super(TabulatedKernel, self).__init__(1.0)
        values = np.asarray(values, dtype=float)
        if values.shape != (len(grid), len(grid)) or not np.allclose(values, values.T):
            raise ConfigError('Tabulated kernel must be a symmetric square table', module='medium',
                              operation='TabulatedKernel')
        self._interp = RegularGridInterpolator((np.asarray(grid), np.asarray(grid)), values,
                                               bounds_error=False, fill_value=None)
        self._zero = not np.any(values)

    @property
    def is_zero(self):
        return self._zero

    def __call__(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        pts = np.stack([x1.ravel(), x2.ravel()], axis=-1)
        return self._interp(pts).reshape(x1.shape)


def make_kernel(name, d, sigma=1.0, correlation_length=None):
    """
    Build one of the kernel presets by name: constant, cosine, exponential or zero.
    """
    if name == 'constant':
        return ConstantKernel(sigma)
    elif name == 'cosine':
        return CosineKernel(d, sigma)
    elif name == 'exponential':
        return ExponentialKernel(sigma, correlation_length if correlation_length is not None else d / 4.0)
    elif name == 'zero':
        return ConstantKernel(0.0)
    raise ConfigError('Unknown kernel preset %r' % name, module='medium', operation='make_kernel')


@dataclass(frozen=True)
class MediumStats:
    """
    :param kernel: transverse covariance gamma0
    :param a: longitudinal decorrelation rate (correlation length 1/a)
    """
    kernel: CovarianceKernel
    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigError('medium.a must be positive, got %r' % self.a, module='medium', operation='MediumStats')

    def check_kernel(self, d, n=64):
        """
        Symmetry and positive semidefiniteness of gamma0 on an n-point grid of [0, d].

        :return: smallest / largest Gram eigenvalue ratio
        """
        x = np.linspace(0, d, n)
        gram = self.kernel.gram(x)
        if not np.allclose(gram, gram.T, rtol=0, atol=1e-12 * max(1.0, np.abs(gram).max())):
            raise ConfigError('Covariance kernel is not symmetric', module='medium', operation='check_kernel')
        eig = np.linalg.eigvalsh(0.5 * (gram + gram.T))
        top = max(abs(eig[-1]), np.finfo(float).tiny)
        if eig[0] < -1e-10 * top:
            raise ConfigError('Covariance kernel is not positive semidefinite (min eig %.3e)' % eig[0],
                              module='medium', operation='check_kernel')
        return eig[0] / top

    def to_dict(self):
        info = self.kernel.to_dict()
        info['a'] = self.a
        return info


def laplace_cosine(a, b):
    """ Integral over z > 0 of exp(-a z) cos(b z). """
    return a / (a ** 2 + b ** 2)


def laplace_sine(a, b):
    """ Integral over z > 0 of exp(-a z) sin(b z). """
    return b / (a ** 2 + b ** 2)


def truncated_laplace(a, b, kind='cos', span=40.0):
    """
    Numerical Laplace transform of cos/sin truncated at z = span / a.
    """
    value, _ = quad(lambda z: math.exp(-a * z), 0.0, span / a, weight=kind, wvar=b, epsabs=1e-14, epsrel=1e-12,
                    limit=200)
    return value


def default_panels(mode_set):
    cfg = mode_set.config
    top = (mode_set.sigma.max() if mode_set.N else 0.0) + cfg.n1 * cfg.k * cfg.d
    return max(4, int(math.ceil(top / math.pi)))


def _pair_rows(a, b):
    return (a[:, None, :] * b[None, :, :]).reshape(-1, a.shape[-1])


def _quadratic_forms(kernel, x, w, rows):
    """ rows_p . W K W . rows_p for every row p. """
    f = kernel.factor(x)
    if f is not None:
        return (rows @ (w * f)) ** 2
    kw = w[:, None] * kernel.gram(x) * w[None, :]
    return np.einsum('pq,pq->p', rows @ kw, rows)


def _bilinear_forms(kernel, x, w, left, right):
    """ left_p . W K W . right_q for every pair (p, q). """
    f = kernel.factor(x)
    if f is not None:
        return np.outer(left @ (w * f), right @ (w * f))
    kw = w[:, None] * kernel.gram(x) * w[None, :]
    return left @ kw @ right.T


def refine(compute, panels, tol=1e-9, max_doublings=2, label='overlap', fail_tol=1e-4):
    """
    Evaluate `compute(panels)` with the panel count doubled until two successive results agree to `tol` relative to
    their largest entry.

    Kernels with a kink on the diagonal (exponential) converge algebraically and may stop between `tol` and
    `fail_tol` after `max_doublings`; that is logged. A change above `fail_tol` at the cap raises ConvergenceFailure.
    """
    current = np.asarray(compute(panels))
    change, scale = 0.0, 0.0
    for _ in range(max_doublings):
        panels *= 2
        finer = np.asarray(compute(panels))
        scale = np.abs(finer).max() if finer.size else 0.0
        change = np.abs(finer - current).max() if finer.size else 0.0
        current = finer
        if change <= tol * scale or scale == 0:
            logger.debug('Medium: %s converged with %d panels (change %.2e)', label, panels, change)
            return current
    relative = change / scale if scale else 0.0
    if relative > fail_tol:
        raise ConvergenceFailure('%s changes by %.2e (relative) after %d doublings (%d panels)'
                                 % (label, relative, max_doublings, panels), module='medium',
                                 operation='refine')
    logger.warning('Medium: %s not converged to %.1e after %d doublings (%d panels), relative change %.2e', label,
                   tol, max_doublings, panels, relative)
    return current


def overlap_matrix_pp(mode_set, medium, panels=None, tol=1e-9):
    """
    G_jl = int int gamma0(x1, x2) phi_j phi_l(x1) phi_j phi_l(x2) over the ocean layer, for all pairs.
    """
    n = mode_set.N
    if medium.kernel.is_zero:
        return np.zeros((n, n))

    def compute(p):
        x, w = transverse_quadrature(0.0, mode_set.config.d, p)
        phi = mode_shapes(mode_set, x)
        g = _quadratic_forms(medium.kernel, x, w, _pair_rows(phi, phi)).reshape(n, n)
        return 0.5 * (g + g.T)

    return refine(compute, panels or default_panels(mode_set), tol, label='G(pp)')


def overlap_pp(mode_set, medium, j, l, panels=None, tol=1e-9):
    check_index(mode_set, j, 'overlap_pp')
    check_index(mode_set, l, 'overlap_pp')
    if medium.kernel.is_zero:
        return 0.0

    def compute(p):
        x, w = transverse_quadrature(0.0, mode_set.config.d, p)
        phi = mode_shapes(mode_set, x)
        return _quadratic_forms(medium.kernel, x, w, (phi[j - 1] * phi[l - 1])[None, :])[0]

    return float(refine(compute, panels or default_panels(mode_set), tol, label='G(%d,%d)' % (j, l)))


def overlap_matrix_pr(mode_set, medium, gamma=None, panels=None, tol=1e-9):
    """
    G_{j gamma} for every propagating mode and every gamma (default: the radiation grid nodes).

    :return: array (N, len(gamma))
    """
    gamma = mode_set.radiation_grid.gamma if gamma is None else np.atleast_1d(gamma)
    n = mode_set.N
    if medium.kernel.is_zero:
        return np.zeros((n, gamma.size))

    def compute(p):
        x, w = transverse_quadrature(0.0, mode_set.config.d, p)
        phi = mode_shapes(mode_set, x)
        rad = radiating_shapes(mode_set, gamma, x)
        return _quadratic_forms(medium.kernel, x, w, _pair_rows(phi, rad)).reshape(n, gamma.size)

    return refine(compute, panels or default_panels(mode_set), tol, label='G(pr)')


def overlap_pr(mode_set, medium, j, gamma, panels=None, tol=1e-9):
    check_index(mode_set, j, 'overlap_pr')
    k2 = mode_set.config.k ** 2
    if not mode_set.xi_cutoff < gamma < k2:
        raise SpectralParameterOutOfRange('gamma=%r outside (%g, %g)' % (gamma, mode_set.xi_cutoff, k2),
                                          module='medium', operation='overlap_pr')
    return float(overlap_matrix_pr(mode_set, medium, np.array([gamma]), panels, tol)[j - 1, 0])


def overlap_matrix_g1(mode_set, medium, panels=None, tol=1e-9):
    """
    G1_jl = int int gamma0(x1, x2) phi_j(x1)^2 phi_l(x2)^2.
    """
    n = mode_set.N
    if medium.kernel.is_zero:
        return np.zeros((n, n))

    def compute(p):
        x, w = transverse_quadrature(0.0, mode_set.config.d, p)
        sq = mode_shapes(mode_set, x) ** 2
        g1 = _bilinear_forms(medium.kernel, x, w, sq, sq)
        return 0.5 * (g1 + g1.T)

    return refine(compute, panels or default_panels(mode_set), tol, label='G1')


def cosine_overlap(medium, d, panels=64, tol=1e-10):
    """
    S0 = int int gamma0(x1, x2) cos(pi x1 / d) cos(pi x2 / d) over [0, d]^2.
    """
    if medium.kernel.is_zero:
        return 0.0

    def compute(p):
        x, w = transverse_quadrature(0.0, d, p)
        return _quadratic_forms(medium.kernel, x, w, np.cos(math.pi * x / d)[None, :])[0]

    return float(refine(compute, panels, tol, max_doublings=6, label='S0'))


def _set_row_sums(m):
    m = np.array(m, dtype=float)
    np.fill_diagonal(m, 0.0)
    np.fill_diagonal(m, -m.sum(axis=1))
    return m


@dataclass
class CouplingMatrices:
    """
    Statistical description of mode coupling at one frequency: transport (gamma_c), phase (gamma_s, gamma_1) and
    radiative loss (lambda_c, lambda_s). `meta` records how it was built.
    """
    gamma_c: np.ndarray
    gamma_s: np.ndarray
    gamma_1: np.ndarray
    lambda_c: np.ndarray
    lambda_s: np.ndarray
    loss_model: str = 'full'
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.gamma_c.shape[0]

    def generator(self):
        return self.gamma_c - np.diag(self.lambda_c)

    def with_transport(self, gamma_c):
        return replace(self, gamma_c=np.asarray(gamma_c, dtype=float))

    @classmethod
    def from_transport(cls, gamma_c, lambda_c=None, loss_model='full', **meta):
        """
        Build from the off-diagonal part of a symmetric transport matrix; diagonals follow the zero row sum rule and
        the phase matrices are zero.
        """
        gc = _set_row_sums(gamma_c)
        n = gc.shape[0]
        lam = np.zeros(n) if lambda_c is None else np.asarray(lambda_c, dtype=float)
        return cls(gamma_c=gc, gamma_s=np.zeros((n, n)), gamma_1=np.zeros((n, n)), lambda_c=lam,
                   lambda_s=np.zeros(n), loss_model=loss_model, meta=dict(meta))

    def to_dict(self):
        info = dict(self.meta)
        info.update({'N': self.N, 'loss_model': self.loss_model})
        return info


def radiative_loss(mode_set, medium, panels=None, tol=1e-9):
    """
    Lambda^c_j and Lambda^s_j by quadrature over the radiation grid.

    :return: (lambda_c, lambda_s)
    """
    grid = mode_set.radiation_grid
    k = mode_set.config.k
    a = medium.a
    beta = mode_set.beta[:, None]
    s = grid.s[None, :]
    gr = overlap_matrix_pr(mode_set, medium, panels=panels, tol=tol)
    weight = grid.weights[None, :] * k ** 4 / (4 * s * beta) * gr
    lam_c = (weight * laplace_cosine(a, s - beta)).sum(axis=1)
    lam_s = (weight * laplace_sine(a, s - beta)).sum(axis=1)
    return lam_c, lam_s


def assemble_coupling(mode_set, medium, panels=None, tol=1e-9):
    """
    Build every coupling statistic from the modal overlaps using the closed-form Laplace transforms of exp(-a z).

    :param mode_set: ModeSet
    :param medium: MediumStats
    :return: CouplingMatrices
    """
    k = mode_set.config.k
    a = medium.a
    beta = mode_set.beta
    g = overlap_matrix_pp(mode_set, medium, panels, tol)
    g1 = overlap_matrix_g1(mode_set, medium, panels, tol)
    pref = k ** 4 / (2 * np.outer(beta, beta))
    b = beta[None, :] - beta[:, None]
    gamma_c = _set_row_sums(pref * g * laplace_cosine(a, b))
    gamma_s = _set_row_sums(pref * g * laplace_sine(a, b))
    gamma_1 = pref * g1 / a
    lam_c, lam_s = radiative_loss(mode_set, medium, panels, tol)
    logger.info('Medium: coupling assembled for N=%d (%s kernel, a=%g)', mode_set.N, medium.kernel.name, a)
    return CouplingMatrices(gamma_c=gamma_c, gamma_s=gamma_s, gamma_1=gamma_1, lambda_c=lam_c, lambda_s=lam_s,
                            meta={'omega': mode_set.config.omega, 'xi_cutoff': mode_set.xi_cutoff,
                                  'kernel': medium.kernel.name, 'a': a})


def band_limited_filter(coupling, loss_modes=1):
    """
    Nearest-neighbour idealization: keep only |j - l| = 1 couplings and put the radiative loss on the last
    `loss_modes` modes (1: mode N, 2: modes N-1 and N).
    """
    if loss_modes not in (1, 2):
        raise ValueError('loss_modes must be 1 or 2')
    n = coupling.N
    band = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) == 1
    keep = np.zeros(n, dtype=bool)
    keep[max(n - loss_modes, 0):] = True
    return replace(coupling,
                   gamma_c=_set_row_sums(np.where(band, coupling.gamma_c, 0.0)),
                   gamma_s=_set_row_sums(np.where(band, coupling.gamma_s, 0.0)),
                   lambda_c=np.where(keep, coupling.lambda_c, 0.0),
                   lambda_s=np.where(keep, coupling.lambda_s, 0.0),
                   loss_model='nearest_neighbor',
                   meta=dict(coupling.meta, loss_modes=loss_modes))


def lambda_xi_convergence(mode_set, medium, factor=0.5, panels=None):
    """
    Relative change of Lambda^c when the radiating-band cutoff xi is multiplied by `factor`.
    """
    grid = mode_set.radiation_grid
    coarse, _ = radiative_loss(mode_set, medium, panels)
    finer_set = mode_set.with_radiation_grid(grid.panels, grid.order, xi_cutoff=grid.xi_cutoff * factor)
    fine, _ = radiative_loss(finer_set, medium, panels)
    scale = np.maximum(np.abs(fine), np.finfo(float).tiny)
    change = float(np.max(np.abs(fine - coarse) / scale))
    logger.info('Medium: Lambda^c relative change %.3e for xi %.3e -> %.3e', change, grid.xi_cutoff,
                grid.xi_cutoff * factor)
    return change
