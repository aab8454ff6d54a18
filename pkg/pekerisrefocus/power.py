"""
Mean mode powers: the coupled power equations dT/dz = (Gamma^c - diag(Lambda^c)) T, their asymptotic decay rate and
the jump-Markov representation used to cross-check them.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.linalg import eigh, expm
from scipy.sparse.csgraph import connected_components

from .errors import (BoundsViolation, CheckpointMissing, IndexOutOfRange, InvalidGenerator, NoRadiativeLoss,
                     NotIrreducible, PerronViolation, StiffnessFailure)

logger = logging.getLogger('Power')

NONNEGATIVE_SLACK = 1e-12


@dataclass
class PowerEvolution:
    """
    T_j^l(z) on a grid of checkpoints. `T[i]` holds the matrix at `z_grid[i]` divided by exp(log_scale[i]) so that
    strongly attenuated distances stay representable.
    """
    z_grid: np.ndarray
    T: np.ndarray
    log_scale: np.ndarray
    loss_model: str = 'full'

    def index(self, z):
        hits = np.flatnonzero(np.isclose(self.z_grid, z, rtol=1e-12, atol=1e-12))
        if not hits.size:
            raise CheckpointMissing('z=%r is not a checkpoint' % z, module='power', operation='PowerEvolution.index')
        return int(hits[0])

    def scaled(self, z):
        i = self.index(z)
        return self.T[i], float(self.log_scale[i])

    def matrix(self, z):
        i = self.index(z)
        return self.T[i] * math.exp(self.log_scale[i])

    def total_power(self):
        """ Column sums sum_j T_j^l(z), shape (len(z_grid), N). """
        return self.T.sum(axis=1) * np.exp(self.log_scale)[:, None]

    def rows(self):
        n = self.T.shape[1]
        for i, z in enumerate(self.z_grid):
            scale = math.exp(self.log_scale[i])
            for j in range(n):
                for l in range(n):
                    yield z, j + 1, l + 1, self.T[i, j, l] * scale


def _checkpoint_grid(z_max, checkpoints):
    if not z_max > 0:
        raise ValueError('z_max must be positive, got %r' % z_max)
    if np.ndim(checkpoints) == 0:
        return np.linspace(0.0, z_max, max(int(checkpoints), 2))
    grid = np.unique(np.asarray(checkpoints, dtype=float))
    if grid[0] < 0 or grid[-1] > z_max * (1 + 1e-12):
        raise ValueError('checkpoints must lie in [0, z_max]')
    return grid


def _clip_negative(t, z):
    low = t.min()
    if low < -NONNEGATIVE_SLACK:
        logger.warning('Power: entry %.3e below the nonnegativity slack at z=%g', low, z)
    return np.where((t < 0) & (t >= -NONNEGATIVE_SLACK), 0.0, t)


def integrate_power(coupling, z_max, checkpoints=11, rescale=False, max_expm_modes=400):
    """
    Solve the coupled power equations from identity initial data.

    :param coupling: CouplingMatrices
    :param z_max: largest propagation distance
    :param checkpoints: number of equispaced checkpoints in [0, z_max] or an explicit list
    :param rescale: divide out the asymptotic decay exp(-Lambda_inf z) and keep it in `log_scale`
    :param max_expm_modes: above this size the stiff integrator replaces the matrix exponential
    :return: PowerEvolution
    """
    grid = _checkpoint_grid(z_max, checkpoints)
    generator = coupling.generator()
    n = generator.shape[0]
    shift = float(np.linalg.eigvalsh(0.5 * (generator + generator.T))[-1]) if rescale else 0.0
    shifted = generator - shift * np.eye(n)

    if n <= max_expm_modes:
        mats = np.array([expm(z * shifted) for z in grid])
    else:
        logger.info('Power: N=%d, using the stiff integrator', n)
        jac = sparse.kron(sparse.csr_matrix(shifted), sparse.eye(n), format='csr')
        sol = solve_ivp(lambda z, y: (shifted @ y.reshape(n, n)).ravel(), (0.0, grid[-1]), np.eye(n).ravel(),
                        method='BDF', t_eval=grid, jac=jac, rtol=1e-10, atol=1e-13)
        if not sol.success:
            eig = np.linalg.eigvalsh(0.5 * (shifted + shifted.T))
            raise StiffnessFailure('%s (norm %.3e, eigenvalue span [%.3e, %.3e])'
                                   % (sol.message, np.abs(shifted).max(), eig[0], eig[-1]))
        mats = sol.y.T.reshape(-1, n, n)

    mats = np.array([_clip_negative(t, z) for t, z in zip(mats, grid)])
    logger.debug('Power: integrated N=%d to z=%g over %d checkpoints', n, grid[-1], grid.size)
    return PowerEvolution(z_grid=grid, T=mats, log_scale=shift * grid, loss_model=coupling.loss_model)


def spectral_gap(coupling):
    """
    Smallest nonzero eigenvalue of -Gamma^c, the relaxation rate towards equidistribution.
    """
    eig = np.linalg.eigvalsh(-coupling.gamma_c)
    tol = 1e-10 * max(1.0, np.abs(eig).max())
    positive = eig[eig > tol]
    if not positive.size:
        raise NotIrreducible('Gamma^c has no positive relaxation rate', operation='spectral_gap')
    return float(positive[0])


def total_power_slope(evolution, l=1):
    """
    d/dz log sum_j T_j^l between the last two checkpoints.
    """
    if evolution.z_grid.size < 2:
        raise ValueError('At least two checkpoints are needed')
    tail = evolution.T[-2:, :, l - 1].sum(axis=1)
    logs = np.log(tail) + evolution.log_scale[-2:]
    return float((logs[1] - logs[0]) / (evolution.z_grid[-1] - evolution.z_grid[-2]))


@dataclass
class DecayReport:
    lambda_inf: float
    lambda_min: float
    lambda_bar: float
    perron_vector: np.ndarray

    def to_dict(self):
        return {'lambda_inf': self.lambda_inf, 'lambda_min': self.lambda_min, 'lambda_bar': self.lambda_bar,
                'perron_vector': [float(v) for v in self.perron_vector]}


def is_irreducible(gamma_c):
    n = gamma_c.shape[0]
    if n == 1:
        return True
    adjacency = (np.abs(gamma_c) > 0) & ~np.eye(n, dtype=bool)
    count, _ = connected_components(sparse.csr_matrix(adjacency), directed=False)
    return count == 1


def decay_rate(coupling, perron_tol=1e-10):
    """
    Asymptotic decay rate of the total power: the smallest eigenvalue of -Gamma^c + diag(Lambda^c), whose eigenvector
    is the nonnegative minimizer of the Rayleigh quotient. Needs an irreducible Gamma^c and at least one radiating mode
    (NotIrreducible, NoRadiativeLoss otherwise).

    :return: DecayReport
    """
    lam = np.asarray(coupling.lambda_c, dtype=float)
    n = lam.size
    if not is_irreducible(coupling.gamma_c):
        raise NotIrreducible('Gamma^c is reducible: the coupling graph of the %d modes is disconnected' % n)
    if not np.any(lam > 0):
        raise NoRadiativeLoss('No mode radiates (all Lambda^c_j are zero), the total power does not decay')
    b = -coupling.gamma_c + np.diag(lam)
    values, vectors = eigh(0.5 * (b + b.T), subset_by_index=[0, 0])
    vec = vectors[:, 0]
    vec = vec * (1.0 if vec.sum() >= 0 else -1.0)
    if vec.min() < -perron_tol:
        raise PerronViolation('Minimizing eigenvector changes sign (min entry %.3e)' % vec.min())
    vec = np.clip(vec, 0.0, None)
    vec /= np.linalg.norm(vec)

    report = DecayReport(lambda_inf=float(values[0]), lambda_min=float(lam.min()), lambda_bar=float(lam.mean()),
                         perron_vector=vec)
    slack = 1e-9 * max(1.0, np.abs(b).max())
    if not report.lambda_min - slack <= report.lambda_inf <= report.lambda_bar + slack:
        raise BoundsViolation('Lambda_inf=%.6g outside [%.6g, %.6g]'
                              % (report.lambda_inf, report.lambda_min, report.lambda_bar))
    logger.debug('Power: Lambda_inf=%.6g in [%.6g, %.6g]', report.lambda_inf, report.lambda_min, report.lambda_bar)
    return report


@dataclass
class SweepReport:
    rows: list = field(default_factory=list)
    strong_monotone: bool = True
    weak_monotone: bool = True
    lambda_min: float = None
    lambda_bar: float = None

    def to_dict(self):
        return {'rows': self.rows, 'strong_monotone': self.strong_monotone, 'weak_monotone': self.weak_monotone,
                'lambda_min': self.lambda_min, 'lambda_bar': self.lambda_bar}


def coupling_strength_sweep(coupling, tau_list, z_max):
    """
    Rescale the transport matrix to Gamma^c / tau (strong coupling) and tau Gamma^c (weak coupling) and follow the
    decay rate towards its limits Lambda_bar and Lambda_min.
    """
    taus = sorted((float(t) for t in tau_list), reverse=True)
    if not taus or min(taus) <= 0:
        raise ValueError('tau values must be positive')
    n = coupling.N
    report = SweepReport(lambda_min=float(np.min(coupling.lambda_c)), lambda_bar=float(np.mean(coupling.lambda_c)))
    target = math.exp(-report.lambda_bar * z_max) / n
    for tau in taus:
        strong = coupling.with_transport(coupling.gamma_c / tau)
        weak = coupling.with_transport(coupling.gamma_c * tau)
        t_strong = expm(z_max * strong.generator())
        report.rows.append({'tau': tau,
                            'lambda_inf_strong': decay_rate(strong).lambda_inf,
                            'lambda_inf_weak': decay_rate(weak).lambda_inf,
                            'strong_deviation': float(np.abs(t_strong - target).max() / target)})

    slack = 1e-12 * max(1.0, report.lambda_bar)
    strong_gap = [abs(r['lambda_inf_strong'] - report.lambda_bar) for r in report.rows]
    weak_gap = [abs(r['lambda_inf_weak'] - report.lambda_min) for r in report.rows]
    report.strong_monotone = all(b <= a + slack for a, b in zip(strong_gap, strong_gap[1:]))
    report.weak_monotone = all(b <= a + slack for a, b in zip(weak_gap, weak_gap[1:]))
    if not (report.strong_monotone and report.weak_monotone):
        logger.warning('Power: coupling-strength sweep is not monotone (strong=%s, weak=%s)',
                       report.strong_monotone, report.weak_monotone)
    return report


@dataclass
class MarkovEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int

    def to_dict(self):
        return {'mean': self.mean.tolist(), 'stderr': self.stderr.tolist(), 'n_paths': self.n_paths}


def check_generator(gamma_c, tol=1e-9):
    gamma_c = np.asarray(gamma_c, dtype=float)
    scale = max(1.0, np.abs(gamma_c).max())
    off = gamma_c - np.diag(np.diag(gamma_c))
    if off.min() < -tol * scale:
        raise InvalidGenerator('Negative off-diagonal rate %.3e' % off.min())
    if np.abs(gamma_c.sum(axis=1)).max() > tol * scale:
        raise InvalidGenerator('Row sums of the generator are not zero (max %.3e)'
                               % np.abs(gamma_c.sum(axis=1)).max())


def markov_estimate(coupling, z, l0, n_paths, seed=0, block_size=4096):
    """
    Monte Carlo estimate of the column T_.^{l0}(z): jump chain with generator Gamma^c started in l0, each path
    weighted by exp(-int Lambda^c(Y_s) ds) accumulated exactly over its sojourns.

    Paths are simulated in vectorized blocks of `block_size`; block b draws from the b-th child of
    SeedSequence(seed). A result is reproducible for a given (seed, block_size) and the full blocks of a smaller run
    are repeated by a larger one. Another `block_size` regroups the draws: the estimate moves within its standard
    error.

    :return: MarkovEstimate
    """
    gamma_c = np.asarray(coupling.gamma_c, dtype=float)
    check_generator(gamma_c)
    n = gamma_c.shape[0]
    if not 1 <= l0 <= n:
        raise IndexOutOfRange('Initial mode %r outside 1..%d' % (l0, n), module='power', operation='markov_estimate')
    if n_paths < 1:
        raise ValueError('n_paths must be >= 1')
    lam = np.asarray(coupling.lambda_c, dtype=float)
    rates = np.clip(-np.diag(gamma_c), 0.0, None)
    jumps = np.clip(gamma_c - np.diag(np.diag(gamma_c)), 0.0, None)
    cum = np.cumsum(jumps, axis=1)
    cum = np.divide(cum, cum[:, -1:], out=np.zeros_like(cum), where=cum[:, -1:] > 0)

    total = np.zeros(n)
    total_sq = np.zeros(n)
    n_blocks = int(math.ceil(n_paths / float(block_size)))
    streams = np.random.SeedSequence(seed).spawn(n_blocks)
    for b, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        m = min(block_size, n_paths - b * block_size)
        state = np.full(m, l0 - 1)
        t = np.zeros(m)
        log_weight = np.zeros(m)
        active = np.ones(m, dtype=bool)
        while active.any():
            idx = np.flatnonzero(active)
            q = rates[state[idx]]
            draw = rng.standard_exponential(idx.size)
            sojourn = np.full(idx.size, np.inf)
            np.divide(draw, q, out=sojourn, where=q > 0)
            done = t[idx] + sojourn >= z
            step = np.where(done, z - t[idx], sojourn)
            log_weight[idx] -= lam[state[idx]] * step
            t[idx] += step
            active[idx[done]] = False
            movers = idx[~done]
            if movers.size:
                u = rng.random(movers.size)
                state[movers] = (u[:, None] < cum[state[movers]]).argmax(axis=1)
        contrib = np.exp(log_weight)[:, None] * (state[:, None] == np.arange(n)[None, :])
        total += contrib.sum(axis=0)
        total_sq += (contrib ** 2).sum(axis=0)

    mean = total / n_paths
    if n_paths > 1:
        var = np.clip(total_sq / n_paths - mean ** 2, 0.0, None) * n_paths / (n_paths - 1.0)
        stderr = np.sqrt(var / n_paths)
    else:
        stderr = np.zeros(n)
    return MarkovEstimate(mean=mean, stderr=stderr, n_paths=int(n_paths))


def q_phase(coupling, j, m):
    """
    Complex rate Q_jm governing the mean of the refocused contribution of the mode pair (j, m).
    """
    n = coupling.N
    for idx in (j, m):
        if not 1 <= idx <= n:
            raise IndexOutOfRange('Mode index %r outside 1..%d' % (idx, n), module='power', operation='q_phase')
    if j == m:
        raise ValueError('q_phase needs two distinct modes')
    a, b = j - 1, m - 1
    gc, gs, g1 = coupling.gamma_c, coupling.gamma_s, coupling.gamma_1
    lc, ls = coupling.lambda_c, coupling.lambda_s
    real = 0.5 * (gc[a, a] + gc[b, b] - (g1[a, a] + g1[b, b] - 2 * g1[a, b]) - (lc[a] + lc[b]))
    imag = 0.5 * (gs[b, b] - gs[a, a] - (ls[b] - ls[a]))
    scale = max(1.0, abs(gc[a, a]), abs(g1[a, a]), abs(lc[a]))
    if real > 1e-12 * scale:
        raise BoundsViolation('Re Q_%d%d = %.3e > 0: the pair contribution would grow, the kernel is not positive '
                              'semidefinite' % (j, m, real), operation='q_phase')
    return complex(real, imag)


def coherent_pair_amplitude(coupling, j, m, L):
    """ Mean amplitude factor exp(Q_jm L) of the pair contribution arriving at t_jm. """
    return complex(np.exp(q_phase(coupling, j, m) * L))
