"""
Direct simulation of the forward-scattering transfer matrix over realizations of the random medium.

On the fast scale zeta = z / epsilon the mode amplitudes obey dT/dzeta = sqrt(epsilon) H(zeta) T with

    H_jl(zeta) = i k^2 / 2 * C_jl(zeta) / sqrt(beta_j beta_l) * exp(i (beta_l - beta_j) zeta),

C_jl the projection of the medium fluctuation on the pair (j, l). H is skew-Hermitian, so T stays unitary; each step
applies the exponential of H at the step midpoint.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, expm
from scipy.signal import lfilter

from .errors import ConfigError, KernelRankDeficient, StepTooLarge
from .medium import CouplingMatrices, assemble_coupling, band_limited_filter, default_panels, laplace_cosine
from .power import integrate_power
from .process import run_tasks
from .spectrum import RadiationGrid, mode_shapes, radiating_shapes, transverse_quadrature

logger = logging.getLogger('MonteCarlo')


@dataclass(frozen=True)
class MCConfig:
    """
    :param epsilon: scale separation (0 < epsilon <= 0.1)
    :param realizations: number of medium realizations
    :param radiation_bins: Gauss-Legendre nodes representing the radiating band (0 keeps propagating modes only)
    :param seed: root seed; realization i draws from SeedSequence([seed, i])
    :param L: propagation distance on the macroscopic scale
    :param z_step: integrator step on the fast scale
    :param nearest_neighbor: keep only couplings between neighbouring propagating modes
    :param mercer_terms: number of Mercer terms of the transverse covariance (None: full numerical rank)
    :param unitarity_tol: largest accepted |T^H T - I|
    :param chunk: steps whose exponentials are evaluated in one batch
    """
    epsilon: float = 1e-3
    realizations: int = 200
    radiation_bins: int = 0
    seed: int = 0
    L: float = 1.0
    z_step: float = 0.05
    nearest_neighbor: bool = False
    mercer_terms: int = None
    unitarity_tol: float = 1e-8
    chunk: int = 4096

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 0.1:
            raise ConfigError('montecarlo.epsilon must lie in (0, 0.1], got %r' % self.epsilon,
                              module='montecarlo', operation='MCConfig')
        if int(self.realizations) < 1:
            raise ConfigError('montecarlo.realizations must be >= 1', module='montecarlo', operation='MCConfig')
        if int(self.radiation_bins) < 0:
            raise ConfigError('montecarlo.radiation_bins must be >= 0', module='montecarlo', operation='MCConfig')
        if not self.L >= 0 or not self.z_step > 0:
            raise ConfigError('montecarlo.L must be >= 0 and montecarlo.z_step > 0', module='montecarlo',
                              operation='MCConfig')
        if self.mercer_terms is not None and int(self.mercer_terms) < 1:
            raise ConfigError('montecarlo.mercer_terms must be >= 1', module='montecarlo', operation='MCConfig')

    @property
    def steps(self):
        return int(math.ceil(self.L / (self.epsilon * self.z_step) - 1e-9)) if self.L > 0 else 0

    def with_epsilon(self, epsilon):
        values = self.to_dict()
        values['epsilon'] = epsilon
        return MCConfig(**values)

    def to_dict(self):
        return {'epsilon': self.epsilon, 'realizations': self.realizations, 'radiation_bins': self.radiation_bins,
                'seed': self.seed, 'L': self.L, 'z_step': self.z_step, 'nearest_neighbor': self.nearest_neighbor,
                'mercer_terms': self.mercer_terms, 'unitarity_tol': self.unitarity_tol, 'chunk': self.chunk}


@dataclass
class MediumRealization:
    """
    Modal processes C(zeta) = sum_p xi_p(zeta) coefficients[p] sampled at the step midpoints. The first N indices
    are the propagating modes, the rest the radiation bins (weights folded in).
    """
    index: int
    coefficients: np.ndarray
    processes: np.ndarray
    step: float
    wavenumbers: np.ndarray
    n_propagating: int
    rank: int
    rate: float = 0.0

    @property
    def midpoints(self):
        return (np.arange(self.processes.shape[1]) + 0.5) * self.step

    def modal_process(self, j, l):
        """ C_jl at the step midpoints, mode numbers from 1. """
        return self.coefficients[:, j - 1, l - 1] @ self.processes


def _modal_basis(mode_set, mc, panels=None):
    """ Transverse quadrature, shapes of the simulated modes on it, their wavenumbers and quadrature weights. """
    cfg = mode_set.config
    x, w = transverse_quadrature(0.0, cfg.d, panels or default_panels(mode_set))
    shapes = mode_shapes(mode_set, x)
    wavenumbers = np.array(mode_set.beta)
    weights = np.ones(mode_set.N)
    if mc.radiation_bins:
        grid = RadiationGrid(mode_set.xi_cutoff, cfg.k, panels=1, order=mc.radiation_bins)
        shapes = np.vstack([shapes, radiating_shapes(mode_set, grid.gamma, x)])
        wavenumbers = np.concatenate([wavenumbers, grid.s])
        weights = np.concatenate([weights, grid.weights])
    return x, w, shapes, wavenumbers, weights


def _mercer(kernel, x, w, terms):
    """
    Truncated Mercer expansion of the covariance on the quadrature grid: gamma0(x_q, x_r) = sum_p e_p(x_q) e_p(x_r).

    :return: (factors of shape (P, Q), available rank)
    """
    root = np.sqrt(w)
    lam, vec = eigh(root[:, None] * kernel.gram(x) * root[None, :])
    keep = lam > 1e-10 * max(lam[-1], 0.0) if lam[-1] > 0 else np.zeros(len(lam), dtype=bool)
    lam, vec = lam[keep][::-1], vec[:, keep][:, ::-1]
    rank = len(lam)
    if terms is not None:
        if terms > rank:
            warnings.warn(KernelRankDeficient('Covariance has numerical rank %d, %d Mercer terms requested'
                                              % (rank, terms)))
        lam, vec = lam[:terms], vec[:, :terms]
    return (np.sqrt(lam)[:, None] * vec.T) / root[None, :], rank


def _nearest_neighbor_mask(n, n_propagating):
    idx = np.arange(n)
    mask = np.abs(np.subtract.outer(idx, idx)) == 1
    # radiation couples only to the last propagating mode
    mask[n_propagating:, :] = False
    mask[:, n_propagating:] = False
    if n > n_propagating:
        mask[n_propagating - 1, n_propagating:] = True
        mask[n_propagating:, n_propagating - 1] = True
    return mask


def _ou_paths(rng, rate, step, count, length):
    """ Unit-variance Ornstein-Uhlenbeck paths with the exact transition over `step`. """
    rho = math.exp(-rate * step)
    drive = rng.standard_normal((count, length))
    drive[:, 1:] *= math.sqrt(1.0 - rho ** 2)
    return lfilter([1.0], [1.0, -rho], drive, axis=1)


def _modal_coefficients(mode_set, medium, mc, panels=None):
    """
    Mercer coefficients of the modal processes, C_jl = sum_p xi_p coefficients[p, j, l], over the propagating modes
    followed by the radiation bins (quadrature weights folded in).

    :return: (coefficients, wavenumbers, rank)
    """
    x, w, shapes, wavenumbers, weights = _modal_basis(mode_set, mc, panels)
    n = len(wavenumbers)
    if medium.kernel.is_zero:
        return np.zeros((0, n, n)), wavenumbers, 0
    factors, rank = _mercer(medium.kernel, x, w, mc.mercer_terms)
    scaled = shapes * np.sqrt(weights)[:, None]
    coefficients = np.einsum('pq,jq,lq->pjl', factors * w[None, :], scaled, scaled)
    if mc.nearest_neighbor:
        coefficients = coefficients * _nearest_neighbor_mask(n, mode_set.N)[None, :, :]
    return coefficients, wavenumbers, rank


def sample_medium(mode_set, medium, mc, realization_index, panels=None):
    """
    Draw one realization of the modal coupling processes, reproducible from (mc.seed, realization_index).

    :return: MediumRealization
    """
    coefficients, wavenumbers, rank = _modal_coefficients(mode_set, medium, mc, panels)
    steps = mc.steps
    step = mc.L / (mc.epsilon * steps) if steps else mc.z_step
    if not rank:
        return MediumRealization(index=realization_index, coefficients=coefficients,
                                 processes=np.zeros((0, steps)), step=step, wavenumbers=wavenumbers,
                                 n_propagating=mode_set.N, rank=0, rate=medium.a)
    rng = np.random.default_rng(np.random.SeedSequence([int(mc.seed), int(realization_index)]))
    processes = _ou_paths(rng, medium.a, step, len(coefficients), steps)
    return MediumRealization(index=realization_index, coefficients=coefficients, processes=processes, step=step,
                             wavenumbers=wavenumbers, n_propagating=mode_set.N, rank=rank,
                             rate=medium.a)


def unitarity_drift(t):
    """ max |T^H T - I| """
    return float(np.abs(t.conj().T @ t - np.eye(t.shape[0])).max())


def integrate_transfer(mode_set, realization, mc):
    """
    Propagate the transfer matrix through one realization from zeta = 0 to L / epsilon.

    :return: unitary matrix on the propagating modes followed by the radiation bins
    """
    n = len(realization.wavenumbers)
    h = realization.step
    beta = realization.wavenumbers
    detuning = beta[None, :] - beta[:, None]
    resolution = h * max(float(np.abs(detuning).max()), realization.rate)
    if resolution > 0.5:
        raise StepTooLarge('Step %.3g does not resolve the phase and correlation scales (h * rate = %.3g)'
                           % (h, resolution))
    t = np.eye(n, dtype=complex)
    if realization.coefficients.shape[0] == 0 or realization.processes.shape[1] == 0:
        return t
    k = mode_set.config.k
    base = realization.coefficients * (math.sqrt(mc.epsilon) * 0.5 * k ** 2 / np.sqrt(np.outer(beta, beta)))
    mids = realization.midpoints
    for start in range(0, len(mids), mc.chunk):
        zeta = mids[start:start + mc.chunk]
        c = np.einsum('pm,pjl->mjl', realization.processes[:, start:start + mc.chunk], base)
        for u in expm(1j * h * c * np.exp(1j * detuning[None, :, :] * zeta[:, None, None])):
            t = u @ t
    drift = unitarity_drift(t)
    if drift > mc.unitarity_tol:
        raise StepTooLarge('Unitarity drift %.3e exceeds %.1e' % (drift, mc.unitarity_tol))
    return t


class _RealizationTask(object):
    """ One realization, from sampling to the l0 column of the transfer matrix. """

    def __init__(self, mode_set, medium, mc, l0, panels=None):
        self.mode_set = mode_set
        self.medium = medium
        self.mc = mc
        self.l0 = l0
        self.panels = panels

    def __call__(self, index):
        realization = sample_medium(self.mode_set, self.medium, self.mc, index, self.panels)
        t = integrate_transfer(self.mode_set, realization, self.mc)
        return t[:, self.l0 - 1], unitarity_drift(t)


@dataclass
class MCEstimate:
    """
    Monte Carlo mean powers E|T_{j,l0}|^2 of the propagating modes with standard errors, the power left in the
    radiation bins, and the cross moments E[T_{j,l0} conj(T_{m,l0})].
    """
    mean: np.ndarray
    stderr: np.ndarray
    radiated: float
    cross_moment: np.ndarray
    powers: np.ndarray
    max_drift: float
    config: MCConfig
    meta: dict = field(default_factory=dict)

    def rows(self):
        for r, row in enumerate(self.powers):
            for j, p in enumerate(row):
                yield r, j + 1, float(p)

    def to_dict(self):
        info = dict(self.meta)
        info.update({'mean': self.mean.tolist(), 'stderr': self.stderr.tolist(), 'radiated': self.radiated,
                     'max_unitarity_drift': self.max_drift, 'realizations': int(self.powers.shape[0]),
                     'montecarlo': self.config.to_dict()})
        return info


def estimate_mean_powers(mode_set, medium, mc, l0, threads=1, panels=None):
    """
    Average |T_{j,l0}(L)|^2 over mc.realizations realizations.

    :param l0: launched propagating mode (1..N)
    :param threads: worker processes sharing the realizations
    :return: MCEstimate
    """
    if not 1 <= l0 <= mode_set.N:
        raise ValueError('Initial mode %r outside 1..%d' % (l0, mode_set.N))
    task = _RealizationTask(mode_set, medium, mc, l0, panels)
    results = run_tasks(task, range(int(mc.realizations)), threads=threads)
    columns = np.array([column for column, _ in results])
    drift = max(d for _, d in results)
    n = mode_set.N
    powers = np.abs(columns[:, :n]) ** 2
    count = powers.shape[0]
    mean = powers.mean(axis=0)
    stderr = powers.std(axis=0, ddof=1) / math.sqrt(count) if count > 1 else np.zeros(n)
    radiated = float((np.abs(columns[:, n:]) ** 2).sum(axis=1).mean()) if columns.shape[1] > n else 0.0
    cross = np.einsum('rj,rm->jm', columns[:, :n], columns[:, :n].conj()) / count
    logger.info('MonteCarlo: %d realizations at epsilon=%g, max unitarity drift %.2e', count, mc.epsilon, drift)
    return MCEstimate(mean=mean, stderr=stderr, radiated=radiated, cross_moment=cross, powers=powers,
                      max_drift=drift, config=mc, meta={'l0': l0, 'N': n})


def bin_transport(mode_set, medium, mc, panels=None):
    """
    Transport matrix of the power equations among the propagating modes and the radiation bins, built from the
    Mercer coefficients the simulation draws:

        rate_jl = k^4 / (2 beta_j beta_l) E[C_jl^2] a / (a^2 + (beta_l - beta_j)^2).

    The bins are states of a finite system, so power that leaves the propagating modes can come back; the propagating
    block of this transport is what the simulated mean powers converge to as epsilon -> 0.

    :return: CouplingMatrices on N + radiation_bins states, without loss
    """
    coefficients, beta, rank = _modal_coefficients(mode_set, medium, mc, panels)
    k = mode_set.config.k
    variance = np.einsum('pjl,pjl->jl', coefficients, coefficients)
    rates = k ** 4 / (2 * np.outer(beta, beta)) * variance * laplace_cosine(medium.a, beta[None, :] - beta[:, None])
    return CouplingMatrices.from_transport(rates, loss_model='radiation_bins', n_propagating=mode_set.N,
                                           bins=len(beta) - mode_set.N, rank=rank)


def matched_coupling(mode_set, medium, mc, panels=None):
    """
    Coupling statistics whose power equations the simulation approximates: nearest-neighbour filtered when the
    simulation is, without radiative loss when no radiation bins are simulated, and the transport among propagating
    modes and bins (`bin_transport`) when they are.
    """
    if mc.radiation_bins:
        return bin_transport(mode_set, medium, mc, panels)
    coupling = assemble_coupling(mode_set, medium)
    if mc.nearest_neighbor:
        coupling = band_limited_filter(coupling)
    return CouplingMatrices.from_transport(coupling.gamma_c, loss_model='lossless', **coupling.meta)


def power_equation_reference(mode_set, medium, mc, l0, panels=None):
    """
    Mean powers of the propagating modes at mc.L predicted by `matched_coupling` for the launched mode l0, and the
    power predicted in the radiation bins.

    :return: (array of N powers, radiated power)
    """
    if not mc.L > 0:
        raise ConfigError('montecarlo.L must be > 0 for a power equation reference', module='montecarlo',
                          operation='power_equation_reference')
    coupling = matched_coupling(mode_set, medium, mc, panels)
    column = integrate_power(coupling, mc.L, checkpoints=[0.0, mc.L]).matrix(mc.L)[:, l0 - 1]
    n = mode_set.N
    return column[:n], float(column[n:].sum())


@dataclass
class EpsilonBias:
    epsilons: list
    errors: list
    estimates: list

    @property
    def shrinks(self):
        return self.errors[-1] < self.errors[0]

    def to_dict(self):
        return {'epsilons': list(self.epsilons), 'max_abs_error': list(self.errors), 'shrinks': self.shrinks}


def epsilon_bias(mode_set, medium, mc, l0, threads=1, factor=0.5):
    """
    Distance between the Monte Carlo mean powers and the coupled power equations at epsilon and factor * epsilon.

    :return: EpsilonBias
    """
    reference, _ = power_equation_reference(mode_set, medium, mc, l0)
    epsilons, errors, estimates = [], [], []
    for eps in (mc.epsilon, mc.epsilon * factor):
        estimate = estimate_mean_powers(mode_set, medium, mc.with_epsilon(eps), l0, threads=threads)
        error = float(np.abs(estimate.mean - reference).max())
        logger.info('MonteCarlo: epsilon=%g max |MC - ODE| = %.4g', eps, error)
        epsilons.append(eps)
        errors.append(error)
        estimates.append(estimate)
    return EpsilonBias(epsilons=epsilons, errors=errors, estimates=estimates)
