"""
Exact master-equation computations over all 2^(N-1) configurations, used
to certify the Monte Carlo engine for small N.

State i encodes the occupation with bit b of i equal to eta(b+1).
"""
import dataclasses
import logging
import warnings
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import expm_multiply, spsolve

from . import C
from .params import AssumptionError, BoundaryParams, validate

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-12
NEGATIVE_TOL = 1e-10
STATIONARY_RESIDUAL = 1e-11


class StateSpaceTooLarge(ValueError):
    """More than C.MAX_ORACLE_SITES sites."""


def _check_size(N: int, params: BoundaryParams) -> int:
    n = N - 1
    if n > C.MAX_ORACLE_SITES:
        raise StateSpaceTooLarge(
            f"N-1={n} sites give 2^{n} states; the oracle handles at most "
            f"{C.MAX_ORACLE_SITES} sites")
    if N < 2 * params.K + 2:
        raise ValueError(f"overlapping reservoir windows: N={N} < "
                         f"2K+2={2 * params.K + 2}")
    return n


def _bits(n: int) -> np.ndarray:
    """Occupations of all states, shape (2^n, n)."""
    index = np.arange(1 << n, dtype=np.int64)
    return ((index[:, None] >> np.arange(n)) & 1).astype(np.int8)


@dataclasses.dataclass
class Distribution:
    """
    Probability vector over the configurations of n_sites sites.

    Attributes:
        n_sites: N-1
        probs: 2^n_sites probabilities
    """
    n_sites: int
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (1 << self.n_sites,):
            raise ValueError(f"expected {1 << self.n_sites} probabilities, "
                             f"got shape {self.probs.shape}")
        if np.any(self.probs < -NEGATIVE_TOL):
            raise ValueError(f"negative probability {self.probs.min():.3g}")
        total = self.probs.sum()
        if abs(total - 1) > NORMALIZATION_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def point_mass(cls, occupation: Sequence[int]) -> "Distribution":
        occupation = np.asarray(occupation, dtype=np.int64)
        probs = np.zeros(1 << occupation.size)
        probs[int(np.dot(occupation, 1 << np.arange(occupation.size)))] = 1.0
        return cls(n_sites=occupation.size, probs=probs)

    @classmethod
    def product_bernoulli(cls, rho: Sequence[float]) -> "Distribution":
        """Independent sites with P(eta(x) = 1) = rho[x-1]."""
        rho = np.asarray(rho, dtype=np.float64)
        bits = _bits(rho.size)
        probs = np.prod(np.where(bits == 1, rho, 1 - rho), axis=1)
        return cls(n_sites=rho.size, probs=probs / probs.sum())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({C.STATE: np.arange(self.probs.size),
                             C.PROBABILITY: self.probs})


def generator_matrix(N: int, params: BoundaryParams) -> sparse.csr_matrix:
    """
    Rate matrix Q of the chain: Q[i, j] is the rate of the jump i -> j and
    the diagonal is minus the row sum.

    Raises:
        StateSpaceTooLarge: N-1 > C.MAX_ORACLE_SITES
    """
    n = _check_size(N, params)
    bits = _bits(n)
    states = np.arange(1 << n, dtype=np.int64)
    scale = float(N) ** (-params.theta)
    rows, cols, rates = [], [], []

    for b in range(n - 1):
        active = bits[:, b] != bits[:, b + 1]
        source = states[active]
        rows.append(source)
        cols.append(source ^ ((1 << b) | (1 << (b + 1))))
        rates.append(np.ones(source.size))

    def _window(site_bits, site_of, create_rates, remove_rates):
        for x in range(1, params.K + 1):
            inner = site_bits[:, :x - 1]
            target = site_bits[:, x - 1]
            full = np.all(inner == 1, axis=1)
            empty = np.all(inner == 0, axis=1)
            flip = 1 << site_of(x)
            for mask, rate in ((full & (target == 0), create_rates[x - 1]),
                               (empty & (target == 1), remove_rates[x - 1])):
                if rate == 0:
                    continue
                source = states[mask]
                rows.append(source)
                cols.append(source ^ flip)
                rates.append(np.full(source.size, scale * rate))

    # window sites ordered by distance from the edge
    _window(bits, lambda x: x - 1, params.alpha, params.gamma)
    _window(bits[:, ::-1], lambda x: n - x, params.beta, params.delta)

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    rates = np.concatenate(rates)
    size = 1 << n
    off_diagonal = sparse.coo_matrix((rates, (rows, cols)),
                                     shape=(size, size)).tocsr()
    exit_rates = np.asarray(off_diagonal.sum(axis=1)).ravel()
    Q = off_diagonal - sparse.diags(exit_rates)
    return Q.tocsr()


def evolve(dist: Distribution, N: int, params: BoundaryParams,
           t_micro: float) -> Distribution:
    """
    Forward equation d pi/dt = pi Q, pi(t) = pi(0) exp(t Q), by the action
    of the sparse matrix exponential.
    """
    if not t_micro >= 0:
        raise ValueError(f"t_micro must be >= 0, got {t_micro}")
    if dist.n_sites != N - 1:
        raise ValueError(f"distribution over {dist.n_sites} sites does not "
                         f"match N={N}")
    if t_micro == 0:
        return Distribution(n_sites=dist.n_sites, probs=dist.probs.copy())
    Q = generator_matrix(N, params)
    probs = expm_multiply(Q.T.tocsc() * t_micro, dist.probs)
    if probs.min() < -NEGATIVE_TOL:
        raise ArithmeticError(f"evolution produced probability "
                              f"{probs.min():.3g} at t_micro={t_micro}")
    probs = np.clip(probs, 0.0, None)
    drift = abs(probs.sum() - 1)
    if drift > NORMALIZATION_TOL:
        logger.debug(f"renormalizing probability drift {drift:.3g}")
    return Distribution(n_sites=dist.n_sites, probs=probs / probs.sum())


def stationary(N: int, params: BoundaryParams) -> Distribution:
    """
    The stationary distribution: pi Q = 0 with the first equation replaced
    by sum(pi) = 1.

    Raises:
        AssumptionError: H1 fails, the chain may be reducible
    """
    report = validate(params)
    if not report.h1:
        raise AssumptionError("the stationary distribution is unique only "
                              "under H1: " + "; ".join(report.violations))
    Q = generator_matrix(N, params)
    size = Q.shape[0]
    system = Q.T.tolil()
    system[0, :] = np.ones(size)
    rhs = np.zeros(size)
    rhs[0] = 1.0
    probs = spsolve(system.tocsc(), rhs)
    residual = np.abs(Q.T @ probs).max()
    if residual > STATIONARY_RESIDUAL:
        warnings.warn(f"stationary residual ||pi Q||_inf = {residual:.3g} "
                      f"exceeds {STATIONARY_RESIDUAL}")
    probs = np.clip(probs, 0.0, None)
    logger.debug(f"stationary distribution for N={N}: residual "
                 f"{residual:.3g}")
    return Distribution(n_sites=N - 1, probs=probs / probs.sum())


def stationary_residual(N: int, params: BoundaryParams,
                        dist: Distribution) -> float:
    """||pi Q||_inf"""
    return float(np.abs(generator_matrix(N, params).T @ dist.probs).max())


def site_marginals(dist: Distribution) -> np.ndarray:
    """P(eta(x) = 1) for x = 1..N-1."""
    return dist.probs @ _bits(dist.n_sites)


def two_point_correlations(dist: Distribution) -> np.ndarray:
    """Covariance matrix E[eta(x) eta(y)] - E[eta(x)] E[eta(y)]."""
    bits = _bits(dist.n_sites).astype(np.float64)
    second = (bits * dist.probs[:, None]).T @ bits
    first = site_marginals(dist)
    return second - np.outer(first, first)


def mean_mass(dist: Distribution) -> float:
    """Expected mass (N-1)^-1 sum_x eta(x)."""
    return float(site_marginals(dist).mean())


def marginals_frame(dist: Distribution) -> pd.DataFrame:
    return pd.DataFrame({C.SITE: np.arange(1, dist.n_sites + 1),
                         C.PROBABILITY: site_marginals(dist)})


def detailed_balance_violation(N: int, params: BoundaryParams,
                               dist: Optional[Distribution] = None) -> float:
    """
    max over pairs of |pi(i) Q[i, j] - pi(j) Q[j, i]|, zero for a
    reversible chain in equilibrium. Uses the stationary law by default.
    """
    if dist is None:
        dist = stationary(N, params)
    Q = generator_matrix(N, params)
    flux = sparse.diags(dist.probs) @ Q
    flux = flux - sparse.diags(flux.diagonal())
    imbalance = (flux - flux.T).tocoo()
    if imbalance.nnz == 0:
        return 0.0
    return float(np.abs(imbalance.data).max())
