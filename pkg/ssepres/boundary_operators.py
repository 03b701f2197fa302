"""
Macroscopic boundary operators: the polynomial operator D, its difference
factor V, the mass ODE dm/dt = D_{i,o}(m) (closed form for K=2, RK4
otherwise), the mass fixed point m* and the stationary Robin profile.
"""
import dataclasses
import logging
import math
import warnings
from typing import Dict, Tuple, Union

import numpy as np
import pandas as pd
from scipy import optimize

from . import C
from .params import (AggregateRates, AssumptionError, BoundaryParams,
                     require)

logger = logging.getLogger(__name__)

# bisection interval width
XTOL = 1e-14
# |a| below this is treated as the linear case of the K=2 mass equation
LINEAR_A = 1e-14

Real = Union[float, np.ndarray]


class ConvergenceError(RuntimeError):
    """An iteration did not converge or produced a non-finite state."""


@dataclasses.dataclass(frozen=True)
class DPair:
    """
    Creation-like rates lam and removal-like rates sigma of one D operator.
    """
    lam: Tuple[float, ...]
    sigma: Tuple[float, ...]

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lam)
        sigma = tuple(float(v) for v in self.sigma)
        if len(lam) != len(sigma) or not lam:
            raise ValueError(f"lam and sigma must have the same positive "
                             f"length, got {len(lam)} and {len(sigma)}")
        if any(v < 0 for v in lam + sigma):
            raise ValueError(f"rates must be non-negative, got lam={lam}, "
                             f"sigma={sigma}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "sigma", sigma)

    @property
    def K(self) -> int:
        return len(self.lam)

    @classmethod
    def left(cls, params: BoundaryParams) -> "DPair":
        """(alpha, gamma), the operator of the boundary u=0."""
        return cls(params.alpha, params.gamma)

    @classmethod
    def right(cls, params: BoundaryParams) -> "DPair":
        """(beta, delta), the operator of the boundary u=1."""
        return cls(params.beta, params.delta)

    @classmethod
    def aggregate(cls, agg: AggregateRates) -> "DPair":
        return cls(agg.i_seq, agg.o_seq)

    def swapped(self) -> "DPair":
        return DPair(self.sigma, self.lam)


def _in_domain(f: Real, name: str = "f") -> Real:
    values = np.asarray(f, dtype=np.float64)
    if np.any(values < -C.DOMAIN_SLACK) or np.any(values > 1 + C.DOMAIN_SLACK):
        raise ValueError(f"{name} must lie in [0, 1], got {f}")
    clipped = np.clip(values, 0.0, 1.0)
    return float(clipped) if clipped.ndim == 0 else clipped


def d_op(p: DPair, f: Real) -> Real:
    """
    D_{lam,sigma} f = sum_x lam_x (1-f) f^(x-1) - sigma_x f (1-f)^(x-1).

    Arguments:
        p: the rate pair
        f: value(s) in [0, 1]; values within 1e-9 outside are clamped

    Returns:
        D f, with the shape of f
    """
    f = _in_domain(f)
    powers = np.arange(p.K)
    fa = np.asarray(f)[..., None]
    lam = np.asarray(p.lam)
    sigma = np.asarray(p.sigma)
    terms = lam * (1 - fa) * fa ** powers - sigma * fa * (1 - fa) ** powers
    result = terms.sum(axis=-1)
    return float(result) if result.ndim == 0 else result


def _v_terms(K: int, y, z) -> np.ndarray:
    """v_1..v_K at (y, z): v_x is the complete symmetric polynomial of
    degree x-1 in y and z."""
    v = np.empty((K,) + np.shape(y))
    for x in range(1, K + 1):
        v[x - 1] = sum(y ** (x - 1 - i) * z ** i for i in range(x))
    return v


def _v_single(rates: Tuple[float, ...], y, z):
    phi = np.append(np.asarray(rates), 0.0)
    weights = phi[:-1] - phi[1:]
    return np.tensordot(weights, _v_terms(len(rates), y, z), axes=1)


def v_op(p: DPair, y: Real, z: Real) -> Real:
    """
    V_{lam,sigma}(y, z) = V_lam(y, z) + V_sigma(1-y, 1-z), the factor with
    d_op(p, y) - d_op(p, z) = -(y - z) v_op(p, y, z).
    """
    y = np.asarray(_in_domain(y, "y"))
    z = np.asarray(_in_domain(z, "z"))
    result = _v_single(p.lam, y, z) + _v_single(p.sigma, 1 - y, 1 - z)
    result = np.asarray(result)
    return float(result) if result.ndim == 0 else result


def v_corners(p: DPair) -> Dict[Tuple[int, int], float]:
    """V at the corners (0,0), (1,0), (0,1) and (1,1)."""
    return {(y, z): v_op(p, float(y), float(z))
            for y, z in ((0, 0), (1, 0), (0, 1), (1, 1))}


def _bisect(g, lower: float = 0.0, upper: float = 1.0,
            xtol: float = XTOL) -> float:
    g_lower, g_upper = g(lower), g(upper)
    if g_lower == 0:
        return lower
    if g_upper == 0:
        return upper
    if g_lower * g_upper > 0:
        raise ValueError(f"no sign change on [{lower}, {upper}]: "
                         f"{g_lower:.3g}, {g_upper:.3g}")
    return optimize.bisect(g, lower, upper, xtol=xtol, maxiter=200)


def d_inverse(p: DPair, value: float) -> float:
    """
    The f in [0, 1] with d_op(p, f) = value, for value between
    d_op(p, 1) = -sigma_1 and d_op(p, 0) = lam_1.
    """
    low, high = d_op(p, 1.0), d_op(p, 0.0)
    if not low - C.DOMAIN_SLACK <= value <= high + C.DOMAIN_SLACK:
        raise ValueError(f"value {value} outside the range "
                         f"[{low}, {high}] of D on [0, 1]")
    if value >= high:
        return 0.0
    if value <= low:
        return 1.0
    return _bisect(lambda f: d_op(p, f) - value)


def mass_fixed_point(agg: AggregateRates) -> float:
    """
    The root m* in [0, 1] of D_{i,o}(m) = 0.

    Arguments:
        agg: aggregate rates with i_1 != 0 and o_1 != 0

    Returns:
        m*, bisected to an interval of width 1e-14

    Raises:
        AssumptionError: i_1 or o_1 vanishes
    """
    i1, o1 = agg.i_seq[0], agg.o_seq[0]
    if i1 == 0 or o1 == 0:
        raise AssumptionError(f"mass fixed point needs i_1 != 0 and "
                              f"o_1 != 0, got {i1} and {o1}")
    p = DPair.aggregate(agg)
    return _bisect(lambda m: d_op(p, m))


@dataclasses.dataclass(frozen=True)
class RicattiSolution:
    """
    Coefficients of dm/dt = a m^2 + b m + c (the K=2 mass equation) with
    its roots and the attracting root m*.

    Attributes:
        a, b, c: coefficients
        delta_disc: b^2 - 4ac
        kappa_plus, kappa_minus: (-b +- sqrt(delta_disc)) / (2a), NaN for
            the linear case a = 0
        m_star: the root in [0, 1]
    """
    a: float
    b: float
    c: float
    delta_disc: float
    kappa_plus: float
    kappa_minus: float
    m_star: float

    @property
    def linear(self) -> bool:
        return abs(self.a) < LINEAR_A


def ricatti_coefficients(agg: AggregateRates) -> RicattiSolution:
    if len(agg.i_seq) != 2:
        raise ValueError(f"the closed form needs K=2, got K={len(agg.i_seq)}")
    i1, i2 = agg.i_seq
    o1, o2 = agg.o_seq
    a = -(i2 - o2)
    b = i2 - o2 - (i1 + o1)
    c = i1
    disc = b * b - 4 * a * c
    if abs(a) < LINEAR_A:
        if b == 0:
            raise AssumptionError("i_1 + o_1 = 0: the mass equation is "
                                  "degenerate")
        return RicattiSolution(a=a, b=b, c=c, delta_disc=disc,
                               kappa_plus=math.nan, kappa_minus=math.nan,
                               m_star=-c / b)
    root = math.sqrt(disc)
    kappa_plus = (-b + root) / (2 * a)
    kappa_minus = (-b - root) / (2 * a)
    return RicattiSolution(a=a, b=b, c=c, delta_disc=disc,
                           kappa_plus=kappa_plus, kappa_minus=kappa_minus,
                           m_star=kappa_minus)


def ricatti_k2(agg: AggregateRates, m0: float, t: Real) -> Real:
    """
    Closed-form mass at time t for K=2.

    Arguments:
        agg: aggregate rates of length 2 (H3 assumed)
        m0: initial mass in [0, 1]
        t: time(s) >= 0

    Returns:
        m_t, with the shape of t
    """
    m0 = _in_domain(m0, "m0")
    sol = ricatti_coefficients(agg)
    t = np.asarray(t, dtype=np.float64)
    if sol.linear:
        ratio = sol.c / sol.b
        result = (m0 + ratio) * np.exp(sol.b * t) - ratio
    elif m0 in (sol.kappa_plus, sol.kappa_minus):
        result = np.full_like(t, m0)
    else:
        eps_t = ((sol.kappa_minus - m0) / (sol.kappa_plus - m0)
                 * np.exp(-math.sqrt(sol.delta_disc) * t))
        result = sol.kappa_plus + (sol.kappa_minus - sol.kappa_plus) \
            / (1 - eps_t)
    return float(result) if result.ndim == 0 else result


def ricatti_integrate(agg: AggregateRates, m0: float, t_end: float,
                      dt: float = C.DEFAULT_RK4_DT) -> pd.DataFrame:
    """
    Integrate dm/dt = D_{i,o}(m) with the classical RK4 scheme.

    The last step is shortened so the trajectory ends exactly at t_end.
    States leaving [0, 1] are clipped back; this is reported with a
    warning because it cannot happen for rates satisfying H1 and H3.

    Arguments:
        agg: aggregate rates
        m0: initial mass in [0, 1]
        t_end: final time
        dt: step

    Returns:
        DataFrame with columns t, mass, clipped
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not t_end >= 0:
        raise ValueError(f"t_end must be >= 0, got {t_end}")
    p = DPair.aggregate(agg)
    m = _in_domain(m0, "m0")

    def rhs(value):
        return d_op(p, min(max(value, 0.0), 1.0))

    n_steps = int(math.ceil(t_end / dt - 1e-9))
    times = [0.0]
    masses = [m]
    clipped = [False]
    n_clipped = 0
    for i in range(n_steps):
        t = i * dt
        h = min(dt, t_end - t)
        k1 = rhs(m)
        k2 = rhs(m + h / 2 * k1)
        k3 = rhs(m + h / 2 * k2)
        k4 = rhs(m + h * k3)
        m = m + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not math.isfinite(m):
            raise ConvergenceError(f"mass became {m} at t={t + h} "
                                   f"(m0={m0}, dt={dt}, rates {agg})")
        was_clipped = not 0.0 <= m <= 1.0
        if was_clipped:
            n_clipped += 1
            m = min(max(m, 0.0), 1.0)
        times.append(t + h)
        masses.append(m)
        clipped.append(was_clipped)
    if n_clipped:
        warnings.warn(f"mass trajectory clipped to [0, 1] in {n_clipped} of "
                      f"{n_steps} steps; the rates may violate H1 or H3")
    logger.debug(f"RK4 mass trajectory: {n_steps} steps, final m={m:.12g}")
    return pd.DataFrame({C.TIME: times, C.MASS: masses, C.CLIPPED: clipped})


@dataclasses.dataclass(frozen=True)
class StationaryProfile:
    """The linear stationary profile (1-u) rho0 + u rho1."""
    rho0: float
    rho1: float

    def __call__(self, u: Real) -> Real:
        return (1 - np.asarray(u)) * self.rho0 + np.asarray(u) * self.rho1

    @property
    def slope(self) -> float:
        return self.rho1 - self.rho0

    def residuals(self, params: BoundaryParams) -> Tuple[float, float]:
        """
        (rho1-rho0 + D_{alpha,gamma} rho0, rho1-rho0 - D_{beta,delta} rho1)
        """
        return (self.slope + d_op(DPair.left(params), self.rho0),
                self.slope - d_op(DPair.right(params), self.rho1))


def stationary_profile(params: BoundaryParams) -> StationaryProfile:
    """
    Boundary values of the stationary solution of the Robin problem,
    solving rho1 - rho0 = -D_{alpha,gamma} rho0 = D_{beta,delta} rho1.

    One boundary value is the outer unknown u. The other is the partner
    phi(u) solving -D_{alpha,gamma}(left) = D_{beta,delta}(right), found by
    inner bisection; the outer bisection finds the root of the increasing
    map T(u) = u - phi(u) - D(u). Which side is outer depends on how
    delta_1, alpha_1 and beta_1, gamma_1 are ordered.

    Raises:
        AssumptionError: H0 or H2 fails
    """
    require(params, "H0", "H2")
    left = DPair.left(params)
    right = DPair.right(params)
    a1, b1, g1, d1 = (params.alpha[0], params.beta[0], params.gamma[0],
                      params.delta[0])
    if d1 <= a1 and b1 <= g1:
        # outer unknown rho1, partner rho0
        def phi(u):
            return d_inverse(left, -d_op(right, u))

        def T(u):
            return u - phi(u) - d_op(right, u)

        rho1 = _bisect(T)
        rho0 = phi(rho1)
    else:
        # outer unknown rho0, partner rho1
        def phi(u):
            return d_inverse(right, -d_op(left, u))

        def T(u):
            return u - phi(u) - d_op(left, u)

        rho0 = _bisect(T)
        rho1 = phi(rho0)
    profile = StationaryProfile(rho0=rho0, rho1=rho1)
    logger.debug(f"stationary profile rho0={rho0:.15g} rho1={rho1:.15g}, "
                 f"residuals {profile.residuals(params)}")
    return profile
