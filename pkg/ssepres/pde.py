"""
Numerical solutions of the hydrodynamic equation: the heat equation on
[0, 1] with the nonlinear Robin conditions
    d_u rho(0) = -D_{alpha,gamma} rho(0),  d_u rho(1) = D_{beta,delta} rho(1)
for theta = 1, and Neumann conditions for theta > 1.

`solve` is a Crank-Nicolson finite difference scheme; `mild_solve`
evaluates the Duhamel representation through the reflected heat kernel
and serves as an independent cross-check.
"""
import dataclasses
import json
import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.integrate import trapezoid
from scipy.sparse.linalg import factorized
from scipy.special import erf, erfc

from . import C, utils
from .boundary_operators import ConvergenceError, DPair, d_op
from .observables import GridFunction
from .params import BoundaryParams

logger = logging.getLogger(__name__)

PICARD_TOL = 1e-12
PICARD_MAX = 50
MAX_HALVINGS = 4
VOLTERRA_TOL = 1e-10
VOLTERRA_MAX = 200
# Gaussian tails beyond this many standard widths are below 1e-17
TAIL_WIDTHS = 12.5
# backward Euler half steps replacing the first Crank-Nicolson steps
SMOOTHING_STEPS = 2


@dataclasses.dataclass(frozen=True)
class PdeProblem:
    """
    Attributes:
        params: boundary parameters
        f0: initial profile with values in [0, 1]
        bc_kind: C.NONLINEAR_ROBIN (theta = 1) or C.NEUMANN (theta > 1)
    """
    params: BoundaryParams
    f0: GridFunction
    bc_kind: str

    def __post_init__(self):
        if self.bc_kind == C.NONLINEAR_ROBIN:
            if self.params.theta != 1:
                raise ValueError(f"nonlinear Robin conditions need theta=1, "
                                 f"got theta={self.params.theta}")
        elif self.bc_kind == C.NEUMANN:
            if not self.params.theta > 1:
                raise ValueError(f"Neumann conditions need theta>1, "
                                 f"got theta={self.params.theta}")
        else:
            raise ValueError(f"Unknown boundary condition {self.bc_kind!r}")
        if not self.f0.is_density():
            raise ValueError("initial profile must take values in [0, 1]")

    @classmethod
    def for_params(cls, params: BoundaryParams,
                   f0: GridFunction) -> "PdeProblem":
        """The problem whose boundary conditions match params.theta."""
        kind = C.NONLINEAR_ROBIN if params.theta == 1 else C.NEUMANN
        return cls(params=params, f0=f0, bc_kind=kind)

    @property
    def robin(self) -> bool:
        return self.bc_kind == C.NONLINEAR_ROBIN

    def initial_on(self, m: int) -> np.ndarray:
        u = np.linspace(0.0, 1.0, m + 1)
        return np.clip(self.f0(u), 0.0, 1.0)

    def boundary_terms(self, rho0: float, rho1: float) -> Tuple[float, float]:
        """
        (D_{alpha,gamma} rho(0), D_{beta,delta} rho(1)), zero for Neumann.
        """
        if not self.robin:
            return 0.0, 0.0
        rho0 = min(max(rho0, 0.0), 1.0)
        rho1 = min(max(rho1, 0.0), 1.0)
        return (d_op(DPair.left(self.params), rho0),
                d_op(DPair.right(self.params), rho1))


@dataclasses.dataclass
class PdeSolution:
    """
    Time-stacked grid functions plus the manifest of the run.

    Behaves as a sequence of GridFunction.
    """
    frames: List[GridFunction]
    manifest: Dict

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, index):
        return self.frames[index]

    @property
    def times(self) -> np.ndarray:
        return np.array([frame.t for frame in self.frames])

    @property
    def values(self) -> np.ndarray:
        """Array (frames, m+1)."""
        return np.array([frame.values for frame in self.frames])

    def at(self, t: float) -> GridFunction:
        """The frame closest to time t."""
        index = int(np.argmin(np.abs(self.times - t)))
        return self.frames[index]

    def to_frame(self) -> pd.DataFrame:
        tables = []
        for frame in self.frames:
            table = frame.to_frame()
            table.insert(0, C.TIME, frame.t)
            tables.append(table)
        return pd.concat(tables, ignore_index=True)

    def to_csv(self, path, header: str = ""):
        with open(path, "w") as handle:
            handle.write(header)
            self.to_frame().to_csv(handle, index=False)

    def write_manifest(self, path):
        with open(path, "w") as handle:
            json.dump(self.manifest, handle, sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# Crank-Nicolson


def _laplacian(m: int) -> sparse.csc_matrix:
    """Second difference with ghost-node rows for the end points."""
    h = 1.0 / m
    main = np.full(m + 1, -2.0)
    upper = np.ones(m)
    lower = np.ones(m)
    upper[0] = 2.0
    lower[-1] = 2.0
    return sparse.diags([lower, main, upper], [-1, 0, 1],
                        format="csc") / h ** 2


class _ThetaStepper:
    """One step of the theta scheme (1/2: Crank-Nicolson, 1: backward
    Euler) with Picard iteration on the two boundary values."""

    def __init__(self, problem: PdeProblem, m: int):
        self.problem = problem
        self.m = m
        self.h = 1.0 / m
        self.A = _laplacian(m)
        self.eye = sparse.identity(m + 1, format="csc")
        self._solvers = {}
        self.picard_iterations = 0
        self.max_picard = 0

    def _solver(self, dt: float, theta: float):
        key = (dt, theta)
        if key not in self._solvers:
            self._solvers[key] = factorized(
                (self.eye - theta * dt * self.A).tocsc())
        return self._solvers[key]

    def _source(self, rho0: float, rho1: float) -> np.ndarray:
        left, right = self.problem.boundary_terms(rho0, rho1)
        source = np.zeros(self.m + 1)
        source[0] = 2.0 * left / self.h
        source[-1] = 2.0 * right / self.h
        return source

    def step(self, rho: np.ndarray, dt: float,
             theta: float) -> Optional[np.ndarray]:
        """
        Advance by dt; None when Picard fails or the result leaves
        [0, 1] by more than the slack.
        """
        solve = self._solver(dt, theta)
        explicit = rho + (1 - theta) * dt * (self.A @ rho
                                             + self._source(rho[0], rho[-1]))
        if not self.problem.robin:
            new = solve(explicit)
            iterations = 1
        else:
            guess = (rho[0], rho[-1])
            for iterations in range(1, PICARD_MAX + 1):
                new = solve(explicit + theta * dt * self._source(*guess))
                change = max(abs(new[0] - guess[0]), abs(new[-1] - guess[1]))
                guess = (new[0], new[-1])
                if change <= PICARD_TOL:
                    break
            else:
                logger.debug(f"Picard stalled at dt={dt:.3g}: boundary change "
                             f"{change:.3g} after {PICARD_MAX} iterations")
                return None
        self.picard_iterations += iterations
        self.max_picard = max(self.max_picard, iterations)
        if np.any(new < -C.DOMAIN_SLACK) or np.any(new > 1 + C.DOMAIN_SLACK):
            logger.debug(f"step of dt={dt:.3g} left [0, 1]: "
                         f"[{new.min():.3g}, {new.max():.3g}]")
            return None
        return np.clip(new, 0.0, 1.0)

    def advance(self, rho: np.ndarray, dt: float, theta: float,
                depth: int = 0) -> np.ndarray:
        new = self.step(rho, dt, theta)
        if new is not None:
            return new
        if depth >= MAX_HALVINGS:
            raise ConvergenceError(
                f"time step failed after {MAX_HALVINGS} halvings (dt now "
                f"{dt:.3g}, m={self.m}, boundary values {rho[0]:.6g}, "
                f"{rho[-1]:.6g})")
        logger.info(f"halving time step to {dt / 2:.3g}")
        half = self.advance(rho, dt / 2, theta, depth + 1)
        return self.advance(half, dt / 2, theta, depth + 1)


def auto_dt(m: int) -> float:
    return min(1e-3, 0.5 / m ** 2)


def solve(problem: PdeProblem, t_end: float, m: int = 64,
          dt: Optional[float] = None, save_every: int = 1) -> PdeSolution:
    """
    Crank-Nicolson solution on the grid u_i = i/m.

    The boundary conditions enter through ghost nodes, which turns the
    first and last rows of the Laplacian into 2(rho_1 - rho_0)/h^2 plus
    the source 2 D/h. The nonlinear source is iterated to a fixed point in
    every step. The first steps are backward Euler half steps to damp the
    oscillating modes of incompatible initial data.

    Arguments:
        problem: the PdeProblem
        t_end: final time
        m: number of cells (>= 8)
        dt: time step, default min(1e-3, 0.5/m^2)
        save_every: keep every n-th step (the last step is always kept)

    Returns:
        PdeSolution with frames at t = 0, save_every*dt, ..., t_end
    """
    if m < 8:
        raise ValueError(f"m must be >= 8, got {m}")
    if not t_end >= 0:
        raise ValueError(f"t_end must be >= 0, got {t_end}")
    if dt is None:
        dt = auto_dt(m)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n_steps = int(math.ceil(t_end / dt - 1e-9))
    if n_steps:
        dt = t_end / n_steps
    stepper = _ThetaStepper(problem, m)
    rho = problem.initial_on(m)
    frames = [GridFunction(m=m, values=rho.copy(), t=0.0)]
    for n in range(1, n_steps + 1):
        if n <= SMOOTHING_STEPS:
            rho = stepper.advance(rho, dt / 2, 1.0)
            rho = stepper.advance(rho, dt / 2, 1.0)
        else:
            rho = stepper.advance(rho, dt, 0.5)
        if n % save_every == 0 or n == n_steps:
            frames.append(GridFunction(m=m, values=rho.copy(), t=n * dt))
    manifest = {"scheme": "crank-nicolson", "m": m, "dt": dt,
                "t_end": t_end, "bc_kind": problem.bc_kind,
                "steps": n_steps, "smoothing_steps": SMOOTHING_STEPS,
                "picard_iterations": stepper.picard_iterations,
                "max_picard_iterations": stepper.max_picard,
                "params": problem.params.to_mapping()}
    logger.info(f"solved {problem.bc_kind} problem to t={t_end} "
                f"(m={m}, dt={dt:.3g}, {stepper.picard_iterations} Picard "
                f"iterations)")
    return PdeSolution(frames=frames, manifest=manifest)


# ---------------------------------------------------------------------------
# weak formulation


@dataclasses.dataclass(frozen=True)
class SpaceTimeTest:
    """
    A smooth test function G(u, t) with its derivatives.

    All callables take (u, t) and broadcast over u.
    """
    value: Callable
    du: Callable
    duu: Callable
    dt: Callable = None

    @classmethod
    def static(cls, value: Callable, du: Callable,
               duu: Callable) -> "SpaceTimeTest":
        """A time-independent test function from callables of u."""
        return cls(value=lambda u, t: value(u), du=lambda u, t: du(u),
                   duu=lambda u, t: duu(u),
                   dt=lambda u, t: np.zeros_like(np.asarray(u, dtype=float)))

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> "SpaceTimeTest":
        """Time-independent polynomial, coefficients highest degree first."""
        poly = np.poly1d(coefficients)
        return cls.static(poly, poly.deriv(1), poly.deriv(2))

    def time_derivative(self, u, t):
        if self.dt is None:
            return np.zeros_like(np.asarray(u, dtype=float))
        return self.dt(u, t)


def weak_residual(solution: PdeSolution, G: SpaceTimeTest,
                  problem: PdeProblem, t: Optional[float] = None) -> float:
    """
    F(rho, G, t) = <rho_t, G_t> - <rho_0, G_0>
        - int_0^t <rho_s, (d_s + d_uu) G_s> ds
        + int_0^t rho_s(1) d_uG_s(1) - rho_s(0) d_uG_s(0) ds
        - int_0^t G_s(1) D_{beta,delta} rho_s(1)
                  + G_s(0) D_{alpha,gamma} rho_s(0) ds,
    with the boundary operators dropped for Neumann conditions.

    Spatial integrals use the trapezoidal rule on the solution grid, time
    integrals the trapezoidal rule over the stored frames up to t.
    """
    times = solution.times
    if t is None:
        t = times[-1]
    keep = times <= t + 1e-12
    frames = [frame for frame, kept in zip(solution.frames, keep) if kept]
    if len(frames) < 2:
        raise ValueError("need at least two frames up to t for the time "
                         "quadrature")
    u = frames[0].u
    s = np.array([frame.t for frame in frames])
    bulk = np.empty(len(frames))
    edge = np.empty(len(frames))
    reservoir = np.empty(len(frames))
    for i, frame in enumerate(frames):
        rho = frame.values
        generator = G.time_derivative(u, frame.t) + G.duu(u, frame.t)
        bulk[i] = trapezoid(rho * generator, u)
        edge[i] = (rho[-1] * G.du(1.0, frame.t)
                   - rho[0] * G.du(0.0, frame.t))
        left, right = problem.boundary_terms(rho[0], rho[-1])
        reservoir[i] = (G.value(1.0, frame.t) * right
                        + G.value(0.0, frame.t) * left)
    final = trapezoid(frames[-1].values * G.value(u, frames[-1].t), u)
    initial = trapezoid(frames[0].values * G.value(u, frames[0].t), u)
    return float(final - initial - utils.time_integral(s, bulk)
                 + utils.time_integral(s, edge)
                 - utils.time_integral(s, reservoir))


# ---------------------------------------------------------------------------
# reflected heat kernel and mild solutions


@dataclasses.dataclass(frozen=True)
class KernelConfig:
    """
    Attributes:
        image_count: reflections 2k +- v with |k| <= image_count; raised
            automatically when t is large enough for the truncation to
            matter
        t_floor: kernel evaluation below this time is refused
    """
    image_count: int = C.DEFAULT_IMAGE_COUNT
    t_floor: float = C.DEFAULT_T_FLOOR

    def __post_init__(self):
        if self.image_count < 3:
            raise ValueError(f"image_count must be >= 3, got "
                             f"{self.image_count}")
        if not self.t_floor > 0:
            raise ValueError(f"t_floor must be positive, got {self.t_floor}")

    def images_for(self, t: float) -> int:
        needed = int(math.ceil((TAIL_WIDTHS * math.sqrt(2 * t) + 1) / 2)) + 1
        return max(self.image_count, needed)


def _image_points(v, n_images: int) -> np.ndarray:
    """The multiset {2k + v, 2k - v : |k| <= n_images} along a new last
    axis."""
    k = 2.0 * np.arange(-n_images, n_images + 1)
    v = np.asarray(v, dtype=np.float64)[..., None]
    return np.concatenate([k + v, k - v], axis=-1)


def kernel_eval(cfg: KernelConfig, t: float, u, v):
    """
    Neumann heat kernel P_t(u, v) on [0, 1], the sum of the Gaussian
    (4 pi t)^-1/2 exp(-(u-w)^2 / 4t) over the reflections w of v.

    Arguments:
        cfg: the KernelConfig
        t: time, >= cfg.t_floor
        u, v: points of [0, 1] (broadcast against each other)
    """
    if t < cfg.t_floor:
        raise ValueError(f"kernel time {t} is below t_floor={cfg.t_floor}")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    for name, values in (("u", u), ("v", v)):
        if np.any(values < -C.DOMAIN_SLACK) or \
                np.any(values > 1 + C.DOMAIN_SLACK):
            raise ValueError(f"{name} must lie in [0, 1]")
    u, v = np.broadcast_arrays(u, v)
    w = _image_points(v, cfg.images_for(t))
    d = u[..., None] - w
    result = np.exp(-d ** 2 / (4 * t)).sum(axis=-1) \
        / math.sqrt(4 * math.pi * t)
    return float(result) if result.ndim == 0 else result


def _gaussian_time_integral(d: np.ndarray, tau: float) -> np.ndarray:
    """int_0^tau (4 pi s)^-1/2 exp(-d^2/4s) ds, elementwise in d."""
    if tau <= 0:
        return np.zeros_like(d)
    d = np.abs(d)
    root = math.sqrt(tau)
    return (root / math.sqrt(math.pi) * np.exp(-d ** 2 / (4 * tau))
            - d / 2 * erfc(d / (2 * root)))


def _kernel_time_integrals(u: np.ndarray, w: float, taus: np.ndarray,
                           n_images: int) -> np.ndarray:
    """int_0^tau P_s(u, w) ds for every u (rows) and tau (columns)."""
    images = _image_points(w, n_images)
    d = (u[:, None] - images[None, :]).ravel()
    out = np.empty((u.size, taus.size))
    for j, tau in enumerate(taus):
        out[:, j] = _gaussian_time_integral(d, tau).reshape(
            u.size, images.size).sum(axis=1)
    return out


def _segments(u: np.ndarray, t: float, w: np.ndarray,
              f: np.ndarray) -> np.ndarray:
    """
    Exact integral of the Gaussian of variance 2t centred at each u against
    the piecewise linear function through (w, f), w increasing.
    """
    s = w[None, :] - u[:, None]
    cdf = 0.5 * erf(s / (2 * math.sqrt(t)))
    pdf = np.exp(-s ** 2 / (4 * t)) / math.sqrt(4 * math.pi * t)
    slope = np.diff(f) / np.diff(w)
    offset = f[:-1][None, :] + slope[None, :] * (u[:, None] - w[None, :-1])
    mass = offset * (cdf[:, 1:] - cdf[:, :-1])
    first_moment = -2 * t * slope[None, :] * (pdf[:, 1:] - pdf[:, :-1])
    return (mass + first_moment).sum(axis=1)


def neumann_convolution(f0: GridFunction, t: float, u,
                        cfg: KernelConfig = KernelConfig()) -> np.ndarray:
    """int_0^1 P_t(u, v) f0(v) dv, exact for the piecewise linear f0."""
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if t <= 0:
        return f0(u)
    v = f0.u
    total = np.zeros(u.size)
    for k in range(-cfg.images_for(t), cfg.images_for(t) + 1):
        total += _segments(u, t, 2 * k + v, f0.values)
        total += _segments(u, t, (2 * k - v)[::-1], f0.values[::-1])
    return total


def mild_solve(problem: PdeProblem, t_end: float, m: int = 64,
               dt: Optional[float] = None,
               cfg: KernelConfig = KernelConfig(),
               output_times: Optional[Sequence[float]] = None) -> PdeSolution:
    """
    Mild solution
        rho_t(u) = int P_t(u,v) f0(v) dv
                   + int_0^t P_{t-s}(u,0) D_{alpha,gamma} rho_s(0)
                             + P_{t-s}(u,1) D_{beta,delta} rho_s(1) ds.

    The boundary traces rho_s(0), rho_s(1) are marched in time steps of dt
    as a Volterra equation: on each subinterval the boundary operator is
    replaced by the mean of its end values and the kernel is integrated
    exactly in time, which absorbs the s -> t singularity. The unknown end
    value of the current step is found by fixed point iteration. Profiles
    on the grid i/m are assembled at `output_times` (default t_end).

    Raises:
        ConvergenceError: a step needs more than 200 iterations
    """
    if not problem.robin:
        raise ValueError("mild solutions are implemented for nonlinear Robin "
                         "conditions only")
    if dt is None:
        dt = auto_dt(m)
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
    dt = t_end / n_steps
    if output_times is None:
        output_times = [t_end]
    output_steps = sorted({int(round(t / dt)) for t in output_times})
    if output_steps and output_steps[-1] > n_steps:
        raise ValueError("output times must not exceed t_end")

    n_images = cfg.images_for(t_end)
    taus = dt * np.arange(n_steps + 1)
    ends = np.array([0.0, 1.0])
    # increments of int_0^tau P(a, b) over [tau_k, tau_k+1], a, b in {0, 1}
    from_left = np.diff(_kernel_time_integrals(ends, 0.0, taus, n_images),
                        axis=1)
    from_right = np.diff(_kernel_time_integrals(ends, 1.0, taus, n_images),
                         axis=1)

    free = np.array([neumann_convolution(problem.f0, tau, ends, cfg)
                     for tau in taus])
    traces = np.empty((n_steps + 1, 2))
    traces[0] = problem.f0(ends)
    sources = np.empty((n_steps + 1, 2))
    sources[0] = problem.boundary_terms(*traces[0])
    iterations_total = 0
    for n in range(1, n_steps + 1):
        # interval j has weight index n-1-j; intervals before the last
        # one are known
        known = free[n].copy()
        if n > 1:
            means = (sources[:n - 1] + sources[1:n]) / 2
            known += from_left[:, n - 1:0:-1] @ means[:, 0]
            known += from_right[:, n - 1:0:-1] @ means[:, 1]
        guess = traces[n - 1].copy()
        for iterations in range(1, VOLTERRA_MAX + 1):
            source = np.array(problem.boundary_terms(*guess))
            last = (sources[n - 1] + source) / 2
            new = (known + from_left[:, 0] * last[0]
                   + from_right[:, 0] * last[1])
            change = np.max(np.abs(new - guess))
            guess = new
            if change <= VOLTERRA_TOL:
                break
        else:
            raise ConvergenceError(
                f"Volterra iteration did not converge at t={n * dt:.4g} "
                f"(change {change:.3g} after {VOLTERRA_MAX} iterations)")
        iterations_total += iterations
        traces[n] = guess
        sources[n] = problem.boundary_terms(*guess)

    u = np.linspace(0.0, 1.0, m + 1)
    frames = []
    for n in output_steps:
        values = neumann_convolution(problem.f0, n * dt, u, cfg)
        if n > 0:
            means = (sources[:n] + sources[1:n + 1]) / 2
            for side, w in ((0, 0.0), (1, 1.0)):
                weights = np.diff(_kernel_time_integrals(
                    u, w, taus[:n + 1], n_images), axis=1)
                values += weights[:, ::-1] @ means[:, side]
        if np.any(values < -C.DOMAIN_SLACK) or \
                np.any(values > 1 + C.DOMAIN_SLACK):
            raise ConvergenceError(f"mild solution left [0, 1] at "
                                   f"t={n * dt:.4g}: [{values.min():.3g}, "
                                   f"{values.max():.3g}]")
        frames.append(GridFunction(m=m, values=np.clip(values, 0.0, 1.0),
                                   t=n * dt))
    manifest = {"scheme": "mild-volterra", "m": m, "dt": dt, "t_end": t_end,
                "bc_kind": problem.bc_kind, "steps": n_steps,
                "image_count": n_images,
                "volterra_iterations": iterations_total,
                "params": problem.params.to_mapping()}
    logger.info(f"mild solution to t={t_end} in {n_steps} steps "
                f"({iterations_total} fixed point iterations)")
    return PdeSolution(frames=frames, manifest=manifest)


# ---------------------------------------------------------------------------


def boundary_flux(problem: PdeProblem,
                  profile: GridFunction) -> Tuple[float, float]:
    """
    Macroscopic creation rates at the two boundaries,
    (D_{alpha,gamma} rho(0), D_{beta,delta} rho(1)); zero for Neumann.
    """
    return problem.boundary_terms(profile.values[0], profile.values[-1])


@dataclasses.dataclass(frozen=True)
class DecayFit:
    """log ||rho_t - rho*||^2 ~ intercept + slope t, rate = -slope / 2."""
    rate: float
    slope: float
    intercept: float


def l2_distances(solution: PdeSolution, target) -> np.ndarray:
    """||rho_t - target||_{L2} for every frame; target is callable on u."""
    return np.array([math.sqrt(trapezoid(
        (frame.values - target(frame.u)) ** 2, frame.u))
        for frame in solution])


def fit_decay_rate(solution: PdeSolution, rho_star,
                   t_min: float = 0.0) -> DecayFit:
    """
    Fit the exponential contraction of ||rho_t - rho*||^2 over the frames
    with t >= t_min.
    """
    times = solution.times
    squared = l2_distances(solution, rho_star) ** 2
    keep = times >= t_min
    slope, intercept = utils.log_linear_fit(times[keep], squared[keep])
    return DecayFit(rate=-slope / 2, slope=slope, intercept=intercept)
