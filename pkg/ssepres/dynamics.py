"""
Exact continuous-time simulation of the symmetric exclusion process with
window-K current reservoirs at both ends.

Bulk bonds exchange at rate 1 when discrepant. Boundary channel x of the
left window creates a particle at site x when sites 1..x-1 are occupied and
x is empty (rate alpha_x), or removes the particle at x when sites 1..x-1
are empty and x is occupied (rate gamma_x); the right window mirrors this
with beta and delta. All boundary rates carry the factor N^-theta.

The event loop is a numba kernel working on plain arrays; LatticeState owns
those arrays and the random stream.
"""
import dataclasses
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from numba import njit

from . import C, observables
from .params import BoundaryParams, validate

logger = logging.getLogger(__name__)

# microscopic time cap keeping the float64 clock exact enough
MAX_MICRO_TIME = 2.0 ** 50

# kernel return codes
_REACHED = 0
_NEED_UNIFORMS = 1
_ABSORBED = 2
_EVENT_CAP = 3


class _Absorbed:
    """Signal returned by step when the total rate is zero."""

    def __repr__(self):
        return "ABSORBED"

    def __bool__(self):
        return False


ABSORBED = _Absorbed()


@dataclasses.dataclass(frozen=True)
class BernoulliProfile:
    """Independent sites, site x occupied with probability f0(x/N)."""
    f0: Union[Callable[[np.ndarray], np.ndarray], "object"]


@dataclasses.dataclass(frozen=True)
class ExplicitBits:
    bits: Sequence[int]


@dataclasses.dataclass(frozen=True)
class ConstantDensity:
    rho: float


InitialCondition = Union[BernoulliProfile, ExplicitBits, ConstantDensity]


@dataclasses.dataclass(frozen=True)
class BulkExchange:
    bond: int
    rightward: bool


@dataclasses.dataclass(frozen=True)
class BoundaryFlip:
    side: str
    x: int
    site: int
    created: bool


@dataclasses.dataclass(frozen=True)
class Event:
    kind: Union[BulkExchange, BoundaryFlip]
    dt_micro: float


@dataclasses.dataclass
class RateTable:
    """
    Attributes:
        bulk: rate of bond x at index x-1 (bonds 1..N-2)
        boundary: shape (2, K); row 0 the left channels, row 1 the right
            channels, column x-1 for window position x
        total: sum of all rates
    """
    bulk: np.ndarray
    boundary: np.ndarray
    total: float

    def nonzero_channels(self):
        bulk = {("bulk", int(x) + 1) for x in np.flatnonzero(self.bulk)}
        sides = ("-", "+")
        boundary = {(sides[side], int(x) + 1)
                    for side, x in zip(*np.nonzero(self.boundary))}
        return bulk | boundary

    def resummed_total(self) -> float:
        return math.fsum(self.bulk) + math.fsum(self.boundary.ravel())


# ---------------------------------------------------------------------------
# numba kernel


@njit(cache=True, nogil=True)
def _refresh_left(eta, K, alpha, gamma, scale, chan):
    all_occupied = True
    all_empty = True
    for x in range(K):
        occupied = eta[x]
        rate = 0.0
        if all_occupied and occupied == 0:
            rate = alpha[x]
        elif all_empty and occupied == 1:
            rate = gamma[x]
        chan[x] = scale * rate
        if occupied == 1:
            all_empty = False
        else:
            all_occupied = False


@njit(cache=True, nogil=True)
def _refresh_right(eta, K, beta, delta, scale, chan):
    n = eta.shape[0]
    all_occupied = True
    all_empty = True
    for x in range(K):
        occupied = eta[n - 1 - x]
        rate = 0.0
        if all_occupied and occupied == 0:
            rate = beta[x]
        elif all_empty and occupied == 1:
            rate = delta[x]
        chan[K + x] = scale * rate
        if occupied == 1:
            all_empty = False
        else:
            all_occupied = False


@njit(cache=True, nogil=True)
def _set_bond(b, eta, bond_list, bond_pos, n_active):
    discrepant = eta[b] != eta[b + 1]
    pos = bond_pos[b]
    if discrepant and pos < 0:
        bond_list[n_active] = b
        bond_pos[b] = n_active
        n_active += 1
    elif not discrepant and pos >= 0:
        last = bond_list[n_active - 1]
        bond_list[pos] = last
        bond_pos[last] = pos
        bond_pos[b] = -1
        n_active -= 1
    return n_active


@njit(cache=True, nogil=True)
def _touch(x, t, eta, occ_time, last_touch):
    occ_time[x] += eta[x] * (t - last_touch[x])
    last_touch[x] = t


@njit(cache=True, nogil=True)
def _advance(eta, j_current, k_current, bond_list, bond_pos, counters, chan,
             alpha, beta, gamma, delta, scale, K, uniforms, offset, t,
             t_stop, max_events, occ_time, last_touch, last_event):
    n = eta.shape[0]
    n_pairs = uniforms.shape[0] // 2
    events = 0
    while True:
        if max_events >= 0 and events >= max_events:
            return _EVENT_CAP, offset, t
        if offset >= n_pairs:
            return _NEED_UNIFORMS, offset, t
        n_active = counters[0]
        boundary_total = 0.0
        for c in range(2 * K):
            boundary_total += chan[c]
        total = n_active + boundary_total
        if total <= 0.0:
            return _ABSORBED, offset, t
        u1 = uniforms[2 * offset]
        u2 = uniforms[2 * offset + 1]
        offset += 1
        dt = -math.log1p(-u1) / total
        if t + dt > t_stop:
            # memoryless: the drawn event lies beyond the stop time
            return _REACHED, offset, t_stop
        t += dt
        r = u2 * total
        if r < n_active:
            idx = int(r)
            if idx >= n_active:
                idx = n_active - 1
            b = bond_list[idx]
            _touch(b, t, eta, occ_time, last_touch)
            _touch(b + 1, t, eta, occ_time, last_touch)
            rightward = eta[b] == 1
            if rightward:
                j_current[b] += 1
            else:
                j_current[b] -= 1
            eta[b], eta[b + 1] = eta[b + 1], eta[b]
            if b > 0:
                n_active = _set_bond(b - 1, eta, bond_list, bond_pos,
                                     n_active)
            if b + 1 < n - 1:
                n_active = _set_bond(b + 1, eta, bond_list, bond_pos,
                                     n_active)
            counters[0] = n_active
            if b <= K - 1:
                _refresh_left(eta, K, alpha, gamma, scale, chan)
            if b + 1 >= n - K:
                _refresh_right(eta, K, beta, delta, scale, chan)
            last_event[0] = 0
            last_event[1] = b
            last_event[2] = 1 if rightward else 0
            last_event[3] = b
        else:
            r -= n_active
            channel = -1
            last_positive = -1
            for c in range(2 * K):
                if chan[c] > 0.0:
                    last_positive = c
                    if r < chan[c]:
                        channel = c
                        break
                    r -= chan[c]
            if channel < 0:
                channel = last_positive
            if channel < K:
                site = channel
            else:
                site = n - 1 - (channel - K)
            _touch(site, t, eta, occ_time, last_touch)
            created = eta[site] == 0
            if created:
                eta[site] = 1
                k_current[site] += 1
            else:
                eta[site] = 0
                k_current[site] -= 1
            if site > 0:
                n_active = _set_bond(site - 1, eta, bond_list, bond_pos,
                                     n_active)
            if site < n - 1:
                n_active = _set_bond(site, eta, bond_list, bond_pos,
                                     n_active)
            counters[0] = n_active
            if channel < K:
                _refresh_left(eta, K, alpha, gamma, scale, chan)
            else:
                _refresh_right(eta, K, beta, delta, scale, chan)
            last_event[0] = 1
            last_event[1] = channel
            last_event[2] = 1 if created else 0
            last_event[3] = site
        counters[1] += 1
        events += 1


# ---------------------------------------------------------------------------


def derive_seed(seed_base: int, index: int) -> int:
    """
    Split an independent 64-bit seed for trajectory `index` off
    `seed_base`.
    """
    sequence = np.random.SeedSequence(entropy=int(seed_base),
                                      spawn_key=(int(index),))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


class LatticeState:
    """
    Configuration, clock, currents and cached rates of one trajectory.

    Arguments:
        N: lattice scale, sites are 1..N-1
        params: boundary parameters
        occupation: initial 0/1 occupation of sites 1..N-1
        seed: seed of the random stream (recorded for reproducibility)

    Attributes:
        t_micro: accumulated microscopic time
        j_current: net rightward crossings of bond x at index x-1
        k_current: creations minus removals at site x at index x-1
        n_events: number of events performed
        rng_seed: the seed
    """

    def __init__(self, N: int, params: BoundaryParams,
                 occupation: Sequence[int], seed: int):
        K = params.K
        if N < 2 * K + 2:
            raise ValueError(
                f"overlapping reservoir windows: N={N} < 2K+2={2 * K + 2}, "
                f"but the left and right windows must be disjoint")
        eta = np.asarray(occupation, dtype=np.int8).copy()
        if eta.shape != (N - 1,):
            raise ValueError(f"occupation must have N-1={N - 1} entries, "
                             f"got {eta.shape}")
        if np.any((eta != 0) & (eta != 1)):
            raise ValueError("occupation values must be 0 or 1")
        self.N = int(N)
        self.params = params
        self.rng_seed = int(seed)
        self.rng = np.random.Generator(np.random.PCG64(self.rng_seed))
        self._eta = eta
        self._eta0 = eta.copy()
        self.t_micro = 0.0
        self.j_current = np.zeros(N - 2, dtype=np.int64)
        self.k_current = np.zeros(N - 1, dtype=np.int64)
        self._occ_time = np.zeros(N - 1, dtype=np.float64)
        self._last_touch = np.zeros(N - 1, dtype=np.float64)
        self._last_event = np.zeros(4, dtype=np.int64)
        self._alpha, self._beta, self._gamma, self._delta = params.arrays()
        self._scale = float(N) ** (-params.theta)
        self._uniforms = np.empty(0, dtype=np.float64)
        self._offset = 0
        self._rebuild_cache()

    @property
    def occupation(self) -> np.ndarray:
        """Read-only view of the occupation of sites 1..N-1."""
        view = self._eta.view()
        view.flags.writeable = False
        return view

    @property
    def initial_occupation(self) -> np.ndarray:
        return self._eta0.copy()

    @property
    def n_events(self) -> int:
        return int(self._counters[1])

    def _rebuild_cache(self):
        n_bonds = self.N - 2
        self._bond_list = np.zeros(n_bonds, dtype=np.int64)
        self._bond_pos = -np.ones(n_bonds, dtype=np.int64)
        n_events = self._counters[1] if hasattr(self, "_counters") else 0
        self._counters = np.array([0, n_events], dtype=np.int64)
        n_active = 0
        for b in range(n_bonds):
            n_active = _set_bond(b, self._eta, self._bond_list,
                                 self._bond_pos, n_active)
        self._counters[0] = n_active
        K = self.params.K
        self._chan = np.zeros(2 * K, dtype=np.float64)
        _refresh_left(self._eta, K, self._alpha, self._gamma, self._scale,
                      self._chan)
        _refresh_right(self._eta, K, self._beta, self._delta, self._scale,
                       self._chan)

    def rate_table(self) -> RateTable:
        """Rates from the incrementally maintained cache."""
        bulk = np.zeros(self.N - 2, dtype=np.float64)
        n_active = self._counters[0]
        bulk[self._bond_list[:n_active]] = 1.0
        boundary = self._chan.reshape(2, self.params.K).copy()
        return RateTable(bulk=bulk, boundary=boundary,
                         total=float(n_active + self._chan.sum()))

    def _refill(self):
        self._uniforms = self.rng.random(2 * C.UNIFORM_BLOCK)
        self._offset = 0

    def _advance(self, t_stop: float, max_events: int = -1):
        while True:
            code, self._offset, self.t_micro = _advance(
                self._eta, self.j_current, self.k_current, self._bond_list,
                self._bond_pos, self._counters, self._chan, self._alpha,
                self._beta, self._gamma, self._delta, self._scale,
                self.params.K, self._uniforms, self._offset, self.t_micro,
                t_stop, max_events, self._occ_time, self._last_touch,
                self._last_event)
            if code == _NEED_UNIFORMS:
                # the kernel asks before drawing, so no event was lost
                self._refill()
                continue
            return code

    def occupation_integral(self) -> np.ndarray:
        """Time integral of the occupations since the start."""
        t = self.t_micro
        return self._occ_time + self._eta * (t - self._last_touch)

    def check_invariants(self):
        """
        Assert exclusion, particle bookkeeping, the discrete continuity
        equation and agreement of the cached rates with a fresh evaluation.
        """
        eta = self._eta.astype(np.int64)
        assert np.all((eta == 0) | (eta == 1)), "exclusion violated"
        delta_eta = eta - self._eta0
        assert delta_eta.sum() == self.k_current.sum(), \
            "particle number bookkeeping violated"
        inflow = np.zeros(self.N - 1, dtype=np.int64)
        inflow[1:] += self.j_current
        inflow[:-1] -= self.j_current
        assert np.array_equal(delta_eta, inflow + self.k_current), \
            "discrete continuity equation violated"
        cached = self.rate_table()
        fresh = compute_rates(self._eta, self.N, self.params)
        assert abs(cached.total - cached.resummed_total()) \
            <= 1e-9 * max(1.0, cached.total), "cached total rate drifted"
        assert abs(cached.total - fresh.total) \
            <= 1e-9 * max(1.0, fresh.total), \
            "cached total rate differs from recomputation"
        assert cached.nonzero_channels() == fresh.nonzero_channels(), \
            "cached rate pattern differs from recomputation"
        assert np.allclose(cached.boundary, fresh.boundary, rtol=1e-12,
                           atol=0.0), "cached boundary rates differ"


def _sample_initial(N: int, initial: InitialCondition,
                    rng: np.random.Generator) -> np.ndarray:
    n = N - 1
    if isinstance(initial, ExplicitBits):
        return np.asarray(initial.bits, dtype=np.int8)
    if isinstance(initial, ConstantDensity):
        rho = float(initial.rho)
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"density must lie in [0, 1], got {rho}")
        if rho in (0.0, 1.0):
            return np.full(n, int(rho), dtype=np.int8)
        return (rng.random(n) < rho).astype(np.int8)
    if isinstance(initial, BernoulliProfile):
        u = np.arange(1, N) / N
        f0 = initial.f0
        if callable(f0):
            p = np.broadcast_to(np.asarray(f0(u), dtype=np.float64), u.shape)
        else:
            # a GridFunction-like object with values on u_i = i/m
            values = np.asarray(f0.values, dtype=np.float64)
            p = np.interp(u, np.linspace(0.0, 1.0, values.size), values)
        if np.any(p < -C.DOMAIN_SLACK) or np.any(p > 1 + C.DOMAIN_SLACK):
            raise ValueError("initial profile must take values in [0, 1]")
        return (rng.random(n) < np.clip(p, 0.0, 1.0)).astype(np.int8)
    raise TypeError(f"Unsupported initial condition {initial!r}")


def init(N: int, params: BoundaryParams, initial: InitialCondition,
         seed: int) -> LatticeState:
    """
    Create a trajectory: sample the initial configuration from the seeded
    stream, zero the currents and build the rate cache.

    Arguments:
        N: lattice scale (N >= 2K+2)
        params: boundary parameters
        initial: BernoulliProfile, ExplicitBits or ConstantDensity
        seed: 64-bit seed

    Returns:
        The new LatticeState
    """
    if N < 2 * params.K + 2:
        raise ValueError(
            f"overlapping reservoir windows: N={N} < 2K+2={2 * params.K + 2}"
            f", but the left and right windows must be disjoint")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    occupation = _sample_initial(N, initial, rng)
    state = LatticeState(N, params, occupation, seed)
    # continue the same stream the initial sample was drawn from
    state.rng = rng
    return state


def compute_rates(occupation: Sequence[int], N: int,
                  params: BoundaryParams) -> RateTable:
    """
    Evaluate every rate from scratch, straight from the rate formulas.
    This is the slow reference path used to check the incremental cache.
    """
    eta = [int(v) for v in occupation]
    n = N - 1
    scale = float(N) ** (-params.theta)
    bulk = np.array([1.0 if eta[x] != eta[x + 1] else 0.0
                     for x in range(n - 1)], dtype=np.float64)
    K = params.K
    boundary = np.zeros((2, K), dtype=np.float64)
    for x in range(1, K + 1):
        left = [eta[y - 1] for y in range(1, x)]
        target = eta[x - 1]
        rate = (params.alpha[x - 1] * math.prod(left) * (1 - target)
                + params.gamma[x - 1] * math.prod(1 - v for v in left)
                * target)
        boundary[0, x - 1] = scale * rate
        right = [eta[n - y] for y in range(1, x)]
        target = eta[n - x]
        rate = (params.beta[x - 1] * math.prod(right) * (1 - target)
                + params.delta[x - 1] * math.prod(1 - v for v in right)
                * target)
        boundary[1, x - 1] = scale * rate
    total = math.fsum(bulk) + math.fsum(boundary.ravel())
    return RateTable(bulk=bulk, boundary=boundary, total=total)


def rates(state: LatticeState, reference: bool = False) -> RateTable:
    """
    Rate table of the current configuration, from the incremental cache
    (fast path) or recomputed from the formulas (reference path).
    """
    if reference:
        return compute_rates(state.occupation, state.N, state.params)
    return state.rate_table()


def step(state: LatticeState) -> Union[Event, _Absorbed]:
    """
    Perform exactly one event of the jump chain.

    Returns:
        The Event, or ABSORBED when the total rate is zero.
    """
    t_before = state.t_micro
    code = state._advance(math.inf, max_events=1)
    if code == _ABSORBED:
        return ABSORBED
    kind, index, flag, site = (int(v) for v in state._last_event)
    if kind == 0:
        event_kind = BulkExchange(bond=index + 1, rightward=bool(flag))
    else:
        K = state.params.K
        side, x = ("-", index + 1) if index < K else ("+", index - K + 1)
        event_kind = BoundaryFlip(side=side, x=x, site=site + 1,
                                  created=bool(flag))
    return Event(kind=event_kind, dt_micro=state.t_micro - t_before)


def time_scale(N: int, theta: float, scale: str) -> float:
    """Microscopic time per unit of macroscopic time."""
    if scale == C.DIFFUSIVE:
        return float(N) ** 2
    if scale == C.SUBDIFFUSIVE:
        return float(N) ** (1.0 + theta)
    raise ValueError(f"Unknown time scale {scale!r}, expected "
                     f"{C.DIFFUSIVE!r} or {C.SUBDIFFUSIVE!r}")


Observer = Callable[[LatticeState, float], Optional[Dict]]


def mass_observer(state: LatticeState, t_macro: float) -> Dict:
    return {C.MASS: observables.mass(state),
            "j_total": int(state.j_current.sum()),
            "k_total": int(state.k_current.sum())}


def profile_observer(state: LatticeState, t_macro: float) -> Dict:
    """Full occupation, one column per site."""
    return {f"eta_{x}": int(v) for x, v in enumerate(state._eta, start=1)}


class TimeAverager:
    """
    Observer returning the time-averaged occupation of every site over the
    window since the previous sample (or since `burn_in`, in macroscopic
    time, for the first sample after it).

    Attributes:
        averages: list of (t_macro, per-site averages) pairs
    """

    def __init__(self, burn_in: float = 0.0):
        self.burn_in = burn_in
        self.averages = []
        self._last_integral = None
        self._last_time = None

    def __call__(self, state: LatticeState, t_macro: float):
        integral = state.occupation_integral()
        if t_macro < self.burn_in:
            return None
        if self._last_integral is not None \
                and state.t_micro > self._last_time:
            average = (integral - self._last_integral) \
                / (state.t_micro - self._last_time)
            self.averages.append((t_macro, average))
        self._last_integral = integral.copy()
        self._last_time = state.t_micro
        return None

    def overall(self) -> np.ndarray:
        """Average over all completed windows (equal lengths assumed)."""
        if not self.averages:
            raise ValueError("no completed averaging window")
        return np.mean([average for _, average in self.averages], axis=0)


class ObservationLog:
    """
    Rows of observations of one or more trajectories.

    Attributes:
        rows: list of dicts, one per (trajectory, sample instant)
        absorbed: True if a trajectory ended in an absorbing state
        snapshots: occupation copies per sample instant when requested
        occupation_average: per-site time average of a TimeAverager
            observer, None without one
    """

    def __init__(self, N: int, params: BoundaryParams, seed: int):
        self.N = N
        self.params = params
        self.seed = seed
        self.rows: List[Dict] = []
        self.snapshots: List = []
        self.absorbed = False
        self.occupation_average: Optional[np.ndarray] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    @staticmethod
    def merge(logs: Sequence["ObservationLog"]) -> "ObservationLog":
        """
        Combine logs; rows are ordered by (seed, time) so the result does
        not depend on the order of `logs`.
        """
        if not logs:
            raise ValueError("nothing to merge")
        first = logs[0]
        merged = ObservationLog(first.N, first.params, first.seed)
        rows = [row for log in logs for row in log.rows]
        merged.rows = sorted(rows, key=lambda row: (row[C.SEED], row[C.TIME]))
        merged.absorbed = any(log.absorbed for log in logs)
        return merged

    def header(self) -> str:
        lines = [f"N = {self.N}", f"seed = {self.seed}",
                 f"generator = {C.GENERATOR_NAME}", self.params.describe()]
        return "".join(f"# {line}\n" for text in lines
                       for line in text.splitlines())

    def to_csv(self, path, header: Optional[str] = None):
        with open(path, "w") as handle:
            handle.write(header if header is not None else self.header())
            self.to_frame().to_csv(handle, index=False)


def run_until(state: LatticeState, t_macro: float, scale: str = C.DIFFUSIVE,
              observers: Sequence[Observer] = (mass_observer,),
              sample_times: Optional[Sequence[float]] = None,
              keep_snapshots: bool = False,
              debug: bool = False) -> ObservationLog:
    """
    Advance the trajectory to macroscopic time `t_macro` and call the
    observers at each sample instant.

    Macroscopic time counts from microscopic time 0 of the state. Observers
    see the configuration in force at each sample instant.

    Arguments:
        state: the trajectory
        t_macro: final macroscopic time
        scale: C.DIFFUSIVE (N^2) or C.SUBDIFFUSIVE (N^(1+theta))
        observers: callables (state, t_macro) -> dict of columns or None
        sample_times: increasing macroscopic sample instants <= t_macro,
            default [t_macro]
        keep_snapshots: store a copy of the occupation at every sample
        debug: check the state invariants at every sample

    Returns:
        The ObservationLog of this trajectory
    """
    if not t_macro >= 0:
        raise ValueError(f"t_macro must be >= 0, got {t_macro}")
    factor = time_scale(state.N, state.params.theta, scale)
    if t_macro * factor >= MAX_MICRO_TIME:
        raise ValueError(f"microscopic horizon {t_macro * factor:.3g} exceeds "
                         f"the 2^50 cap")
    if sample_times is None:
        sample_times = [t_macro]
    sample_times = [float(t) for t in sample_times]
    if any(b < a for a, b in zip(sample_times[:-1], sample_times[1:])):
        raise ValueError("sample_times must be non-decreasing")
    if sample_times and sample_times[-1] > t_macro:
        raise ValueError("sample_times must not exceed t_macro")

    log = ObservationLog(state.N, state.params, state.rng_seed)
    absorbed = False
    for t_sample in sample_times:
        target = t_sample * factor
        if target > state.t_micro and not absorbed:
            code = state._advance(target)
            if code == _ABSORBED:
                absorbed = True
                log.absorbed = True
                report = validate(state.params)
                warnings.warn(
                    f"chain absorbed at t_micro={state.t_micro:.6g} "
                    f"(seed {state.rng_seed}, H1 holds: {report.h1}); the "
                    f"configuration is frozen from here on")
        if absorbed:
            state.t_micro = max(state.t_micro, target)
        if debug:
            state.check_invariants()
        row = {C.TIME: t_sample, C.SEED: state.rng_seed}
        for observer in observers:
            values = observer(state, t_sample)
            if values:
                row.update(values)
        log.rows.append(row)
        if keep_snapshots:
            log.snapshots.append((t_sample, state._eta.copy(),
                                  state.j_current.copy(),
                                  state.k_current.copy()))
    if absorbed:
        state.t_micro = max(state.t_micro, t_macro * factor)
    elif t_macro * factor > state.t_micro:
        if state._advance(t_macro * factor) == _ABSORBED:
            log.absorbed = True
            state.t_micro = t_macro * factor
    for observer in observers:
        if isinstance(observer, TimeAverager) and observer.averages:
            log.occupation_average = observer.overall()
    return log


def run_ensemble(N: int, params: BoundaryParams, initial: InitialCondition,
                 seeds: Sequence[int], t_macro: float,
                 sample_times: Optional[Sequence[float]] = None,
                 scale: str = C.DIFFUSIVE,
                 observers_factory: Callable[[], Sequence[Observer]] = (
                     lambda: (mass_observer,)),
                 keep_snapshots: bool = False,
                 workers: Optional[int] = None):
    """
    Run one trajectory per seed, in parallel threads, and return
    (states, logs) in seed order.

    The result is independent of `workers` since each trajectory owns its
    random stream.
    """

    def _one(seed):
        state = init(N, params, initial, seed)
        log = run_until(state, t_macro, scale=scale,
                        observers=observers_factory(),
                        sample_times=sample_times,
                        keep_snapshots=keep_snapshots)
        logger.debug(f"trajectory seed={seed} N={N} done after "
                     f"{state.n_events} events")
        return state, log

    if workers == 1:
        results = [_one(seed) for seed in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, seeds))
    states = [state for state, _ in results]
    logs = [log for _, log in results]
    return states, logs
