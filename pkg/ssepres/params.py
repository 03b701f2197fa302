"""
Model parameters of the exclusion process with window-K current
reservoirs, the standing assumptions H0-H3 and the aggregate rates.

The right-hand sequences beta and delta are stored indexed by distance
from the right edge: entry 1 acts on site N-1.
"""
import dataclasses
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from . import C


class AssumptionError(ValueError):
    """A required assumption flag is false for the given parameters."""


def _as_rates(name: str, values, K: int) -> Tuple[float, ...]:
    rates = tuple(float(v) for v in np.atleast_1d(values))
    if len(rates) != K:
        raise ValueError(f"{name} must have exactly K={K} entries, "
                         f"got {len(rates)}: {list(rates)}")
    if any(not np.isfinite(r) or r < 0 for r in rates):
        raise ValueError(f"{name} entries must be finite and non-negative, "
                         f"got {list(rates)}")
    return rates


@dataclasses.dataclass(frozen=True)
class BoundaryParams:
    """
    Reservoir rates and boundary slowdown exponent.

    Attributes:
        K: window size of each reservoir
        alpha: creation rates at the left window (length K)
        beta: creation rates at the right window (length K)
        gamma: removal rates at the left window (length K)
        delta: removal rates at the right window (length K)
        theta: boundary rates are multiplied by N^-theta (theta >= 1)
    """
    K: int
    alpha: Tuple[float, ...]
    beta: Tuple[float, ...]
    gamma: Tuple[float, ...]
    delta: Tuple[float, ...]
    theta: float = 1.0

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        object.__setattr__(self, "K", int(self.K))
        for name in (C.PARAM_ALPHA, C.PARAM_BETA, C.PARAM_GAMMA,
                     C.PARAM_DELTA):
            object.__setattr__(self, name,
                               _as_rates(name, getattr(self, name), self.K))
        theta = float(self.theta)
        if not theta >= 1:
            raise ValueError(f"theta must be >= 1, got {self.theta}")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_mapping(cls, values: Mapping) -> "BoundaryParams":
        """
        Build the parameters from a mapping with the keys of C.PARAM_KEYS.
        A missing K is inferred from the length of alpha.
        """
        unknown = set(values) - set(C.PARAM_KEYS)
        if unknown:
            raise ValueError(f"Unknown parameter keys: {sorted(unknown)}")
        missing = {C.PARAM_ALPHA, C.PARAM_BETA, C.PARAM_GAMMA,
                   C.PARAM_DELTA} - set(values)
        if missing:
            raise ValueError(f"Missing parameter keys: {sorted(missing)}")
        K = values.get(C.PARAM_K, len(np.atleast_1d(values[C.PARAM_ALPHA])))
        return cls(K=K, alpha=values[C.PARAM_ALPHA],
                   beta=values[C.PARAM_BETA], gamma=values[C.PARAM_GAMMA],
                   delta=values[C.PARAM_DELTA],
                   theta=values.get(C.PARAM_THETA, 1.0))

    @classmethod
    def symmetric_current(cls, K: int, j: float,
                          theta: float = 1.0) -> "BoundaryParams":
        """
        Reservoirs that inject on the right and remove on the left at the
        same rate j in the whole window (beta = gamma = j, alpha = delta = 0).
        """
        return cls(K=K, alpha=[0.0] * K, beta=[j] * K, gamma=[j] * K,
                   delta=[0.0] * K, theta=theta)

    @classmethod
    def linear_robin(cls, alpha: float, beta: float, gamma: float,
                     delta: float, theta: float = 1.0) -> "BoundaryParams":
        """K=1 reservoirs, giving linear Robin boundary conditions."""
        return cls(K=1, alpha=[alpha], beta=[beta], gamma=[gamma],
                   delta=[delta], theta=theta)

    def to_mapping(self) -> Dict:
        return {C.PARAM_K: self.K, C.PARAM_THETA: self.theta,
                C.PARAM_ALPHA: list(self.alpha), C.PARAM_BETA: list(self.beta),
                C.PARAM_GAMMA: list(self.gamma),
                C.PARAM_DELTA: list(self.delta)}

    def describe(self) -> str:
        """Canonical `key = value` text of the parameters."""
        return "\n".join(f"{key} = {value}"
                         for key, value in self.to_mapping().items())

    def arrays(self):
        """The four rate sequences as float64 numpy arrays."""
        return (np.asarray(self.alpha, dtype=np.float64),
                np.asarray(self.beta, dtype=np.float64),
                np.asarray(self.gamma, dtype=np.float64),
                np.asarray(self.delta, dtype=np.float64))


@dataclasses.dataclass(frozen=True)
class AggregateRates:
    """
    Total injection and removal rates per window position.

    Attributes:
        i_seq: alpha_x + beta_x
        o_seq: gamma_x + delta_x
    """
    i_seq: Tuple[float, ...]
    o_seq: Tuple[float, ...]


@dataclasses.dataclass(frozen=True)
class AssumptionReport:
    h0: bool
    h1: bool
    h2: bool
    h3: bool
    violations: Tuple[str, ...] = ()

    def flag(self, name: str) -> bool:
        return getattr(self, name.lower())


def _non_increasing(values: Sequence[float]) -> bool:
    return all(a >= b for a, b in zip(values[:-1], values[1:]))


def aggregates(params: BoundaryParams) -> AggregateRates:
    """
    Sum the left and right rates entry by entry.

    Arguments:
        params: The boundary parameters

    Returns:
        The aggregate injection and removal sequences
    """
    i_seq = tuple(a + b for a, b in zip(params.alpha, params.beta))
    o_seq = tuple(g + d for g, d in zip(params.gamma, params.delta))
    return AggregateRates(i_seq=i_seq, o_seq=o_seq)


def validate(params: BoundaryParams) -> AssumptionReport:
    """
    Check the standing assumptions with exact comparisons.

    H0: alpha, gamma, beta, delta non-increasing.
    H1: alpha_1 + beta_1 != 0 and gamma_1 + delta_1 != 0.
    H2: H1 and either (delta_1 <= alpha_1 and beta_1 <= gamma_1) or
        (delta_1 >= alpha_1 and beta_1 >= gamma_1).
    H3: H1 and both aggregate sequences non-increasing.

    Arguments:
        params: The boundary parameters

    Returns:
        The report; it never raises.
    """
    violations: List[str] = []

    h0 = True
    for name in (C.PARAM_ALPHA, C.PARAM_GAMMA, C.PARAM_BETA, C.PARAM_DELTA):
        values = getattr(params, name)
        if not _non_increasing(values):
            h0 = False
            violations.append(f"H0: {name}={list(values)} is not "
                              f"non-increasing")

    agg = aggregates(params)
    i1, o1 = agg.i_seq[0], agg.o_seq[0]
    h1 = i1 != 0 and o1 != 0
    if not h1:
        violations.append(f"H1: need alpha_1+beta_1 != 0 and "
                          f"gamma_1+delta_1 != 0, got {i1} and {o1}")

    a1, b1, g1, d1 = (params.alpha[0], params.beta[0], params.gamma[0],
                      params.delta[0])
    ordered = (d1 <= a1 and b1 <= g1) or (d1 >= a1 and b1 >= g1)
    h2 = h1 and ordered
    if not ordered:
        violations.append(f"H2: delta_1={d1}, alpha_1={a1}, beta_1={b1}, "
                          f"gamma_1={g1} are not ordered the same way")

    monotone = _non_increasing(agg.i_seq) and _non_increasing(agg.o_seq)
    h3 = h1 and monotone
    if not monotone:
        violations.append(f"H3: alpha+beta={list(agg.i_seq)} or "
                          f"gamma+delta={list(agg.o_seq)} is not "
                          f"non-increasing")

    return AssumptionReport(h0=h0, h1=h1, h2=h2, h3=h3,
                            violations=tuple(violations))


def require(params: BoundaryParams, *flags: str) -> AssumptionReport:
    """
    Validate and raise AssumptionError if one of the named flags
    (e.g. "H0", "H2") is false.
    """
    report = validate(params)
    failed = [flag for flag in flags if not report.flag(flag)]
    if failed:
        raise AssumptionError(
            f"Assumption(s) {', '.join(failed)} do not hold: "
            + "; ".join(report.violations))
    return report


# flags each experiment needs before it may run
REQUIRED_FLAGS = {
    C.HYDRODYNAMIC: (),
    C.FICKS_LAW: (),
    C.HYDROSTATIC_ROBIN: ("H0", "H2"),
    C.HYDROSTATIC_NEUMANN_MASS: ("H3",),
    C.ORACLE_CERTIFY: ("H1",),
    C.OPERATOR_CHECKS: (),
}


def assumption_flags_required(kind: str) -> Tuple[str, ...]:
    if kind not in REQUIRED_FLAGS:
        raise ValueError(f"Unknown experiment kind {kind!r}, expected one of "
                         f"{list(REQUIRED_FLAGS)}")
    return REQUIRED_FLAGS[kind]
