"""
Empirical functionals of lattice configurations: pairings with the
empirical measure, box averages, mass, cell-averaged density profiles and
the current fields.
"""
import dataclasses
import json
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from . import C

TestFunction = Union[Callable[[np.ndarray], np.ndarray], Sequence[float]]


@dataclasses.dataclass
class GridFunction:
    """
    A profile sampled on u_i = i/m, i = 0..m.

    Attributes:
        m: number of cells
        values: m+1 values
        t: macroscopic time stamp
    """
    m: int
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.m + 1,):
            raise ValueError(f"expected {self.m + 1} values for m={self.m}, "
                             f"got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    @property
    def u(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m + 1)

    @classmethod
    def from_callable(cls, f: Callable[[np.ndarray], np.ndarray], m: int,
                      t: float = 0.0) -> "GridFunction":
        u = np.linspace(0.0, 1.0, m + 1)
        values = np.broadcast_to(np.asarray(f(u), dtype=np.float64), u.shape)
        return cls(m=m, values=values.copy(), t=t)

    def __call__(self, u):
        """Piecewise-linear interpolation."""
        return np.interp(u, self.u, self.values)

    def is_density(self, slack: float = C.DOMAIN_SLACK) -> bool:
        return bool(np.all(self.values >= -slack)
                    and np.all(self.values <= 1 + slack))

    def integral(self) -> float:
        """Trapezoidal integral over [0, 1]."""
        return float(trapezoid(self.values, self.u))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({C.U: self.u, C.VALUE: self.values})

    def to_json(self, **metadata) -> str:
        record = {"m": self.m, "t": self.t, "values": self.values.tolist()}
        record.update(metadata)
        return json.dumps(record, sort_keys=True)


@dataclasses.dataclass(frozen=True)
class CurrentPairing:
    j_value: float
    k_value: float


def _on_lattice(G: TestFunction, N: int, sites: np.ndarray) -> np.ndarray:
    """Values of G at x/N for the given 1-based sites."""
    if callable(G):
        u = sites / N
        return np.broadcast_to(np.asarray(G(u), dtype=np.float64), u.shape)
    values = np.asarray(G, dtype=np.float64)
    if values.shape != (N - 1,):
        raise ValueError(f"sampled test function must have N-1={N - 1} "
                         f"values (sites 1..N-1), got {values.shape}")
    return values[sites - 1]


def pair_empirical(state, G: TestFunction) -> float:
    """
    Integral of G against the empirical measure,
    (N-1)^-1 sum_x eta(x) G(x/N).

    Arguments:
        state: a LatticeState (or anything with `N` and `occupation`)
        G: callable on [0, 1] or N-1 values at the sites 1..N-1
    """
    N = state.N
    sites = np.arange(1, N)
    weights = _on_lattice(G, N, sites)
    eta = np.asarray(state.occupation, dtype=np.float64)
    return float(np.dot(eta, weights)) / (N - 1)


def mass(state) -> float:
    """Mass of the configuration, the empirical measure of [0, 1]."""
    return pair_empirical(state, np.ones(state.N - 1))


def box_average(state, x: int, eps: float, direction: str = "right") -> float:
    """
    Mean occupation of the floor(eps N) sites strictly to one side of x.

    Arguments:
        state: a LatticeState
        x: the anchor site (1..N-1)
        eps: relative window length
        direction: "right" (sites x+1..) or "left" (sites x-1..)

    Returns:
        The box average
    """
    N = state.N
    width = int(np.floor(eps * N))
    if width < 1:
        raise ValueError(f"window floor(eps*N)=floor({eps}*{N}) is empty")
    if direction == "right":
        first, last = x + 1, x + width
    elif direction == "left":
        first, last = x - width, x - 1
    else:
        raise ValueError(f"direction must be 'right' or 'left', "
                         f"got {direction!r}")
    if first < 1 or last > N - 1:
        raise ValueError(f"window of {width} sites {direction} of x={x} "
                         f"leaves the bulk 1..{N - 1}")
    eta = np.asarray(state.occupation, dtype=np.float64)
    return float(eta[first - 1:last].mean())


def _cell_edges(N: int, m: int):
    u = np.arange(1, N) / N
    # cell i holds the sites with x/N in ((i-1/2)/m, (i+1/2)/m]
    cells = np.ceil(u * m - 0.5).astype(np.int64)
    return np.clip(cells, 0, m)


def density_profile(states, m: int = C.DEFAULT_CELLS,
                    occupations: Optional[np.ndarray] = None,
                    t: Optional[float] = None) -> GridFunction:
    """
    Ensemble and cell mean of the occupations.

    Cell i collects the sites with x/N in ((i-1/2)/m, (i+1/2)/m]; a cell
    that holds no site is filled by linear interpolation from its
    neighbours.

    Arguments:
        states: non-empty sequence of LatticeStates with the same N
        m: number of cells
        occupations: optional array (ensemble, N-1) used instead of the
            current occupations of `states` (e.g. time averages)
        t: time stamp of the profile

    Returns:
        The GridFunction
    """
    if len(states) == 0:
        raise ValueError("ensemble is empty")
    sizes = {state.N for state in states}
    if len(sizes) != 1:
        raise ValueError(f"ensemble mixes lattice sizes {sorted(sizes)}")
    N = sizes.pop()
    if occupations is None:
        times = {state.t_micro for state in states}
        if len(times) != 1:
            raise ValueError(f"ensemble mixes times {sorted(times)}")
        occupations = np.array([state.occupation for state in states],
                               dtype=np.float64)
    occupations = np.asarray(occupations, dtype=np.float64)
    site_means = occupations.mean(axis=0)
    cells = _cell_edges(N, m)
    sums = np.bincount(cells, weights=site_means, minlength=m + 1)
    counts = np.bincount(cells, minlength=m + 1)
    filled = counts > 0
    values = np.empty(m + 1)
    values[filled] = sums[filled] / counts[filled]
    grid = np.linspace(0.0, 1.0, m + 1)
    values[~filled] = np.interp(grid[~filled], grid[filled], values[filled])
    return GridFunction(m=m, values=np.clip(values, 0.0, 1.0),
                        t=0.0 if t is None else t)


def current_pairing(state, f: TestFunction) -> CurrentPairing:
    """
    Pair the conservative and non-conservative currents with f:
    N^-2 sum_{x=1}^{N-2} J(x) f(x/N) and N^-1 sum_{x in windows} K(x) f(x/N).
    """
    N = state.N
    bonds = np.arange(1, N - 1)
    if callable(f):
        f_bonds = _on_lattice(f, N, bonds)
        f_sites = _on_lattice(f, N, np.arange(1, N))
    else:
        f_sites = _on_lattice(f, N, np.arange(1, N))
        f_bonds = f_sites[:-1]
    j_value = float(np.dot(state.j_current, f_bonds)) / N ** 2
    # k_current vanishes outside the two windows
    k_value = float(np.dot(state.k_current, f_sites)) / N
    return CurrentPairing(j_value=j_value, k_value=k_value)


def replacement_gap(occupation_averages: np.ndarray, N: int,
                    eps: float = C.DEFAULT_EPS) -> Dict[str, float]:
    """
    Difference between the time-averaged occupation of the edge sites and
    the time-averaged box averages next to them.

    Arguments:
        occupation_averages: time averages of eta over sites 1..N-1
        N: lattice scale
        eps: relative box length

    Returns:
        dict with the left and right gaps and eps, N
    """
    averages = np.asarray(occupation_averages, dtype=np.float64)
    width = int(np.floor(eps * N))
    if width < 1 or width > N - 2:
        raise ValueError(f"box of floor({eps}*{N}) sites does not fit")
    left = abs(averages[0] - averages[1:1 + width].mean())
    right = abs(averages[-1] - averages[-1 - width:-1].mean())
    return {"left": float(left), "right": float(right), C.EPS: eps, C.N: N}


def l1_distance(a: GridFunction, b: GridFunction) -> float:
    """Trapezoidal L1 distance on the grid of `a` (b is interpolated)."""
    return float(trapezoid(np.abs(a.values - b(a.u)), a.u))


def l2_distance(a: GridFunction, b: GridFunction) -> float:
    return float(np.sqrt(trapezoid((a.values - b(a.u)) ** 2, a.u)))
