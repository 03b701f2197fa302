"""
Desk-scale experiments comparing the particle system with its
macroscopic limits: hydrodynamics, Fick's law, the stationary Robin
profile, the subdiffusive mass equation, plus the exact-oracle and
boundary-operator certification batteries.

Every experiment returns a ComparisonReport whose pass/fail verdicts come
only from the tolerance table of the experiment.
"""
import dataclasses
import json
import logging
import math
import warnings
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from . import (C, boundary_operators as bo, dynamics, observables, oracle,
               pde, utils)
from .config import ToleranceTable, comment_header
from .observables import GridFunction
from .params import (BoundaryParams, aggregates, assumption_flags_required,
                     require, validate)
from .version import __version__

logger = logging.getLogger(__name__)


@dataclasses.dataclass
class ExperimentSpec:
    """
    Attributes:
        kind: one of C.EXPERIMENT_KINDS
        params: boundary parameters
        N_list: lattice scales, each >= 2K+2
        ensemble_size: trajectories per N
        t_grid: macroscopic sample times (microscopic for oracle_certify)
        seed_base: base of the per-trajectory seeds
        output_dir: directory for tables and manifests, None to skip
        params_text: parameter text echoed into output headers
        cells: cells of the empirical density profiles
        pde_m: cells of the PDE grid
        pde_dt: PDE time step, None for automatic
        eps: relative box length of the replacement statistic
        initial: initial profile: a number (constant), "stationary",
            {"linear": [left, right]} or a list of grid values
        m0_list: initial masses of the Neumann mass experiment
        theta_list: values of theta compared by the Neumann mass
            experiment, None for the theta of `params`
        burn_in: macroscopic burn-in of the hydrostatic experiment
        windows: averaging windows after the burn-in
        test_function: polynomial coefficients (highest degree first) of
            the test function of Fick's law
        n_draws: random draws of the operator checks
        workers: threads for the ensembles, None for the default
        tolerances: the pass/fail table
    """
    kind: str
    params: BoundaryParams
    N_list: Sequence[int] = (64,)
    ensemble_size: int = 100
    t_grid: Sequence[float] = (0.1,)
    seed_base: int = 0
    output_dir: Optional[Union[str, Path]] = None
    params_text: str = ""
    cells: int = C.DEFAULT_CELLS
    pde_m: int = 128
    pde_dt: Optional[float] = None
    eps: float = C.DEFAULT_EPS
    initial: Union[float, str, Dict, List[float]] = 0.5
    m0_list: Sequence[float] = (0.1,)
    theta_list: Optional[Sequence[float]] = None
    burn_in: float = 1.0
    windows: int = 10
    test_function: Sequence[float] = (1.0,)
    n_draws: int = 100000
    workers: Optional[int] = None
    tolerances: ToleranceTable = dataclasses.field(
        default_factory=ToleranceTable)

    def __post_init__(self):
        if self.kind not in C.EXPERIMENT_KINDS:
            raise ValueError(f"Unknown experiment kind {self.kind!r}, "
                             f"expected one of {list(C.EXPERIMENT_KINDS)}")
        self.N_list = tuple(int(N) for N in self.N_list)
        self.t_grid = tuple(sorted(float(t) for t in self.t_grid))
        small = [N for N in self.N_list if N < 2 * self.params.K + 2]
        if small:
            raise ValueError(f"N_list entries {small} are below "
                             f"2K+2={2 * self.params.K + 2}")
        if self.ensemble_size < 1:
            raise ValueError(f"ensemble_size must be >= 1, got "
                             f"{self.ensemble_size}")
        if any(t < 0 for t in self.t_grid):
            raise ValueError(f"t_grid must be non-negative, got "
                             f"{self.t_grid}")
        if self.theta_list is not None:
            self.theta_list = tuple(float(theta) for theta in self.theta_list)
        if not self.params_text:
            self.params_text = self.params.describe()

    @classmethod
    def from_mapping(cls, values: Dict, params: BoundaryParams,
                     tolerances: Optional[ToleranceTable] = None,
                     params_text: str = "") -> "ExperimentSpec":
        fields = {field.name for field in dataclasses.fields(cls)}
        unknown = set(values) - fields
        if unknown:
            raise ValueError(f"Unknown experiment fields {sorted(unknown)}")
        values = dict(values)
        values.setdefault("tolerances", tolerances or ToleranceTable())
        return cls(params=params, params_text=params_text, **values)

    def seeds(self) -> List[int]:
        return [dynamics.derive_seed(self.seed_base, i)
                for i in range(self.ensemble_size)]

    def header(self) -> str:
        lines = [f"ssepres {__version__}", f"kind = {self.kind}",
                 f"seed_base = {self.seed_base}",
                 f"generator = {C.GENERATOR_NAME}"]
        return comment_header("\n".join(lines), self.params_text)


class ComparisonReport:
    """
    Metrics of one experiment with their verdicts.

    Metrics missing from the tolerance table are informational and do
    not affect `passed`.

    Attributes:
        kind: the experiment kind
        rows: one dict per metric value
        tables: named DataFrames for external plotting
    """

    def __init__(self, kind: str, tolerances: ToleranceTable):
        self.kind = kind
        self.tolerances = tolerances
        self.rows: List[Dict] = []
        self.tables: Dict[str, pd.DataFrame] = {}

    def add(self, metric: str, value: float, N: Optional[int] = None,
            t: Optional[float] = None, **extra):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"metric {metric} is not finite: {value}")
        if metric in self.tolerances:
            tolerance, calibrated = self.tolerances.tolerance(metric)
            passed = value <= tolerance
        else:
            tolerance, calibrated, passed = math.nan, False, True
        row = {C.METRIC: metric, C.N: N, C.TIME: t, C.VALUE: value,
               C.TOLERANCE: tolerance, C.CALIBRATED: calibrated,
               C.PASSED: passed}
        row.update(extra)
        self.rows.append(row)
        log = logger.info if passed else logger.warning
        log(f"{self.kind}: {metric}={value:.6g} (N={N}, t={t}, tolerance "
            f"{tolerance:.3g}) {'passed' if passed else 'FAILED'}")

    @property
    def passed(self) -> bool:
        return all(row[C.PASSED] for row in self.rows)

    def to_frame(self) -> pd.DataFrame:
        columns = [C.METRIC, C.N, C.TIME, C.VALUE, C.TOLERANCE, C.CALIBRATED,
                   C.PASSED]
        frame = pd.DataFrame(self.rows)
        if frame.empty:
            return pd.DataFrame(columns=columns)
        extra = [column for column in frame.columns if column not in columns]
        return frame[columns + extra]

    def manifest(self, spec: Optional[ExperimentSpec] = None) -> Dict:
        record = {"kind": self.kind, "passed": self.passed,
                  "version": __version__,
                  "calibrated_metrics": sorted(
                      {row[C.METRIC] for row in self.rows
                       if row[C.CALIBRATED]}),
                  "tables": sorted(self.tables)}
        if spec is not None:
            record.update({"params": spec.params.to_mapping(),
                           "N_list": list(spec.N_list),
                           "ensemble_size": spec.ensemble_size,
                           "t_grid": list(spec.t_grid),
                           "seed_base": spec.seed_base,
                           "theta_list": (list(spec.theta_list)
                                          if spec.theta_list else None),
                           "generator": C.GENERATOR_NAME})
        return record


def write_report(report: ComparisonReport, output_dir: Union[str, Path],
                 spec: Optional[ExperimentSpec] = None):
    """
    Write `<kind>_metrics.csv`, one CSV per table and `<kind>_manifest.json`
    into output_dir. CSVs start with the provenance header.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    header = spec.header() if spec is not None else ""

    def _write(name: str, frame: pd.DataFrame):
        with open(output_dir / f"{report.kind}_{name}.csv", "w") as handle:
            handle.write(header)
            frame.to_csv(handle, index=False)

    _write("metrics", report.to_frame())
    for name, table in report.tables.items():
        _write(name, table)
    with open(output_dir / f"{report.kind}_manifest.json", "w") as handle:
        json.dump(report.manifest(spec), handle, sort_keys=True, indent=2)
    logger.info(f"wrote {report.kind} report to {output_dir}")


def _finish(report: ComparisonReport,
            spec: ExperimentSpec) -> ComparisonReport:
    calibrated = sorted({row[C.METRIC] for row in report.rows
                         if row[C.CALIBRATED]})
    if calibrated:
        warnings.warn(f"tolerances of {', '.join(calibrated)} are "
                      f"calibrated empirically, not derived")
    if spec.output_dir is not None:
        write_report(report, spec.output_dir, spec)
    return report


# ---------------------------------------------------------------------------
# helpers


def initial_profile(initial, params: BoundaryParams, m: int) -> GridFunction:
    """GridFunction for the `initial` field of an ExperimentSpec."""
    if isinstance(initial, GridFunction):
        return initial
    if isinstance(initial, str):
        if initial != "stationary":
            raise ValueError(f"Unknown initial profile {initial!r}")
        return GridFunction.from_callable(bo.stationary_profile(params), m)
    if isinstance(initial, dict):
        if set(initial) != {"linear"}:
            raise ValueError(f"Unknown initial profile {initial!r}")
        left, right = initial["linear"]
        return GridFunction.from_callable(
            lambda u: (1 - u) * left + u * right, m)
    if isinstance(initial, (list, tuple, np.ndarray)):
        values = np.asarray(initial, dtype=np.float64)
        return GridFunction(m=values.size - 1, values=values)
    return GridFunction.from_callable(lambda u: np.full_like(u, initial), m)


def _check_kind(spec: ExperimentSpec, kind: str):
    if spec.kind != kind:
        raise ValueError(f"expected a {kind} experiment, got {spec.kind}")
    flags = assumption_flags_required(kind)
    if flags:
        require(spec.params, *flags)


def _problem(spec: ExperimentSpec, f0: GridFunction) -> pde.PdeProblem:
    problem = pde.PdeProblem.for_params(spec.params, f0)
    if problem.robin and not validate(spec.params).h0:
        warnings.warn("H0 fails: uniqueness of the Robin problem is not "
                      "guaranteed")
    return problem


def _ensemble(spec: ExperimentSpec, N: int, initial, sample_times,
              t_end: float, scale: str = C.DIFFUSIVE,
              observers_factory=None, keep_snapshots: bool = False,
              params: Optional[BoundaryParams] = None):
    if observers_factory is None:
        observers_factory = lambda: (dynamics.mass_observer,)  # noqa: E731
    states, logs = dynamics.run_ensemble(
        N, params or spec.params, initial, spec.seeds(), t_end,
        sample_times=sample_times, scale=scale,
        observers_factory=observers_factory, keep_snapshots=keep_snapshots,
        workers=spec.workers)
    if any(log.absorbed for log in logs):
        warnings.warn(f"N={N}: {sum(log.absorbed for log in logs)} "
                      f"trajectories were absorbed")
    logger.info(f"N={N}: ensemble of {len(states)} done")
    return states, logs


# ---------------------------------------------------------------------------
# experiments


def run_hydrodynamic(spec: ExperimentSpec) -> ComparisonReport:
    """
    Empirical density profiles on the diffusive scale against the PDE
    solution from the same initial profile; L1 error per (N, t) and the
    log-log slope of the error at the last time along N_list.
    """
    _check_kind(spec, C.HYDRODYNAMIC)
    report = ComparisonReport(spec.kind, spec.tolerances)
    f0 = initial_profile(spec.initial, spec.params, spec.pde_m)
    problem = _problem(spec, f0)
    solution = pde.solve(problem, max(spec.t_grid), m=spec.pde_m,
                         dt=spec.pde_dt)
    rows = []
    last_errors = []
    for N in spec.N_list:
        states, logs = _ensemble(spec, N, dynamics.BernoulliProfile(f0),
                                 spec.t_grid, max(spec.t_grid),
                                 keep_snapshots=True)
        for index, t in enumerate(spec.t_grid):
            occupations = np.array([log.snapshots[index][1] for log in logs])
            empirical = observables.density_profile(
                states, spec.cells, occupations=occupations, t=t)
            limit = solution.at(t)
            error = observables.l1_distance(empirical, limit)
            report.add("l1_profile", error, N=N, t=t)
            rows.append(pd.DataFrame({C.N: N, C.TIME: t, C.U: empirical.u,
                                      "empirical": empirical.values,
                                      "pde": limit(empirical.u)}))
        last_errors.append(error)
    if len(spec.N_list) >= 2:
        report.add("log_error_slope",
                   utils.log_log_slope(spec.N_list, last_errors),
                   t=spec.t_grid[-1])
    report.tables["profiles"] = pd.concat(rows, ignore_index=True)
    report.tables["pde"] = solution.to_frame()
    return _finish(report, spec)


def _polynomial(coefficients: Sequence[float]) -> Callable:
    poly = np.poly1d(coefficients)
    return lambda u: poly(np.asarray(u, dtype=np.float64))


def current_targets(problem: pde.PdeProblem, solution: pde.PdeSolution,
                    f: Callable, t: float):
    """
    Limits of the current pairings at time t:
    -int_0^t int f d_u rho du ds and, for theta = 1,
    int_0^t f(0) D_{alpha,gamma} rho_s(0) + f(1) D_{beta,delta} rho_s(1) ds.
    """
    frames = [frame for frame in solution if frame.t <= t + 1e-12]
    times = [frame.t for frame in frames]
    conservative = []
    reservoir = []
    for frame in frames:
        u = frame.u
        gradient = np.gradient(frame.values, u, edge_order=2)
        conservative.append(utils.time_integral(u, f(u) * gradient))
        left, right = pde.boundary_flux(problem, frame)
        reservoir.append(f(0.0) * left + f(1.0) * right)
    return (-utils.time_integral(times, conservative),
            utils.time_integral(times, reservoir))


def run_ficks_law(spec: ExperimentSpec,
                  f: Optional[Callable] = None) -> ComparisonReport:
    """
    Ensemble means of the current pairings against their limits from the
    PDE solution. For theta > 1 the non-conservative field is compared to
    zero in units of its standard error.
    """
    _check_kind(spec, C.FICKS_LAW)
    if f is None:
        f = _polynomial(spec.test_function)
    report = ComparisonReport(spec.kind, spec.tolerances)
    f0 = initial_profile(spec.initial, spec.params, spec.pde_m)
    problem = _problem(spec, f0)
    solution = pde.solve(problem, max(spec.t_grid), m=spec.pde_m,
                         dt=spec.pde_dt)

    def observers():
        def currents(state, t_macro):
            pairing = observables.current_pairing(state, f)
            return {C.J_VALUE: pairing.j_value, C.K_VALUE: pairing.k_value}
        return (currents,)

    rows = []
    for N in spec.N_list:
        _, logs = _ensemble(spec, N, dynamics.BernoulliProfile(f0),
                            spec.t_grid, max(spec.t_grid),
                            observers_factory=observers)
        table = dynamics.ObservationLog.merge(logs).to_frame()
        for t in spec.t_grid:
            at_t = table[table[C.TIME] == t]
            j_target, k_target = current_targets(problem, solution, f, t)
            j_mean = at_t[C.J_VALUE].mean()
            k_mean = at_t[C.K_VALUE].mean()
            j_sem = float(utils.standard_error(at_t[C.J_VALUE].to_numpy()))
            k_sem = float(utils.standard_error(at_t[C.K_VALUE].to_numpy()))
            report.add("j_relative_error",
                       _relative(j_mean, j_target), N=N, t=t)
            if problem.robin:
                report.add("k_relative_error",
                           _relative(k_mean, k_target), N=N, t=t)
            else:
                sigmas = abs(k_mean) / k_sem if k_sem > 0 else \
                    (0.0 if k_mean == 0 else math.inf)
                report.add("k_field_sigmas", sigmas, N=N, t=t)
            rows.append({C.N: N, C.TIME: t, "j_mean": j_mean, "j_sem": j_sem,
                         "j_limit": j_target, "k_mean": k_mean,
                         "k_sem": k_sem, "k_limit": k_target})
    report.tables["currents"] = pd.DataFrame(rows)
    return _finish(report, spec)


def _relative(value: float, target: float) -> float:
    """Relative error, absolute when the target vanishes."""
    if abs(target) < 1e-12:
        return abs(value - target)
    return abs(value - target) / abs(target)


def run_hydrostatic_robin(spec: ExperimentSpec) -> ComparisonReport:
    """
    Time-averaged profiles after a burn-in against the linear stationary
    profile; for N-1 within the oracle range the time-averaged site
    occupations are also compared with the exact stationary marginals.
    """
    _check_kind(spec, C.HYDROSTATIC_ROBIN)
    if spec.params.theta != 1:
        raise ValueError(f"the stationary Robin profile needs theta=1, got "
                         f"{spec.params.theta}")
    report = ComparisonReport(spec.kind, spec.tolerances)
    profile = bo.stationary_profile(spec.params)
    t_end = spec.burn_in + max(spec.t_grid)
    sample_times = np.linspace(spec.burn_in, t_end, spec.windows + 1)
    initial = dynamics.ConstantDensity(0.5)
    rows = []
    sites = []
    for N in spec.N_list:
        states, logs = _ensemble(
            spec, N, initial, sample_times, t_end,
            observers_factory=lambda: (
                dynamics.TimeAverager(burn_in=spec.burn_in),))
        averages = np.array([log.occupation_average for log in logs])
        site_means = averages.mean(axis=0)
        empirical = observables.density_profile(states, spec.cells,
                                                occupations=averages, t=t_end)
        target = GridFunction.from_callable(profile, spec.cells)
        report.add("l1_stationary",
                   observables.l1_distance(empirical, target), N=N)
        width = int(np.floor(spec.eps * N))
        if 1 <= width <= N - 2:
            gap = observables.replacement_gap(site_means, N, spec.eps)
            report.add("replacement_gap", max(gap["left"], gap["right"]),
                       N=N, eps=spec.eps)
        else:
            logger.debug(f"N={N}: no replacement gap, a box of {width} "
                         f"sites does not fit")
        if N - 1 <= C.MAX_ORACLE_SITES:
            exact = oracle.site_marginals(oracle.stationary(N, spec.params))
            sem = utils.standard_error(averages)
            report.add("oracle_sigmas",
                       utils.max_sigmas(site_means, exact, sem), N=N)
            sites.append(pd.DataFrame({C.N: N, C.SITE: np.arange(1, N),
                                       "time_average": site_means,
                                       "sem": sem, "exact": exact}))
        rows.append(pd.DataFrame({C.N: N, C.U: empirical.u,
                                  "empirical": empirical.values,
                                  "stationary": profile(empirical.u)}))
    report.tables["profiles"] = pd.concat(rows, ignore_index=True)
    if sites:
        report.tables["sites"] = pd.concat(sites, ignore_index=True)
    return _finish(report, spec)


def run_hydrostatic_neumann_mass(spec: ExperimentSpec) -> ComparisonReport:
    """
    Ensemble mean mass on the subdiffusive scale against the mass
    equation dm/dt = D_{i,o}(m) (RK4, and the closed form for K=2), and
    the terminal mass against m*.

    With several values in theta_list the mass curves of consecutive
    values are compared with each other in units of their combined
    standard error, since the limit equation does not depend on theta.
    """
    _check_kind(spec, C.HYDROSTATIC_NEUMANN_MASS)
    thetas = spec.theta_list or (spec.params.theta,)
    if not all(theta > 1 for theta in thetas):
        raise ValueError(f"the Neumann mass experiment needs theta>1, got "
                         f"{list(thetas)}")
    report = ComparisonReport(spec.kind, spec.tolerances)
    agg = aggregates(spec.params)
    m_star = bo.mass_fixed_point(agg)
    t_grid = np.asarray(spec.t_grid)
    t_end = float(t_grid.max())
    rows = []
    for m0 in spec.m0_list:
        ode = bo.ricatti_integrate(agg, m0, t_end)
        ode_at = np.interp(t_grid, ode[C.TIME], ode[C.MASS])
        if spec.params.K == 2:
            closed = bo.ricatti_k2(agg, m0, t_grid)
            report.add("ricatti_gap", np.max(np.abs(closed - ode_at)),
                       m0=m0)
        for N in spec.N_list:
            curves = {}
            for theta in thetas:
                params = dataclasses.replace(spec.params, theta=theta)
                _, logs = _ensemble(spec, N, dynamics.ConstantDensity(m0),
                                    t_grid, t_end, scale=C.SUBDIFFUSIVE,
                                    params=params)
                grouped = dynamics.ObservationLog.merge(logs).to_frame() \
                    .groupby(C.TIME)[C.MASS]
                means = grouped.mean().reindex(t_grid).to_numpy()
                sems = grouped.agg(
                    lambda s: float(utils.standard_error(s.to_numpy()))
                ).reindex(t_grid).to_numpy()
                curves[theta] = (means, sems)
                report.add("mass_sup_error", np.max(np.abs(means - ode_at)),
                           N=N, m0=m0, theta=theta)
                report.add("terminal_mass_error", abs(means[-1] - m_star),
                           N=N, t=t_end, m0=m0, theta=theta)
                rows.append(pd.DataFrame({C.N: N, "m0": m0, "theta": theta,
                                          C.TIME: t_grid, C.MASS: means,
                                          "sem": sems, "ricatti": ode_at}))
            for first, second in zip(thetas[:-1], thetas[1:]):
                (a, sem_a), (b, sem_b) = curves[first], curves[second]
                report.add("theta_gap_sigmas",
                           utils.max_sigmas(a, b, np.hypot(sem_a, sem_b)),
                           N=N, m0=m0, theta=first, theta_other=second)
    report.tables["mass"] = pd.concat(rows, ignore_index=True)
    report.tables["fixed_point"] = pd.DataFrame({"m_star": [m_star]})
    return _finish(report, spec)


def run_oracle_certify(spec: ExperimentSpec) -> ComparisonReport:
    """
    Monte Carlo site marginals at the (microscopic) times of t_grid
    against the master equation started from the same product measure,
    and the residual of the exact stationary solve.
    """
    _check_kind(spec, C.ORACLE_CERTIFY)
    report = ComparisonReport(spec.kind, spec.tolerances)
    rows = []
    for N in spec.N_list:
        f0 = initial_profile(spec.initial, spec.params, spec.pde_m)
        u = np.arange(1, N) / N
        start = oracle.Distribution.product_bernoulli(np.clip(f0(u), 0, 1))
        factor = dynamics.time_scale(N, spec.params.theta, C.DIFFUSIVE)
        macro_times = [t / factor for t in spec.t_grid]
        _, logs = _ensemble(spec, N, dynamics.BernoulliProfile(f0),
                            macro_times, macro_times[-1],
                            keep_snapshots=True)
        for index, t_micro in enumerate(spec.t_grid):
            exact = oracle.site_marginals(
                oracle.evolve(start, N, spec.params, t_micro))
            observed = np.mean([log.snapshots[index][1] for log in logs],
                               axis=0)
            sigma = utils.binomial_sigma(exact, spec.ensemble_size)
            report.add("oracle_sigmas",
                       utils.max_sigmas(observed, exact, sigma), N=N,
                       t=t_micro)
            rows.append(pd.DataFrame({C.N: N, C.TIME: t_micro,
                                      C.SITE: np.arange(1, N),
                                      "monte_carlo": observed,
                                      "exact": exact}))
        stationary = oracle.stationary(N, spec.params)
        report.add("stationary_residual",
                   oracle.stationary_residual(N, spec.params, stationary),
                   N=N)
        report.add("stationary_mass", oracle.mean_mass(stationary), N=N)
        report.add("detailed_balance_violation",
                   oracle.detailed_balance_violation(N, spec.params,
                                                     stationary), N=N)
    report.tables["marginals"] = pd.concat(rows, ignore_index=True)
    return _finish(report, spec)


def _random_pair(rng: np.random.Generator, K: int) -> bo.DPair:
    return bo.DPair(rng.random(K), rng.random(K))


def run_operator_checks(spec: ExperimentSpec) -> ComparisonReport:
    """
    Batteries on the boundary operators: the difference identity of D and
    V on random draws, the mass fixed point in the symmetric and constant
    rate cases, and the RK4 mass trajectory against the K=2 closed form
    together with the exponential contraction bound.
    """
    _check_kind(spec, C.OPERATOR_CHECKS)
    report = ComparisonReport(spec.kind, spec.tolerances)
    rng = np.random.Generator(np.random.PCG64(spec.seed_base))

    batch = 500
    worst = 0.0
    for _ in range(max(1, spec.n_draws // batch)):
        p = _random_pair(rng, int(rng.integers(1, 6)))
        y = rng.random(batch)
        z = rng.random(batch)
        y[:2] = (0.0, 1.0)
        z[:2] = (1.0, 1.0)
        identity = bo.d_op(p, y) - bo.d_op(p, z) + (y - z) * bo.v_op(p, y, z)
        worst = max(worst, float(np.max(np.abs(identity))))
    report.add("decomposition_error", worst)

    half = 0.0
    for K in range(1, 6):
        rates = np.sort(rng.random(K))[::-1] + 0.1
        agg = aggregates(BoundaryParams(K=K, alpha=rates, beta=[0.0] * K,
                                        gamma=rates, delta=[0.0] * K))
        half = max(half, abs(bo.mass_fixed_point(agg) - 0.5))
        i_rate, o_rate = rng.random(2) + 0.1
        agg = aggregates(BoundaryParams(K=K, alpha=[i_rate] * K,
                                        beta=[0.0] * K, gamma=[o_rate] * K,
                                        delta=[0.0] * K))
        m_star = bo.mass_fixed_point(agg)
        lhs = (1 - m_star ** K) / (1 - (1 - m_star) ** K)
        report.add("ratio_identity_error", abs(lhs - o_rate / i_rate), K=K)
    report.add("half_mass_error", half)

    gap = 0.0
    excess = 0.0
    for m0 in (0.0, 0.3, 1.0):
        i_seq = np.sort(rng.random(2))[::-1] + 0.1
        o_seq = np.sort(rng.random(2))[::-1] + 0.1
        agg = aggregates(BoundaryParams(K=2, alpha=i_seq, beta=[0.0] * 2,
                                        gamma=o_seq, delta=[0.0] * 2))
        trajectory = bo.ricatti_integrate(agg, m0, 10.0)
        t = trajectory[C.TIME].to_numpy()
        m = trajectory[C.MASS].to_numpy()
        gap = max(gap, float(np.max(np.abs(m - bo.ricatti_k2(agg, m0, t)))))
        m_star = bo.mass_fixed_point(agg)
        v_min = float(np.min(bo.v_op(bo.DPair.aggregate(agg), m,
                                     np.full_like(m, m_star))))
        bound = abs(m0 - m_star) * np.exp(-v_min * t)
        excess = max(excess, float(np.max(np.abs(m - m_star) - bound)))
    report.add("ricatti_gap", gap)
    report.add("decay_bound_excess", max(excess, 0.0))
    return _finish(report, spec)


RUNNERS = {
    C.HYDRODYNAMIC: run_hydrodynamic,
    C.FICKS_LAW: run_ficks_law,
    C.HYDROSTATIC_ROBIN: run_hydrostatic_robin,
    C.HYDROSTATIC_NEUMANN_MASS: run_hydrostatic_neumann_mass,
    C.ORACLE_CERTIFY: run_oracle_certify,
    C.OPERATOR_CHECKS: run_operator_checks,
}


def run(spec: ExperimentSpec) -> ComparisonReport:
    return RUNNERS[spec.kind](spec)
