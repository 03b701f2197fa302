import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import (C, boundary_operators as bo, dynamics, harness, oracle, pde)
from .config import (ToleranceTable, comment_header, load_experiment,
                     load_params)
from .params import BoundaryParams, aggregates, validate

logger = logging.getLogger(__name__)


def _write_csv(frame: pd.DataFrame, path, header: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as handle:
        handle.write(header)
        frame.to_csv(handle, index=False)
    logger.info(f"wrote {path}")


def _initial(text: str):
    """--initial: a number, 'stationary' or 'linear:a,b'."""
    if text == "stationary":
        return text
    if text.startswith("linear:"):
        left, right = text[len("linear:"):].split(",")
        return {"linear": [float(left), float(right)]}
    return float(text)


def _add_common(parser: argparse.ArgumentParser, params_required=True):
    parser.add_argument("-p", "--params", type=str, required=params_required,
                        help="parameter file (YAML or `key = value` lines)",
                        default=None)
    parser.add_argument("-o", "--output", type=str, required=False,
                        help="output directory", default=".")


def _simulate(args) -> int:
    params, text = load_params(args.params)
    report = validate(params)
    for violation in report.violations:
        logger.warning(violation)
    f0 = harness.initial_profile(_initial(args.initial), params, 256)
    seeds = [dynamics.derive_seed(args.seed, i) for i in range(args.ensemble)]
    t_grid = np.linspace(0.0, args.t_end, args.samples + 1)
    observers = (dynamics.mass_observer,)
    if args.profile:
        observers += (dynamics.profile_observer,)
    _, logs = dynamics.run_ensemble(
        args.N, params, dynamics.BernoulliProfile(f0), seeds, args.t_end,
        sample_times=t_grid, scale=args.scale,
        observers_factory=lambda: observers, workers=args.workers)
    merged = dynamics.ObservationLog.merge(logs)
    header = comment_header(f"N = {args.N}", f"seed_base = {args.seed}",
                            f"scale = {args.scale}",
                            f"generator = {C.GENERATOR_NAME}", text)
    _write_csv(merged.to_frame(), Path(args.output) / "trajectories.csv",
               header)
    return 0


def _pde(args) -> int:
    params, text = load_params(args.params)
    f0 = harness.initial_profile(_initial(args.initial), params, args.m)
    problem = pde.PdeProblem.for_params(params, f0)
    if args.mild:
        solution = pde.mild_solve(problem, args.t_end, m=args.m, dt=args.dt)
    else:
        solution = pde.solve(problem, args.t_end, m=args.m, dt=args.dt,
                             save_every=args.save_every)
    output = Path(args.output)
    _write_csv(solution.to_frame(), output / "pde.csv", comment_header(text))
    solution.write_manifest(output / "pde_manifest.json")
    return 0


def _stationary(args) -> int:
    params, _ = load_params(args.params)
    if params.theta == 1:
        profile = bo.stationary_profile(params)
        record = {"rho0": profile.rho0, "rho1": profile.rho1,
                  "slope": profile.slope}
    else:
        record = {"m_star": bo.mass_fixed_point(aggregates(params))}
    print(json.dumps(record, sort_keys=True))
    return 0


def _mass(args) -> int:
    params, text = load_params(args.params)
    agg = aggregates(params)
    trajectory = bo.ricatti_integrate(agg, args.m0, args.t_end, dt=args.dt)
    if params.K == 2:
        trajectory["closed_form"] = bo.ricatti_k2(
            agg, args.m0, trajectory[C.TIME].to_numpy())
    _write_csv(trajectory, Path(args.output) / "mass.csv",
               comment_header(f"m0 = {args.m0}", text))
    return 0


def _oracle(args) -> int:
    params, text = load_params(args.params)
    dist = oracle.stationary(args.N, params)
    output = Path(args.output)
    header = comment_header(f"N = {args.N}", text)
    _write_csv(dist.to_frame(), output / "stationary.csv", header)
    _write_csv(oracle.marginals_frame(dist), output / "marginals.csv", header)
    violation = oracle.detailed_balance_violation(args.N, params, dist)
    logger.info(f"mean mass {oracle.mean_mass(dist):.6g}, detailed balance "
                f"violation {violation:.3g}")
    return 0


def _experiment(args, kind=None) -> harness.ExperimentSpec:
    """Flags fill the defaults, the config file overrides them."""
    values = {"kind": kind or args.kind, "seed_base": args.seed,
              "output_dir": args.output}
    for name in ("N_list", "ensemble_size", "t_grid", "theta_list",
                 "workers"):
        value = getattr(args, name, None)
        if value is not None:
            values[name] = value
    params, params_text, tolerances = None, "", ToleranceTable()
    if args.params is not None:
        params, params_text = load_params(args.params)
    if args.config is not None:
        content = load_experiment(args.config)
        values.update(content.experiment)
        tolerances = content.tolerances
        if content.params is not None:
            params, params_text = content.params, content.params_text
    if params is None and values["kind"] == C.OPERATOR_CHECKS:
        # the batteries draw their own rates
        params = BoundaryParams.linear_robin(1.0, 1.0, 1.0, 1.0)
    if params is None:
        raise ValueError("no parameters: pass --params or a config file "
                         "with a `params` section")
    if kind is not None and values["kind"] != kind:
        raise ValueError(f"config file describes a {values['kind']} "
                         f"experiment, expected {kind}")
    return harness.ExperimentSpec.from_mapping(
        values, params, tolerances=tolerances, params_text=params_text)


def _compare(args, kind=None) -> int:
    report = harness.run(_experiment(args, kind))
    print(report.to_frame().to_string(index=False))
    return 0 if report.passed else 1


def _add_experiment(parser: argparse.ArgumentParser, with_kind: bool):
    _add_common(parser, params_required=False)
    parser.add_argument("-c", "--config", type=str, required=False,
                        help="experiment file; overrides the flags",
                        default=None)
    if with_kind:
        parser.add_argument("-k", "--kind", type=str, required=False,
                            choices=C.EXPERIMENT_KINDS,
                            help="experiment kind", default=C.HYDRODYNAMIC)
    parser.add_argument("-N", "--N-list", dest="N_list", type=int,
                        nargs="+", required=False, default=None,
                        help="lattice scales")
    parser.add_argument("-e", "--ensemble-size", dest="ensemble_size",
                        type=int, required=False, default=None,
                        help="trajectories per N")
    parser.add_argument("-t", "--t-grid", dest="t_grid", type=float,
                        nargs="+", required=False, default=None,
                        help="sample times")
    parser.add_argument("--theta-list", dest="theta_list", type=float,
                        nargs="+", required=False, default=None,
                        help="values of theta for the Neumann mass "
                             "experiment")
    parser.add_argument("-s", "--seed", type=int, required=False, default=0,
                        help="seed base")
    parser.add_argument("-w", "--workers", type=int, required=False,
                        default=None, help="threads for the ensembles")


def build_parser() -> argparse.ArgumentParser:
    options = argparse.ArgumentParser(
        prog="ssepres",
        description="Exclusion process with current reservoirs: "
                    "simulation, limit equations and comparisons")
    options.add_argument("-v", "--verbose", action="count", default=0,
                         help="-v for progress, -vv for debug output")
    commands = options.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate",
                                   help="simulate an ensemble of trajectories")
    _add_common(simulate)
    simulate.add_argument("-N", type=int, required=True,
                          help="lattice scale")
    simulate.add_argument("-e", "--ensemble", type=int, default=1,
                          help="number of trajectories")
    simulate.add_argument("-t", "--t-end", type=float, required=True,
                          help="final macroscopic time")
    simulate.add_argument("--samples", type=int, default=10,
                          help="number of sample intervals")
    simulate.add_argument("-i", "--initial", type=str, default="0.5",
                          help="initial profile: a density, 'stationary' "
                               "or 'linear:a,b'")
    simulate.add_argument("--scale", type=str, default=C.DIFFUSIVE,
                          choices=(C.DIFFUSIVE, C.SUBDIFFUSIVE),
                          help="macroscopic time scale")
    simulate.add_argument("-s", "--seed", type=int, default=0,
                          help="seed base")
    simulate.add_argument("-w", "--workers", type=int, default=None,
                          help="threads for the ensemble")
    simulate.add_argument("--profile", action="store_true",
                          help="add one occupation column per site")
    simulate.set_defaults(handler=_simulate)

    solve = commands.add_parser("pde", help="solve the hydrodynamic equation")
    _add_common(solve)
    solve.add_argument("-t", "--t-end", type=float, required=True,
                       help="final time")
    solve.add_argument("-m", type=int, default=64, help="grid cells")
    solve.add_argument("--dt", type=float, default=None, help="time step")
    solve.add_argument("--save-every", type=int, default=1,
                       help="keep every n-th time step")
    solve.add_argument("-i", "--initial", type=str, default="0.5",
                       help="initial profile: a density, 'stationary' or "
                            "'linear:a,b'")
    solve.add_argument("--mild", action="store_true",
                       help="use the mild (Duhamel) solver")
    solve.set_defaults(handler=_pde)

    stationary = commands.add_parser(
        "stationary", help="print the stationary profile or mass")
    _add_common(stationary)
    stationary.set_defaults(handler=_stationary)

    mass = commands.add_parser("mass", help="integrate the mass equation")
    _add_common(mass)
    mass.add_argument("--m0", type=float, required=True,
                      help="initial mass")
    mass.add_argument("-t", "--t-end", type=float, required=True,
                      help="final time")
    mass.add_argument("--dt", type=float, default=C.DEFAULT_RK4_DT,
                      help="RK4 step")
    mass.set_defaults(handler=_mass)

    exact = commands.add_parser(
        "oracle", help="exact stationary distribution for small N")
    _add_common(exact)
    exact.add_argument("-N", type=int, required=True, help="lattice scale")
    exact.set_defaults(handler=_oracle)

    checks = commands.add_parser("check-operators",
                                 help="boundary operator batteries")
    _add_experiment(checks, with_kind=False)
    checks.set_defaults(
        handler=lambda args: _compare(args, C.OPERATOR_CHECKS))

    compare = commands.add_parser("compare",
                                  help="run a comparison experiment")
    _add_experiment(compare, with_kind=True)
    compare.set_defaults(handler=_compare)
    return options


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose,
                                                       logging.DEBUG)
    logging.basicConfig(level=level,
                        format="%(asctime)s %(name)s %(levelname)s "
                               "%(message)s")
    sys.exit(args.handler(args))


if __name__ == '__main__':
    main()
