"""Command-line interface.

Three subcommands: ``indicators`` computes the culture-mix panels and
weight matrices from the raw files, ``fit`` estimates the governance system
on top of them, ``simulate`` manufactures synthetic datasets and optional
parameter-recovery studies.

Exit codes: 0 success, 1 invalid input, 2 estimation did not converge,
3 internal error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys

import numpy as np

from . import reporting
from .errors import CultureGovError, DataError, ModelError
from .estimator import (
    ERROR_STRUCTURES,
    ModelSpec,
    OptimizerSettings,
    assemble_design,
    fit,
    fit_statistics,
)
from .imputation import impute_hofstede, redistribute_unknown
from .indicators import build_weights, compute_cdi, compute_cli
from .ingest import (
    DIMENSIONS,
    build_observation_grid,
    load_hofstede,
    load_migrant_stock,
    load_panel,
    load_registry,
)
from .simulate import (
    SimulationConfig,
    recovery_study,
    simulate_world,
    write_world_csvs,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGENCE = 2
EXIT_INTERNAL = 3

REGRESSOR_CHOICES = {
    "hofstede": "hofstede_only",
    "level": "level_only",
    "level_diversity": "level_and_diversity",
}


class _Parser(argparse.ArgumentParser):
    """Usage errors map to the invalid-input exit code, not argparse's 2."""

    def error(self, message):
        raise DataError(message)


def _apply_config(argv):
    """Expand ``--config FILE`` into option arguments.

    The INI file must carry a [culturegov] section whose keys are long
    option names; explicit command-line options override it because they
    come later.
    """
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise DataError("--config requires a path")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2:]
    parser = configparser.ConfigParser()
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise DataError(f"{path}: {exc}") from None
    if not read:
        raise DataError(f"cannot read config file {path}")
    if not parser.has_section("culturegov"):
        raise DataError(f"{path}: missing [culturegov] section")
    extra = []
    for key, value in parser.items("culturegov"):
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                extra.append(flag)
        else:
            extra.extend([flag, value])
    if not rest:
        raise DataError("--config given without a subcommand")
    return [rest[0]] + extra + rest[1:]


def _add_data_arguments(parser):
    parser.add_argument("--registry", required=True, help="country registry CSV")
    parser.add_argument("--hofstede", required=True, help="culture scores CSV")
    parser.add_argument("--migrants", required=True, help="migrant stock CSV")
    parser.add_argument("--population", required=True, help="population CSV")
    parser.add_argument("--wgi", required=True, help="governance indicators CSV")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--k-neighbors", type=int, default=5,
        help="donor count for nearest-neighbour imputation (default 5)",
    )
    parser.add_argument(
        "--config", help="INI file with a [culturegov] section of long options"
    )


def build_parser():
    parser = _Parser(prog="culturegov", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_ind = sub.add_parser(
        "indicators", help="compute culture-mix indicator panels and weights"
    )
    _add_data_arguments(p_ind)
    p_ind.set_defaults(func=_cmd_indicators)

    p_fit = sub.add_parser("fit", help="estimate the governance system")
    _add_data_arguments(p_fit)
    p_fit.add_argument(
        "--regressors", choices=sorted(REGRESSOR_CHOICES), default="level_diversity",
    )
    p_fit.add_argument(
        "--error-structure", choices=ERROR_STRUCTURES, default="all",
    )
    p_fit.add_argument(
        "--indicators", help="precomputed indicators CSV (skips the indicator pass)"
    )
    p_fit.add_argument(
        "--compare", action="store_true",
        help="fit every regressor set and error structure, writing grid tables",
    )
    p_fit.set_defaults(func=_cmd_fit)

    p_sim = sub.add_parser(
        "simulate", help="write a synthetic dataset, optionally a recovery study"
    )
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument(
        "--n-countries", type=int, default=30, help="synthetic world size"
    )
    p_sim.add_argument(
        "--recover", action="store_true",
        help="also run a parameter-recovery study on abstract panels",
    )
    p_sim.add_argument("--replications", type=int, default=20)
    p_sim.add_argument(
        "--true-lambda", help="comma-separated spatial coefficients for recovery"
    )
    p_sim.add_argument(
        "--true-phi", help="comma-separated serial coefficients for recovery"
    )
    p_sim.add_argument(
        "--config", help="INI file with a [culturegov] section of long options"
    )
    p_sim.set_defaults(func=_cmd_simulate)
    return parser


def _load_pipeline(args):
    registry = load_registry(args.registry)
    hofstede = load_hofstede(args.hofstede, registry)
    tensor = load_migrant_stock(args.migrants, registry)
    panel = load_panel(args.population, args.wgi, registry)
    worked = redistribute_unknown(tensor)
    imputed = impute_hofstede(hofstede, registry, args.k_neighbors)
    grid = build_observation_grid(worked, panel, hofstede)
    exclusions = (
        grid.exclusions
        + hofstede.report.unresolved
        + tensor.report.unresolved
        + panel.report.unresolved
    )
    return registry, imputed, worked, panel, grid, exclusions


def _indicator_panel(args, imputed, worked, panel, grid):
    if getattr(args, "indicators", None):
        hcd = np.array(
            [[imputed.scores[c][d] for d in DIMENSIONS] for c in grid.countries]
        )
        return reporting.read_indicators_csv(args.indicators, grid, hcd)
    level = compute_cli(worked, imputed, panel, grid)
    return compute_cdi(worked, imputed, panel, level, grid)


def _cmd_indicators(args):
    os.makedirs(args.out, exist_ok=True)
    _, imputed, worked, panel, grid, exclusions = _load_pipeline(args)
    panel_ind = _indicator_panel(args, imputed, worked, panel, grid)
    weights = build_weights(worked, panel, grid)

    reporting.write_indicators_csv(panel_ind, os.path.join(args.out, "indicators.csv"))
    reporting.write_indicators_avg_csv(
        panel_ind, os.path.join(args.out, "indicators_avg.csv")
    )
    reporting.write_weights_csvs(weights, args.out)
    reporting.write_exclusions_csv(
        exclusions, os.path.join(args.out, "exclusions.csv")
    )
    reporting.write_provenance_csv(
        imputed, os.path.join(args.out, "imputation_provenance.csv")
    )
    print(
        f"indicators: {len(grid.countries)} countries, "
        f"{len(grid.years)} years, {len(exclusions)} exclusions"
    )
    return EXIT_OK


def _cmd_fit(args):
    os.makedirs(args.out, exist_ok=True)
    _, imputed, worked, panel, grid, exclusions = _load_pipeline(args)
    panel_ind = _indicator_panel(args, imputed, worked, panel, grid)
    weights = build_weights(worked, panel, grid)
    spec = ModelSpec(REGRESSOR_CHOICES[args.regressors], args.error_structure)

    design = assemble_design(panel_ind, panel, spec, grid)
    reporting.write_exclusions_csv(
        exclusions + design.exclusions, os.path.join(args.out, "exclusions.csv")
    )
    try:
        if args.compare:
            result = _run_comparison(args, panel_ind, panel, grid, weights, spec)
        else:
            result = fit_statistics(fit(design, weights, spec), design)
            reporting.write_loglik_csv(
                [result], os.path.join(args.out, "loglik.csv")
            )
    except ModelError as exc:
        reporting.write_json({"error": str(exc)}, os.path.join(args.out, "error.json"))
        raise

    reporting.write_coefficients_csv(
        result, os.path.join(args.out, "coefficients.csv")
    )
    reporting.write_r2_csv(result, os.path.join(args.out, "r2.csv"))
    reporting.write_residual_cov_csv(
        result, os.path.join(args.out, "residual_cov.csv")
    )
    reporting.write_json(
        reporting.fit_result_to_dict(result), os.path.join(args.out, "fit.json")
    )
    print(
        f"fit: {args.regressors}/{args.error_structure} loglik {result.loglik:.2f} "
        f"({result.convergence}), n={len(result.countries)} countries"
    )
    if result.convergence != "converged":
        print("warning: estimation did not converge", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def _run_comparison(args, panel_ind, panel, grid, weights, primary_spec):
    """Fit all regressor sets and error structures; detailed output for the
    primary spec, grid tables for the rest."""
    loglik_grid, r2_grid = {}, {}
    primary = None
    fast = OptimizerSettings(compute_se=False)
    results = []
    for regset in sorted(REGRESSOR_CHOICES.values()):
        for structure in ERROR_STRUCTURES:
            spec = ModelSpec(regset, structure)
            design = assemble_design(panel_ind, panel, spec, grid)
            is_primary = spec == primary_spec
            result = fit(design, weights, spec, None if is_primary else fast)
            result = fit_statistics(result, design)
            results.append(result)
            loglik_grid[(regset, structure)] = result.loglik
            if is_primary:
                primary = result
        r2_grid[regset] = (results[-1].r2, results[-1].r2_pooled)
    regsets = sorted(REGRESSOR_CHOICES.values())
    reporting.write_loglik_csv(results, os.path.join(args.out, "loglik.csv"))
    reporting.write_loglik_grid_csv(
        loglik_grid, regsets, ERROR_STRUCTURES,
        os.path.join(args.out, "loglik_grid.csv"),
    )
    reporting.write_r2_grid_csv(
        r2_grid, regsets, os.path.join(args.out, "r2_grid.csv")
    )
    return primary


def _parse_floats(raw):
    try:
        return tuple(float(part) for part in raw.split(","))
    except ValueError:
        raise DataError(f"cannot parse float list {raw!r}") from None


def _cmd_simulate(args):
    os.makedirs(args.out, exist_ok=True)
    overrides = {}
    if args.true_lambda:
        overrides["true_lambda"] = _parse_floats(args.true_lambda)
    if args.true_phi:
        overrides["true_phi"] = _parse_floats(args.true_phi)
    n_eq = 2
    if "true_lambda" in overrides:
        n_eq = len(overrides["true_lambda"])
    elif "true_phi" in overrides:
        n_eq = len(overrides["true_phi"])
    cfg = SimulationConfig(seed=args.seed, n_equations=n_eq, **overrides)
    cfg.resolve()  # surfaces invalid parameters before any work

    world = simulate_world(n_countries=args.n_countries, seed=args.seed)
    paths = write_world_csvs(world, args.out)
    reporting.write_truth_json(world.truth, os.path.join(args.out, "truth.json"))
    print(f"simulate: wrote {len(paths)} dataset files to {args.out}")

    if args.recover:
        if args.replications < 1:
            raise DataError("--replications must be positive")
        spec = ModelSpec("level_and_diversity", "all")

        def fit_fn(design, weights):
            return fit(design, weights, spec)

        rows, summary = recovery_study(cfg, args.replications, fit_fn)
        reporting.write_recovery_csvs(rows, summary, args.out)
        worst = min(s[2] for s in summary)
        print(
            f"recover: {args.replications} replications, "
            f"worst coverage {worst:.2f}"
        )
    return EXIT_OK


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    try:
        argv = _apply_config(argv)
        args = build_parser().parse_args(argv)
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CultureGovError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except SystemExit:
        raise
    except Exception as exc:  # pragma: no cover - guard rail
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
