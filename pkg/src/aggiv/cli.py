"""Command-line entry point.

Exit codes: 0 success, 2 configuration/usage error, 3 model validation
error, 4 numerical/estimation error.  Failures print one JSON line to
stderr: ``{"error": <kind>, "exit": <code>, "message": <text>}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acid import (
    GaussianAcid,
    UniformCounterexampleAcid,
    ace_gaussian,
    ace_monte_carlo_se,
    require_valid_acid,
    sample_gaussian_intervention,
    validate_gaussian_acid,
)
from .config import (
    acid_from_config,
    dump_config,
    exclusion_violation_from_config,
    exclusion_violation_to_config,
    is_exclusion_violation,
    load_config,
    scm_from_config,
    write_config,
)
from .dataset import Dataset
from .diagnostics import sargan_test
from .equivalence import exclusion_violation_equivalent, sample_exclusion_violation, verify_distribution_equivalence
from .errors import AggivError, ConfigError, EstimationError, InvalidModelError
from .estimators import ESTIMATE_CSV_HEADER, fit_2sls
from .experiments import EXPERIMENTS, ExperimentConfig, parse_grid, run_experiment, write_experiment
from .scm import iv_estimand_population, require_valid, sample_observational, validate_scm

log = logging.getLogger("aggiv")

EXIT_CONFIG, EXIT_MODEL, EXIT_NUMERIC = 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _report("usage", EXIT_CONFIG, message)
        sys.exit(EXIT_CONFIG)


def _report(kind, code, message):
    print(json.dumps({"error": kind, "exit": code, "message": str(message)}), file=sys.stderr)


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get("AGGIV_OUT", "out"))


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _seed(args, default=0):
    return default if args.seed is None else args.seed


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if is_exclusion_violation(cfg):
        data = sample_exclusion_violation(exclusion_violation_from_config(cfg), args.n, _seed(args))
    else:
        data = sample_observational(scm_from_config(cfg), args.n, _seed(args))
    path = _out_dir(args) / "simulate" / "observational.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    data.to_csv(path)
    print(path)
    return 0


def cmd_estimate(args) -> int:
    data = Dataset.from_csv(args.data)
    report = fit_2sls(data, args.treatment, args.outcome, args.instruments)
    text = ESTIMATE_CSV_HEADER + "\n" + report.to_csv_row() + "\n"
    _write(_out_dir(args) / "estimate" / "estimate.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_acid(args) -> int:
    cfg = load_config(args.config)
    scm = scm_from_config(cfg)
    acid = acid_from_config(cfg, scm)
    seed = _seed(args)
    if isinstance(acid, UniformCounterexampleAcid):
        ace, se = ace_monte_carlo_se(acid.draw, [2.0, 3.0], args.a, args.n, seed)
        print(f"ace_monte_carlo,{ace!r}\nmonte_carlo_se,{se!r}")
        return 0
    require_valid_acid(acid)
    data = sample_gaussian_intervention(acid, args.a, args.n, seed)
    path = _out_dir(args) / "acid" / "interventional.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    data.to_csv(path)
    print(f"ace,{ace_gaussian(acid, scm.beta)!r}")
    print(f"beta_iv,{iv_estimand_population(scm, 0)!r}")
    print(path)
    return 0


def cmd_equivalence(args) -> int:
    scm = scm_from_config(load_config(args.config))
    eq = exclusion_violation_equivalent(scm)
    text = dump_config(exclusion_violation_to_config(eq))
    path = _out_dir(args) / "equivalence" / "equivalent.toml"
    _write(path, text)
    sys.stdout.write(text)
    print(f"# max covariance discrepancy: {verify_distribution_equivalence(scm, eq):.3e}")
    return 0


def cmd_sargan(args) -> int:
    if args.data:
        data = Dataset.from_csv(args.data)
    elif args.config:
        data = sample_observational(scm_from_config(load_config(args.config)), args.n, _seed(args))
    else:
        raise ConfigError("sargan needs --data or --config")
    instruments = args.instruments or [c for c in data.columns if c.startswith("i") and c[1:].isdigit()]
    report = sargan_test(data, args.treatment, args.outcome, instruments, args.level)
    print("statistic,dof,p_value,reject,level")
    print(f"{report.statistic!r},{report.dof},{report.p_value!r},{int(report.reject)},{report.level!r}")
    return 0


def cmd_experiment(args) -> int:
    config = ExperimentConfig(
        experiment=args.name,
        seed=_seed(args),
        grid=parse_grid(args.grid) if args.grid else None,
        sample_sizes=tuple(args.sizes) if args.sizes else None,
        replicates=args.replicates,
        levels=tuple(args.levels) if args.levels else None,
        jobs=args.jobs,
    )
    result = run_experiment(config)
    print(write_experiment(result, config, _out_dir(args)))
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    if is_exclusion_violation(cfg):
        exclusion_violation_from_config(cfg)
        print("ok exclusion_violation model")
        return 0
    scm = scm_from_config(cfg)
    problems = validate_scm(scm)
    for problem in problems:
        print(f"FAIL scm: {problem}")
    if problems:
        raise InvalidModelError("; ".join(problems), problems)
    print("ok scm")
    if "acid" in cfg:
        acid = acid_from_config(cfg, scm)
        if isinstance(acid, GaussianAcid):
            report = validate_gaussian_acid(acid, scm.alpha, args.tol)
            print(report)
            if not report.passed:
                raise InvalidModelError("invalid Gaussian ACID: " + "; ".join(report.failures()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aggiv", description="Aggregate-treatment IV simulation and estimation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML model configuration")
    common.add_argument("--out", help="output directory (default: $AGGIV_OUT or ./out)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for replicate loops")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="sample observational data")
    p.add_argument("--n", type=int, default=1000)
    p.set_defaults(func=cmd_simulate, needs_config=True)

    p = sub.add_parser("estimate", parents=[common], help="2SLS on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--treatment", default="a")
    p.add_argument("--outcome", default="y")
    p.add_argument("--instruments", nargs="+", default=["i1"])
    p.set_defaults(func=cmd_estimate, needs_config=False)

    p = sub.add_parser("acid", parents=[common], help="sample an interventional distribution")
    p.add_argument("--a", type=float, default=0.0, help="intervention value")
    p.add_argument("--n", type=int, default=1000)
    p.set_defaults(func=cmd_acid, needs_config=True)

    p = sub.add_parser("equivalence", parents=[common], help="map to the exclusion-violating model")
    p.set_defaults(func=cmd_equivalence, needs_config=True)

    p = sub.add_parser("sargan", parents=[common], help="Sargan over-identification test")
    p.add_argument("--data")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--treatment", default="a")
    p.add_argument("--outcome", default="y")
    p.add_argument("--instruments", nargs="+")
    p.add_argument("--level", type=float, default=0.05)
    p.set_defaults(func=cmd_sargan, needs_config=False)

    p = sub.add_parser("experiment", parents=[common], help="reproduce a simulation study")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    p.add_argument("--grid", help="start:stop:step or comma list")
    p.add_argument("--sizes", type=int, nargs="+", help="sample sizes")
    p.add_argument("--replicates", type=int)
    p.add_argument("--levels", type=float, nargs="+")
    p.set_defaults(func=cmd_experiment, needs_config=False)

    p = sub.add_parser("validate", parents=[common], help="check model and ACID invariants")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_validate, needs_config=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    if args.needs_config and not args.config:
        parser.error(f"{args.command} requires --config")
    try:
        return args.func(args)
    except ConfigError as exc:
        _report("config", EXIT_CONFIG, exc)
        return EXIT_CONFIG
    except InvalidModelError as exc:
        _report("validation", EXIT_MODEL, exc)
        return EXIT_MODEL
    except (EstimationError, np.linalg.LinAlgError) as exc:
        _report("numerical", EXIT_NUMERIC, exc)
        return EXIT_NUMERIC
    except KeyError as exc:
        _report("config", EXIT_CONFIG, f"unknown column {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
