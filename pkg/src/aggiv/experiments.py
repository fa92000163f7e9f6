"""Reproducible simulation studies, each emitted as a sorted CSV table.

Every theoretical column is produced by the closed-form operation that
owns it (``iv_estimand_population``, ``ace_gaussian``, ...); nothing is
re-derived here.  Given the same :class:`ExperimentConfig` the CSV output
is byte-identical regardless of ``jobs``.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from . import __version__
from ._tasks import parallel_map
from .acid import (
    GaussianAcid,
    UniformCounterexampleAcid,
    ace_gaussian,
    ace_monte_carlo_se,
    counterexample_a2_density,
    counterexample_a2_range,
    uniform_counterexample_delta,
)
from .diagnostics import (
    DEFAULT_LEVELS,
    SARGAN_CONFIGS,
    classify_instrument,
    instrument_treatment_correlation,
    sargan_power_curve,
    sargan_scm,
)
from .errors import EstimationError, InvalidModelError
from .estimators import fit_2sls
from .scm import AggregateIvScm, iv_estimand_population, sample_observational
from .seeding import derive_seed


def make_grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    """Inclusive arithmetic grid, rounded to 10 decimals to avoid drift."""
    count = int(round((stop - start) / step)) + 1
    if count < 1:
        raise InvalidModelError(f"empty grid {start}:{stop}:{step}")
    return tuple(float(x) for x in np.round(start + step * np.arange(count), 10))


def parse_grid(spec: str) -> tuple[float, ...]:
    """``start:stop:step`` or a comma-separated list of values."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid spec {spec!r} must be start:stop:step")
        return make_grid(*(float(p) for p in parts))
    return tuple(float(x) for x in spec.split(",") if x.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    grid: Optional[tuple[float, ...]] = None
    sample_sizes: Optional[tuple[int, ...]] = None
    replicates: Optional[int] = None
    levels: Optional[tuple[float, ...]] = None
    jobs: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidModelError(f"unknown experiment {self.experiment!r}; choose from {sorted(EXPERIMENTS)}")
        if self.grid is not None and len(self.grid) == 0:
            raise InvalidModelError("grid must be non-empty")
        if self.sample_sizes is not None and (len(self.sample_sizes) == 0 or min(self.sample_sizes) < 1):
            raise InvalidModelError("sample sizes must be positive")
        if self.replicates is not None and self.replicates < 1:
            raise InvalidModelError("replicates must be at least 1")

    def digest(self) -> str:
        payload = {k: v for k, v in asdict(self).items() if k != "jobs"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


@dataclass
class ExperimentResult:
    name: str
    fields: tuple[str, ...]
    rows: list[dict]

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.fields) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(row[f]) for f in self.fields) + "\n")
        return buf.getvalue()

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def figure2_scm(beta1: float) -> AggregateIvScm:
    """k = 2, every alpha, gamma and delta equal to 1, beta_2 = 2, unit variances."""
    return AggregateIvScm(alpha=[1.0, 1.0], beta=[beta1, 2.0], delta=[[1.0, 1.0]], gamma_a=[1.0, 1.0], gamma_y=1.0)


def figure2_acid(d1: float, d2: float) -> GaussianAcid:
    return GaussianAcid.deterministic([d1, d2], [1.0, 1.0])


FIGURE2_SIZES = (10, 100, 1000)
FIGURE2A_GRID = make_grid(-1.0, 4.0, 0.1)
FIGURE2B_GRID = make_grid(-2.0, 2.0, 0.1)
FIGURE2A_SLOPES = (2.0, -1.0)
FIGURE2B_BETA1 = 1.0
FIGURE4_GRID = make_grid(-1.0, 4.0, 0.1)


def _estimate_task(task):
    scm, n, seed = task
    try:
        report = fit_2sls(sample_observational(scm, n, seed), "a", "y", ["i1"])
        return report.point_estimate, False
    except EstimationError:
        return float("nan"), True


def _figure2(config, grid, scm_for, acid_for, x_name):
    sizes = config.sample_sizes or FIGURE2_SIZES
    replicates = config.replicates or 1
    keys, tasks = [], []
    for gi, x in enumerate(grid):
        scm = scm_for(x)
        for ni, n in enumerate(sizes):
            for r in range(replicates):
                keys.append((gi, x, n, r, scm))
                tasks.append((scm, n, derive_seed(config.seed, gi, ni, r)))
    results = parallel_map(_estimate_task, tasks, config.jobs)
    rows = []
    for (gi, x, n, r, scm), (estimate, failed) in zip(keys, results):
        rows.append({
            x_name: x,
            "n": n,
            "replicate": r,
            "sample_estimate": estimate,
            "beta_iv_theoretical": iv_estimand_population(scm, 0),
            "ace_theoretical": ace_gaussian(acid_for(x), scm.beta),
            "failed": failed,
        })
    rows.sort(key=lambda row: (row[x_name], row["n"], row["replicate"]))
    fields = (x_name, "n", "replicate", "sample_estimate", "beta_iv_theoretical", "ace_theoretical", "failed")
    return fields, rows


def run_figure2a(config: ExperimentConfig) -> ExperimentResult:
    """IV estimates vs. the ACE as beta_1 moves away from proportional aggregation."""
    grid = config.grid or FIGURE2A_GRID
    fields, rows = _figure2(config, grid, figure2_scm, lambda b1: figure2_acid(*FIGURE2A_SLOPES), "beta1")
    return ExperimentResult("figure2a", fields, rows)


def run_figure2b(config: ExperimentConfig) -> ExperimentResult:
    """IV estimates vs. the ACE as the ACID slope d_1 moves away from instrument tuning."""
    grid = config.grid or FIGURE2B_GRID
    scm = figure2_scm(FIGURE2B_BETA1)
    fields, rows = _figure2(config, grid, lambda d1: scm, lambda d1: figure2_acid(d1, 1.0 - d1), "d1")
    return ExperimentResult("figure2b", fields, rows)


def run_figure4(config: ExperimentConfig) -> ExperimentResult:
    grid = config.grid or FIGURE4_GRID
    power = sargan_power_curve(
        sargan_scm(2.0, SARGAN_CONFIGS["Strong-Strong"]),
        grid,
        SARGAN_CONFIGS,
        replicates=config.replicates or 100,
        n=(config.sample_sizes or (1000,))[0],
        levels=config.levels or DEFAULT_LEVELS,
        seed=config.seed,
        jobs=config.jobs,
    )
    fields = ("config", "level", "beta1", "replicates", "rejections", "frequency", "failures")
    return ExperimentResult("figure4", fields, [asdict(row) for row in power])


def run_table1(config: Optional[ExperimentConfig] = None) -> ExperimentResult:
    rows = []
    for name, delta in SARGAN_CONFIGS.items():
        scm = sargan_scm(2.0, delta)
        cor = [instrument_treatment_correlation(scm, l) for l in range(2)]
        rows.append({
            "config": name,
            "delta11": delta[0][0], "delta12": delta[0][1],
            "delta21": delta[1][0], "delta22": delta[1][1],
            "cor_i1_a": cor[0], "cor_i2_a": cor[1],
            "class_i1": classify_instrument(cor[0]), "class_i2": classify_instrument(cor[1]),
        })
    fields = ("config", "delta11", "delta12", "delta21", "delta22", "cor_i1_a", "cor_i2_a", "class_i1", "class_i2")
    return ExperimentResult("table1", fields, rows)


TABLE2_CASES = ("general", "b", "c", "d")

TABLE2_DEFAULT_SCM = AggregateIvScm(
    alpha=[1.0, 1.5], beta=[1.0, 2.0], delta=[[1.0, 0.5]], gamma_a=[1.0, 1.0], gamma_y=1.0
)


def table2_case(scm: AggregateIvScm, case: str) -> AggregateIvScm:
    """Apply a case's zero restrictions: (b) beta_2 = 0, (c) delta_2 = 0, (d) both."""
    if scm.k != 2:
        raise InvalidModelError("the sub-case table is defined for k = 2 components")
    beta = scm.beta.copy()
    delta = scm.delta.copy()
    if case in ("b", "d"):
        beta[1] = 0.0
    if case in ("c", "d"):
        delta[:, 1] = 0.0
    if case not in TABLE2_CASES:
        raise ValueError(f"unknown case {case!r}")
    return AggregateIvScm(scm.alpha, beta, delta, scm.gamma_a, scm.gamma_y, scm.var_u, scm.var_i, scm.var_a, scm.var_y)


def run_table2(
    config: Optional[ExperimentConfig] = None,
    scm: AggregateIvScm = TABLE2_DEFAULT_SCM,
    acid: Optional[GaussianAcid] = None,
) -> ExperimentResult:
    """IV estimand and Gaussian-ACID effect for the general case and sub-cases (b)-(d).

    Without an explicit ACID the minimum-norm slopes ``d = alpha / |alpha|^2``
    are used.
    """
    if acid is None:
        acid = GaussianAcid.deterministic(scm.alpha / (scm.alpha @ scm.alpha), scm.alpha)
    rows = []
    for case in TABLE2_CASES:
        sub = table2_case(scm, case)
        rows.append({"case": case, "beta_iv": iv_estimand_population(sub, 0), "ace": ace_gaussian(acid, sub.beta)})
    return ExperimentResult("table2", ("case", "beta_iv", "ace"), rows)


COUNTEREXAMPLE_GRID = make_grid(-3.0, 2.0, 0.1)


def counterexample_quadrature_mean(a: float) -> float:
    lo, hi = counterexample_a2_range(a)
    if hi == lo:  # a = ±3: point mass
        return lo
    value, _ = integrate.quad(lambda x: x * counterexample_a2_density(x, a), lo, hi, epsabs=1e-12, epsrel=1e-12)
    return value


def run_counterexample(config: ExperimentConfig) -> ExperimentResult:
    """Value dependence of the uniform ACID: closed form, quadrature and Monte Carlo."""
    grid = config.grid or COUNTEREXAMPLE_GRID
    n = (config.sample_sizes or (100_000,))[0]
    acid = UniformCounterexampleAcid()
    rows = []
    for gi, a in enumerate(grid):
        quad = 3.0 * (counterexample_quadrature_mean(a + 1.0) - counterexample_quadrature_mean(a))
        mc, se = ace_monte_carlo_se(acid.draw, [2.0, 3.0], a, n, derive_seed(config.seed, gi))
        rows.append({"a": a, "delta_closed_form": uniform_counterexample_delta(a),
                     "delta_quadrature": quad, "delta_monte_carlo": mc, "monte_carlo_se": se})
    fields = ("a", "delta_closed_form", "delta_quadrature", "delta_monte_carlo", "monte_carlo_se")
    return ExperimentResult("counterexample", fields, rows)


EXPERIMENTS: dict[str, Callable[[ExperimentConfig], ExperimentResult]] = {
    "figure2a": run_figure2a,
    "figure2b": run_figure2b,
    "figure4": run_figure4,
    "table1": run_table1,
    "table2": run_table2,
    "counterexample": run_counterexample,
}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    return EXPERIMENTS[config.experiment](config)


def write_experiment(result: ExperimentResult, config: ExperimentConfig, out_dir) -> Path:
    """Write ``<out_dir>/<experiment>/results.csv`` and a ``manifest.json`` beside it."""
    target = Path(out_dir) / result.name
    target.mkdir(parents=True, exist_ok=True)
    csv_path = target / "results.csv"
    csv_path.write_text(result.to_csv_string())
    manifest = {
        "experiment": result.name,
        "master_seed": config.seed,
        "config_sha256": config.digest(),
        "config": {k: v for k, v in asdict(config).items() if k != "jobs"},
        "toolkit_version": __version__,
        "files": ["results.csv"],
        "rows": len(result.rows),
    }
    (target / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return csv_path
