"""Over-identification testing and instrument strength."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from ._tasks import parallel_map
from .dataset import Dataset
from .errors import EstimationError, InvalidModelError, UnderidentifiedError
from .estimators import _design, _ols, tsls
from .scm import AggregateIvScm, population_moments, sample_observational
from .seeding import derive_seed

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.01, 0.5)
STRONG_THRESHOLD = 0.5
WEAK_THRESHOLD = 0.2

# Instrument -> component effects (rows: I_1, I_2; columns: A_1, A_2).
SARGAN_CONFIGS = {
    "Strong-Weak": ((5.0, 3.0), (0.1, 0.2)),
    "Strong-Strong": ((5.0, 3.0), (4.0, 2.0)),
    "Weak-Weak": ((0.15, 0.1), (0.08, 0.05)),
}


def sargan_scm(beta1: float, delta) -> AggregateIvScm:
    """Two-instrument model used for the power study; ``beta1 = 2`` is proportional."""
    return AggregateIvScm(
        alpha=[1.0, 1.0],
        beta=[beta1, 2.0],
        delta=delta,
        gamma_a=[0.5, 0.5],
        gamma_y=2.0,
    )


@dataclass(frozen=True)
class SarganReport:
    statistic: float
    dof: int
    p_value: float
    reject: bool
    level: float


def _sargan_arrays(y, a, Z) -> tuple[float, int, float]:
    n, m = Z.shape
    if m < 2:
        raise UnderidentifiedError(f"under-identification: Sargan test needs >= 2 instruments, got {m}")
    slope, intercept, _, _ = tsls(y, a, Z)
    resid = y - intercept - slope * a
    _, rss = _ols(_design(Z), resid)
    centered = resid - resid.mean()
    tss = float(centered @ centered)
    y_centered = y - y.mean()
    # a residual that is zero up to rounding carries no information
    degenerate = tss <= 1e-24 * float(y_centered @ y_centered)
    r2 = 0.0 if degenerate else max(0.0, 1.0 - rss / tss)
    statistic = n * r2
    dof = m - 1
    return statistic, dof, float(stats.chi2.sf(statistic, dof))


def sargan_test(
    data: Dataset, treatment: str, outcome: str, instruments: Sequence[str], level: float = 0.05
) -> SarganReport:
    """Sargan over-identification test, ``n R^2`` of 2SLS residuals on the instruments.

    The reference distribution is chi-squared with ``m - 1`` degrees of
    freedom.  The null is that every instrument identifies the same
    estimand.
    """
    statistic, dof, p_value = _sargan_arrays(data[outcome], data[treatment], data.select(tuple(instruments)))
    return SarganReport(statistic, dof, p_value, p_value < level, level)


@dataclass(frozen=True)
class PowerRow:
    config: str
    level: float
    beta1: float
    replicates: int
    rejections: int
    frequency: float
    failures: int


POWER_CSV_FIELDS = ("config", "level", "beta1", "replicates", "rejections", "frequency")


def _power_task(task):
    template, config_key, grid_key, beta1, delta, replicates, n, seed = task
    scm = replace(template, beta=np.concatenate([[beta1], template.beta[1:]]), delta=delta)
    labels = [f"i{l + 1}" for l in range(scm.m)]
    p_values = []
    for r in range(replicates):
        data = sample_observational(scm, n, derive_seed(seed, config_key, grid_key, r))
        try:
            _, _, p = _sargan_arrays(data["y"], data["a"], data.select(labels))
        except EstimationError:
            p = float("nan")
        p_values.append(p)
    return p_values


def sargan_power_curve(
    template: AggregateIvScm,
    beta1_grid: Sequence[float],
    configs: Mapping[str, object] = SARGAN_CONFIGS,
    replicates: int = 100,
    n: int = 1000,
    levels: Sequence[float] = DEFAULT_LEVELS,
    seed: int = 0,
    jobs: int = 1,
) -> list[PowerRow]:
    """Rejection frequency of the Sargan test per (config, level, beta1).

    For each configuration ``template`` gets that config's ``delta`` and
    ``beta[0] = beta1``.  The same simulated datasets are tested at every
    level.  Replicates whose estimation fails count as non-rejections and
    are tallied in ``failures``.
    """
    if replicates < 1:
        raise InvalidModelError("replicates must be at least 1")
    if len(beta1_grid) == 0:
        raise InvalidModelError("beta1 grid must be non-empty")
    tasks = []
    for ci, (name, delta) in enumerate(configs.items()):
        for bi, beta1 in enumerate(beta1_grid):
            tasks.append((template, ci, bi, float(beta1), np.asarray(delta, dtype=float), replicates, n, seed))
    results = parallel_map(_power_task, tasks, jobs)
    names = list(configs)
    rows = []
    for task, p_values in zip(tasks, results):
        p = np.asarray(p_values)
        failures = int(np.isnan(p).sum())
        if failures:
            log.warning("%d of %d replicates failed for %s at beta1=%g", failures, replicates, names[task[1]], task[3])
        for level in levels:
            rejections = int(np.sum(p[~np.isnan(p)] < level))
            rows.append(PowerRow(names[task[1]], float(level), task[3], replicates, rejections,
                                 rejections / replicates, failures))
    rows.sort(key=lambda r: (r.config, r.level, r.beta1))
    return rows


def instrument_treatment_correlation(scm: AggregateIvScm, instrument_index: int = 0) -> float:
    """Population ``cor(I_l, A)``."""
    mom = population_moments(scm)
    var_a = mom.variance("a")
    if not var_a > 0:
        raise InvalidModelError("degenerate variance: var(A) must be positive")
    return mom.correlation(f"i{instrument_index + 1}", "a")


def classify_instrument(correlation: float) -> str:
    """``strong`` above 0.5, ``weak`` below 0.2, otherwise ``intermediate``."""
    r = abs(correlation)
    if r > STRONG_THRESHOLD:
        return "strong"
    if r < WEAK_THRESHOLD:
        return "weak"
    return "intermediate"
