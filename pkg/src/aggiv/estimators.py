"""Sample-level IV estimation: two-stage least squares and first-stage F."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .errors import IrrelevantInstrumentError, RankDeficiencyError
from .scm import AggregateIvScm, iv_estimand_population, population_moments

ESTIMATE_CSV_HEADER = "estimate,f_stat,n,instruments"


@dataclass(frozen=True)
class EstimateReport:
    point_estimate: float
    intercept: float
    first_stage_coefficients: np.ndarray
    first_stage_f: float
    n: int
    instrument_labels: tuple[str, ...]

    def to_csv_row(self) -> str:
        return f"{self.point_estimate!r},{self.first_stage_f!r},{self.n},{';'.join(self.instrument_labels)}"


def _ols(X, y):
    """Least squares with an explicit rank check; returns (coef, rss)."""
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise RankDeficiencyError(f"rank deficiency: design of {X.shape[1]} columns has rank {rank}")
    resid = y - X @ coef
    return coef, float(resid @ resid)


def _design(columns):
    n = columns.shape[0]
    return np.column_stack([np.ones(n), columns])


def _check_size(n, m):
    if n <= m + 1:
        raise RankDeficiencyError(f"rank deficiency: n={n} observations for {m} instruments plus intercept")


def _first_stage(a, Z):
    """Stage-one fit of the treatment on ``[1, Z]``; returns (coef, fitted, F)."""
    n, m = Z.shape
    _check_size(n, m)
    X = _design(Z)
    coef, rss = _ols(X, a)
    fitted = X @ coef
    centered = a - a.mean()
    tss = float(centered @ centered)
    if rss > 0:
        f_stat = ((tss - rss) / m) / (rss / (n - m - 1))
    else:
        f_stat = float("inf")
    return coef, fitted, max(f_stat, 0.0)


def tsls(y, a, Z) -> tuple[float, float, np.ndarray, float]:
    """Array-level 2SLS returning (slope, intercept, first-stage coefficients, F)."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    coef, fitted, f_stat = _first_stage(a, Z)
    spread = fitted - fitted.mean()
    centered = a - a.mean()
    # explained sum of squares numerically zero relative to var(A)
    if spread @ spread <= 1e-24 * (centered @ centered):
        raise IrrelevantInstrumentError("weak/irrelevant instrument: first-stage fitted values are constant")
    second, _ = _ols(_design(fitted), y)
    return float(second[1]), float(second[0]), coef[1:], f_stat


def fit_2sls(data: Dataset, treatment: str, outcome: str, instruments: Sequence[str]) -> EstimateReport:
    """Two-stage least squares with an intercept in both stages."""
    instruments = tuple(instruments)
    slope, intercept, first, f_stat = tsls(data[outcome], data[treatment], data.select(instruments))
    return EstimateReport(slope, intercept, first, f_stat, data.n, instruments)


def first_stage_f(data: Dataset, treatment: str, instruments: Sequence[str]) -> float:
    """F statistic for all instrument coefficients being zero in stage one.

    Degrees of freedom are ``m`` and ``n - m - 1``.
    """
    _, _, f_stat = _first_stage(data[treatment], data.select(tuple(instruments)))
    return f_stat


def per_instrument_population_estimands(scm: AggregateIvScm) -> np.ndarray:
    """Population estimand for each instrument used on its own.

    Entries for irrelevant instruments are NaN rather than aborting the
    whole vector.
    """
    out = np.empty(scm.m)
    for l in range(scm.m):
        try:
            out[l] = iv_estimand_population(scm, l)
        except IrrelevantInstrumentError:
            out[l] = np.nan
    return out


def iv_asymptotic_sd(scm: AggregateIvScm, n: int, instrument_index: int = 0) -> float:
    """Large-sample standard deviation of the just-identified 2SLS slope.

    ``sd = sqrt(var(Y - b A) var(I) / (n cov(A, I)^2))`` with ``b`` the
    population estimand, evaluated on the exact moments.
    """
    b = iv_estimand_population(scm, instrument_index)
    mom = population_moments(scm)
    inst = f"i{instrument_index + 1}"
    resid_var = mom.variance("y") - 2 * b * mom.covariance("a", "y") + b * b * mom.variance("a")
    cov_ai = mom.covariance("a", inst)
    return float(np.sqrt(resid_var * mom.variance(inst) / (n * cov_ai**2)))
