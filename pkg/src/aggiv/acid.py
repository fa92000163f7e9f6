"""Aggregate-constrained component intervention distributions (ACIDs).

An ACID says how ``do(A = a)`` is realised on the components ``A_1..A_k``.
Under surgicality the outcome mean only depends on the component means,
so an ACID is represented here by a *sampler*: any callable
``draw(a, n, rng) -> (n, k) array`` of component values under ``do(A = a)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.linalg import null_space

from .dataset import Dataset
from .errors import InvalidAcidError, InvalidModelError, OutOfSupportError
from .scm import (
    AggregateIvScm,
    check_proportional_aggregation,
    iv_estimand_population,
    population_moments,
    require_valid,
)
from .seeding import stream

Sampler = Callable[[float, int, np.random.Generator], np.ndarray]

CONSTRAINT_TOL = 1e-10


def _array(x, ndim):
    arr = np.array(x, dtype=float, copy=True)
    arr = np.atleast_2d(arr) if ndim == 2 else np.atleast_1d(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GaussianAcid:
    """``(A_1..A_k) ~ N(c + a d, sigma)`` under ``do(A = a)``.

    ``alpha`` records the aggregation weights the constraints refer to.
    A zero ``sigma`` is allowed and gives a deterministic intervention.
    """

    c: np.ndarray
    d: np.ndarray
    sigma: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        for name in ("c", "d", "alpha"):
            object.__setattr__(self, name, _array(getattr(self, name), 1))
        object.__setattr__(self, "sigma", _array(self.sigma, 2))

    @property
    def k(self) -> int:
        return self.alpha.size

    @classmethod
    def deterministic(cls, d, alpha, c=None) -> "GaussianAcid":
        k = len(alpha)
        return cls(np.zeros(k) if c is None else c, d, np.zeros((k, k)), alpha)

    def mean(self, a: float) -> np.ndarray:
        """Component means under ``do(A = a)``, projected onto ``alpha^T x = a``."""
        mu = self.c + a * self.d
        return mu + self.alpha * (a - self.alpha @ mu) / (self.alpha @ self.alpha)

    @cached_property
    def _factor(self) -> np.ndarray:
        # sigma restricted to the orthogonal complement of alpha: x = mean + Q L z
        basis = null_space(self.alpha[None, :])
        restricted = basis.T @ self.sigma @ basis
        restricted = 0.5 * (restricted + restricted.T)
        if restricted.size == 0:
            return np.zeros((self.k, 0))
        w, v = np.linalg.eigh(restricted)
        return basis @ (v * np.sqrt(np.clip(w, 0.0, None)))

    def draw(self, a: float, n: int, rng: np.random.Generator) -> np.ndarray:
        factor = self._factor
        z = rng.standard_normal((n, factor.shape[1]))
        return self.mean(a) + z @ factor.T


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    residual: float
    passed: bool


@dataclass(frozen=True)
class ConstraintReport:
    checks: tuple[ConstraintCheck, ...]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> list[str]:
        return [f"{c.name} (residual {c.residual:.3g})" for c in self.checks if not c.passed]

    def __str__(self):
        return "\n".join(
            f"{'pass' if c.passed else 'FAIL'} {c.name}: residual={c.residual:.3e}" for c in self.checks
        )


def validate_gaussian_acid(acid: GaussianAcid, alpha=None, tol: float = CONSTRAINT_TOL) -> ConstraintReport:
    """Check the mean and covariance constraints of a Gaussian ACID.

    Residuals are absolute.  ``alpha`` defaults to the weights stored on
    the ACID.
    """
    alpha = acid.alpha if alpha is None else np.asarray(alpha, dtype=float)
    k = alpha.size
    if acid.c.size != k or acid.d.size != k or acid.sigma.shape != (k, k):
        raise ValueError(
            f"dimension mismatch: c={acid.c.shape}, d={acid.d.shape}, sigma={acid.sigma.shape}, k={k}"
        )
    sigma = acid.sigma
    asym = float(np.max(np.abs(sigma - sigma.T))) if k else 0.0
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (sigma + sigma.T)))) if k else 0.0
    residuals = {
        "intercepts sum_j alpha_j c_j = 0": abs(float(alpha @ acid.c)),
        "slopes sum_j alpha_j d_j = 1": abs(float(alpha @ acid.d) - 1.0),
        "covariance alpha^T sigma = 0": float(np.max(np.abs(alpha @ sigma))),
        "covariance symmetric PSD": max(asym, -min_eig, 0.0),
    }
    return ConstraintReport(tuple(ConstraintCheck(name, r, r <= tol) for name, r in residuals.items()))


def require_valid_acid(acid: GaussianAcid, tol: float = CONSTRAINT_TOL) -> None:
    report = validate_gaussian_acid(acid, tol=tol)
    if not report.passed:
        raise InvalidAcidError("invalid Gaussian ACID: " + "; ".join(report.failures()), report.failures())


def ace_gaussian(acid: GaussianAcid, beta) -> float:
    """Aggregate causal effect ``sum_j beta_j d_j`` of a valid Gaussian ACID."""
    require_valid_acid(acid)
    beta = np.asarray(beta, dtype=float)
    if beta.size != acid.k:
        raise ValueError(f"beta has length {beta.size}, expected k={acid.k}")
    return float(np.dot(beta, acid.d))


def sample_gaussian_intervention(acid: GaussianAcid, a: float, n: int, seed: int) -> Dataset:
    """Component draws under ``do(A = a)``; every row satisfies the aggregation rule.

    Draws are ``mean(a) + Q L z`` where the columns of ``Q`` span the
    orthogonal complement of ``alpha`` and ``L L^T = Q^T sigma Q``.
    """
    require_valid_acid(acid)
    draws = acid.draw(a, n, stream(seed, 0))
    return Dataset(tuple(f"a{j + 1}" for j in range(acid.k)), draws, {"a": float(a)})


def _mc_arms(sampler: Sampler, beta, a: float, n: int, seed: int):
    beta = np.asarray(beta, dtype=float)
    if n < 1:
        raise ValueError("n must be positive")
    low = sampler(a, n, stream(seed, 0)) @ beta
    high = sampler(a + 1.0, n, stream(seed, 1)) @ beta
    return low, high


def ace_monte_carlo(sampler: Sampler, beta, a: float, n: int, seed: int) -> float:
    """``mean(sum_j beta_j A_j | do(A=a+1)) - mean(... | do(A=a))`` over ``n`` draws each.

    The outcome's confounder and noise terms have mean zero and are dropped.
    """
    low, high = _mc_arms(sampler, beta, a, n, seed)
    return float(high.mean() - low.mean())


def ace_monte_carlo_se(sampler: Sampler, beta, a: float, n: int, seed: int) -> tuple[float, float]:
    """Like :func:`ace_monte_carlo` but also returns the Monte-Carlo standard error."""
    low, high = _mc_arms(sampler, beta, a, n, seed)
    se = np.sqrt(low.var(ddof=1) / n + high.var(ddof=1) / n) if n > 1 else float("nan")
    return float(high.mean() - low.mean()), float(se)


def natural_acid_from_scm(scm: AggregateIvScm) -> GaussianAcid:
    """Gaussian ACID matching the observational component moments given ``A = a``."""
    moments = population_moments(scm)
    labels = [f"a{j + 1}" for j in range(scm.k)]
    cov = moments.submatrix(labels)
    alpha = scm.alpha
    s = cov @ alpha
    var_a = float(alpha @ s)
    if not var_a > 0:
        raise InvalidModelError("degenerate aggregate variance: alpha^T Sigma' alpha must be positive")
    d = s / var_a
    sigma = cov - np.outer(s, s) / var_a
    sigma = 0.5 * (sigma + sigma.T)
    return GaussianAcid(np.zeros(scm.k), d, sigma, alpha)


def natural_ace(scm: AggregateIvScm) -> float:
    """``sum_j beta_j cov(A_j, A) / var(A)`` straight from the population moments."""
    moments = population_moments(scm)
    cov_ja = np.array([moments.covariance(f"a{j + 1}", "a") for j in range(scm.k)])
    return float(np.dot(scm.beta, cov_ja) / moments.variance("a"))


def _projector_sigma(alpha, scale):
    if scale < 0:
        raise ValueError("sigma scale must be non-negative")
    k = alpha.size
    return scale * (np.eye(k) - np.outer(alpha, alpha) / (alpha @ alpha))


def instrument_tuned_acid(scm: AggregateIvScm, instrument_index: int = 0, scale: float = 1.0) -> GaussianAcid:
    """Gaussian ACID whose slopes follow the instrument: ``d_j = delta_lj / sum_i alpha_i delta_li``.

    Intercepts are zero and ``sigma = scale * (I - alpha alpha^T / |alpha|^2)``.
    """
    require_valid(scm)
    iv_estimand_population(scm, instrument_index)  # relevance
    row = scm.delta[instrument_index]
    d = row / float(np.dot(scm.alpha, row))
    return GaussianAcid(np.zeros(scm.k), d, _projector_sigma(scm.alpha, scale), scm.alpha)


def partially_instrument_tuned_acid(
    scm: AggregateIvScm,
    proportional_set: Iterable[int],
    instrument_index: int = 0,
    scale: float = 1.0,
    tol: float = 1e-9,
) -> GaussianAcid:
    """Instrument-tune only the components outside ``proportional_set``.

    Components in the set must share ``beta_j / alpha_j = tau``.  Their
    slopes absorb the remainder of ``sum_j alpha_j d_j = 1`` in proportion
    to ``alpha_j``: ``d_j = r alpha_j / sum_{i in set} alpha_i^2``.
    """
    require_valid(scm)
    iv_estimand_population(scm, instrument_index)
    members = sorted(set(int(j) for j in proportional_set))
    k = scm.k
    if any(j < 0 or j >= k for j in members):
        raise ValueError(f"proportional_set {members} out of range for k={k}")
    alpha = scm.alpha
    if members:
        sub = AggregateIvScm(alpha[members], scm.beta[members], scm.delta[:, members])
        if np.any(sub.alpha == 0) or check_proportional_aggregation(sub, tol) is None:
            raise InvalidModelError(f"components {members} are not proportional (beta_j / alpha_j differ)")
    row = scm.delta[instrument_index]
    tuned = row / float(np.dot(alpha, row))
    outside = [j for j in range(k) if j not in members]
    d = np.zeros(k)
    d[outside] = tuned[outside]
    if members:
        remainder = 1.0 - float(np.dot(alpha[outside], d[outside]))
        d[members] = remainder * alpha[members] / float(np.dot(alpha[members], alpha[members]))
    return GaussianAcid(np.zeros(k), d, _projector_sigma(alpha, scale), alpha)


@dataclass(frozen=True)
class SymmetricMarginalAcid:
    """An ACID under which every ``alpha_j A_j`` has the same marginal.

    Realised by the deterministic Gaussian ACID ``A_j = a / (k alpha_j)``.
    """

    alpha: np.ndarray

    def __post_init__(self):
        alpha = _array(self.alpha, 1)
        if np.any(alpha == 0):
            raise InvalidModelError("zero aggregation weight: symmetric marginals need every alpha_j != 0")
        object.__setattr__(self, "alpha", alpha)

    def to_gaussian(self) -> GaussianAcid:
        k = self.alpha.size
        return GaussianAcid.deterministic(1.0 / (k * self.alpha), self.alpha)

    def draw(self, a: float, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.to_gaussian().draw(a, n, rng)


def symmetric_marginal_ace(scm: AggregateIvScm) -> float:
    """ACE ``sum_j beta_j / (k alpha_j)`` of any symmetric-marginal ACID."""
    if np.any(scm.alpha == 0):
        raise InvalidModelError("zero aggregation weight: symmetric marginals need every alpha_j != 0")
    return float(np.sum(scm.beta / (scm.k * scm.alpha)))


COUNTEREXAMPLE_BETA = (2.0, 3.0)
COUNTEREXAMPLE_SUPPORT = (-3.0, 3.0)


def _check_support(a):
    lo, hi = COUNTEREXAMPLE_SUPPORT
    if not lo <= a <= hi:
        raise OutOfSupportError(f"intervention value {a} outside the ACID support [{lo}, {hi}]")


def counterexample_a2_range(a: float) -> tuple[float, float]:
    """Support of ``A_2`` under ``do(A = a)``: that of ``Z_2 | Z_1 + Z_2 = a``."""
    _check_support(a)
    return max(a - 2.0, -1.0), min(a + 2.0, 1.0)


def counterexample_a2_density(a2: float, a: float) -> float:
    """Density of ``A_2`` under ``do(A = a)`` (uniform on its support)."""
    lo, hi = counterexample_a2_range(a)
    return 1.0 / (hi - lo) if lo <= a2 <= hi else 0.0


def counterexample_a2_mean(a: float) -> float:
    """Piecewise closed form of ``E[A_2 | do(A = a)]``: the midpoint of its support."""
    _check_support(a)
    if a <= -1.0:
        return (a + 1.0) / 2.0
    if a <= 1.0:
        return 0.0
    return (a - 1.0) / 2.0


@dataclass(frozen=True)
class UniformCounterexampleAcid:
    """Two-component ACID that is surgical but not value independent.

    ``A_1 ~ Uniform[-2, 2]`` and ``A_2`` follows the conditional law of
    ``Z_2`` given ``Z_1 + Z_2 = a`` for independent ``Z_1 ~ U[-2, 2]``,
    ``Z_2 ~ U[-1, 1]``.  The two are drawn independently, so only the
    marginals are specified; the aggregation rule holds for neither draw.
    """

    def draw(self, a: float, n: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = counterexample_a2_range(a)
        a1 = rng.uniform(-2.0, 2.0, n)
        a2 = rng.uniform(lo, hi, n)
        return np.column_stack([a1, a2])


def uniform_counterexample_delta(a: float, beta=COUNTEREXAMPLE_BETA) -> float:
    """``E[Y | do(A = a+1)] - E[Y | do(A = a)]`` under the counterexample ACID.

    ``E[A_1 | do(A = a)] = 0`` for every ``a``, so only ``A_2`` contributes.
    """
    _check_support(a)
    _check_support(a + 1.0)
    return beta[1] * (counterexample_a2_mean(a + 1.0) - counterexample_a2_mean(a))
