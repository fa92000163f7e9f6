"""Aggregation as an exclusion-restriction violation.

With standard Gaussian errors and one instrument, the joint law of
``(I, U, A, Y)`` under the aggregate model equals that of a classic IV
model with a direct instrument-to-outcome edge::

    A' <- delta_a' I + gamma_a' U + eps_a'
    Y' <- beta' A' + gamma_y' U + delta_y' I + eps_y'
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import PreconditionError
from .scm import AggregateIvScm, population_moments, require_valid
from .seeding import stream

LABELS = ("i1", "u", "a", "y")


@dataclass(frozen=True)
class ExclusionViolationScm:
    beta_prime: float
    delta_a_prime: float
    gamma_a_prime: float
    delta_y_prime: float
    gamma_y_prime: float
    var_eps_a_prime: float
    var_eps_y_prime: float

    def __post_init__(self):
        if not self.var_eps_a_prime > 0:
            raise PreconditionError("var_eps_a_prime must be positive")
        if not self.var_eps_y_prime >= 1.0:
            raise PreconditionError("var_eps_y_prime must be at least 1")


def _require_prop1_domain(scm: AggregateIvScm) -> None:
    require_valid(scm)
    if scm.m != 1:
        raise PreconditionError(f"exclusion-violation equivalence needs a single instrument, got m={scm.m}")
    if not scm.has_unit_variances():
        raise PreconditionError(
            "exclusion-violation equivalence requires standard Gaussian errors (all variances equal to 1)"
        )


def lagrange_minor_sum(alpha, beta) -> float:
    """``sum_{l<j} (beta_l alpha_j - beta_j alpha_l)^2``."""
    total = 0.0
    k = len(alpha)
    for l in range(k):
        for j in range(l + 1, k):
            total += (beta[l] * alpha[j] - beta[j] * alpha[l]) ** 2
    return total


def exclusion_violation_equivalent(scm: AggregateIvScm) -> ExclusionViolationScm:
    """Map a unit-variance, single-instrument aggregate model to its equivalent."""
    _require_prop1_domain(scm)
    alpha, beta = scm.alpha, scm.beta
    delta = scm.delta[0]
    norm2 = float(alpha @ alpha)
    beta_p = float(alpha @ beta) / norm2
    delta_a = float(alpha @ delta)
    gamma_a = float(alpha @ scm.gamma_a)
    return ExclusionViolationScm(
        beta_prime=beta_p,
        delta_a_prime=delta_a,
        gamma_a_prime=gamma_a,
        delta_y_prime=float(beta @ delta) - beta_p * delta_a,
        gamma_y_prime=float(beta @ scm.gamma_a) + scm.gamma_y - beta_p * gamma_a,
        var_eps_a_prime=norm2,
        var_eps_y_prime=1.0 + lagrange_minor_sum(alpha, beta) / norm2,
    )


def exclusion_violation_moments(eq: ExclusionViolationScm) -> np.ndarray:
    """Covariance matrix of ``(I, U, A, Y)`` under the exclusion-violating model."""
    # rows: I, U, A, Y in terms of (eps_i, eps_u, eps_a, eps_y)
    load = np.zeros((4, 4))
    load[0, 0] = 1.0
    load[1, 1] = 1.0
    load[2] = [eq.delta_a_prime, eq.gamma_a_prime, 1.0, 0.0]
    load[3] = eq.beta_prime * load[2] + eq.gamma_y_prime * load[1] + eq.delta_y_prime * load[0]
    load[3, 3] = 1.0
    err_var = np.array([1.0, 1.0, eq.var_eps_a_prime, eq.var_eps_y_prime])
    cov = (load * err_var) @ load.T
    return 0.5 * (cov + cov.T)


def aggregate_moments(scm: AggregateIvScm) -> np.ndarray:
    """Covariance of ``(I, U, A, Y)`` under the aggregate model."""
    return population_moments(scm).submatrix(LABELS)


def verify_distribution_equivalence(scm: AggregateIvScm, eq: ExclusionViolationScm) -> float:
    """Largest absolute difference between the two implied 4x4 covariance matrices."""
    _require_prop1_domain(scm)
    return float(np.max(np.abs(aggregate_moments(scm) - exclusion_violation_moments(eq))))


def sample_exclusion_violation(eq: ExclusionViolationScm, n: int, seed: int) -> Dataset:
    """Draws of ``i1, u, a, y`` from the exclusion-violating model."""
    i = stream(seed, 0, 0).standard_normal(n)
    u = stream(seed, 1).standard_normal(n)
    a = eq.delta_a_prime * i + eq.gamma_a_prime * u + stream(seed, 2, 0).standard_normal(n) * np.sqrt(eq.var_eps_a_prime)
    y = eq.beta_prime * a + eq.gamma_y_prime * u + eq.delta_y_prime * i
    y = y + stream(seed, 3).standard_normal(n) * np.sqrt(eq.var_eps_y_prime)
    return Dataset(LABELS, np.column_stack([i, u, a, y]))
