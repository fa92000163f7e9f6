"""Linear SCM with an aggregate treatment.

The data generating process is::

    U   <- eps_u
    I_l <- eps_i_l                                   l = 1..m
    A_j <- sum_l delta[l, j] I_l + gamma_a[j] U + eps_a_j   j = 1..k
    A    = sum_j alpha[j] A_j                        (aggregation rule)
    Y   <- sum_j beta[j] A_j + gamma_y U + eps_y

with mutually independent, mean-zero Gaussian errors and no intercepts.
Column/label order everywhere is ``i1..im, u, a1..ak, a, y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset
from .errors import InvalidModelError, IrrelevantInstrumentError
from .seeding import stream

# Relative size below which a sum of products is treated as cancelled to zero.
RELEVANCE_RTOL = 1e-12


def aggregate(weights, terms):
    """Return ``sum_j weights[j] * terms[j]`` accumulated in ascending ``j``.

    Every aggregate in the package (the ``a`` column of a dataset, the ``a``
    row of the covariance matrix) goes through this function, so results
    are bit-reproducible and can be checked for exact equality.
    """
    total = None
    for w, t in zip(weights, terms):
        term = w * t
        total = term if total is None else total + term
    if total is None:
        raise ValueError("empty aggregate")
    return total


def _frozen(x, ndim):
    arr = np.array(x, dtype=float, copy=True)
    if ndim == 2:
        arr = np.atleast_2d(arr)
    else:
        arr = np.atleast_1d(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AggregateIvScm:
    """Parameters of the aggregate-treatment IV model.

    ``delta`` is ``m x k``: row ``l`` holds the effects of instrument
    ``I_l`` on every component.  Omitted confounder effects default to
    zero and omitted error variances to one.  Construction never fails on
    inconsistent shapes; call :func:`validate_scm` to list problems.
    """

    alpha: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    gamma_a: Optional[np.ndarray] = None
    gamma_y: float = 0.0
    var_u: float = 1.0
    var_i: Optional[np.ndarray] = None
    var_a: Optional[np.ndarray] = None
    var_y: float = 1.0

    def __post_init__(self):
        alpha = _frozen(self.alpha, 1)
        delta = _frozen(self.delta, 2)
        setattr_ = object.__setattr__
        setattr_(self, "alpha", alpha)
        setattr_(self, "beta", _frozen(self.beta, 1))
        setattr_(self, "delta", delta)
        k, m = alpha.size, delta.shape[0]
        setattr_(self, "gamma_a", _frozen(np.zeros(k) if self.gamma_a is None else self.gamma_a, 1))
        setattr_(self, "var_i", _frozen(np.ones(m) if self.var_i is None else self.var_i, 1))
        setattr_(self, "var_a", _frozen(np.ones(k) if self.var_a is None else self.var_a, 1))
        setattr_(self, "gamma_y", float(self.gamma_y))
        setattr_(self, "var_u", float(self.var_u))
        setattr_(self, "var_y", float(self.var_y))

    @property
    def k(self) -> int:
        return self.alpha.size

    @property
    def m(self) -> int:
        return self.delta.shape[0]

    @property
    def labels(self) -> tuple[str, ...]:
        return observational_labels(self.k, self.m)

    def has_unit_variances(self) -> bool:
        return bool(
            self.var_u == 1.0
            and self.var_y == 1.0
            and np.all(self.var_i == 1.0)
            and np.all(self.var_a == 1.0)
        )


def observational_labels(k: int, m: int) -> tuple[str, ...]:
    return (
        tuple(f"i{l + 1}" for l in range(m))
        + ("u",)
        + tuple(f"a{j + 1}" for j in range(k))
        + ("a", "y")
    )


def validate_scm(scm: AggregateIvScm) -> list[str]:
    """Return a list of violated invariants; empty when the model is valid."""
    problems = []
    k, m = scm.k, scm.m
    if k < 1:
        problems.append("dimension: alpha must have at least one component")
    if scm.delta.ndim != 2 or m < 1:
        problems.append("dimension: delta must be an m x k matrix with m >= 1")
    for name in ("beta", "gamma_a", "var_a"):
        size = getattr(scm, name).size
        if size != k:
            problems.append(f"dimension: {name} has length {size}, expected k={k}")
    if scm.delta.ndim == 2 and scm.delta.shape[1] != k:
        problems.append(f"dimension: delta has {scm.delta.shape[1]} columns, expected k={k}")
    if scm.var_i.size != m:
        problems.append(f"dimension: var_i has length {scm.var_i.size}, expected m={m}")
    for name in ("var_u", "var_y"):
        if not getattr(scm, name) > 0:
            problems.append(f"variance: {name} must be strictly positive")
    for name in ("var_i", "var_a"):
        if not np.all(getattr(scm, name) > 0):
            problems.append(f"variance: every entry of {name} must be strictly positive")
    params = [scm.alpha, scm.beta, scm.delta, scm.gamma_a, scm.var_i, scm.var_a,
              [scm.gamma_y, scm.var_u, scm.var_y]]
    if not all(np.all(np.isfinite(p)) for p in params):
        problems.append("finite: all parameters must be finite")
    if k >= 1 and not np.any(scm.alpha != 0):
        problems.append("degenerate aggregate: at least one alpha_j must be non-zero")
    return problems


def require_valid(scm: AggregateIvScm) -> None:
    problems = validate_scm(scm)
    if problems:
        raise InvalidModelError("invalid SCM: " + "; ".join(problems), problems)


@dataclass(frozen=True)
class PopulationMoments:
    """Exact covariance matrix over ``i1..im, u, a1..ak, a, y``."""

    labels: tuple[str, ...]
    cov: np.ndarray

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def covariance(self, x: str, y: str) -> float:
        return float(self.cov[self.index(x), self.index(y)])

    def variance(self, x: str) -> float:
        return self.covariance(x, x)

    def correlation(self, x: str, y: str) -> float:
        return self.covariance(x, y) / np.sqrt(self.variance(x) * self.variance(y))

    def submatrix(self, labels: Sequence[str]) -> np.ndarray:
        idx = [self.index(label) for label in labels]
        return self.cov[np.ix_(idx, idx)]


def population_moments(scm: AggregateIvScm) -> PopulationMoments:
    """Closed-form covariance matrix of the observational distribution.

    Each variable is written as a linear combination of the independent
    errors, ``V = L eps``, so ``cov(V) = L diag(var(eps)) L^T``.  The row for
    ``A`` is then filled in with :func:`aggregate` over the component rows,
    making it an exact alpha-combination of them.
    """
    require_valid(scm)
    k, m = scm.k, scm.m
    # error order: eps_i (m), eps_u, eps_a (k), eps_y
    n_err = m + 1 + k + 1
    err_var = np.concatenate([scm.var_i, [scm.var_u], scm.var_a, [scm.var_y]])
    load = np.zeros((m + 1 + k + 1, n_err))  # rows: I (m), U, A_j (k), Y
    load[:m, :m] = np.eye(m)
    load[m, m] = 1.0
    comp = slice(m + 1, m + 1 + k)
    load[comp, :m] = scm.delta.T
    load[comp, m] = scm.gamma_a
    load[comp, m + 1:m + 1 + k] = np.eye(k)
    load[-1] = scm.beta @ load[comp] + scm.gamma_y * load[m]
    load[-1, -1] = 1.0
    base = (load * err_var) @ load.T
    base = 0.5 * (base + base.T)

    comp_rows = [base[m + 1 + j] for j in range(k)]
    a_row = aggregate(scm.alpha, comp_rows)
    a_var = aggregate(scm.alpha, [a_row[m + 1 + j] for j in range(k)])

    p = base.shape[0] + 1
    a_idx = m + 1 + k
    keep = [i for i in range(p) if i != a_idx]
    cov = np.empty((p, p))
    cov[np.ix_(keep, keep)] = base
    cov[a_idx, keep] = a_row
    cov[keep, a_idx] = a_row
    cov[a_idx, a_idx] = a_var
    cov.setflags(write=False)
    return PopulationMoments(observational_labels(k, m), cov)


def _check_relevance(num_terms, what):
    den = float(np.sum(num_terms))
    scale = float(np.sum(np.abs(num_terms)))
    if scale == 0.0 or abs(den) <= RELEVANCE_RTOL * scale:
        raise IrrelevantInstrumentError(f"irrelevant instrument: {what} has no effect on the aggregate")
    return den


def iv_estimand_population(scm: AggregateIvScm, instrument_index: int = 0) -> float:
    """Population IV estimand ``sum_j beta_j delta_lj / sum_j alpha_j delta_lj``.

    ``instrument_index`` is zero-based (column ``i1`` is index 0).
    """
    require_valid(scm)
    row = scm.delta[instrument_index]
    den = _check_relevance(scm.alpha * row, f"instrument {instrument_index}")
    return float(np.dot(scm.beta, row)) / den


def check_proportional_aggregation(scm: AggregateIvScm, tol: float = 1e-9) -> Optional[float]:
    """Return the common ratio ``tau = beta_j / alpha_j`` or ``None``.

    ``tol`` is relative to ``max(1, |tau|)``.
    """
    if np.any(scm.alpha == 0):
        raise InvalidModelError("undefined ratio: proportional aggregation needs every alpha_j != 0")
    ratios = scm.beta / scm.alpha
    tau = float(ratios[0])
    if np.max(np.abs(ratios - tau)) <= tol * max(1.0, abs(tau)):
        return tau
    return None


def _draw_observational(scm: AggregateIvScm, n: int, seed: int):
    # stream keys: (0, l) instrument l, (1,) confounder, (2, j) component j, (3,) outcome
    k, m = scm.k, scm.m
    instruments = [stream(seed, 0, l).standard_normal(n) * np.sqrt(scm.var_i[l]) for l in range(m)]
    u = stream(seed, 1).standard_normal(n) * np.sqrt(scm.var_u)
    components = []
    for j in range(k):
        a_j = scm.gamma_a[j] * u + stream(seed, 2, j).standard_normal(n) * np.sqrt(scm.var_a[j])
        for l in range(m):
            a_j = a_j + scm.delta[l, j] * instruments[l]
        components.append(a_j)
    return instruments, u, components


def sample_observational(scm: AggregateIvScm, n: int, seed: int) -> Dataset:
    """Draw ``n`` observations; identical ``(scm, n, seed)`` give identical bytes."""
    require_valid(scm)
    if n < 0:
        raise ValueError("n must be non-negative")
    instruments, u, components = _draw_observational(scm, n, seed)
    a = aggregate(scm.alpha, components)
    y = aggregate(scm.beta, components) + scm.gamma_y * u
    y = y + stream(seed, 3).standard_normal(n) * np.sqrt(scm.var_y)
    values = np.column_stack(instruments + [u] + components + [a, y]) if n else np.empty((0, scm.k + scm.m + 3))
    return Dataset(scm.labels, values)


@dataclass(frozen=True)
class AggregateOutcomeSpec:
    """Outcome built as ``Y = sum_i omega_i Y_i`` from ``m_y`` sub-outcomes.

    ``beta_matrix[j, i]`` is the effect of component ``A_j`` on ``Y_i``.
    """

    omega: np.ndarray
    beta_matrix: np.ndarray
    gamma_y_vec: Optional[np.ndarray] = None
    var_y_vec: Optional[np.ndarray] = None

    def __post_init__(self):
        omega = _frozen(self.omega, 1)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "beta_matrix", _frozen(self.beta_matrix, 2))
        my = omega.size
        gy = np.zeros(my) if self.gamma_y_vec is None else self.gamma_y_vec
        vy = np.ones(my) if self.var_y_vec is None else self.var_y_vec
        object.__setattr__(self, "gamma_y_vec", _frozen(gy, 1))
        object.__setattr__(self, "var_y_vec", _frozen(vy, 1))

    def validate(self, k: int) -> list[str]:
        my = self.omega.size
        problems = []
        if self.beta_matrix.shape != (k, my):
            problems.append(f"dimension: beta_matrix has shape {self.beta_matrix.shape}, expected {(k, my)}")
        if self.gamma_y_vec.size != my or self.var_y_vec.size != my:
            problems.append("dimension: gamma_y_vec and var_y_vec must match omega")
        if not np.all(self.var_y_vec > 0):
            problems.append("variance: var_y_vec entries must be strictly positive")
        if not np.any(self.omega != 0):
            problems.append("degenerate aggregate: at least one omega_i must be non-zero")
        return problems


@dataclass(frozen=True)
class AggregateInstrumentSpec:
    """Instrument built as ``I = sum_l eta_l I_l``."""

    eta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eta", _frozen(self.eta, 1))

    def combine(self, data: Dataset) -> np.ndarray:
        """The aggregated instrument column of an observational dataset."""
        return aggregate(self.eta, [data[f"i{l + 1}"] for l in range(self.eta.size)])


def aggregate_outcome_estimand(scm: AggregateIvScm, spec: AggregateOutcomeSpec) -> float:
    """IV estimand when the outcome itself is an aggregate of sub-outcomes."""
    require_valid(scm)
    problems = spec.validate(scm.k)
    if problems:
        raise InvalidModelError("invalid aggregate outcome: " + "; ".join(problems), problems)
    if scm.m != 1:
        raise InvalidModelError("aggregate outcome estimand is defined for a single instrument (m = 1)")
    delta = scm.delta[0]
    den = _check_relevance(scm.alpha * delta, "instrument 0")
    per_outcome = (delta @ spec.beta_matrix) / den
    return float(np.dot(spec.omega, per_outcome))


def sample_aggregate_outcome(scm: AggregateIvScm, spec: AggregateOutcomeSpec, n: int, seed: int) -> Dataset:
    """Observational draws with sub-outcomes ``y1..y{m_y}`` and their aggregate ``y``.

    The model's own ``beta``, ``gamma_y`` and ``var_y`` are ignored in favour
    of ``spec``.  Sub-outcome noise uses stream keys ``(4, i)``.
    """
    require_valid(scm)
    problems = spec.validate(scm.k)
    if problems:
        raise InvalidModelError("invalid aggregate outcome: " + "; ".join(problems), problems)
    instruments, u, components = _draw_observational(scm, n, seed)
    a = aggregate(scm.alpha, components)
    outcomes = []
    for i in range(spec.omega.size):
        y_i = aggregate(spec.beta_matrix[:, i], components) + spec.gamma_y_vec[i] * u
        outcomes.append(y_i + stream(seed, 4, i).standard_normal(n) * np.sqrt(spec.var_y_vec[i]))
    y = aggregate(spec.omega, outcomes)
    labels = scm.labels[:-1] + tuple(f"y{i + 1}" for i in range(spec.omega.size)) + ("y",)
    return Dataset(labels, np.column_stack(instruments + [u] + components + [a] + outcomes + [y]))


def aggregate_instrument_estimand(scm: AggregateIvScm, spec: AggregateInstrumentSpec) -> float:
    """IV estimand using ``I = sum_l eta_l I_l`` as the single instrument.

    The first-stage slopes ``xi_j = cov(A_j, I) / var(I)`` come from
    :func:`population_moments`; the estimand is
    ``sum_j beta_j xi_j / sum_j alpha_j xi_j``.
    """
    moments = population_moments(scm)
    if spec.eta.size != scm.m:
        raise InvalidModelError(f"eta has length {spec.eta.size}, expected m={scm.m}")
    if not np.any(spec.eta != 0):
        raise InvalidModelError("degenerate aggregate: at least one eta_l must be non-zero")
    inst = [moments.index(f"i{l + 1}") for l in range(scm.m)]
    comp = [moments.index(f"a{j + 1}") for j in range(scm.k)]
    var_i = float(spec.eta @ moments.cov[np.ix_(inst, inst)] @ spec.eta)
    if not var_i > 0:
        raise IrrelevantInstrumentError("aggregated instrument has zero variance")
    xi = (spec.eta @ moments.cov[np.ix_(inst, comp)]) / var_i
    den = _check_relevance(scm.alpha * xi, "aggregated instrument")
    return float(np.dot(scm.beta, xi)) / den
