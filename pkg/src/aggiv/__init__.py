"""Instrumental-variable estimation with aggregate treatments.

Simulate linear SCMs whose treatment is a weighted sum of unobserved
components, compute population IV estimands and aggregate causal effects
in closed form, and reproduce the accompanying simulation studies.
"""

__version__ = "0.1.0"

from .acid import (
    GaussianAcid,
    SymmetricMarginalAcid,
    UniformCounterexampleAcid,
    ace_gaussian,
    ace_monte_carlo,
    instrument_tuned_acid,
    natural_acid_from_scm,
    partially_instrument_tuned_acid,
    sample_gaussian_intervention,
    symmetric_marginal_ace,
    uniform_counterexample_delta,
    validate_gaussian_acid,
)
from .dataset import Dataset
from .diagnostics import SarganReport, instrument_treatment_correlation, sargan_power_curve, sargan_test
from .equivalence import ExclusionViolationScm, exclusion_violation_equivalent, verify_distribution_equivalence
from .estimators import EstimateReport, first_stage_f, fit_2sls, per_instrument_population_estimands
from .scm import (
    AggregateInstrumentSpec,
    AggregateIvScm,
    AggregateOutcomeSpec,
    PopulationMoments,
    aggregate_instrument_estimand,
    aggregate_outcome_estimand,
    check_proportional_aggregation,
    iv_estimand_population,
    population_moments,
    sample_observational,
    validate_scm,
)
