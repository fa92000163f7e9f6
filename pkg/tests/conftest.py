import sys

import numpy as np
import pytest

from aggiv.scm import AggregateIvScm


def random_scm(rng, k=None, m=1, unit_variances=False, min_relevance=0.3):
    """A random valid model whose instruments are all clearly relevant."""
    k = int(rng.integers(1, 7)) if k is None else k
    alpha = rng.uniform(0.5, 2.0, k) * rng.choice([-1.0, 1.0], k)
    while True:
        delta = rng.normal(size=(m, k))
        if np.all(np.abs(delta @ alpha) >= min_relevance):
            break
    if unit_variances:
        var = dict(var_u=1.0, var_i=np.ones(m), var_a=np.ones(k), var_y=1.0)
    else:
        var = dict(
            var_u=rng.uniform(0.5, 2.0),
            var_i=rng.uniform(0.5, 2.0, m),
            var_a=rng.uniform(0.5, 2.0, k),
            var_y=rng.uniform(0.5, 2.0),
        )
    return AggregateIvScm(
        alpha=alpha,
        beta=rng.normal(scale=2.0, size=k),
        delta=delta,
        gamma_a=rng.normal(size=k),
        gamma_y=rng.normal(),
        **var,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def base_scm():
    """k = 2 model with every coefficient 1 and beta = (1, 2)."""
    return AggregateIvScm(alpha=[1, 1], beta=[1, 2], delta=[[1, 1]], gamma_a=[1, 1], gamma_y=1)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "SUMMARY", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
