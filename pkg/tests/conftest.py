import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("default")


def monomial_exponents(d, degree):
    """Graded order by brute force: modulus first, then larger leading exponents first."""
    every = [a for a in itertools.product(range(degree + 1), repeat=d) if sum(a) <= degree]
    return sorted(every, key=lambda a: (sum(a), tuple(-e for e in a)))


def monomial_row(point, exponents):
    return np.array([np.prod([p ** e for p, e in zip(point, a)]) for a in exponents])


def direct_moments(panel, degree, weights=None):
    """Moments by explicit summation over samples (no matrix algebra)."""
    panel = np.atleast_2d(panel)
    n, d = panel.shape
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    exps = monomial_exponents(d, degree)
    out = np.zeros(len(exps))
    for wi, x in zip(w, panel):
        out += wi * monomial_row(x, exps)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log
    if acceptance_log.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.lines():
            terminalreporter.write_line(line)
