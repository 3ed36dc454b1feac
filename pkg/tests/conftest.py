import numpy as np
import pytest

from proxdiv.data import CAUCHY_TABLE1
from proxdiv.models import CauchyScale, GaussMix2, Sample, WeibullMix2

GAUSS_TRUTH = (0.35, 2.0, 1.5)
WEIBULL_TRUTH = (0.35, 0.5, 3.0)


@pytest.fixture
def gauss():
    return GaussMix2()


@pytest.fixture
def weibull():
    return WeibullMix2()


@pytest.fixture
def cauchy():
    return CauchyScale()


@pytest.fixture
def table1():
    return Sample(CAUCHY_TABLE1, "table1")


@pytest.fixture
def gauss_sample(gauss):
    rng = np.random.default_rng(12)
    return Sample(gauss.sample(GAUSS_TRUTH, 100, rng), "clean", 12)


@pytest.fixture
def weibull_sample(weibull):
    rng = np.random.default_rng(7)
    return Sample(weibull.sample(WEIBULL_TRUTH, 100, rng), "clean", 7)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
