import math

import numpy as np
import pytest
from _oracles import weibull_mix_pdf
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sci
from scipy import special, stats

from conftest import GAUSS_TRUTH, WEIBULL_TRUTH
from proxdiv import expharness
from proxdiv.errors import DomainError
from proxdiv.models import GaussMix2, Sample, WeibullMix2
from proxdiv.numerics import OptimizerOptions
from proxdiv.objectives import EstimatorSpec
from proxdiv.proximal import AlgorithmSpec
from proxdiv.expharness import (ExperimentConfig, chi2_error, contaminate_gaussian, contaminate_weibull, draw_sample,
                                emit_runs, emit_table, fmt4, run_monte_carlo, tvd_error)

GAUSS = GaussMix2()
gauss_points = st.tuples(st.floats(0.1, 0.9), st.floats(-5, 5), st.floats(-5, 5))


# --- error metrics --------------------------------------------------------------------------------------------------

def test_tvd_between_shifted_unit_normals(gauss):
    assert tvd_error(gauss, (0.5, 0.0, 0.0), (0.5, 1.0, 1.0)) == pytest.approx(2 * stats.norm.cdf(0.5) - 1, abs=1e-6)
    assert tvd_error(gauss, (0.5, 0.0, 0.0), (0.5, 1.0, 1.0)) == pytest.approx(0.38292, abs=1e-5)


def test_tvd_weibull_matches_quadrature(weibull):
    other = (0.5, 0.7, 2.5)
    f = lambda x: abs(weibull_mix_pdf(other, x) - weibull_mix_pdf(WEIBULL_TRUTH, x))
    oracle = 0.5 * sum(sci.quad(f, a, b, limit=500, epsabs=1e-12)[0] for a, b in [(0, 1), (1, 5), (5, np.inf)])
    assert tvd_error(weibull, other, WEIBULL_TRUTH) == pytest.approx(oracle, abs=1e-7)


@settings(max_examples=30, deadline=None)
@given(gauss_points, gauss_points, gauss_points)
def test_tvd_is_a_metric(a, b, c):
    ab, ba = tvd_error(GAUSS, a, b), tvd_error(GAUSS, b, a)
    assert 0.0 <= ab <= 1.0
    assert ab == pytest.approx(ba, abs=1e-9)
    assert tvd_error(GAUSS, a, a) == 0.0
    assert ab <= tvd_error(GAUSS, a, c) + tvd_error(GAUSS, c, b) + 1e-8


def test_tvd_ignores_label_switching(gauss):
    assert tvd_error(gauss, (0.35, 2.0, 1.5), (0.65, 1.5, 2.0)) == pytest.approx(0.0, abs=1e-12)


def test_chi2_gaussian_closed_form(gauss):
    # single normals: int (p_a - p_b)^2 / p_b = exp(d^2) - 1
    d = 0.7
    assert chi2_error(gauss, (0.5, d, d), (0.5, 0.0, 0.0)) == pytest.approx(math.expm1(d * d), rel=1e-8)
    assert chi2_error(gauss, GAUSS_TRUTH, GAUSS_TRUTH) == 0.0


def test_chi2_weibull_heavier_tail_or_spike_is_infinite(weibull):
    # a smaller first shape than the truth makes p_hat^2 / p_true blow up at 0
    assert chi2_error(weibull, (0.35, 0.3, 3.0), WEIBULL_TRUTH) == math.inf
    finite = chi2_error(weibull, (0.35, 0.55, 3.0), WEIBULL_TRUTH)
    assert 0.0 < finite < math.inf


# --- contamination --------------------------------------------------------------------------------------------------

@pytest.mark.parametrize("mode", ["add", "replace"])
def test_gaussian_tail_contamination(gauss_sample, mode):
    y = gauss_sample.observations
    out = contaminate_gaussian(gauss_sample, np.random.default_rng(0), mode=mode).observations
    assert out.size == y.size
    order = np.argsort(y)
    low, high, mid = order[:5], order[-5:], order[5:-5]
    np.testing.assert_array_equal(out[mid], y[mid])
    shift_lo = out[low] - (y[low] if mode == "add" else 0)
    shift_hi = out[high] - (y[high] if mode == "add" else 0)
    assert np.all((shift_lo >= -5) & (shift_lo <= -2))
    assert np.all((shift_hi >= 2) & (shift_hi <= 5))
    again = contaminate_gaussian(gauss_sample, np.random.default_rng(0), mode=mode).observations
    np.testing.assert_array_equal(out, again)


def test_gaussian_contamination_errors(gauss_sample):
    with pytest.raises(ValueError):
        contaminate_gaussian(gauss_sample, np.random.default_rng(0), mode="swap")
    with pytest.raises(DomainError):
        contaminate_gaussian(np.arange(6.0), np.random.default_rng(0))


def test_weibull_replacement_contamination(weibull_sample):
    y = weibull_sample.observations
    out = contaminate_weibull(weibull_sample, np.random.default_rng(1)).observations
    assert out.size == y.size
    assert np.sum(out != y) == 10
    assert np.all(out > 0)


def test_weibull_outlier_law():
    rng = np.random.default_rng(2)
    draws = contaminate_weibull(np.ones(100_000), rng, k=100_000).observations
    mean = expharness.OUTLIER_SCALE * special.gamma(1 + 1 / expharness.OUTLIER_SHAPE)
    assert mean == pytest.approx(3.157, abs=1e-3)
    assert draws.mean() == pytest.approx(mean, rel=0.01)
    ks = stats.kstest(draws, stats.weibull_min(expharness.OUTLIER_SHAPE, scale=expharness.OUTLIER_SCALE).cdf)
    assert ks.statistic < 0.01


# --- Monte Carlo runner ---------------------------------------------------------------------------------------------

def small_config(**kw):
    est = kw.pop("estimator", EstimatorSpec.log_likelihood())
    algo = kw.pop("algorithm", AlgorithmSpec("closed_form_em", max_iters=500))
    return ExperimentConfig(GaussMix2(), GAUSS_TRUTH, est, algo, runs=kw.pop("runs", 4), base_seed=11, **kw)


def test_draw_sample_is_deterministic_and_independent_of_run_order():
    cfg = small_config(contamination="gaussian_tails")
    a, _ = draw_sample(cfg, 2)
    b, _ = draw_sample(cfg, 2)
    c, _ = draw_sample(cfg, 3)
    np.testing.assert_array_equal(a.observations, b.observations)
    assert not np.array_equal(a.observations, c.observations)
    assert a.seed == 13


def test_monte_carlo_is_reproducible():
    cfg = small_config(check_init=False)
    s1, s2 = run_monte_carlo(cfg), run_monte_carlo(cfg)
    np.testing.assert_array_equal(s1.estimates, s2.estimates)
    assert s1.failures == 0
    assert s1.tvd == s2.tvd
    assert all(0 < r.tvd < 0.5 for r in s1.results)


def test_monte_carlo_with_mdpd_and_traces():
    cfg = small_config(estimator=EstimatorSpec.mdpd(0.5), runs=2,
                       algorithm=AlgorithmSpec(objective_tol=1e-6, outer=OptimizerOptions(x_tolerance=1e-5)))
    summary = run_monte_carlo(cfg, keep_traces=True)
    assert len(summary.traces()) == 2
    for tr in summary.traces():
        assert np.all(np.diff(tr.objective_values) <= 1e-8)


def test_failed_start_is_recorded_not_raised():
    cfg = small_config(phi0=(0.5, 15.0, 1.7), runs=1)
    summary = run_monte_carlo(cfg)
    assert summary.failures == 1
    assert "DomainError" in summary.results[0].error
    assert math.isnan(summary.tvd[0])


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(contamination="bad")
    with pytest.raises(ValueError):
        small_config(phi0="random")
    with pytest.raises(ValueError):
        small_config(runs=0)


# --- tables ---------------------------------------------------------------------------------------------------------

def test_fmt4():
    assert fmt4(0.0612345) == "0.06123"
    assert fmt4(math.inf) == "inf"
    assert fmt4(math.nan) == "nan"


def test_emit_table_and_runs(tmp_path):
    summary = run_monte_carlo(small_config(runs=3, check_init=False))
    path = tmp_path / "table.csv"
    text = emit_table([summary], path)
    assert path.read_text() == text
    lines = text.strip().splitlines()
    assert lines[0] == ",".join(expharness.TABLE_COLUMNS)
    row = lines[1].split(",")
    assert row[:4] == ["EM/likelihood", "closed_form_em", "3", "0"]
    assert float(row[4]) == pytest.approx(summary.tvd[0], rel=1e-3)
    text = emit_table([summary], fmt="text")
    assert text.splitlines()[0].split() == list(expharness.TABLE_COLUMNS)
    with pytest.raises(ValueError):
        emit_table([])

    runs = emit_runs(summary, tmp_path / "runs.csv").strip().splitlines()
    assert runs[0] == "run,seed,init,termination,iterations,lambda,mu1,mu2,tvd,chi2,error"
    assert len(runs) == 4
    first = runs[1].split(",")
    assert float(first[-3]) == summary.results[0].tvd


def test_infinite_chi2_is_reported_as_inf():
    summary = run_monte_carlo(small_config(runs=1, check_init=False))
    summary.results[0].chi2 = math.inf
    assert summary.sqrt_chi2 == (math.inf, math.inf)
    assert emit_table([summary]).strip().splitlines()[1].split(",")[6:] == ["inf", "inf"]


def test_weibull_summary_runs(weibull):
    cfg = ExperimentConfig(WeibullMix2(), WEIBULL_TRUTH, EstimatorSpec.mdpd(0.5),
                           AlgorithmSpec(objective_tol=1e-5, outer=OptimizerOptions(x_tolerance=1e-5)),
                           runs=1, contamination="weibull_replace", base_seed=3)
    summary = run_monte_carlo(cfg)
    assert summary.failures == 0
    assert 0 < summary.tvd[0] < 0.3
    assert isinstance(draw_sample(cfg, 0)[0], Sample)
