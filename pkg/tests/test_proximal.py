import math

import numpy as np
import pytest

from conftest import GAUSS_TRUTH, WEIBULL_TRUTH
from proxdiv.divkernels import KL_PSI
from proxdiv.models import GaussMix2, Sample
from proxdiv.numerics import OptimizerOptions
from proxdiv.objectives import EstimatorSpec, fd_gradient, make_criterion
from proxdiv.proximal import (CONVERGED_OBJECTIVE, CONVERGED_PARAM, NO_DECREASE, AlgorithmSpec, IterateTrace,
                              check_initialization, closed_form_em, one_step_run, run, two_step_run)

FAST = OptimizerOptions(x_tolerance=1e-6, f_tolerance=1e-10)
TIGHT = OptimizerOptions(x_tolerance=1e-12, f_tolerance=1e-18)
STOPPED = (CONVERGED_PARAM, CONVERGED_OBJECTIVE, NO_DECREASE)


def assert_monotone(trace, slack=1e-8):
    d = np.array(trace.objective_values)
    assert np.all(np.isfinite(d))
    assert np.all(np.diff(d) <= slack)
    assert np.all(d <= d[0] + slack)


def em_pair(seed, iters=50):
    gauss = GaussMix2()
    rng = np.random.default_rng(seed)
    sample = Sample(gauss.sample(GAUSS_TRUTH, 100, rng))
    phi0 = np.array(GAUSS_TRUTH) + rng.uniform(-0.3, 0.3, 3)
    algo = AlgorithmSpec(psi=KL_PSI, param_tol=1e-14, objective_tol=1e-300, max_iters=iters)
    prox = one_step_run(gauss, EstimatorSpec.log_likelihood(), sample, phi0, algo)
    em = closed_form_em(sample, phi0, AlgorithmSpec("closed_form_em", param_tol=1e-14, objective_tol=1e-300,
                                                    max_iters=iters))
    return prox, em


# --- EM as a proximal algorithm -------------------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_one_step_likelihood_with_kl_kernel_is_em(seed):
    prox, em = em_pair(seed)
    assert prox.iterations == em.iterations == 50
    np.testing.assert_allclose(np.array(prox.points), np.array(em.points), rtol=0, atol=1e-8)
    assert_monotone(em, slack=1e-12)


def test_em_with_equal_means_is_a_fixed_point(gauss_sample):
    ybar = gauss_sample.observations.mean()
    tr = closed_form_em(gauss_sample, (0.4, 1.0, 1.0), AlgorithmSpec("closed_form_em", max_iters=3))
    np.testing.assert_allclose(tr.points[1], [0.4, ybar, ybar], atol=1e-14)
    assert tr.termination == CONVERGED_PARAM and tr.iterations == 2


def test_em_stops_at_its_fixed_point(gauss_sample):
    algo = AlgorithmSpec("closed_form_em", param_tol=1e-12, objective_tol=1e-300, max_iters=5000)
    first = closed_form_em(gauss_sample, (0.3, 2.5, 1.0), algo)
    assert first.termination in STOPPED
    again = closed_form_em(gauss_sample, first.points[-1], algo)
    assert again.iterations <= 2
    np.testing.assert_allclose(again.points[-1], first.points[-1], atol=1e-10)


def test_em_rejects_other_models(weibull_sample):
    from proxdiv.models import WeibullMix2
    with pytest.raises(ValueError):
        closed_form_em(weibull_sample, WEIBULL_TRUTH, model=WeibullMix2())
    with pytest.raises(ValueError):
        run(GaussMix2(), EstimatorSpec.mdpd(0.5), weibull_sample, GAUSS_TRUTH, AlgorithmSpec("closed_form_em"))


# --- descent and membership of the initial sublevel set -------------------------------------------------------------

ESTIMATORS = [EstimatorSpec.mdpd(0.5), EstimatorSpec.kernel_dual(0.5), EstimatorSpec.classical_dual(0.5),
              EstimatorSpec.log_likelihood()]


@pytest.mark.parametrize("est", ESTIMATORS, ids=lambda e: e.label())
@pytest.mark.parametrize("variant", ["one_step", "two_step"])
def test_objective_decreases_along_the_iterates(gauss, gauss_sample, est, variant):
    algo = AlgorithmSpec(variant, objective_tol=1e-6, outer=FAST, max_iters=30)
    tr = run(gauss, est, gauss_sample, (0.5, 2.6, 0.8), algo)
    assert tr.termination in STOPPED + ("max_iters",)
    assert tr.iterations >= 1
    assert_monotone(tr)
    crit = make_criterion(gauss, est, gauss_sample)
    assert crit(tr.points[-1]) <= crit(tr.points[0]) + 1e-8


def test_two_step_sandwich(gauss, gauss_sample):
    est = EstimatorSpec.mdpd(0.5)
    tr = two_step_run(gauss, est, gauss_sample, (0.6, 2.8, 0.5), AlgorithmSpec("two_step", max_iters=15))
    assert len(tr.lambda_step_values) == len(tr.points)
    for k in range(1, len(tr.points)):
        after = tr.objective_values[k] + tr.proximal_values[k]
        assert after <= tr.lambda_step_values[k] + 1e-12
        assert tr.lambda_step_values[k] <= tr.objective_values[k - 1] + 1e-12


def test_weibull_mdpd_descent(weibull, weibull_sample):
    tr = one_step_run(weibull, EstimatorSpec.mdpd(0.5), weibull_sample, (0.5, 0.8, 2.0),
                      AlgorithmSpec(objective_tol=1e-7, outer=FAST, max_iters=40))
    assert_monotone(tr)
    assert tr.termination in STOPPED


def test_stationary_start_terminates_immediately(gauss, gauss_sample):
    est = EstimatorSpec.mdpd(0.5)
    algo = AlgorithmSpec(param_tol=1e-7, objective_tol=1e-12, max_iters=200)
    first = one_step_run(gauss, est, gauss_sample, GAUSS_TRUTH, algo)
    assert first.termination in STOPPED
    again = one_step_run(gauss, est, gauss_sample, first.points[-1], algo)
    assert again.iterations <= 2
    np.testing.assert_allclose(again.points[-1], first.points[-1], atol=1e-5)


@pytest.mark.parametrize("est", [EstimatorSpec.mdpd(0.5), EstimatorSpec.kernel_dual(0.5)], ids=lambda e: e.label())
def test_smooth_criteria_end_near_a_stationary_point(gauss, gauss_sample, est):
    tr = one_step_run(gauss, est, gauss_sample, GAUSS_TRUTH, AlgorithmSpec(param_tol=1e-8, objective_tol=1e-13))
    x = tr.points[-1]
    crit = make_criterion(gauss, est, gauss_sample)
    inside = (x > gauss.lower + 1e-4) & (x < gauss.upper - 1e-4)
    assert np.all(np.abs(fd_gradient(crit, x, 1e-5)[inside]) < 1e-3)


def test_infeasible_start_is_rejected(gauss, gauss_sample):
    from proxdiv.errors import InfeasibleParameter
    with pytest.raises(InfeasibleParameter):
        one_step_run(gauss, EstimatorSpec.mdpd(0.5), gauss_sample, (0.95, 0.0, 0.0))


# --- Cauchy scale: identifiable proximal term ------------------------------------------------------------------------

def test_cauchy_pearson_steps_contract(cauchy, table1):
    est = EstimatorSpec.classical_dual(2.0, inner_options=TIGHT)
    for a0 in (0.5, 2.0):
        tr = one_step_run(cauchy, est, table1, (a0,), AlgorithmSpec(param_tol=1e-8, objective_tol=1e-300,
                                                                    outer=TIGHT))
        steps = np.array(tr.step_norms[1:])
        assert steps.size >= 5
        assert np.all(np.diff(steps[-5:]) < 0)
        assert steps[-1] < 1e-5
        assert tr.points[-1][0] == pytest.approx(0.90597, abs=1e-4)
        assert_monotone(tr, slack=1e-12)


# --- initialization checks ------------------------------------------------------------------------------------------

def test_initialization_checks_at_truth(gauss, weibull, gauss_sample, weibull_sample):
    for est in (EstimatorSpec.mdpd(0.5), EstimatorSpec.kernel_dual(0.5)):
        chk = check_initialization(gauss, est, gauss_sample, GAUSS_TRUTH)
        assert chk.ok and chk.margin > 0, chk.detail
    for est in (EstimatorSpec.log_likelihood(), EstimatorSpec.mdpd(0.5)):
        chk = check_initialization(weibull, est, weibull_sample, WEIBULL_TRUTH)
        assert chk.ok and chk.margin > 0, chk.detail


def test_gauss_likelihood_check_is_the_one_gaussian_bound(gauss, gauss_sample):
    # the truth need not beat a single Gaussian at the sample mean, which is why a fallback start exists
    y = gauss_sample.observations
    bound = np.sum(-0.5 * (y - y.mean()) ** 2) - 0.5 * y.size * math.log(2 * math.pi)
    for phi0 in (GAUSS_TRUTH, (0.3, 2.5, 1.0)):
        chk = check_initialization(gauss, EstimatorSpec.log_likelihood(), gauss_sample, phi0)
        j0 = np.sum(np.log(gauss.density(phi0, y)))
        assert chk.margin == pytest.approx(j0 - bound, rel=1e-10)
        assert chk.ok == (j0 > bound)


def test_initialization_check_fails_for_a_poor_start(gauss, gauss_sample):
    # a single component far from the data cannot beat the one-Gaussian bound
    chk = check_initialization(gauss, EstimatorSpec.log_likelihood(), gauss_sample, (0.5, 15.0, 1.7))
    assert not chk.ok and chk.margin < 0


def test_weibull_observation_at_component_scale_is_flagged(weibull):
    y = Sample(np.array([0.3, 0.5, 1.2, 2.4, 3.1]))
    chk = check_initialization(weibull, EstimatorSpec.log_likelihood(), y, WEIBULL_TRUTH)
    assert not chk.ok and chk.condition == "y_at_scale" and chk.margin == -math.inf


def test_cauchy_and_classical_need_no_condition(cauchy, gauss, table1, gauss_sample):
    assert check_initialization(cauchy, EstimatorSpec.classical_dual(2.0), table1, (1.0,)).ok
    assert check_initialization(gauss, EstimatorSpec.classical_dual(0.5), gauss_sample, GAUSS_TRUTH).ok


# --- trace ----------------------------------------------------------------------------------------------------------

def test_trace_csv(gauss, gauss_sample, tmp_path):
    tr = closed_form_em(gauss_sample, (0.3, 2.5, 1.0), AlgorithmSpec("closed_form_em", max_iters=4))
    path = tmp_path / "trace.csv"
    text = tr.to_csv(path)
    assert path.read_text() == text
    lines = text.strip().splitlines()
    assert lines[0] == "iteration,lambda,mu1,mu2,objective,proximal,step_norm"
    assert len(lines) == tr.iterations + 2
    row = np.array(lines[-1].split(","), dtype=float)
    np.testing.assert_array_equal(row[1:4], tr.points[-1])
    assert isinstance(tr, IterateTrace) and tr.final.vector.tolist() == tr.points[-1].tolist()


def test_algorithm_spec_validation():
    with pytest.raises(ValueError):
        AlgorithmSpec("three_step")
    with pytest.raises(ValueError):
        AlgorithmSpec(param_tol=0.0)
    with pytest.raises(ValueError):
        AlgorithmSpec(max_iters=0)
