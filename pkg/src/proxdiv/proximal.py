"""Proximal-point iterations, the closed-form EM recurrence and initialization checks."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .divkernels import KL_PSI, SQRT_PSI, ProximalSpec
from .errors import DomainError, OptimizationError
from .models import CauchyScale, GaussMix2, Model, ParamPoint, WeibullMix2, weibull_logpdf
from .numerics import OptimizerOptions, brent_min, nelder_mead
from .objectives import Criterion, EstimatorSpec, ProximalTerm, _obs, make_criterion

VARIANTS = ("one_step", "two_step", "closed_form_em")

# termination codes
CONVERGED_PARAM = "param_tol"
CONVERGED_OBJECTIVE = "objective_tol"
MAX_ITERS = "max_iters"
NO_DECREASE = "no_decrease"
FAILED = "failed"

SLACK = 1e-8


@dataclass(frozen=True)
class AlgorithmSpec:
    variant: str = "one_step"
    psi: ProximalSpec = SQRT_PSI
    param_tol: float = 1e-6
    objective_tol: float = 1e-8
    max_iters: int = 200
    outer: OptimizerOptions = field(default_factory=OptimizerOptions)
    # Newton refinement of each step for differentiable criteria
    polish: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.param_tol <= 0 or self.objective_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class IterateTrace:
    """phi^0..phi^K with D_hat(phi^k), D_psi(phi^k, phi^(k-1)) and ||phi^k - phi^(k-1)||."""

    model: Model
    points: list = field(default_factory=list)
    objective_values: list = field(default_factory=list)
    proximal_values: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    # composite value after the weight step, two-step runs only
    lambda_step_values: list = field(default_factory=list)
    termination: str = ""
    message: str = ""

    @property
    def final(self) -> ParamPoint:
        return self.model.point(self.points[-1])

    @property
    def iterations(self) -> int:
        return len(self.points) - 1

    def append(self, vec, objective, prox, step):
        self.points.append(np.array(vec, dtype=float))
        self.objective_values.append(float(objective))
        self.proximal_values.append(float(prox))
        self.step_norms.append(float(step))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", *self.model.param_names, "objective", "proximal", "step_norm"])
        for k, p in enumerate(self.points):
            w.writerow([k, *(repr(float(x)) for x in p), repr(self.objective_values[k]),
                        repr(self.proximal_values[k]), repr(self.step_norms[k])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _fd_gradient(f, x, h: float = 1e-6):
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g


def _newton_polish(f, x, lo, hi, grad=None, iters: int = 6, h: float = 1e-5):
    """Newton steps on f, the Hessian from differences of the gradient.

    ``grad`` defaults to central differences of f. A step is kept when f does
    not increase beyond rounding and the gradient shrinks.
    """
    if grad is None:
        grad = lambda z: _fd_gradient(f, z)
    x = np.asarray(x, dtype=float).copy()
    fx = f(x)
    gx = grad(x)
    n = x.size
    for _ in range(iters):
        if not np.all(np.isfinite(gx)):
            break
        H = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h * max(1.0, abs(x[i]))
            H[:, i] = (grad(x + e) - grad(x - e)) / (2 * e[i])
        H = 0.5 * (H + H.T)
        if not np.all(np.isfinite(H)):
            break
        try:
            d = -np.linalg.solve(H, gx)
        except np.linalg.LinAlgError:
            break
        cand = np.clip(x + d, lo, hi)
        fc = f(cand)
        gc = grad(cand)
        tol = 8 * np.finfo(float).eps * max(1.0, abs(fx))
        if not (fc <= fx + tol and np.linalg.norm(gc) < np.linalg.norm(gx)):
            break
        done = np.max(np.abs(cand - x)) < 1e-14
        x, fx, gx = cand, fc, gc
        if done:
            break
    return x, fx


def _minimize_box(f, x0, lo, hi, opts: OptimizerOptions):
    """Nelder-Mead on f(clip(x)); the returned point is clipped into the box."""
    res = nelder_mead(lambda x: f(np.clip(x, lo, hi)), np.asarray(x0, dtype=float), opts)
    x = np.clip(res.x, lo, hi)
    return x, f(x)


def _composite_gradient(crit, prox):
    if not hasattr(crit, "gradient"):
        return None
    return lambda x: crit.gradient(x) + prox.gradient(x)


def _start(model, estimator, sample, phi0, criterion):
    v0 = model.check_feasible(phi0).copy()
    crit = criterion if criterion is not None else make_criterion(model, estimator, sample, anchor=v0)
    return v0, crit


# ---------------------------------------------------------------------------
# one-step and two-step algorithms
# ---------------------------------------------------------------------------

def one_step_run(model: Model, estimator: EstimatorSpec, sample, phi0, algo: AlgorithmSpec | None = None,
                 criterion: Criterion | None = None) -> IterateTrace:
    """phi^(k+1) = arginf_phi D_hat(p_phi, p_T) + D_psi(phi, phi^k), started at phi^k each time."""
    algo = algo or AlgorithmSpec()
    v, crit = _start(model, estimator, sample, phi0, criterion)
    y = _obs(sample)
    lo, hi = model.lower, model.upper
    trace = IterateTrace(model)
    d = crit(v)
    trace.append(v, d, 0.0, 0.0)
    if not math.isfinite(d):
        trace.termination = FAILED
        trace.message = "the criterion is not finite at phi0"
        return trace
    polish = algo.polish and estimator.smooth
    for _ in range(algo.max_iters):
        try:
            prox = ProximalTerm(model, v, y, algo.psi)

            def composite(x):
                dx = crit(x)
                if not math.isfinite(dx):
                    return math.inf
                return dx + prox(x)

            x, fx = _minimize_box(composite, v, lo, hi, algo.outer)
            if polish and math.isfinite(fx):
                x, fx = _newton_polish(composite, x, lo, hi, _composite_gradient(crit, prox))
        except (DomainError, OptimizationError) as exc:
            trace.termination = FAILED
            trace.message = str(exc)
            return trace
        if not fx < d:
            trace.termination = NO_DECREASE
            return trace
        d_new = crit(x)
        p_new = prox(x)
        step = float(np.linalg.norm(x - v))
        trace.append(x, d_new, p_new, step)
        decrease = d - d_new
        v, d = x, d_new
        if step < algo.param_tol:
            trace.termination = CONVERGED_PARAM
            return trace
        if decrease < algo.objective_tol:
            trace.termination = CONVERGED_OBJECTIVE
            return trace
    trace.termination = MAX_ITERS
    return trace


def two_step_run(model: Model, estimator: EstimatorSpec, sample, phi0, algo: AlgorithmSpec | None = None,
                 criterion: Criterion | None = None) -> IterateTrace:
    """Alternate a weight step (Brent) and a component step (Nelder-Mead), both proximal to phi^k."""
    algo = algo or AlgorithmSpec(variant="two_step")
    if model.n_weights != 1:
        raise ValueError(f"{model.name} has no single weight to split off")
    v, crit = _start(model, estimator, sample, phi0, criterion)
    y = _obs(sample)
    lo, hi = model.lower, model.upper
    ws, cs = model.weight_slice, model.component_slice
    trace = IterateTrace(model)
    d = crit(v)
    trace.append(v, d, 0.0, 0.0)
    trace.lambda_step_values.append(d)
    if not math.isfinite(d):
        trace.termination = FAILED
        trace.message = "the criterion is not finite at phi0"
        return trace
    polish = algo.polish and estimator.smooth
    for _ in range(algo.max_iters):
        try:
            prox = ProximalTerm(model, v, y, algo.psi)

            def composite(x):
                dx = crit(x)
                if not math.isfinite(dx):
                    return math.inf
                return dx + prox(x)

            # weight step
            def along_lambda(lam):
                x = v.copy()
                x[ws] = lam
                return composite(x)

            r = brent_min(along_lambda, float(lo[0]), float(hi[0]), algo.outer)
            x = v.copy()
            f_lam = d
            if r.fun < d:
                x[ws] = r.x
                f_lam = r.fun

            # component step with the new weight
            def along_theta(th):
                z = x.copy()
                z[cs] = th
                return composite(z)

            th, f_th = _minimize_box(along_theta, x[cs], lo[cs], hi[cs], algo.outer)
            if polish and math.isfinite(f_th):
                th, f_th = _newton_polish(along_theta, th, lo[cs], hi[cs])
            if f_th < f_lam:
                x[cs] = th
            else:
                f_th = f_lam
        except (DomainError, OptimizationError) as exc:
            trace.termination = FAILED
            trace.message = str(exc)
            return trace
        if not f_th < d:
            trace.termination = NO_DECREASE
            return trace
        d_new = crit(x)
        step = float(np.linalg.norm(x - v))
        trace.append(x, d_new, prox(x), step)
        trace.lambda_step_values.append(f_lam)
        decrease = d - d_new
        v, d = x, d_new
        if step < algo.param_tol:
            trace.termination = CONVERGED_PARAM
            return trace
        if decrease < algo.objective_tol:
            trace.termination = CONVERGED_OBJECTIVE
            return trace
    trace.termination = MAX_ITERS
    return trace


def closed_form_em(sample, phi0, algo: AlgorithmSpec | None = None, model: GaussMix2 | None = None) -> IterateTrace:
    """EM for the unit-variance two-component Gaussian mixture; weights clamped to [eta, 1 - eta]."""
    algo = algo or AlgorithmSpec(variant="closed_form_em", psi=KL_PSI)
    model = model or GaussMix2()
    if not isinstance(model, GaussMix2):
        raise ValueError("closed-form EM is only available for the Gaussian mixture")
    y = _obs(sample)
    n = y.size
    v = model.check_feasible(phi0).copy()
    trace = IterateTrace(model)
    d = -float(np.mean(model.logpdf(v, y)))
    trace.append(v, d, 0.0, 0.0)
    for _ in range(algo.max_iters):
        h = model.posteriors(v, y)
        s0, s1 = h[0].sum(), h[1].sum()
        if s0 <= 0 or s1 <= 0:
            trace.termination = FAILED
            trace.message = "a component received zero posterior mass"
            return trace
        x = np.array([np.clip(s0 / n, model.eta, 1 - model.eta), y @ h[0] / s0, y @ h[1] / s1])
        x = np.clip(x, model.lower, model.upper)
        d_new = -float(np.mean(model.logpdf(x, y)))
        step = float(np.linalg.norm(x - v))
        trace.append(x, d_new, 0.0, step)
        decrease = d - d_new
        v, d = x, d_new
        if step < algo.param_tol:
            trace.termination = CONVERGED_PARAM
            return trace
        if decrease < algo.objective_tol:
            trace.termination = CONVERGED_OBJECTIVE
            return trace
    trace.termination = MAX_ITERS
    return trace


def run(model, estimator, sample, phi0, algo: AlgorithmSpec, criterion=None) -> IterateTrace:
    if algo.variant == "one_step":
        return one_step_run(model, estimator, sample, phi0, algo, criterion)
    if algo.variant == "two_step":
        return two_step_run(model, estimator, sample, phi0, algo, criterion)
    if estimator.kind != "loglik":
        raise ValueError("closed-form EM goes with the likelihood criterion")
    return closed_form_em(sample, phi0, algo, model)


# ---------------------------------------------------------------------------
# initialization conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitCheck:
    ok: bool
    condition: str
    margin: float
    detail: str = ""


def _gauss_single_loglik(y, mu):
    return float(np.sum(-0.5 * (y - mu) ** 2 - 0.5 * math.log(2 * math.pi)))


def _weibull_single_sup(y, scale, lo, hi, opts):
    """sup over the shape of the log-likelihood of one Weibull component with a fixed scale."""
    def neg(lk):
        return -float(np.sum(weibull_logpdf(y, math.exp(lk), scale)))
    r = brent_min(neg, math.log(lo), math.log(hi), opts)
    return -r.fun


def _far_inf(crit: Criterion, model: GaussMix2, y, removed: int, opts) -> float:
    """inf over the remaining parameters of D_hat with component ``removed`` sent far from the data."""
    far = float(np.max(np.abs(y))) + 200.0
    lo, hi = model.lower, model.upper

    def f(z):
        lam = float(np.clip(z[0], lo[0], hi[0]))
        mu = float(np.clip(z[1], lo[1], hi[1]))
        v = np.array([lam, far, mu]) if removed == 1 else np.array([lam, mu, far])
        try:
            val = crit._value(v)
        except DomainError:
            return math.inf
        return val if math.isfinite(val) else math.inf

    best = math.inf
    for mu0 in (float(np.mean(y)), float(np.min(y)), float(np.max(y))):
        for lam0 in (lo[0], 0.5, hi[0]):
            res = nelder_mead(f, np.array([lam0, mu0]), opts)
            best = min(best, res.fun)
    return best


def check_initialization(model: Model, estimator: EstimatorSpec, sample, phi0,
                         opts: OptimizerOptions | None = None) -> InitCheck:
    """Compare the criterion at phi0 with its limits where a component escapes to infinity.

    ``margin`` is positive when the condition holds; it is the gap to the binding bound.
    """
    opts = opts or OptimizerOptions(x_tolerance=1e-6, f_tolerance=1e-10)
    v = model.check_feasible(phi0)
    y = _obs(sample)
    kind = estimator.kind
    if isinstance(model, CauchyScale):
        return InitCheck(True, "none", math.inf, "the proximal term is identifiable; no condition")
    if kind == "classical_dual":
        return InitCheck(True, "compact", math.inf, "the parameter box is compact")
    if isinstance(model, WeibullMix2):
        for bad in (0.5, 2.0):
            if np.any(y == bad):
                return InitCheck(False, "y_at_scale", -math.inf,
                                 f"an observation equals {bad}; the shape-to-infinity limit is +inf")
        if kind == "loglik":
            j0 = float(np.sum(model.logpdf(v, y)))
            b1 = _weibull_single_sup(y, 2.0, model.shape_lower, model.shape_upper, opts)
            b2 = _weibull_single_sup(y, 0.5, model.shape_lower, model.shape_upper, opts)
            bound = max(b1, b2)
            return InitCheck(j0 > bound, "weibull_loglik", j0 - bound,
                             f"J(phi0)={j0:.6g} vs single-component sup {bound:.6g}")
        crit = make_criterion(model, estimator, y)
        d0 = crit(v)
        if kind == "mdpd":
            # a shape escaping to infinity sends int p^(1+a) to +inf, leaving the bound at 0
            return InitCheck(d0 < 0, "weibull_mdpd", -d0, f"D(phi0)={d0:.6g} vs 0")
        return InitCheck(True, "not_derived", math.inf, "no boundary condition is derived for this case")
    # Gaussian mixture
    if kind == "loglik":
        j0 = float(np.sum(model.logpdf(v, y)))
        bound = _gauss_single_loglik(y, float(np.mean(y)))
        return InitCheck(j0 > bound, "gauss_loglik", j0 - bound,
                         f"J(phi0)={j0:.6g} vs single Gaussian at the mean {bound:.6g}")
    crit = make_criterion(model, estimator, y)
    d0 = crit(v)
    inf_far = min(_far_inf(crit, model, y, 1, opts), _far_inf(crit, model, y, 2, opts))
    if kind == "mdpd":
        bound = min(0.0, inf_far)
        return InitCheck(d0 < bound, "gauss_mdpd", bound - d0, f"D(phi0)={d0:.6g} vs {bound:.6g}")
    g = estimator.gamma
    bound = inf_far
    cond = "gauss_kernel_neg" if g < 0 else "gauss_kernel"
    if g > 0 and g != 1.0:
        # limit of the criterion when both components leave the data
        bound = min(bound, 1.0 / (g * (1.0 - g)))
    return InitCheck(d0 < bound, cond, bound - d0, f"D(phi0)={d0:.6g} vs {bound:.6g}")
