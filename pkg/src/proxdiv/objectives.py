"""Estimated divergences, the log-likelihood and the proximal term D_psi.

Every estimator is exposed twice: as a plain function of (model, phi, sample)
that returns an ``ObjectiveValue``, and as a criterion object built once per
sample by ``make_criterion``. The criterion objects precompute quadrature grids
and kernel estimates so that the proximal algorithms can call them thousands of
times; they return +inf instead of raising, which the simplex search treats as
a wall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _jit
from .divkernels import (
    SQRT_PSI,
    DivergenceSpec,
    ProximalSpec,
)
from .errors import (
    DomainError,
    InadmissibleEstimator,
    InfeasibleParameter,
    IntegrationDivergence,
    OptimizationError,
)
from .kde import KernelEstimate, KernelSpec
from .models import CauchyScale, GaussMix2, Model, ParamPoint, Sample, WeibullMix2
from .numerics import (
    OptimizerOptions,
    QuadratureOptions,
    brent_min,
    composite_gl,
    gauss_legendre,
    nelder_mead,
)

ESTIMATOR_KINDS = ("classical_dual", "kernel_dual", "mdpd", "loglik")

# offset of the alpha_1 wall used for the Weibull mixture when gamma < 0
WEIBULL_WALL_OFFSET = 0.05


@dataclass(frozen=True)
class EstimatorSpec:
    """How the divergence between p_phi and the data-generating density is estimated."""

    kind: str
    divergence: DivergenceSpec
    kernel: KernelSpec | None = None
    inner_bounds: tuple | None = None
    inner_options: OptimizerOptions = field(default_factory=OptimizerOptions)
    weibull_wall: float | None = WEIBULL_WALL_OFFSET
    quadrature: QuadratureOptions = field(default_factory=QuadratureOptions)

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator {self.kind!r}; choose from {ESTIMATOR_KINDS}")
        d = self.divergence.kind
        if self.kind in ("classical_dual", "kernel_dual") and d != "cressie_read":
            raise ValueError(f"{self.kind} needs a Cressie-Read divergence")
        if self.kind == "mdpd" and d != "dpd":
            raise ValueError("mdpd needs a density power divergence")
        if self.kind == "loglik" and d != "likelihood":
            raise ValueError("loglik needs the likelihood criterion")
        if self.kind == "kernel_dual" and self.kernel is None:
            object.__setattr__(self, "kernel", KernelSpec("gaussian"))

    @property
    def gamma(self) -> float | None:
        return self.divergence.gamma

    @property
    def a(self) -> float | None:
        return self.divergence.a

    @classmethod
    def classical_dual(cls, gamma, **kw):
        return cls("classical_dual", DivergenceSpec.cressie_read(gamma), **kw)

    @classmethod
    def kernel_dual(cls, gamma, kernel: KernelSpec | str = "gaussian", **kw):
        if isinstance(kernel, str):
            kernel = KernelSpec(kernel)
        return cls("kernel_dual", DivergenceSpec.cressie_read(gamma), kernel=kernel, **kw)

    @classmethod
    def mdpd(cls, a, **kw):
        return cls("mdpd", DivergenceSpec.dpd(a), **kw)

    @classmethod
    def log_likelihood(cls, **kw):
        return cls("loglik", DivergenceSpec.likelihood(), **kw)

    @property
    def smooth(self) -> bool:
        """True when the criterion is differentiable in phi (no inner supremum)."""
        return self.kind != "classical_dual"

    def label(self) -> str:
        if self.kind == "loglik":
            return "EM/likelihood"
        if self.kind == "mdpd":
            return f"MDPD a={self.a:g}"
        name = {0.5: "Hellinger", 2.0: "Pearson", -1.0: "Neyman", 0.0: "modKL", 1.0: "KL"}.get(
            self.gamma, f"gamma={self.gamma:g}")
        if self.kind == "kernel_dual":
            return f"kernel {name} ({self.kernel.kind})"
        return f"classical {name}"


@dataclass(frozen=True)
class ObjectiveValue:
    value: float
    inner_argmax: ParamPoint | None = None
    quadrature_error: float | None = None
    flag: str | None = None

    def __float__(self):
        return float(self.value)


# ---------------------------------------------------------------------------
# Admissibility of (model, estimator, gamma, kernel, parameters)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdmissibilityRule:
    model: str
    estimator: str
    gamma_range: str          # "gt1" | "lt0" | "0to1"
    kernel: str | None        # None matches any kernel / no kernel
    condition: str            # "reject" | a key of _CONDITIONS
    note: str


def _gamma_range(g: float) -> str:
    if g > 1.0:
        return "gt1"
    if g < 0.0:
        return "lt0"
    return "0to1"


# Each condition receives (gamma, component params, bandwidth) and says whether the estimate is finite.
_CONDITIONS = {
    "min_shape_gt_2": lambda g, th, w: min(th) > 2.0,
    "min_shape_lt_1m1g_and_max_lt_2": lambda g, th, w: min(th) < 1.0 - 1.0 / g and max(th) < 2.0,
    "min_shape_lt_1m1g": lambda g, th, w: min(th) < 1.0 - 1.0 / g,
    "min_shape_gt_1m1g": lambda g, th, w: min(th) > 1.0 - 1.0 / g,
    "bandwidth_sq_gt_gm1_over_g": lambda g, th, w: w * w > (g - 1.0) / g,
    "bandwidth_sq_lt_1mg_over_mg": lambda g, th, w: w * w < (1.0 - g) / (-g),
}

ADMISSIBILITY = (
    AdmissibilityRule("weibull", "classical_dual", "gt1", None, "reject",
                      "sup over alpha of the dual function is +inf"),
    AdmissibilityRule("weibull", "kernel_dual", "gt1", "gaussian", "min_shape_gt_2",
                      "p^gamma K^(1-gamma) needs Weibull tails lighter than the Gaussian kernel"),
    AdmissibilityRule("weibull", "kernel_dual", "lt0", "gaussian", "min_shape_lt_1m1g_and_max_lt_2",
                      "integrability at 0 and at infinity"),
    AdmissibilityRule("weibull", "kernel_dual", "lt0", "epanechnikov", "min_shape_lt_1m1g",
                      "compact kernel support removes the condition at infinity"),
    AdmissibilityRule("weibull", "kernel_dual", "gt1", "epanechnikov", "reject",
                      "the kernel estimate vanishes inside the model support"),
    AdmissibilityRule("weibull", "kernel_dual", "gt1", "cauchy", "min_shape_gt_1m1g",
                      "heavy kernel tails; only integrability of p^gamma at 0 remains"),
    AdmissibilityRule("weibull", "kernel_dual", "lt0", "cauchy", "reject",
                      "p^gamma grows faster than the kernel tail decays"),
    AdmissibilityRule("gauss", "kernel_dual", "gt1", "gaussian", "bandwidth_sq_gt_gm1_over_g",
                      "Gaussian tails of p^gamma must beat K^(1-gamma)"),
    AdmissibilityRule("gauss", "kernel_dual", "lt0", "gaussian", "bandwidth_sq_lt_1mg_over_mg",
                      "Gaussian tails of K^(1-gamma) must beat p^gamma"),
    AdmissibilityRule("gauss", "kernel_dual", "gt1", "epanechnikov", "reject",
                      "the kernel estimate vanishes inside the model support"),
    AdmissibilityRule("gauss", "kernel_dual", "lt0", "cauchy", "reject",
                      "p^gamma grows faster than the kernel tail decays"),
    AdmissibilityRule("cauchy", "kernel_dual", "gt1", "gaussian", "reject",
                      "K^(1-gamma) grows faster than the Cauchy tail decays"),
    AdmissibilityRule("cauchy", "kernel_dual", "gt1", "epanechnikov", "reject",
                      "the kernel estimate vanishes inside the model support"),
)


def admissibility(model: Model, estimator: EstimatorSpec, params=None, bandwidth: float | None = None):
    """Return (ok, reason). ``params`` may be omitted for parameter-free rules."""
    if estimator.kind not in ("classical_dual", "kernel_dual"):
        return True, ""
    g = estimator.gamma
    kern = estimator.kernel.kind if estimator.kind == "kernel_dual" else None
    for rule in ADMISSIBILITY:
        if rule.model != model.name or rule.estimator != estimator.kind:
            continue
        if rule.gamma_range != _gamma_range(g):
            continue
        if rule.kernel is not None and rule.kernel != kern:
            continue
        if rule.condition == "reject":
            return False, rule.note
        theta = None if params is None else tuple(model.vector(params)[model.component_slice])
        if rule.condition.startswith("bandwidth"):
            if bandwidth is None:
                return True, ""
        elif theta is None:
            return True, ""
        if not _CONDITIONS[rule.condition](g, theta, bandwidth):
            return False, f"{rule.condition}: {rule.note}"
    return True, ""


def check_admissible(model, estimator, params=None, bandwidth=None) -> None:
    ok, why = admissibility(model, estimator, params, bandwidth)
    if not ok:
        raise InadmissibleEstimator(f"{model.name} / {estimator.label()}: {why}")


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def _obs(sample) -> np.ndarray:
    if isinstance(sample, Sample):
        return sample.observations
    return np.asarray(sample, dtype=float).ravel()


def _phi_sharp_ratio(gamma, log_ratio):
    if gamma == 0.0:
        return log_ratio
    if gamma == 1.0:
        return np.expm1(log_ratio)
    return np.expm1(gamma * log_ratio) / gamma


def log_likelihood(model: Model, params, sample) -> float:
    """J(phi) = sum_i log p_phi(y_i)."""
    v = model.check_feasible(params)
    lp = model.logpdf(v, _obs(sample))
    if np.any(np.isneginf(lp)):
        raise DomainError("zero density at an observation")
    return float(np.sum(lp))


def dual_inner(model: Model, params, alpha, sample, gamma: float, opts: QuadratureOptions | None = None):
    """f(alpha, phi) = int phi'(p_phi/p_alpha) p_phi - (1/n) sum phi#(p_phi/p_alpha)(y_i).

    The integral uses adaptive quadrature over the model support. Raises
    ``InfeasibleParameter`` on the domain walls where the integral is infinite.
    """
    v = model.check_feasible(params)
    a = model.check_feasible(alpha)
    y = _obs(sample)
    lr = model.logpdf(v, y) - model.logpdf(a, y)
    obs = float(np.mean(_phi_sharp_ratio(gamma, lr)))

    def integrand(x):
        lp = model.logpdf(v, x)
        la = model.logpdf(a, x)
        with np.errstate(invalid="ignore", over="ignore"):
            if gamma == 1.0:
                out = np.exp(lp) * (lp - la)
            elif gamma == 0.0:
                out = np.exp(lp) - np.exp(la)
            else:
                out = (np.exp(gamma * lp + (1.0 - gamma) * la) - np.exp(lp)) / (gamma - 1.0)
        return np.where(np.isneginf(lp) & (gamma > 0), 0.0, out)

    if gamma == 0.0:
        return -obs
    if isinstance(model, WeibullMix2) and _jit.weibull_integral_finite(a, v, gamma) != 0:
        raise InfeasibleParameter("the integral term is infinite at this (phi, alpha)")
    try:
        integral = model.integrate(integrand, opts)
    except IntegrationDivergence as exc:
        raise InfeasibleParameter(f"the integral term is infinite: {exc}") from exc
    return integral - obs


def _gl():
    t, w = gauss_legendre(20)
    return np.ascontiguousarray(t), np.ascontiguousarray(w)


# ---------------------------------------------------------------------------
# Criterion objects
# ---------------------------------------------------------------------------

class Criterion:
    """D_hat(p_phi, p_T) for one model, estimator and sample; call with a parameter vector."""

    def __init__(self, model: Model, estimator: EstimatorSpec, sample):
        self.model = model
        self.estimator = estimator
        self.y = np.ascontiguousarray(_obs(sample), dtype=float)
        self.n = self.y.size

    def __call__(self, vec) -> float:
        v = np.asarray(vec, dtype=float)
        if not self.model.is_feasible(v):
            return math.inf
        try:
            val = self._value(v)
        except (DomainError, IntegrationDivergence):
            return math.inf
        return val if math.isfinite(val) else math.inf

    def evaluate(self, vec) -> ObjectiveValue:
        v = self.model.check_feasible(vec)
        return ObjectiveValue(self._value(v))

    def _value(self, v) -> float:
        raise NotImplementedError


class LogLikelihoodCriterion(Criterion):
    """-(1/n) J(phi)."""

    def _value(self, v):
        lp = self.model.logpdf(v, self.y)
        return -float(np.mean(lp))

    def gradient(self, vec) -> np.ndarray:
        return -np.mean(self.model.score(np.asarray(vec, dtype=float), self.y), axis=1)


class MDPDCriterion(Criterion):
    """int p^(1+a) - ((a+1)/a) (1/n) sum p^a(y_i)."""

    def __init__(self, model, estimator, sample):
        super().__init__(model, estimator, sample)
        self.a = estimator.a

    def power_integral(self, v) -> float:
        a = self.a
        m = self.model
        if isinstance(m, GaussMix2):
            x, w = m.grid(v[1:])
            return float(w @ m.density(v, x) ** (1.0 + a))
        if isinstance(m, WeibullMix2):
            kmin = min(v[1], v[2])
            decay = (1.0 + a) * (kmin - 1.0) + 1.0
            if decay <= 0:
                raise DomainError("int p^(1+a) is infinite for this shape")
            x, w = m.grid(v[1:], decay=decay)
            return float(w @ np.exp((1.0 + a) * m.logpdf(v, x)))
        return m.integrate(lambda x: m.density(v, x) ** (1.0 + a), self.estimator.quadrature)

    def _value(self, v):
        a = self.a
        pa = np.exp(a * self.model.logpdf(v, self.y))
        return self.power_integral(v) - (a + 1.0) / a * float(np.mean(pa))


class KernelDualCriterion(Criterion):
    """int phi'(p_phi/K) p_phi - (1/n) sum phi#(p_phi/K)(y_i), K a kernel estimate frozen on the sample."""

    def __init__(self, model, estimator, sample):
        super().__init__(model, estimator, sample)
        self.gamma = estimator.gamma
        self.kde = KernelEstimate(self.y, estimator.kernel)
        self.log_k_obs = self.kde.log(self.y)
        self.support = self.kde.support(model.support)
        ok, why = admissibility(model, estimator, None, self.kde.bandwidth)
        if not ok:
            raise InadmissibleEstimator(f"{model.name} / {estimator.label()}: {why}")
        self._build_grid()

    # the grid is fixed per sample so the kernel estimate is evaluated once
    def _build_grid(self):
        m, g, w = self.model, self.gamma, self.kde.bandwidth
        kind = self.kde.kernel.kind
        lo_s, hi_s = self.support
        self.adaptive = False
        self.tail_slope = None
        if kind == "epanechnikov":
            reach = 0.0
        elif kind == "gaussian" and g < 1.0:
            reach = w * math.sqrt(80.0 / (1.0 - g)) * (2.0 if g < 0 else 1.0)
        else:
            # heavy kernel tails or gamma > 1: the integrand is not confined near the data
            self.adaptive = True
            return
        ymin, ymax = float(self.y.min()), float(self.y.max())
        if isinstance(m, WeibullMix2):
            hi = ymax + reach if kind != "epanechnikov" else hi_s
            x0 = min(0.5 * w, hi / 4.0)
            if lo_s > 0:
                # the support starts away from 0: plain panels suffice
                x, wt = composite_gl(np.linspace(lo_s, hi, int(math.ceil((hi - lo_s) / (0.5 * w))) + 1))
                self.u_lo = None
            else:
                u_lo = -40.0
                ul, wl = composite_gl(np.linspace(u_lo, math.log(x0), 9))
                xl = np.exp(ul)
                npan = int(math.ceil((hi - x0) / (0.5 * w)))
                xr, wr = composite_gl(np.linspace(x0, hi, npan + 1))
                x = np.concatenate([xl, xr])
                wt = np.concatenate([wl * xl, wr])
                self.u_lo = u_lo
                self.k_at_zero = float(self.kde(0.0))
            self.x, self.w = x, wt
        else:
            lo = max(lo_s, ymin - reach) if kind != "epanechnikov" else lo_s
            hi = min(hi_s, ymax + reach) if kind != "epanechnikov" else hi_s
            npan = int(math.ceil((hi - lo) / (2.0 * w)))
            self.x, self.w = composite_gl(np.linspace(lo, hi, npan + 1))
            self.u_lo = None
        with np.errstate(divide="ignore"):
            self.log_k = self.kde.log(self.x)

    def _mass_on_support(self, v) -> float:
        lo, hi = self.support
        if (lo, hi) == tuple(self.model.support):
            return 1.0
        c = self.model.cdf(v, np.array([lo, hi], dtype=float))
        return float(c[1] - c[0])

    def _power_integral(self, v) -> float:
        """int over the support of p^gamma K^(1-gamma) (or p log(p/K) when gamma = 1)."""
        g = self.gamma
        m = self.model
        if self.adaptive:
            def f(x):
                return self._integrand(m.logpdf(v, x), self.kde.log(x))
            lo, hi = self.support
            from .numerics import integrate
            if isinstance(m, WeibullMix2) and lo <= 0:
                return m.integrate(f, self.estimator.quadrature) if math.isinf(hi) else \
                    integrate(f, 0.0, hi, self.estimator.quadrature)
            return integrate(f, lo, hi, self.estimator.quadrature)
        lp = m.logpdf(v, self.x)
        total = float(self.w @ self._integrand(lp, self.log_k))
        if self.u_lo is not None and self.k_at_zero > 0:
            # power-law remainder below x = e^u_lo
            kmin = min(v[1], v[2])
            slope = g * (kmin - 1.0) + 1.0 if g != 1.0 else kmin
            if slope <= 0:
                raise DomainError("the integral term is infinite near 0")
            x0 = math.exp(self.u_lo)
            edge = self._integrand(m.logpdf(v, np.array([x0])), np.log([self.k_at_zero]))[0] * x0
            total += edge / slope
        return total

    def _integrand(self, lp, lk):
        g = self.gamma
        with np.errstate(invalid="ignore", over="ignore"):
            if g == 1.0:
                out = np.exp(lp) * (lp - lk)
                return np.where(np.isneginf(lp), 0.0, out)
            e = g * lp + (1.0 - g) * lk
            out = np.exp(e)
        if g < 1.0:
            out = np.where(np.isneginf(lk), 0.0, out)
        if g > 0.0:
            out = np.where(np.isneginf(lp), 0.0, out)
        return np.where(np.isnan(out), 0.0, out)

    def _value(self, v):
        g = self.gamma
        m = self.model
        ok, why = admissibility(m, self.estimator, v, self.kde.bandwidth)
        if not ok:
            raise InadmissibleEstimator(why)
        lp_obs = m.logpdf(v, self.y)
        obs = float(np.mean(_phi_sharp_ratio(g, lp_obs - self.log_k_obs)))
        if g == 0.0:
            # int (p - K) over the support, K integrating to its own mass there
            return self._mass_on_support(v) - self._kernel_mass() - obs
        integral = self._power_integral(v)
        if not math.isfinite(integral):
            raise DomainError("the integral term is infinite")
        if g == 1.0:
            return integral - obs
        return (integral - self._mass_on_support(v)) / (g - 1.0) - obs

    def _kernel_mass(self) -> float:
        if not hasattr(self, "_kmass"):
            from .numerics import integrate
            lo, hi = self.support
            self._kmass = integrate(self.kde, lo, hi)
        return self._kmass


class ClassicalDualCriterion(Criterion):
    """sup over alpha of f(alpha, phi), with a multi-start simplex search for the supremum."""

    def __init__(self, model, estimator, sample, anchor=None):
        super().__init__(model, estimator, sample)
        self.gamma = estimator.gamma
        check_admissible(model, estimator)
        self.anchor = None if anchor is None else model.vector(anchor)
        if estimator.inner_bounds is not None:
            lo, hi = estimator.inner_bounds
            self.lo = np.asarray(lo, dtype=float)
            self.hi = np.asarray(hi, dtype=float)
        else:
            self.lo = np.asarray(model.lower, dtype=float)
            self.hi = np.asarray(model.upper, dtype=float)
        self.t, self.w = _gl()
        opts = estimator.inner_options
        self.inner = opts
        if isinstance(model, GaussMix2):
            self.jit_f = _jit.gauss_dual_f
        elif isinstance(model, WeibullMix2):
            self.jit_f = _jit.weibull_dual_f
        else:
            self.jit_f = None
        if isinstance(model, CauchyScale):
            ymax = float(np.max(np.abs(self.y)))
            self.b_max = min(float(self.hi[0]), 10.0 * ymax)
            self.b_min = float(self.lo[0])
        # Weibull with gamma < 0: the integral diverges at infinity for every alpha
        # with a lighter tail than p_phi, so it is restricted to (0, max y]
        self.walled = isinstance(model, WeibullMix2) and self.gamma < 0
        self.xmax = float(self.y.max()) if self.walled else math.inf
        self.last_argmax = None

    def bounds_for(self, v):
        lo, hi = self.lo.copy(), self.hi.copy()
        if self.walled and self.estimator.weibull_wall is not None:
            # p_phi^gamma p_alpha^(1-gamma) is integrable at 0 only for alpha_1 > gamma phi_1 / (gamma - 1)
            lo[1] = max(lo[1], self.gamma / (self.gamma - 1.0) * v[1] + self.estimator.weibull_wall)
            hi[1] = max(hi[1], lo[1])
        return lo, hi

    def starts(self, v, lo, hi):
        pts = [np.clip(v, lo, hi)]
        if self.anchor is not None:
            pts.append(np.clip(self.anchor, lo, hi))
        pts.append(0.5 * (lo + hi))
        out = []
        for p in pts:
            if not any(np.array_equal(p, q) for q in out):
                out.append(p)
        return out

    def _lphi(self, v):
        return np.ascontiguousarray(self.model.logpdf(v, self.y), dtype=float)

    def f(self, alpha, v) -> float:
        """The function under the supremum; -inf on walls."""
        if self.jit_f is not None:
            return float(self.jit_f(np.asarray(alpha, dtype=float), v, self.y, self._lphi(v), self.gamma,
                                    self.t, self.w, self.xmax))
        if isinstance(self.model, CauchyScale) and self.gamma == 2.0:
            return float(_jit.cauchy_pearson_f(float(alpha[0]), float(v[0]), self.y)) - 0.5
        try:
            return dual_inner(self.model, v, alpha, self.y, self.gamma, self.estimator.quadrature)
        except InfeasibleParameter:
            return -math.inf

    def _value(self, v):
        val, arg = self.supremum(v)
        self.last_argmax = arg
        return val

    def evaluate(self, vec) -> ObjectiveValue:
        v = self.model.check_feasible(vec)
        val, arg = self.supremum(v)
        flag = None if math.isfinite(val) else "all inner starts failed"
        return ObjectiveValue(val, self.model.point(arg) if arg is not None else None, None, flag)

    def supremum(self, v):
        if isinstance(self.model, CauchyScale):
            return self._supremum_1d(v)
        lo, hi = self.bounds_for(v)
        best, best_x = -math.inf, None
        o = self.inner
        lphi = self._lphi(v) if self.jit_f is not None else None
        for x0 in self.starts(v, lo, hi):
            if self.jit_f is not None:
                f0 = self.f(x0, v)
                if not math.isfinite(f0):
                    if f0 == math.inf:
                        return math.inf, x0
                    continue
                x, fx, _ = _jit.nm_maximize(self.jit_f, x0.copy(), lo, hi, v, self.y, lphi, self.gamma,
                                            self.t, self.w, self.xmax, o.initial_simplex_scale, o.x_tolerance,
                                            o.f_tolerance, o.max_evals)
            else:
                try:
                    res = nelder_mead(lambda a: -self.f(np.clip(a, lo, hi), v), x0, o)
                except OptimizationError:
                    continue
                x, fx = np.clip(res.x, lo, hi), -res.fun
            if fx > best:
                best, best_x = float(fx), np.asarray(x)
        return best, best_x

    def _supremum_1d(self, v):
        """Grid scan over b in [eps, b_max] followed by Brent refinement of every local maximum."""
        b = np.geomspace(self.b_min, self.b_max, 400)
        if self.gamma == 2.0:
            vals = np.array([_jit.cauchy_pearson_f(bi, float(v[0]), self.y) for bi in b]) - 0.5
            f = lambda s: float(_jit.cauchy_pearson_f(s, float(v[0]), self.y)) - 0.5
        else:
            vals = np.array([self.f(np.array([bi]), v) for bi in b])
            f = lambda s: self.f(np.array([s]), v)
        best_i = int(np.argmax(vals))
        best, best_x = float(vals[best_i]), float(b[best_i])
        peaks = [i for i in range(len(b))
                 if vals[i] >= vals[max(i - 1, 0)] and vals[i] >= vals[min(i + 1, len(b) - 1)]]
        for i in peaks:
            lo, hi = b[max(i - 1, 0)], b[min(i + 1, len(b) - 1)]
            if hi <= lo:
                continue
            r = brent_min(lambda s: -f(s), lo, hi, self.inner)
            if -r.fun > best:
                best, best_x = -r.fun, r.x
        a = float(v[0])
        if self.b_min <= a <= self.b_max:
            fa = f(a)
            if fa > best:
                best, best_x = fa, a
        return best, np.array([best_x])


def make_criterion(model: Model, estimator: EstimatorSpec, sample, anchor=None) -> Criterion:
    if estimator.kind == "loglik":
        return LogLikelihoodCriterion(model, estimator, sample)
    if estimator.kind == "mdpd":
        return MDPDCriterion(model, estimator, sample)
    if estimator.kind == "kernel_dual":
        return KernelDualCriterion(model, estimator, sample)
    return ClassicalDualCriterion(model, estimator, sample, anchor)


# ---------------------------------------------------------------------------
# Functional entry points
# ---------------------------------------------------------------------------

def classical_dual_estimate(model: Model, params, sample, gamma: float, inner_bounds=None,
                            anchor=None, inner_options: OptimizerOptions | None = None) -> ObjectiveValue:
    est = EstimatorSpec.classical_dual(gamma, inner_bounds=inner_bounds,
                                       inner_options=inner_options or OptimizerOptions())
    return ClassicalDualCriterion(model, est, sample, anchor).evaluate(params)


def kernel_dual_estimate(model: Model, params, sample, gamma: float,
                         kernel: KernelSpec | str = "gaussian") -> ObjectiveValue:
    est = EstimatorSpec.kernel_dual(gamma, kernel)
    crit = KernelDualCriterion(model, est, sample)
    v = model.check_feasible(params)
    check_admissible(model, est, v, crit.kde.bandwidth)
    return crit.evaluate(v)


def mdpd_objective(model: Model, params, sample, a: float) -> ObjectiveValue:
    return MDPDCriterion(model, EstimatorSpec.mdpd(a), sample).evaluate(params)


# ---------------------------------------------------------------------------
# Proximal term
# ---------------------------------------------------------------------------

def _weighted_psi(psi: ProximalSpec, lh, lh_prev):
    """psi(h/h_prev) h_prev from log posteriors, in closed form for the two built-in kernels."""
    if psi.name == "sqrt":
        return 0.5 * (np.exp(0.5 * lh) - np.exp(0.5 * lh_prev)) ** 2
    if psi.name == "kl":
        d = lh - lh_prev
        hp = np.exp(lh_prev)
        with np.errstate(over="ignore", invalid="ignore"):
            near = hp * (np.expm1(np.minimum(d, 1.0)) - d)
            # expanded form avoids exp overflow for large d; hp*d -> 0 when hp underflows
            far = np.exp(lh) - hp - np.where(hp > 0, hp * d, 0.0)
        return np.where(np.abs(d) < 1.0, near, far)
    return psi.psi(np.exp(lh - lh_prev)) * np.exp(lh_prev)


def _weighted_psi_prime(psi: ProximalSpec, lh, lh_prev):
    """psi'(h/h_prev); the gradient integrand is grad h * psi'(h/h_prev)."""
    if psi.name == "sqrt":
        return 0.5 * (1.0 - np.exp(0.5 * (lh_prev - lh)))
    if psi.name == "kl":
        return -np.expm1(lh_prev - lh)
    return psi.psi_prime(np.exp(lh - lh_prev))


def _cauchy_log_posterior(a, y, x):
    a2, y2 = a * a, y * y
    return np.log(y2) + np.log(a2 + y2) - x - 2.0 * np.log(a2 * np.exp(-x) + y2)


def _cauchy_label_nodes(model: CauchyScale, a_values, yi):
    return model.label_grid(a_values, yi)


def proximal_term(model: Model, params, params_prev, sample, psi: ProximalSpec = SQRT_PSI) -> float:
    """D_psi(phi, phi_prev) = (1/n) sum_i int psi(h_i(x|phi)/h_i(x|phi_prev)) h_i(x|phi_prev) dx."""
    v = model.vector(params)
    vp = model.vector(params_prev)
    y = _obs(sample)
    if model.finite_labels:
        lh = model.log_posteriors(v, y)
        lhp = model.log_posteriors(vp, y)
        return float(np.sum(_weighted_psi(psi, lh, lhp)) / y.size)
    if np.any(y == 0):
        raise DomainError("a zero observation makes the label posterior degenerate")
    total = 0.0
    for yi in y:
        x, w = _cauchy_label_nodes(model, (v[0], vp[0]), yi)
        lh = _cauchy_log_posterior(v[0], yi, x)
        lhp = _cauchy_log_posterior(vp[0], yi, x)
        total += float(w @ _weighted_psi(psi, lh, lhp))
    return total / y.size


def proximal_term_gradient(model: Model, params, params_prev, sample, psi: ProximalSpec = SQRT_PSI) -> np.ndarray:
    """Gradient in phi of ``proximal_term``."""
    v = model.vector(params)
    vp = model.vector(params_prev)
    y = _obs(sample)
    if model.finite_labels:
        lh = model.log_posteriors(v, y)
        lhp = model.log_posteriors(vp, y)
        dh = model.posterior_gradients(v, y)                  # (dim, 2, n)
        pp = _weighted_psi_prime(psi, lh, lhp)                # (2, n)
        return np.sum(dh * pp[None, :, :], axis=(1, 2)) / y.size
    if np.any(y == 0):
        raise DomainError("a zero observation makes the label posterior degenerate")
    total = 0.0
    for yi in y:
        x, w = _cauchy_label_nodes(model, (v[0], vp[0]), yi)
        lh = _cauchy_log_posterior(v[0], yi, x)
        lhp = _cauchy_log_posterior(vp[0], yi, x)
        dh = model.label_posterior_gradient(v[0], yi, x)
        total += float(w @ (dh * _weighted_psi_prime(psi, lh, lhp)))
    return np.array([total / y.size])


class ProximalTerm:
    """D_psi(., phi_prev) with the posteriors at phi_prev cached."""

    def __init__(self, model: Model, params_prev, sample, psi: ProximalSpec = SQRT_PSI):
        self.model = model
        self.psi = psi
        self.vp = model.vector(params_prev).copy()
        self.y = _obs(sample)
        if model.finite_labels:
            self.lhp = model.log_posteriors(self.vp, self.y)
        else:
            if np.any(self.y == 0):
                raise DomainError("a zero observation makes the label posterior degenerate")
            self.lhp = None

    def __call__(self, vec) -> float:
        v = np.asarray(vec, dtype=float)
        if self.lhp is not None:
            lh = self.model.log_posteriors(v, self.y)
            return float(np.sum(_weighted_psi(self.psi, lh, self.lhp)) / self.y.size)
        return proximal_term(self.model, v, self.vp, self.y, self.psi)

    def gradient(self, vec) -> np.ndarray:
        return proximal_term_gradient(self.model, np.asarray(vec, dtype=float), self.vp, self.y, self.psi)


def fd_gradient(f, x, h: float = 1e-5) -> np.ndarray:
    """Central finite differences with step h * max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2.0 * e[i])
    return g
