"""Incomplete-data models: two-component Gaussian and Weibull mixtures, Cauchy scale model.

Parameter vectors are flat numpy arrays ordered (weights..., component params...).
For the two-component mixtures only the first weight is stored; the second is
one minus it. ``ParamPoint`` is the user-facing value type.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from .errors import DomainError, InfeasibleParameter
from .numerics import composite_gl, integrate

SQRT_2PI = math.sqrt(2.0 * math.pi)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ParamPoint:
    weights: tuple
    component_params: tuple

    @property
    def vector(self) -> np.ndarray:
        # mixtures carry lambda only; the last weight is implied
        w = self.weights[:-1] if len(self.weights) > 1 else ()
        return np.array(tuple(w) + tuple(self.component_params), dtype=float)

    def __iter__(self):
        return iter(self.vector)

    def __repr__(self):
        return f"ParamPoint(weights={self.weights}, component_params={self.component_params})"


@dataclass(frozen=True)
class Sample:
    observations: np.ndarray
    provenance: str = "clean"
    seed: int | None = None

    def __post_init__(self):
        y = np.asarray(self.observations, dtype=float).ravel()
        if y.size < 2:
            raise ValueError("a sample needs at least two observations")
        if not np.all(np.isfinite(y)):
            raise ValueError("observations must be finite")
        y.setflags(write=False)
        object.__setattr__(self, "observations", y)

    @property
    def n(self) -> int:
        return self.observations.size

    def __len__(self):
        return self.observations.size

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# seed={self.seed if self.seed is not None else ''} provenance={self.provenance}\n")
        buf.write("y\n")
        for v in self.observations:
            buf.write(f"{float(v)!r}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "Sample":
        text = str(path_or_text)
        if "\n" not in text:
            text = Path(text).read_text()
        seed, provenance, values = None, "clean", []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    if key == "seed" and val:
                        seed = int(val)
                    elif key == "provenance" and val:
                        provenance = val
                continue
            try:
                values.append(float(line.split(",")[0]))
            except ValueError:
                continue  # header row
        return cls(np.array(values), provenance, seed)


class Model:
    """Common surface of the three models."""

    name: str
    dim: int
    n_weights: int
    param_names: tuple
    finite_labels: bool

    lower: np.ndarray
    upper: np.ndarray

    # -- parameter handling -------------------------------------------------
    def point(self, vec) -> ParamPoint:
        v = np.asarray(vec, dtype=float).ravel()
        if self.n_weights:
            lam = float(v[0])
            return ParamPoint((lam, 1.0 - lam), tuple(float(x) for x in v[1:]))
        return ParamPoint((), tuple(float(x) for x in v))

    def vector(self, params) -> np.ndarray:
        if isinstance(params, ParamPoint):
            return params.vector
        v = np.asarray(params, dtype=float).ravel()
        if v.size != self.dim:
            raise ValueError(f"{self.name} expects {self.dim} parameters, got {v.size}")
        return v

    def is_feasible(self, vec) -> bool:
        v = np.asarray(vec, dtype=float)
        return bool(np.all(np.isfinite(v)) and np.all(v >= self.lower) and np.all(v <= self.upper))

    def check_feasible(self, vec) -> np.ndarray:
        v = self.vector(vec)
        if not self.is_feasible(v):
            raise InfeasibleParameter(f"{self.name}: parameters {v} outside {self.lower}..{self.upper}")
        return v

    def feasible_project(self, raw) -> ParamPoint:
        return self.point(self.project_vector(raw))

    def project_vector(self, raw) -> np.ndarray:
        v = np.asarray(raw, dtype=float).ravel().copy()
        if v.size != self.dim:
            raise ValueError(f"{self.name} expects {self.dim} parameters, got {v.size}")
        return np.clip(v, self.lower, self.upper)

    @property
    def weight_slice(self) -> slice:
        return slice(0, self.n_weights)

    @property
    def component_slice(self) -> slice:
        return slice(self.n_weights, self.dim)

    # -- densities ----------------------------------------------------------
    def density(self, params, y):
        raise NotImplementedError

    def logpdf(self, params, y):
        with np.errstate(divide="ignore"):
            return np.log(self.density(params, y))

    def log_likelihood(self, params, y) -> float:
        return float(np.sum(self.logpdf(params, y)))

    def canonical(self, vec) -> np.ndarray:
        """Representative of the label-switching class (identity for non-mixtures)."""
        return np.asarray(vec, dtype=float)

    def integrate(self, f, opts=None, full_output=False):
        """Adaptive integral of ``f`` over the model support."""
        lo, hi = self.support
        return integrate(f, lo, hi, opts, full_output=full_output)


# ---------------------------------------------------------------------------
# Two-component mixtures
# ---------------------------------------------------------------------------

class _TwoComponentMixture(Model):
    n_weights = 1
    finite_labels = True
    labels = (1, 2)

    def weighted_components(self, params, y):
        """lambda_j f_j(y) for j = 1, 2, stacked into shape (2, len(y))."""
        raise NotImplementedError

    def log_weighted_components(self, params, y):
        with np.errstate(divide="ignore"):
            return np.log(self.weighted_components(params, y))

    def density(self, params, y):
        v = self.vector(params)
        c = self.weighted_components(v, np.asarray(y, dtype=float))
        return c[0] + c[1]

    def posteriors(self, params, y) -> np.ndarray:
        """h(1|y), h(2|y) stacked into shape (2, len(y)); computed in log space."""
        v = self.vector(params)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        lc = self.log_weighted_components(v, y)
        if np.any(np.isneginf(lc[0]) & np.isneginf(lc[1])):
            raise DomainError("zero marginal density at an observation")
        g = lc[0] - lc[1]
        h1 = special.expit(g)
        h2 = special.expit(-g)
        return np.stack([h1, h2])

    def log_posteriors(self, params, y) -> np.ndarray:
        """log h(1|y), log h(2|y); finite even where the posteriors underflow."""
        v = self.vector(params)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        lc = self.log_weighted_components(v, y)
        if np.any(np.isneginf(lc[0]) & np.isneginf(lc[1])):
            raise DomainError("zero marginal density at an observation")
        with np.errstate(invalid="ignore"):
            g = lc[0] - lc[1]
        return np.stack([-np.logaddexp(0.0, -g), -np.logaddexp(0.0, g)])

    def label_posterior(self, params, y, x):
        if x not in self.labels:
            raise ValueError(f"labels are {self.labels}")
        h = self.posteriors(params, y)[x - 1]
        return h[0] if np.ndim(y) == 0 else h

    def log_odds_gradient(self, params, y) -> np.ndarray:
        """Gradient in the parameters of g = log(lambda f1) - log((1-lambda) f2), shape (dim, m)."""
        raise NotImplementedError

    def log_component_gradients(self, params, y) -> np.ndarray:
        """d log(weight_x f_x(y)) / d phi, shape (dim, 2, m)."""
        raise NotImplementedError

    def score(self, params, y) -> np.ndarray:
        """d log p(y) / d phi, shape (dim, m)."""
        v = self.vector(params)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        h = self.posteriors(v, y)
        return np.sum(self.log_component_gradients(v, y) * h[None, :, :], axis=1)

    def posterior_gradients(self, params, y) -> np.ndarray:
        """d h(x|y) / d phi, shape (dim, 2, m)."""
        v = self.vector(params)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        h = self.posteriors(v, y)
        dg = self.log_odds_gradient(v, y)
        dh1 = dg * (h[0] * h[1])[None, :]
        return np.stack([dh1, -dh1], axis=1)

    def sample_labels(self, lam, n, rng):
        return rng.random(n) < lam

    def canonical(self, vec):
        v = np.asarray(vec, dtype=float).copy()
        if v[1] > v[2]:
            v = np.array([1.0 - v[0], v[2], v[1]])
        return v


@dataclass(frozen=True, eq=False)
class GaussMix2(_TwoComponentMixture):
    """lambda N(mu1, 1) + (1 - lambda) N(mu2, 1)."""

    eta: float = 0.1
    mean_bound: float = 20.0

    name = "gauss"
    dim = 3
    param_names = ("lambda", "mu1", "mu2")
    support = (-math.inf, math.inf)

    def __post_init__(self):
        if not 0.0 < self.eta < 0.5:
            raise ValueError("eta must lie in (0, 1/2)")

    @property
    def lower(self):
        return np.array([self.eta, -self.mean_bound, -self.mean_bound])

    @property
    def upper(self):
        return np.array([1.0 - self.eta, self.mean_bound, self.mean_bound])

    def __eq__(self, other):
        return isinstance(other, GaussMix2) and (self.eta, self.mean_bound) == (other.eta, other.mean_bound)

    def __hash__(self):
        return hash((self.name, self.eta, self.mean_bound))

    def weighted_components(self, params, y):
        lam, m1, m2 = params
        y = np.asarray(y, dtype=float)
        c1 = lam * np.exp(-0.5 * (y - m1) ** 2) / SQRT_2PI
        c2 = (1.0 - lam) * np.exp(-0.5 * (y - m2) ** 2) / SQRT_2PI
        return np.stack([c1, c2])

    def log_weighted_components(self, params, y):
        lam, m1, m2 = params
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            l1 = math.log(lam) if lam > 0 else -math.inf
            l2 = math.log(1.0 - lam) if lam < 1 else -math.inf
        return np.stack([l1 - 0.5 * (y - m1) ** 2 - LOG_SQRT_2PI,
                         l2 - 0.5 * (y - m2) ** 2 - LOG_SQRT_2PI])

    def logpdf(self, params, y):
        lc = self.log_weighted_components(self.vector(params), y)
        return np.logaddexp(lc[0], lc[1])

    def log_odds_gradient(self, params, y):
        lam, m1, m2 = params
        d_lam = np.full_like(y, 1.0 / (lam * (1.0 - lam)))
        return np.stack([d_lam, y - m1, -(y - m2)])

    def log_component_gradients(self, params, y):
        lam, m1, m2 = params
        z = np.zeros_like(y)
        first = np.stack([np.full_like(y, 1.0 / lam), y - m1, z])
        second = np.stack([np.full_like(y, -1.0 / (1.0 - lam)), z, y - m2])
        return np.stack([first, second], axis=1)

    def cdf(self, params, y):
        lam, m1, m2 = self.vector(params)
        return lam * special.ndtr(np.asarray(y) - m1) + (1 - lam) * special.ndtr(np.asarray(y) - m2)

    def sample(self, params, n: int, rng) -> np.ndarray:
        lam, m1, m2 = self.check_feasible(params)
        first = self.sample_labels(lam, n, rng)
        z = rng.standard_normal(n)
        return np.where(first, m1, m2) + z

    # quadrature -------------------------------------------------------------
    def grid(self, centers, order: int = 20, panel: float = 3.0, reach: float = 12.0):
        """Composite Gauss-Legendre nodes covering unit-variance bumps at ``centers``."""
        c = np.asarray(centers, dtype=float)
        lo, hi = float(c.min()) - reach, float(c.max()) + reach
        k = max(1, int(math.ceil((hi - lo) / panel)))
        return composite_gl(np.linspace(lo, hi, k + 1), order)

    def param_centers(self, *vecs):
        return np.concatenate([np.asarray(v, dtype=float)[1:] for v in vecs])


WEIBULL_SCALES = (0.5, 2.0)


def weibull_logpdf(y, shape, scale):
    y = np.asarray(y, dtype=float)
    pos = (y > 0) & np.isfinite(y)
    ls = np.log(np.where(pos, y, 1.0) / scale)
    with np.errstate(over="ignore"):
        out = math.log(shape / scale) + (shape - 1.0) * ls - np.exp(shape * ls)
    return np.where(pos, out, -np.inf)


def weibull_pdf(y, shape, scale):
    return np.exp(weibull_logpdf(y, shape, scale))


@dataclass(frozen=True, eq=False)
class WeibullMix2(_TwoComponentMixture):
    """lambda Weibull(phi1, scale 1/2) + (1 - lambda) Weibull(phi2, scale 2); shapes estimated."""

    eta: float = 0.1
    shape_lower: float = 0.01
    shape_upper: float = 50.0

    name = "weibull"
    dim = 3
    param_names = ("lambda", "phi1", "phi2")
    support = (0.0, math.inf)
    scales = WEIBULL_SCALES

    def __post_init__(self):
        if not 0.0 < self.eta < 0.5:
            raise ValueError("eta must lie in (0, 1/2)")
        if not self.shape_lower > 0:
            raise ValueError("shape lower bound must be positive")

    @property
    def lower(self):
        return np.array([self.eta, self.shape_lower, self.shape_lower])

    @property
    def upper(self):
        return np.array([1.0 - self.eta, self.shape_upper, self.shape_upper])

    def __eq__(self, other):
        return isinstance(other, WeibullMix2) and (self.eta, self.shape_lower, self.shape_upper) == (
            other.eta, other.shape_lower, other.shape_upper)

    def __hash__(self):
        return hash((self.name, self.eta, self.shape_lower, self.shape_upper))

    def weighted_components(self, params, y):
        lam, k1, k2 = params
        return np.stack([lam * weibull_pdf(y, k1, 0.5), (1.0 - lam) * weibull_pdf(y, k2, 2.0)])

    def log_weighted_components(self, params, y):
        lam, k1, k2 = params
        with np.errstate(divide="ignore"):
            l1 = math.log(lam) if lam > 0 else -math.inf
            l2 = math.log(1.0 - lam) if lam < 1 else -math.inf
        return np.stack([l1 + weibull_logpdf(y, k1, 0.5), l2 + weibull_logpdf(y, k2, 2.0)])

    def logpdf(self, params, y):
        lc = self.log_weighted_components(self.vector(params), np.asarray(y, dtype=float))
        return np.logaddexp(lc[0], lc[1])

    def log_odds_gradient(self, params, y):
        lam, k1, k2 = params
        if np.any(y <= 0):
            raise DomainError("Weibull label posteriors need y > 0")
        l1 = np.log(2.0 * y)
        l2 = np.log(0.5 * y)
        d_lam = np.full_like(y, 1.0 / (lam * (1.0 - lam)))
        d1 = 1.0 / k1 + l1 - np.exp(k1 * l1) * l1
        d2 = 1.0 / k2 + l2 - np.exp(k2 * l2) * l2
        return np.stack([d_lam, d1, -d2])

    def log_component_gradients(self, params, y):
        lam, k1, k2 = params
        if np.any(y <= 0):
            raise DomainError("the Weibull score needs y > 0")
        l1 = np.log(2.0 * y)
        l2 = np.log(0.5 * y)
        z = np.zeros_like(y)
        first = np.stack([np.full_like(y, 1.0 / lam), 1.0 / k1 + l1 - np.exp(k1 * l1) * l1, z])
        second = np.stack([np.full_like(y, -1.0 / (1.0 - lam)), z, 1.0 / k2 + l2 - np.exp(k2 * l2) * l2])
        return np.stack([first, second], axis=1)

    def integrate(self, f, opts=None, full_output=False):
        """Integral over (0, inf) in the variable u = log x, which tames the power law at 0."""
        def g(u):
            x = np.exp(u)
            with np.errstate(invalid="ignore", over="ignore"):
                v = np.asarray(f(x), dtype=float) * x
            return np.where((x > 0) & np.isfinite(x), v, 0.0)
        return integrate(g, -math.inf, math.inf, opts, full_output=full_output)

    def cdf(self, params, y):
        lam, k1, k2 = self.vector(params)
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        return lam * (1 - np.exp(-((2.0 * y) ** k1))) + (1 - lam) * (1 - np.exp(-((0.5 * y) ** k2)))

    def sample(self, params, n: int, rng) -> np.ndarray:
        lam, k1, k2 = self.check_feasible(params)
        first = self.sample_labels(lam, n, rng)
        u = rng.random(n)
        # inverse CDF of each component
        e = -np.log1p(-u)
        return np.where(first, 0.5 * e ** (1.0 / k1), 2.0 * e ** (1.0 / k2))

    # quadrature -------------------------------------------------------------
    def grid(self, shapes, decay: float | None = None, x_max: float | None = None,
             order: int = 20):
        """Nodes and weights on (0, inf) for integrands built from these Weibull components.

        The rule lives in u = log x: a few long panels for the power-law left
        tail (``decay`` is its exponent in u), panels of width ~3/k_max through
        the bulk, and an upper cutoff where every component has died off
        (e^{-40}), or ``x_max`` when given.
        """
        comps = []
        for i, k in enumerate(shapes):
            comps.append((float(k), self.scales[i % 2]))
        kmin = min(k for k, _ in comps)
        kmax = max(k for k, _ in comps)
        c = kmin if decay is None else decay
        c = max(c, 0.02)
        u_bulk = min(math.log(s) - 3.0 / k for k, s in comps)
        u_bulk = max(u_bulk, -60.0)
        if x_max is None:
            u_hi = max(math.log(s) + math.log(40.0) / k for k, s in comps)
        else:
            u_hi = math.log(x_max)
        u_hi = min(u_hi, 700.0)
        u_lo = max(u_bulk - 40.0 / c, -700.0)
        if u_lo >= u_bulk:
            u_lo = u_bulk - 1.0
        tail = np.linspace(u_lo, u_bulk, 6)
        width = min(1.0, 3.0 / kmax)
        if u_hi <= u_bulk:
            u_hi = u_bulk + width
        bulk = np.linspace(u_bulk, u_hi, max(1, int(math.ceil((u_hi - u_bulk) / width))) + 1)
        u, wu = composite_gl(np.concatenate([tail, bulk[1:]]), order)
        x = np.exp(u)
        return x, wu * x


# ---------------------------------------------------------------------------
# Cauchy scale model
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CauchyScale(Model):
    """Cauchy(0, a), a >= eps, written as an incomplete-data model with labels x in [0, inf)."""

    eps: float = 0.01
    scale_upper: float = 1e3

    name = "cauchy"
    dim = 1
    n_weights = 0
    param_names = ("a",)
    finite_labels = False
    support = (-math.inf, math.inf)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("the scale lower bound must be positive")

    @property
    def lower(self):
        return np.array([self.eps])

    @property
    def upper(self):
        return np.array([self.scale_upper])

    def __eq__(self, other):
        return isinstance(other, CauchyScale) and (self.eps, self.scale_upper) == (other.eps, other.scale_upper)

    def __hash__(self):
        return hash((self.name, self.eps, self.scale_upper))

    def density(self, params, y):
        (a,) = self.vector(params)
        y = np.asarray(y, dtype=float)
        return a / (math.pi * (a * a + y * y))

    def logpdf(self, params, y):
        (a,) = self.vector(params)
        y = np.asarray(y, dtype=float)
        return math.log(a / math.pi) - np.log(a * a + y * y)

    def score(self, params, y) -> np.ndarray:
        (a,) = self.vector(params)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return (1.0 / a - 2.0 * a / (a * a + y * y))[None, :]

    def joint_density(self, params, x, y):
        """f(x, y | a) = a y^2 e^x / (pi (a^2 + y^2 e^x)^2)."""
        (a,) = self.vector(params)
        ex = np.exp(np.asarray(x, dtype=float))
        y2 = np.asarray(y, dtype=float) ** 2
        return a * y2 * ex / (math.pi * (a * a + y2 * ex) ** 2)

    def label_posterior(self, params, y, x):
        """h(x | a) = y^2 e^x (a^2 + y^2) / (a^2 + e^x y^2)^2 for x >= 0."""
        (a,) = self.vector(params)
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        if np.any(y == 0):
            raise DomainError("the label posterior is degenerate at y = 0")
        if np.any(x < 0):
            raise DomainError("labels live on [0, inf)")
        a2 = a * a
        y2 = y * y
        # e^{-x} form keeps large x finite
        emx = np.exp(-x)
        return y2 * (a2 + y2) * emx / (a2 * emx + y2) ** 2

    def label_posterior_gradient(self, params, y, x):
        (a,) = self.vector(params)
        h = self.label_posterior(a, y, x)
        y2 = np.asarray(y, dtype=float) ** 2
        ex = np.exp(np.asarray(x, dtype=float))
        return h * (2 * a / (a * a + y2) - 4 * a / (a * a + ex * y2))

    def label_cutoff(self, a_values, y, tiny: float = 1e-12) -> float:
        """Label x beyond which h(x|a) < tiny for every a given (h ~ (a^2+y^2)/(y^2 e^x))."""
        amax = max(float(a) for a in a_values)
        return math.log((amax * amax + y * y) / (y * y)) + math.log(1.0 / tiny) + 2.0

    def label_grid(self, a_values, y, order: int = 20):
        xmax = self.label_cutoff(a_values, y)
        k = max(4, int(math.ceil(xmax)))
        return composite_gl(np.linspace(0.0, xmax, k + 1), order)

    def cdf(self, params, y):
        (a,) = self.vector(params)
        return 0.5 + np.arctan(np.asarray(y, dtype=float) / a) / math.pi

    def sample(self, params, n: int, rng) -> np.ndarray:
        (a,) = self.check_feasible(params)
        return a * rng.standard_cauchy(n)


MODELS = {"gauss": GaussMix2, "weibull": WeibullMix2, "cauchy": CauchyScale}


def make_model(name: str, **kwargs) -> Model:
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(**kwargs)


def density(model: Model, params, y):
    v = model.check_feasible(params)
    return model.density(v, y)


def label_posterior(model: Model, params, y, x):
    v = model.check_feasible(params)
    if model.density(v, np.asarray(y, dtype=float)).min() <= 0:
        raise DomainError("zero marginal density")
    return model.label_posterior(v, y, x)


def sample(model: Model, params, n: int, rng, provenance: str = "clean", seed=None) -> Sample:
    if isinstance(rng, (int, np.integer)):
        seed = int(rng) if seed is None else seed
        rng = np.random.default_rng(int(rng))
    return Sample(model.sample(params, n, rng), provenance, seed)


def feasible_project(model: Model, raw) -> ParamPoint:
    return model.feasible_project(raw)
