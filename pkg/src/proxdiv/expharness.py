"""Monte-Carlo experiments: contamination schemes, error metrics and summary tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _jit
from .errors import DomainError, IntegrationDivergence
from .models import GaussMix2, Model, Sample, WeibullMix2
from .numerics import QuadratureOptions, integrate
from .objectives import EstimatorSpec
from .proximal import AlgorithmSpec, check_initialization
from .proximal import run as run_algorithm

CONTAMINATIONS = ("none", "gaussian_tails", "weibull_replace")
GAUSSIAN_TAIL_MODES = ("replace", "add")

# replacement law for the Weibull contamination
OUTLIER_SHAPE = 0.9
OUTLIER_SCALE = 3.0


# ---------------------------------------------------------------------------
# error metrics
# ---------------------------------------------------------------------------

def _metric_breaks(model: Model, a, b):
    if isinstance(model, GaussMix2):
        return tuple(sorted(set(np.concatenate([a[1:], b[1:]]).tolist())))
    return ()


def tvd_error(model: Model, phi_hat, phi_true, opts: QuadratureOptions | None = None) -> float:
    """Total variation distance (1/2) int |p_hat - p_true|."""
    a = model.check_feasible(phi_hat)
    b = model.check_feasible(phi_true)
    if np.array_equal(a, b):
        return 0.0
    opts = opts or QuadratureOptions(abs_tol=1e-11, rel_tol=1e-10, max_subdivisions=400)
    f = lambda x: np.abs(model.density(a, x) - model.density(b, x))
    if isinstance(model, WeibullMix2):
        val = model.integrate(f, opts)
    else:
        lo, hi = model.support
        val = integrate(f, lo, hi, opts, breakpoints=_metric_breaks(model, a, b))
    return float(min(max(0.5 * val, 0.0), 1.0))


def chi2_error(model: Model, phi_hat, phi_true, opts: QuadratureOptions | None = None) -> float:
    """int (p_hat - p_true)^2 / p_true; +inf when the integral diverges."""
    a = model.check_feasible(phi_hat)
    b = model.check_feasible(phi_true)
    if np.array_equal(a, b):
        return 0.0
    if isinstance(model, WeibullMix2) and _jit.weibull_integral_finite(a, b, -1.0) != 0:
        # p_hat^2 / p_true is not integrable at 0 or in the tail
        return math.inf
    opts = opts or QuadratureOptions(abs_tol=1e-11, rel_tol=1e-9, max_subdivisions=400)

    def f(x):
        lb = model.logpdf(b, x)
        d = model.density(a, x) - np.exp(lb)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out = np.exp(2.0 * np.log(np.abs(d)) - lb)
        return np.where(d == 0, 0.0, out)

    try:
        if isinstance(model, WeibullMix2):
            return float(model.integrate(f, opts))
        lo, hi = model.support
        return float(integrate(f, lo, hi, opts, breakpoints=_metric_breaks(model, a, b)))
    except IntegrationDivergence:
        return math.inf


# ---------------------------------------------------------------------------
# contamination
# ---------------------------------------------------------------------------

def _values(sample):
    if isinstance(sample, Sample):
        return sample.observations, sample.seed
    return np.asarray(sample, dtype=float).ravel(), None


def contaminate_gaussian(sample, rng, k: int = 5, mode: str = "add") -> Sample:
    """Outliers at both ends: the k lowest values get U[-5,-2] draws and the k largest U[2,5] draws.

    ``mode="replace"`` substitutes the draws for those values; ``mode="add"``
    adds the draws to them. Either way n is unchanged.
    """
    if mode not in GAUSSIAN_TAIL_MODES:
        raise ValueError(f"mode must be one of {GAUSSIAN_TAIL_MODES}")
    y, seed = _values(sample)
    if y.size < 2 * k:
        raise DomainError(f"need at least {2 * k} observations")
    out = y.copy()
    order = np.argsort(y, kind="stable")
    low, high = order[:k], order[-k:]
    dl = rng.uniform(-5.0, -2.0, k)
    dh = rng.uniform(2.0, 5.0, k)
    if mode == "replace":
        out[low], out[high] = dl, dh
    else:
        out[low] += dl
        out[high] += dh
    return Sample(out, f"gaussian_tails_{mode}", seed)


def contaminate_weibull(sample, rng, k: int = 10) -> Sample:
    """Replace k uniformly chosen observations by Weibull(shape 0.9, scale 3) draws."""
    y, seed = _values(sample)
    if y.size < k:
        raise DomainError(f"need at least {k} observations")
    out = y.copy()
    idx = rng.choice(y.size, size=k, replace=False)
    out[idx] = OUTLIER_SCALE * rng.weibull(OUTLIER_SHAPE, k)
    return Sample(out, "weibull_replace", seed)


# ---------------------------------------------------------------------------
# Monte-Carlo runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    model: Model
    truth: tuple
    estimator: EstimatorSpec
    algorithm: AlgorithmSpec = field(default_factory=AlgorithmSpec)
    n: int = 100
    runs: int = 100
    contamination: str = "none"
    gaussian_tail_mode: str = "add"
    base_seed: int = 0
    # "truth_perturbed" or an explicit starting vector
    phi0: str | tuple = "truth_perturbed"
    perturbation: float = 0.1
    init_retries: int = 10
    check_init: bool = True
    # used when no perturbed start passes the initialization check
    fallback_phi0: tuple | None = None
    label: str = ""

    def __post_init__(self):
        if self.runs < 1 or self.n < 2:
            raise ValueError("runs must be >= 1 and n >= 2")
        if self.contamination not in CONTAMINATIONS:
            raise ValueError(f"contamination must be one of {CONTAMINATIONS}")
        if self.gaussian_tail_mode not in GAUSSIAN_TAIL_MODES:
            raise ValueError(f"gaussian_tail_mode must be one of {GAUSSIAN_TAIL_MODES}")
        self.model.check_feasible(self.truth)
        if not isinstance(self.phi0, str):
            self.model.check_feasible(self.phi0)
        elif self.phi0 != "truth_perturbed":
            raise ValueError("phi0 must be 'truth_perturbed' or a parameter vector")

    @property
    def name(self) -> str:
        return self.label or f"{self.estimator.label()} [{self.algorithm.variant}]"


@dataclass
class RunResult:
    run: int
    seed: int
    estimate: np.ndarray | None = None
    phi0: np.ndarray | None = None
    tvd: float = math.nan
    chi2: float = math.nan
    iterations: int = 0
    termination: str = ""
    init: str = ""
    error: str = ""
    trace: object = None

    @property
    def ok(self) -> bool:
        return not self.error

    @property
    def sqrt_chi2(self) -> float:
        return math.sqrt(self.chi2) if self.chi2 >= 0 else math.nan


def _mean_sd(xs):
    xs = np.asarray([x for x in xs if math.isfinite(x)], dtype=float)
    if xs.size == 0:
        return math.nan, math.nan
    sd = float(np.std(xs, ddof=1)) if xs.size > 1 else 0.0
    return float(np.mean(xs)), sd


@dataclass
class ExperimentSummary:
    config: ExperimentConfig
    results: list

    @property
    def successful(self) -> list:
        return [r for r in self.results if r.ok]

    @property
    def failures(self) -> int:
        return sum(not r.ok for r in self.results)

    @property
    def tvd(self) -> tuple:
        return _mean_sd([r.tvd for r in self.successful])

    @property
    def sqrt_chi2(self) -> tuple:
        """(mean, sd) over finite values; mean is +inf if any successful run diverged."""
        ok = self.successful
        if any(math.isinf(r.chi2) for r in ok):
            return math.inf, math.inf
        return _mean_sd([r.sqrt_chi2 for r in ok])

    @property
    def estimates(self) -> np.ndarray:
        return np.array([r.estimate for r in self.successful])

    def traces(self) -> list:
        return [r.trace for r in self.successful if r.trace is not None]


def _perturbed(model: Model, truth, rng, size: float):
    v = np.asarray(truth, dtype=float)
    return model.project_vector(v * (1.0 + rng.uniform(-size, size, v.size)))


def _resolve_phi0(cfg: ExperimentConfig, sample, rng):
    """Return (phi0, how). Raises DomainError when no start passes the check."""
    m = cfg.model
    if not isinstance(cfg.phi0, str):
        cands = [np.asarray(cfg.phi0, dtype=float)]
    else:
        cands = [_perturbed(m, cfg.truth, rng, cfg.perturbation) for _ in range(cfg.init_retries)]
    if not cfg.check_init:
        return cands[0], "unchecked"
    last = None
    for c in cands:
        chk = check_initialization(m, cfg.estimator, sample, c)
        if chk.ok:
            return c, chk.condition
        last = chk
    if cfg.fallback_phi0 is not None:
        return np.asarray(cfg.fallback_phi0, dtype=float), "fallback"
    raise DomainError(f"no start satisfies {last.condition} (margin {last.margin:.3g})")


def draw_sample(cfg: ExperimentConfig, run: int) -> tuple:
    """The (possibly contaminated) sample of one run and the rng reserved for its start."""
    seed = cfg.base_seed + run
    data_rng, cont_rng, init_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    y = cfg.model.sample(cfg.truth, cfg.n, data_rng)
    sample = Sample(y, "clean", seed)
    if cfg.contamination == "gaussian_tails":
        sample = contaminate_gaussian(sample, cont_rng, mode=cfg.gaussian_tail_mode)
    elif cfg.contamination == "weibull_replace":
        sample = contaminate_weibull(sample, cont_rng)
    return sample, init_rng


def run_one(cfg: ExperimentConfig, run: int, keep_trace: bool = False) -> RunResult:
    seed = cfg.base_seed + run
    res = RunResult(run, seed)
    try:
        sample, init_rng = draw_sample(cfg, run)
        phi0, how = _resolve_phi0(cfg, sample, init_rng)
        res.phi0, res.init = phi0, how
        trace = run_algorithm(cfg.model, cfg.estimator, sample, phi0, cfg.algorithm)
        res.iterations = trace.iterations
        res.termination = trace.termination
        if trace.termination == "failed":
            res.error = trace.message or "run failed"
            return res
        est = np.asarray(trace.points[-1])
        res.estimate = est
        res.tvd = tvd_error(cfg.model, est, cfg.truth)
        res.chi2 = chi2_error(cfg.model, est, cfg.truth)
        if keep_trace:
            res.trace = trace
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def run_monte_carlo(cfg: ExperimentConfig, keep_traces: bool = False, progress=None) -> ExperimentSummary:
    results = []
    for r in range(cfg.runs):
        results.append(run_one(cfg, r, keep_traces))
        if progress is not None:
            progress(r, results[-1])
    return ExperimentSummary(cfg, results)


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

TABLE_COLUMNS = ("method", "algorithm", "runs", "failures", "tvd_mean", "tvd_sd", "sqrt_chi2_mean",
                 "sqrt_chi2_sd")


def fmt4(x: float) -> str:
    """Four significant digits; infinities as 'inf', missing values as 'nan'."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.4g}"


def table_rows(summaries) -> list:
    rows = []
    for s in summaries:
        tm, tsd = s.tvd
        cm, csd = s.sqrt_chi2
        method = s.config.label or s.config.estimator.label()
        rows.append([method, s.config.algorithm.variant, str(len(s.results)), str(s.failures),
                     fmt4(tm), fmt4(tsd), fmt4(cm), fmt4(csd)])
    return rows


def emit_table(summaries, path=None, fmt: str = "csv") -> str:
    """Render summaries as CSV or as an aligned text table; write to ``path`` when given."""
    summaries = list(summaries)
    if not summaries:
        raise ValueError("nothing to tabulate")
    rows = table_rows(summaries)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        w.writerows(rows)
        text = buf.getvalue()
    elif fmt == "text":
        allrows = [list(TABLE_COLUMNS)] + rows
        widths = [max(len(r[i]) for r in allrows) for i in range(len(TABLE_COLUMNS))]
        lines = ["  ".join(c.ljust(widths[i]) for i, c in enumerate(r)).rstrip() for r in allrows]
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError("fmt must be 'csv' or 'text'")
    if path is not None:
        Path(path).write_text(text)
    return text


def emit_runs(summary: ExperimentSummary, path=None) -> str:
    """One CSV row per run; estimates are reported in canonical label order."""
    m = summary.config.model
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "seed", "init", "termination", "iterations", *m.param_names, "tvd", "chi2", "error"])
    for r in summary.results:
        est = m.canonical(r.estimate) if r.estimate is not None else [math.nan] * m.dim
        w.writerow([r.run, r.seed, r.init, r.termination, r.iterations, *(repr(float(x)) for x in est),
                    repr(r.tvd), repr(r.chi2), r.error])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
