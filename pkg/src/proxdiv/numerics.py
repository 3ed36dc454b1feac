"""Derivative-free minimizers and Gauss-Legendre quadrature."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from .errors import IntegrationDivergence, IntegrationError, OptimizationError


@dataclass(frozen=True)
class OptimizerOptions:
    max_evals: int = 5000
    x_tolerance: float = 1e-8
    f_tolerance: float = 1e-8
    initial_simplex_scale: float = 0.1
    restarts: int = 0

    def __post_init__(self):
        if self.x_tolerance <= 0 or self.f_tolerance <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class QuadratureOptions:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    max_subdivisions: int = 200
    gauss_legendre_order: int = 20

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.gauss_legendre_order < 2:
            raise ValueError("Gauss-Legendre order must be at least 2")


class SimplexResult(NamedTuple):
    x: np.ndarray
    fun: float
    nfev: int
    converged: bool


class ScalarResult(NamedTuple):
    x: float
    fun: float
    nfev: int


# ---------------------------------------------------------------------------
# Nelder-Mead
# ---------------------------------------------------------------------------

def initial_simplex(x0: np.ndarray, scale: float) -> np.ndarray:
    n = x0.size
    sim = np.tile(x0, (n + 1, 1))
    for i in range(n):
        sim[i + 1, i] += scale * max(1.0, abs(x0[i]))
    return sim


def nelder_mead(objective: Callable[[np.ndarray], float], x0, opts: OptimizerOptions | None = None,
                simplex: np.ndarray | None = None) -> SimplexResult:
    """Minimize ``objective`` with the Nelder-Mead simplex method.

    Reflection, expansion, contraction and shrink coefficients are 1, 2, 1/2, 1/2.
    The run stops when the simplex diameter (max distance to the best vertex,
    infinity norm) drops below ``x_tolerance``, when the spread of function
    values drops below ``f_tolerance``, or after ``max_evals`` evaluations.
    Non-finite values are treated as +inf, so hard constraints can be encoded
    by returning ``inf`` outside the feasible set.
    """
    opts = opts or OptimizerOptions()
    x0 = np.asarray(x0, dtype=float).ravel()
    f0 = float(objective(x0))
    if not math.isfinite(f0):
        raise OptimizationError("objective is not finite at the starting point")

    nfev = 1
    if simplex is None:
        res = _nm_loop(objective, initial_simplex(x0, opts.initial_simplex_scale), f0, opts,
                       opts.max_evals - nfev)
    else:
        res = _nm_loop(objective, np.array(simplex, dtype=float), None, opts, opts.max_evals - nfev)
    nfev += res.nfev
    best = res
    for _ in range(opts.restarts):
        if nfev >= opts.max_evals:
            break
        res = _nm_loop(objective, initial_simplex(best.x, opts.initial_simplex_scale), best.fun,
                       opts, opts.max_evals - nfev)
        nfev += res.nfev
        if not res.fun < best.fun:
            break
        best = res
    if best.fun > f0:
        return SimplexResult(x0, f0, nfev, best.converged)
    return SimplexResult(best.x, best.fun, nfev, best.converged)


def _nm_loop(objective, sim, f_first, opts, budget) -> SimplexResult:
    n = sim.shape[1]
    fsim = np.empty(n + 1)
    nfev = 0
    for i in range(n + 1):
        if i == 0 and f_first is not None:
            fsim[0] = f_first
            continue
        v = float(objective(sim[i]))
        fsim[i] = v if math.isfinite(v) else math.inf
        nfev += 1

    def f(x):
        nonlocal nfev
        nfev += 1
        v = float(objective(x))
        return v if math.isfinite(v) else math.inf

    converged = False
    while True:
        order = np.argsort(fsim, kind="stable")
        sim = sim[order]
        fsim = fsim[order]
        if (np.max(np.abs(sim[1:] - sim[0])) <= opts.x_tolerance
                or fsim[-1] - fsim[0] <= opts.f_tolerance):
            converged = True
            break
        if nfev >= budget:
            break

        centroid = sim[:-1].mean(axis=0)
        xr = 2.0 * centroid - sim[-1]
        fr = f(xr)
        if fr < fsim[0]:
            xe = 3.0 * centroid - 2.0 * sim[-1]
            fe = f(xe)
            if fe < fr:
                sim[-1], fsim[-1] = xe, fe
            else:
                sim[-1], fsim[-1] = xr, fr
        elif fr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fr
        else:
            if fr < fsim[-1]:
                xc = 0.5 * (centroid + xr)
                fc = f(xc)
                accept = fc <= fr
            else:
                xc = 0.5 * (centroid + sim[-1])
                fc = f(xc)
                accept = fc < fsim[-1]
            if accept:
                sim[-1], fsim[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
                    fsim[i] = f(sim[i])
    i = int(np.argmin(fsim))
    return SimplexResult(sim[i].copy(), float(fsim[i]), nfev, converged)


# ---------------------------------------------------------------------------
# Brent
# ---------------------------------------------------------------------------

_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))
_SQRT_EPS = math.sqrt(np.finfo(float).eps)


def brent_min(objective: Callable[[float], float], lo: float, hi: float,
              opts: OptimizerOptions | None = None) -> ScalarResult:
    """Brent's golden-section / parabolic minimizer on the closed interval [lo, hi]."""
    opts = opts or OptimizerOptions()
    if not lo < hi:
        raise ValueError("need lo < hi")
    nfev = 0

    def f(x):
        nonlocal nfev
        nfev += 1
        v = float(objective(x))
        if not math.isfinite(v):
            raise OptimizationError(f"objective is not finite at {x!r}")
        return v

    a, b = lo, hi
    x = w = v = a + _GOLDEN * (b - a)
    fx = fw = fv = f(x)
    d = e = 0.0
    while nfev < opts.max_evals:
        xm = 0.5 * (a + b)
        tol1 = _SQRT_EPS * abs(x) + opts.x_tolerance / 3.0
        tol2 = 2.0 * tol1
        if abs(x - xm) <= tol2 - 0.5 * (b - a):
            break
        golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            etemp = e
            e = d
            if abs(p) < abs(0.5 * q * etemp) and q * (a - x) < p < q * (b - x):
                d = p / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = tol1 if xm >= x else -tol1
                golden = False
        if golden:
            e = (a - x) if x >= xm else (b - x)
            d = _GOLDEN * e
        u = x + (d if abs(d) >= tol1 else (tol1 if d > 0 else -tol1))
        fu = f(u)
        if fu <= fx:
            if u >= x:
                a = x
            else:
                b = x
            v, fv = w, fw
            w, fw = x, fx
            x, fx = u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv = w, fw
                w, fw = u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    # the endpoints are never probed by the iteration itself
    for end in (lo, hi):
        fe = f(end)
        if fe < fx:
            x, fx = end, fe
    return ScalarResult(float(x), float(fx), nfev)


# ---------------------------------------------------------------------------
# Gauss-Legendre quadrature
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_gl(breaks, order: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the composite Gauss-Legendre rule on consecutive breakpoints."""
    breaks = np.asarray(breaks, dtype=float)
    t, w = gauss_legendre(order)
    half = 0.5 * np.diff(breaks)
    mid = 0.5 * (breaks[1:] + breaks[:-1])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _scaled(fx, jac):
    # an integrand that has decayed to 0 stays 0 however large the Jacobian
    fx = np.asarray(fx, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        out = fx * jac
    return np.where(fx == 0.0, 0.0, out)


def _transform(f, a: float, b: float):
    """Map the integral of f over (a, b) to a finite interval. Returns (g, lo, hi)."""
    if math.isfinite(a) and math.isfinite(b):
        return f, a, b
    if math.isinf(a) and math.isinf(b):
        def g(t):
            d = 1.0 - t * t
            return _scaled(f(t / d), (1.0 + t * t) / (d * d))
        return g, -1.0, 1.0
    if math.isfinite(a):
        def g(t):
            d = 1.0 - t
            return _scaled(f(a + t / d), 1.0 / (d * d))
        return g, 0.0, 1.0

    def g(t):
        d = 1.0 - t
        return _scaled(f(b - t / d), 1.0 / (d * d))
    return g, 0.0, 1.0


def integrate(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
              opts: QuadratureOptions | None = None, full_output: bool = False,
              breakpoints=()):
    """Adaptive Gauss-Legendre quadrature of a vectorized integrand over (a, b).

    Infinite endpoints are mapped with x = t/(1-t^2) (two-sided) or
    x = a + t/(1-t) (one-sided). Every panel is compared with the sum of its two
    halves; panels whose error exceeds their share of the tolerance are split,
    all of them in one vectorized integrand call per round. If the subdivision
    budget runs out, a dense composite rule is tried before giving up.

    Raises IntegrationError when the tolerance cannot be met and
    IntegrationDivergence when the integrand is infinite or the running value
    keeps growing under refinement.
    """
    opts = opts or QuadratureOptions()
    if a == b:
        return (0.0, 0.0) if full_output else 0.0
    sign = 1.0
    if a > b:
        a, b, sign = b, a, -1.0
    g, lo, hi = _transform(f, a, b)
    t, w = gauss_legendre(opts.gauss_legendre_order)

    if breakpoints:
        bp = sorted(float(x) for x in breakpoints if a < x < b)
        edges = [lo] + [_forward_map(x, a, b) for x in bp] + [hi]
    else:
        edges = list(np.linspace(lo, hi, 5))
    left = np.array(edges[:-1])
    right = np.array(edges[1:])

    def panel_sums(l, r):
        half = 0.5 * (r - l)
        mid = 0.5 * (r + l)
        x = mid[:, None] + half[:, None] * t[None, :]
        with np.errstate(all="ignore"):
            y = np.asarray(g(x.ravel()), dtype=float).reshape(x.shape)
        if not np.all(np.isfinite(y)):
            bad = ~np.isfinite(y)
            if np.any(np.isnan(y[bad])):
                raise IntegrationError("integrand returned NaN")
            raise IntegrationDivergence("integrand is infinite inside the interval")
        return (y * w[None, :]).sum(axis=1) * half

    coarse = panel_sums(left, right)
    done_val = 0.0
    done_err = 0.0
    subdivisions = 0
    history = []
    while True:
        mid = 0.5 * (left + right)
        fine = panel_sums(np.concatenate([left, mid]), np.concatenate([mid, right]))
        k = left.size
        fl, fr = fine[:k], fine[k:]
        err = np.abs(fl + fr - coarse)
        est = done_val + np.sum(fl + fr)
        tol = max(opts.abs_tol, opts.rel_tol * abs(est))
        history.append(est)
        total_err = done_err + err.sum()
        if total_err <= tol:
            value = est
            break
        width = (right - left) / (hi - lo)
        ok = err <= 0.25 * tol * width
        done_val += np.sum((fl + fr)[ok])
        done_err += np.sum(err[ok])
        bad = ~ok
        subdivisions += int(bad.sum())
        if len(history) >= 6 and _grows_without_bound(history):
            raise IntegrationDivergence("partial sums grow without bound")
        if subdivisions > opts.max_subdivisions or np.min((right - left)[bad]) < 1e-13:
            value, total_err = _dense_fallback(g, lo, hi, opts)
            if total_err > max(opts.abs_tol, opts.rel_tol * abs(value)):
                if _grows_without_bound(history + [value]):
                    raise IntegrationDivergence("partial sums grow without bound")
                raise IntegrationError(
                    f"quadrature error estimate {total_err:.3g} exceeds tolerance")
            break
        left = np.concatenate([left[bad], mid[bad]])
        right = np.concatenate([mid[bad], right[bad]])
        coarse = np.concatenate([fl[bad], fr[bad]])
    value *= sign
    return (float(value), float(total_err)) if full_output else float(value)


def _forward_map(x, a, b):
    if math.isfinite(a) and math.isfinite(b):
        return x
    if math.isinf(a) and math.isinf(b):
        if x == 0:
            return 0.0
        return (math.sqrt(1.0 + 4.0 * x * x) - 1.0) / (2.0 * x)
    if math.isfinite(a):
        s = x - a
        return s / (1.0 + s)
    s = b - x
    return s / (1.0 + s)


def _grows_without_bound(history) -> bool:
    h = np.abs(np.asarray(history[-6:], dtype=float))
    return bool(h[-1] > 1e6 * max(h[0], 1e-300) and np.all(np.diff(h) > 0))


def _dense_fallback(g, lo, hi, opts):
    order = opts.gauss_legendre_order
    vals = []
    for panels in (2000, 4000):
        nodes, weights = composite_gl(np.linspace(lo, hi, panels + 1), order)
        with np.errstate(all="ignore"):
            y = np.asarray(g(nodes), dtype=float)
        if not np.all(np.isfinite(y)):
            raise IntegrationDivergence("integrand is infinite inside the interval")
        vals.append(float(np.dot(weights, y)))
    return vals[1], abs(vals[1] - vals[0])
