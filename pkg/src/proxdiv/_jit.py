"""Compiled inner loops for the classical dual estimator.

The supremum over alpha is evaluated hundreds of times per outer objective
evaluation, so the integrand, the quadrature grid and the simplex search that
drives it are compiled with numba. Everything here works on plain float arrays;
the public wrappers live in ``objectives``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
LOG2 = math.log(2.0)
NEG_INF = -np.inf
# unit-variance bumps are below e^-40 beyond this distance from every centre
REACH = 9.0


@njit(cache=True)
def _logaddexp(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def gauss_logpdf(p, x):
    lam, m1, m2 = p[0], p[1], p[2]
    l1 = math.log(lam) - 0.5 * (x - m1) ** 2 - LOG_SQRT_2PI
    l2 = math.log(1.0 - lam) - 0.5 * (x - m2) ** 2 - LOG_SQRT_2PI
    return _logaddexp(l1, l2)


@njit(cache=True)
def _weibull_comp(k, lscale_inv, u):
    # log of k/s (x/s)^(k-1) exp(-(x/s)^k) at x = e^u, with lscale_inv = -log s
    z = u + lscale_inv
    kz = k * z
    if kz > 700.0:
        return NEG_INF
    return math.log(k) + lscale_inv + (k - 1.0) * z - math.exp(kz)


@njit(cache=True)
def weibull_logpdf_u(p, u):
    """Log density of the Weibull mixture at x = e^u (scales 1/2 and 2)."""
    lam, k1, k2 = p[0], p[1], p[2]
    l1 = math.log(lam) + _weibull_comp(k1, LOG2, u)
    l2 = math.log(1.0 - lam) + _weibull_comp(k2, -LOG2, u)
    return _logaddexp(l1, l2)


@njit(cache=True)
def _integrand(gamma, lphi, lalpha):
    """phi'(p_phi/p_alpha) p_phi without the -p_phi/(gamma-1) part (integrated analytically)."""
    if gamma == 1.0:
        if lphi == NEG_INF:
            return 0.0
        return math.exp(lphi) * (lphi - lalpha)
    if gamma < 1.0 and lalpha == NEG_INF:
        return 0.0
    if gamma > 0.0 and lphi == NEG_INF:
        return 0.0
    e = gamma * lphi + (1.0 - gamma) * lalpha
    if e != e:
        return 0.0
    return math.exp(e)


@njit(cache=True)
def _obs_term(gamma, lphi, lalpha):
    d = lphi - lalpha
    if gamma == 0.0:
        return d
    if gamma == 1.0:
        return math.exp(d) - 1.0
    return (math.exp(gamma * d) - 1.0) / gamma


@njit(cache=True)
def _combine(gamma, integral, obs_mean):
    if gamma == 0.0:
        return -obs_mean
    if gamma == 1.0:
        return integral - obs_mean
    return (integral - 1.0) / (gamma - 1.0) - obs_mean


# ---------------------------------------------------------------------------
# Gaussian mixture
# ---------------------------------------------------------------------------

@njit(cache=True)
def gauss_dual_f(alpha, phi, y, lphi_y, gamma, t, w, xmax=np.inf):
    """f(alpha, phi) for the unit-variance Gaussian mixture (``xmax`` is unused)."""
    obs = 0.0
    for i in range(y.size):
        obs += _obs_term(gamma, lphi_y[i], gauss_logpdf(alpha, y[i]))
    obs /= y.size
    if gamma == 0.0:
        return -obs
    # every pair of components contributes a unit-variance bump centred at
    # gamma * mu_phi + (1 - gamma) * mu_alpha
    lo = np.inf
    hi = -np.inf
    for i in range(1, 3):
        for j in range(1, 3):
            c = gamma * phi[i] + (1.0 - gamma) * alpha[j]
            lo = min(lo, c, phi[i], alpha[j])
            hi = max(hi, c, phi[i], alpha[j])
    lo -= REACH
    hi += REACH
    npan = int(math.ceil((hi - lo) / 3.0))
    width = (hi - lo) / npan
    total = 0.0
    for k in range(npan):
        mid = lo + (k + 0.5) * width
        half = 0.5 * width
        s = 0.0
        for q in range(t.size):
            x = mid + half * t[q]
            s += w[q] * _integrand(gamma, gauss_logpdf(phi, x), gauss_logpdf(alpha, x))
        total += s * half
    return _combine(gamma, total, obs)


# ---------------------------------------------------------------------------
# Weibull mixture
# ---------------------------------------------------------------------------

@njit(cache=True)
def _dominant_tail(p):
    # the component with the slowest decay exp(-c x^k) for large x: smaller k,
    # ties broken by the smaller c = s^-k
    k1, k2 = p[1], p[2]
    c1 = 2.0**k1
    c2 = 0.5**k2
    if k1 < k2 or (k1 == k2 and c1 <= c2):
        return k1, c1
    return k2, c2


@njit(cache=True)
def weibull_integral_finite(alpha, phi, gamma):
    """0 if the integral of p_phi^gamma p_alpha^(1-gamma) is finite, else +1 / -1 for the sign of f."""
    if gamma > 0.0 and gamma < 1.0:
        return 0
    sign = 1 if gamma > 1.0 else -1
    if gamma == 1.0 or gamma == 0.0:
        # KL-type integrands: finite as long as both densities have the same support
        return 0
    kp = min(phi[1], phi[2])
    ka = min(alpha[1], alpha[2])
    if gamma * kp + (1.0 - gamma) * ka <= 0.0:
        return sign
    kpt, cpt = _dominant_tail(phi)
    kat, cat = _dominant_tail(alpha)
    if gamma < 0.0:
        # |gamma| c_phi x^kp - (1 - gamma) c_alpha x^ka must go to -inf
        if kat > kpt or (kat == kpt and (1.0 - gamma) * cat > -gamma * cpt):
            return 0
        return sign
    # gamma > 1: -gamma c_phi x^kp + (gamma - 1) c_alpha x^ka must go to -inf
    if kpt > kat or (kpt == kat and gamma * cpt > (gamma - 1.0) * cat):
        return 0
    return sign


@njit(cache=True)
def weibull_dual_f(alpha, phi, y, lphi_y, gamma, t, w, xmax=np.inf):
    """f(alpha, phi) for the Weibull mixture with scales 1/2 and 2, integrating in u = log x.

    A finite ``xmax`` restricts the integral term to (0, xmax]; the mass of
    p_phi there replaces 1 so that f(phi, phi) stays 0.
    """
    truncated = xmax < np.inf
    if truncated:
        kp = min(phi[1], phi[2])
        ka = min(alpha[1], alpha[2])
        if gamma != 0.0 and gamma != 1.0 and gamma * kp + (1.0 - gamma) * ka <= 0.0:
            return (1.0 if gamma > 1.0 else -1.0) * np.inf
    else:
        s = weibull_integral_finite(alpha, phi, gamma)
        if s != 0:
            return s * np.inf
    obs = 0.0
    for i in range(y.size):
        obs += _obs_term(gamma, lphi_y[i], weibull_logpdf_u(alpha, math.log(y[i])))
    obs /= y.size
    if gamma == 0.0:
        return -obs
    ks = np.array([phi[1], phi[2], alpha[1], alpha[2]])
    lsc = np.array([-LOG2, LOG2, -LOG2, LOG2])
    kmin_p = min(phi[1], phi[2])
    kmin_a = min(alpha[1], alpha[2])
    if gamma == 1.0:
        slope = kmin_p
    else:
        slope = gamma * kmin_p + (1.0 - gamma) * kmin_a
    slope = max(slope, 1e-3)
    u_bulk = np.inf
    u_hi = -np.inf
    kmax = 0.0
    for j in range(4):
        u_bulk = min(u_bulk, lsc[j] - 3.0 / ks[j])
        u_hi = max(u_hi, lsc[j] + math.log(40.0) / ks[j])
        kmax = max(kmax, ks[j])
    u_bulk = max(u_bulk, -60.0)
    u_hi = min(u_hi, 700.0)
    if truncated:
        u_hi = math.log(xmax)
        u_bulk = min(u_bulk, u_hi - 1.0)
    u_lo = max(u_bulk - 40.0 / slope, -700.0)
    width = min(1.0, 3.0 / kmax)
    total = 0.0
    # left tail: six panels, then an analytic power-law remainder
    tw = (u_bulk - u_lo) / 6.0
    for k in range(6):
        mid = u_lo + (k + 0.5) * tw
        acc = 0.0
        for q in range(t.size):
            u = mid + 0.5 * tw * t[q]
            acc += w[q] * _integrand(gamma, weibull_logpdf_u(phi, u), weibull_logpdf_u(alpha, u)) * math.exp(u)
        total += acc * 0.5 * tw
    edge = _integrand(gamma, weibull_logpdf_u(phi, u_lo), weibull_logpdf_u(alpha, u_lo)) * math.exp(u_lo)
    total += edge / slope
    npan = max(1, int(math.ceil((u_hi - u_bulk) / width)))
    bw = (u_hi - u_bulk) / npan
    for k in range(npan):
        mid = u_bulk + (k + 0.5) * bw
        acc = 0.0
        for q in range(t.size):
            u = mid + 0.5 * bw * t[q]
            acc += w[q] * _integrand(gamma, weibull_logpdf_u(phi, u), weibull_logpdf_u(alpha, u)) * math.exp(u)
        total += acc * 0.5 * bw
    if not math.isfinite(total):
        return (1.0 if gamma > 1.0 else -1.0) * np.inf
    if truncated and gamma != 1.0:
        mass = phi[0] * (1.0 - math.exp(-((2.0 * xmax) ** phi[1]))) + (1.0 - phi[0]) * (
            1.0 - math.exp(-((0.5 * xmax) ** phi[2])))
        return (total - mass) / (gamma - 1.0) - obs
    return _combine(gamma, total, obs)


# ---------------------------------------------------------------------------
# Cauchy scale model, Pearson chi-square closed form
# ---------------------------------------------------------------------------

@njit(cache=True)
def cauchy_pearson_f(b, a, y):
    """(a^2+b^2)/(2ab) - (1/2n) sum a^2 (b^2+y^2)^2 / (b^2 (a^2+y^2)^2), without the -1/2."""
    a2 = a * a
    b2 = b * b
    s = 0.0
    for i in range(y.size):
        y2 = y[i] * y[i]
        r = (b2 + y2) / (a2 + y2)
        s += r * r
    return (a2 + b2) / (2.0 * a * b) - 0.5 * a2 * s / (b2 * y.size)


# ---------------------------------------------------------------------------
# Nelder-Mead maximizer over a box (same moves and stopping rule as numerics.nelder_mead)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _clip(x, lo, hi):
    out = np.empty_like(x)
    for i in range(x.size):
        out[i] = min(max(x[i], lo[i]), hi[i])
    return out


@njit(cache=True)
def _neg(f, x, lo, hi, phi, y, lphi_y, gamma, t, w, xmax):
    v = f(_clip(x, lo, hi), phi, y, lphi_y, gamma, t, w, xmax)
    if v != v or v == np.inf:
        # +inf would be the supremum itself; the caller checks starts for this
        return np.inf
    if v == -np.inf:
        return np.inf
    return -v


@njit(cache=True)
def nm_maximize(f, x0, lo, hi, phi, y, lphi_y, gamma, t, w, xmax, scale, xtol, ftol, max_evals):
    """Maximize f(clip(alpha), phi, y, lphi_y, gamma, t, w, xmax) over alpha in [lo, hi]. Returns (x, f, nfev)."""
    n = x0.size
    sim = np.empty((n + 1, n))
    fs = np.empty(n + 1)
    for i in range(n + 1):
        for j in range(n):
            sim[i, j] = x0[j]
    for i in range(n):
        sim[i + 1, i] += scale * max(1.0, abs(x0[i]))
    nfev = 0
    for i in range(n + 1):
        fs[i] = _neg(f, sim[i], lo, hi, phi, y, lphi_y, gamma, t, w, xmax)
        nfev += 1
    xr = np.empty(n)
    xe = np.empty(n)
    xc = np.empty(n)
    cen = np.empty(n)
    while True:
        order = np.argsort(fs, kind="mergesort")
        sim = sim[order]
        fs = fs[order]
        diam = 0.0
        for i in range(1, n + 1):
            for j in range(n):
                diam = max(diam, abs(sim[i, j] - sim[0, j]))
        if diam <= xtol or fs[n] - fs[0] <= ftol:
            break
        if nfev >= max_evals:
            break
        for j in range(n):
            c = 0.0
            for i in range(n):
                c += sim[i, j]
            cen[j] = c / n
        for j in range(n):
            xr[j] = 2.0 * cen[j] - sim[n, j]
        fr = _neg(f, xr, lo, hi, phi, y, lphi_y, gamma, t, w, xmax)
        nfev += 1
        if fr < fs[0]:
            for j in range(n):
                xe[j] = 3.0 * cen[j] - 2.0 * sim[n, j]
            fe = _neg(f, xe, lo, hi, phi, y, lphi_y, gamma, t, w, xmax)
            nfev += 1
            if fe < fr:
                sim[n] = xe
                fs[n] = fe
            else:
                sim[n] = xr
                fs[n] = fr
        elif fr < fs[n - 1]:
            sim[n] = xr
            fs[n] = fr
        else:
            if fr < fs[n]:
                for j in range(n):
                    xc[j] = 0.5 * (cen[j] + xr[j])
                fc = _neg(f, xc, lo, hi, phi, y, lphi_y, gamma, t, w, xmax)
                nfev += 1
                accept = fc <= fr
            else:
                for j in range(n):
                    xc[j] = 0.5 * (cen[j] + sim[n, j])
                fc = _neg(f, xc, lo, hi, phi, y, lphi_y, gamma, t, w, xmax)
                nfev += 1
                accept = fc < fs[n]
            if accept:
                sim[n] = xc
                fs[n] = fc
            else:
                for i in range(1, n + 1):
                    for j in range(n):
                        sim[i, j] = sim[0, j] + 0.5 * (sim[i, j] - sim[0, j])
                    fs[i] = _neg(f, sim[i], lo, hi, phi, y, lphi_y, gamma, t, w, xmax)
                    nfev += 1
    best = 0
    for i in range(1, n + 1):
        if fs[i] < fs[best]:
            best = i
    return _clip(sim[best], lo, hi), -fs[best], nfev
