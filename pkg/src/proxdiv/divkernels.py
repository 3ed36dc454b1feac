"""Divergence generators and proximal kernels.

All functions accept scalars or numpy arrays and broadcast elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class DivergenceSpec:
    """Statistical criterion: Cressie-Read phi-divergence, density power divergence or likelihood."""

    kind: str
    gamma: float | None = None
    a: float | None = None

    def __post_init__(self):
        if self.kind == "cressie_read":
            if self.gamma is None or not np.isfinite(self.gamma):
                raise ValueError("Cressie-Read divergence needs a finite gamma")
        elif self.kind == "dpd":
            if self.a is None or not self.a > 0:
                raise ValueError("density power divergence needs a > 0")
        elif self.kind != "likelihood":
            raise ValueError(f"unknown divergence kind {self.kind!r}")

    @classmethod
    def cressie_read(cls, gamma: float) -> "DivergenceSpec":
        return cls("cressie_read", gamma=float(gamma))

    @classmethod
    def dpd(cls, a: float) -> "DivergenceSpec":
        return cls("dpd", a=float(a))

    @classmethod
    def likelihood(cls) -> "DivergenceSpec":
        return cls("likelihood")


# Named members of the Cressie-Read family.
HELLINGER = 0.5
PEARSON = 2.0
NEYMAN = -1.0
MODIFIED_KL = 0.0
KL = 1.0

GAMMA_NAMES = {
    "hellinger": HELLINGER,
    "pearson": PEARSON,
    "chi2": PEARSON,
    "neyman": NEYMAN,
    "neymann": NEYMAN,
    "modkl": MODIFIED_KL,
    "kl": KL,
}


def _as_float_array(t):
    return np.asarray(t, dtype=float)


def _check_domain(gamma: float, t: np.ndarray, strict: bool) -> None:
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise DomainError("Cressie-Read generators are defined on t >= 0")
    if (strict or gamma <= 0) and np.any(t == 0):
        raise DomainError(f"phi_gamma is infinite at t = 0 for gamma = {gamma}")


def cressie_read_phi(gamma: float, t):
    """phi_gamma(t), with the closed-form logarithmic limits at gamma = 0 and 1."""
    t = _as_float_array(t)
    _check_domain(gamma, t, strict=False)
    if gamma == 1.0:
        tlogt = np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0)
        out = tlogt - t + 1.0
    elif gamma == 0.0:
        out = -np.log(t) + t - 1.0
    else:
        with np.errstate(divide="ignore"):
            logt = np.log(t)
        if abs(gamma - 1.0) < 0.5:
            # t^g - g t + g - 1 = t (t^(g-1) - 1) - (g-1)(t-1); stable near gamma = 1
            pos = t > 0
            lt = np.where(pos, logt, 0.0)
            e1 = np.expm1((gamma - 1.0) * lt) / (gamma - 1.0)
            out = np.where(pos, (t * e1 - (t - 1.0)) / gamma, 1.0 / gamma)
        else:
            # expm1 keeps the small-gamma case from cancelling
            out = (np.expm1(gamma * logt) / gamma - (t - 1.0)) / (gamma - 1.0)
    return out[()] if out.ndim == 0 else out


def cressie_read_phi_prime(gamma: float, t):
    t = _as_float_array(t)
    _check_domain(gamma, t, strict=True)
    if gamma == 1.0:
        out = np.log(t)
    elif gamma == 0.0:
        out = 1.0 - 1.0 / t
    else:
        out = np.expm1((gamma - 1.0) * np.log(t)) / (gamma - 1.0)
    return out[()] if out.ndim == 0 else out


def cressie_read_phi_sharp(gamma: float, t):
    """t * phi'(t) - phi(t), which simplifies to (t**gamma - 1) / gamma."""
    t = _as_float_array(t)
    _check_domain(gamma, t, strict=True)
    if gamma == 1.0:
        out = t - 1.0
    elif gamma == 0.0:
        out = np.log(t)
    else:
        out = np.expm1(gamma * np.log(t)) / gamma
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class ProximalSpec:
    """A proximal kernel psi with psi(1) = psi'(1) = 0 and no other zeros."""

    name: str
    psi: Callable
    psi_prime: Callable


def default_psi(t):
    """psi(t) = (sqrt(t) - 1)**2 / 2."""
    t = _as_float_array(t)
    if np.any(t < 0):
        raise DomainError("psi is defined on t >= 0")
    # (t - 1) / (sqrt(t) + 1) avoids cancellation near t = 1
    d = (t - 1.0) / (np.sqrt(t) + 1.0)
    out = 0.5 * d * d
    return out[()] if out.ndim == 0 else out


def default_psi_prime(t):
    t = _as_float_array(t)
    if np.any(t <= 0):
        raise DomainError("psi'(0) is -inf")
    s = np.sqrt(t)
    out = 0.5 * (s - 1.0) / s
    return out[()] if out.ndim == 0 else out


def kl_psi(t):
    """psi(t) = -log t + t - 1; with this kernel the proximal iteration is EM."""
    t = _as_float_array(t)
    if np.any(t <= 0):
        raise DomainError("-log t + t - 1 is infinite at t = 0")
    u = t - 1.0
    out = u - np.log1p(u)
    return out[()] if out.ndim == 0 else out


def kl_psi_prime(t):
    t = _as_float_array(t)
    if np.any(t <= 0):
        raise DomainError("psi'(0) is -inf")
    out = 1.0 - 1.0 / t
    return out[()] if out.ndim == 0 else out


SQRT_PSI = ProximalSpec("sqrt", default_psi, default_psi_prime)
KL_PSI = ProximalSpec("kl", kl_psi, kl_psi_prime)

PSI_BY_NAME = {"sqrt": SQRT_PSI, "hellinger": SQRT_PSI, "kl": KL_PSI, "em": KL_PSI}
