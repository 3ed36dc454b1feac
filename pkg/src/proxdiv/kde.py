"""Kernel density estimates of the data-generating density."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .models import Sample

KERNELS = ("gaussian", "epanechnikov", "cauchy")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and bandwidth; ``bandwidth=None`` means Silverman's rule."""

    kind: str = "gaussian"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; choose from {KERNELS}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    def resolve(self, sample) -> "KernelSpec":
        if self.bandwidth is not None:
            return self
        return KernelSpec(self.kind, silverman_bandwidth(sample))


def _values(sample) -> np.ndarray:
    if isinstance(sample, Sample):
        return sample.observations
    return np.asarray(sample, dtype=float).ravel()


def silverman_bandwidth(sample) -> float:
    """0.9 * min(sd, IQR / 1.34) * n^(-1/5)."""
    y = _values(sample)
    if y.size < 2:
        raise DomainError("need at least two observations")
    sd = float(np.std(y, ddof=1))
    q75, q25 = np.percentile(y, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        # fall back to sd when more than half the sample is tied
        spread = sd
    if not spread > 0:
        raise DomainError("degenerate sample: all observations are equal")
    return 0.9 * spread * y.size ** (-0.2)


def kernel_density(kind: str, u):
    u = np.asarray(u, dtype=float)
    if kind == "gaussian":
        return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
    if kind == "epanechnikov":
        return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    if kind == "cauchy":
        return 1.0 / (math.pi * (1.0 + u * u))
    raise ValueError(f"unknown kernel {kind!r}")


def kde_eval(sample, kernel: KernelSpec, y, chunk: int = 4096):
    """(1 / (n w)) sum_i K((y - y_i) / w), evaluated at every point of ``y``."""
    obs = _values(sample)
    kernel = kernel.resolve(obs)
    w = kernel.bandwidth
    y = np.asarray(y, dtype=float)
    flat = np.atleast_1d(y).ravel()
    out = np.empty(flat.size)
    # chunked to bound the (points x observations) temporary
    for s in range(0, flat.size, chunk):
        u = (flat[s:s + chunk, None] - obs[None, :]) / w
        out[s:s + chunk] = kernel_density(kernel.kind, u).sum(axis=1)
    out /= obs.size * w
    return out.reshape(y.shape) if y.ndim else out[0]


def log_kde_eval(sample, kernel: KernelSpec, y, chunk: int = 4096):
    """log of ``kde_eval``; the Gaussian kernel is summed in the log domain so far tails stay finite."""
    obs = _values(sample)
    kernel = kernel.resolve(obs)
    if kernel.kind != "gaussian":
        with np.errstate(divide="ignore"):
            return np.log(kde_eval(obs, kernel, y, chunk))
    w = kernel.bandwidth
    y = np.asarray(y, dtype=float)
    flat = np.atleast_1d(y).ravel()
    out = np.empty(flat.size)
    for s in range(0, flat.size, chunk):
        e = -0.5 * ((flat[s:s + chunk, None] - obs[None, :]) / w) ** 2
        top = e.max(axis=1)
        out[s:s + chunk] = top + np.log(np.exp(e - top[:, None]).sum(axis=1))
    out -= math.log(obs.size * w * math.sqrt(2.0 * math.pi))
    return out.reshape(y.shape) if y.ndim else out[0]


def kde_support(sample, kernel: KernelSpec, model_support=(-math.inf, math.inf)) -> tuple:
    """Interval outside which the estimate vanishes, intersected with the model support."""
    obs = _values(sample)
    lo, hi = model_support
    if kernel.kind != "epanechnikov":
        return (lo, hi)
    w = kernel.resolve(obs).bandwidth
    return (max(lo, float(obs.min()) - w), min(hi, float(obs.max()) + w))


class KernelEstimate:
    """A KDE frozen on one sample, with its values at the observations cached."""

    def __init__(self, sample, kernel: KernelSpec):
        self.obs = _values(sample)
        self.kernel = kernel.resolve(self.obs)
        self.at_obs = kde_eval(self.obs, self.kernel, self.obs)

    @property
    def bandwidth(self) -> float:
        return self.kernel.bandwidth

    def __call__(self, y):
        return kde_eval(self.obs, self.kernel, y)

    def log(self, y):
        return log_kde_eval(self.obs, self.kernel, y)

    def support(self, model_support=(-math.inf, math.inf)):
        return kde_support(self.obs, self.kernel, model_support)
