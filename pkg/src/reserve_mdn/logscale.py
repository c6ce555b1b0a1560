"""Mixture Log-Gaussian support: exponentiating a Gaussian mixture fitted to
log amounts yields a mixture Log-Gaussian on the raw currency scale; this
module carries that transform (with the component-sd cap), plus density,
moments, quantiles and sampling on the raw scale."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

from .mixture import LOG_2PI, MixtureParams, mixture_quantile
from .triangle import Normalizer


@dataclass(frozen=True)
class LogMixture:
    """Raw-scale mixture of lognormals: component k is exp(N(m_k, s_k))."""

    alpha: np.ndarray
    m: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "m", np.asarray(self.m, dtype=float))
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float))
        if not (self.alpha.shape == self.m.shape == self.s.shape):
            raise ValueError("alpha, m, s must share one shape (K,)")
        if np.any(self.s <= 0):
            raise ValueError("log-scale standard deviations must be positive")

    @property
    def k(self) -> int:
        return self.alpha.size


def sigma_cap(values, on_log_scale: bool = False) -> float:
    """Cap for log-scale component sds: twice the square root of the sample
    variance of the observed cells (raw amounts by default; a switch computes
    it from the logs instead, since the intended scale is ambiguous)."""
    values = np.asarray(values, dtype=float)
    if on_log_scale:
        if np.any(values <= 0):
            raise ValueError("log-scale variance requires positive values")
        values = np.log(values)
    if values.size < 2:
        raise ValueError("need at least two values for a sample variance")
    return float(2.0 * np.sqrt(values.var(ddof=1)))


def to_log_mixture(params: MixtureParams, normalizer: Normalizer,
                   cap: float | None = None) -> LogMixture:
    """Undo the log-scale normalization: m_k = mu_k*std + mean,
    s_k = min(sigma_k*std, cap). Weights carry over unchanged."""
    if params.scale_kind != "log":
        raise ValueError("mixture was not fit on the log scale")
    if normalizer.scale_kind != "log":
        raise ValueError("normalizer is not log-scale")
    m = params.mu * normalizer.std + normalizer.mean
    s = params.sigma * normalizer.std
    if cap is not None:
        s = np.minimum(s, cap)
    return LogMixture(alpha=params.alpha.copy(), m=m, s=s)


def log_mixture_log_pdf(lm: LogMixture, y) -> np.ndarray | float:
    y = np.asarray(y, dtype=float)
    out = np.full(y.shape, -np.inf)
    pos = y > 0
    if np.any(pos):
        ly = np.log(y[pos])
        z = (ly[..., None] - lm.m) / lm.s
        comp = np.log(lm.alpha) - 0.5 * LOG_2PI - np.log(lm.s) - 0.5 * z * z
        out[pos] = logsumexp(comp, axis=-1) - ly
    return out if out.ndim else float(out)


def log_mixture_pdf(lm: LogMixture, y) -> np.ndarray | float:
    """(1/y) * sum_k alpha_k phi(ln y | m_k, s_k); zero on y <= 0."""
    return np.exp(log_mixture_log_pdf(lm, y))


def log_mixture_cdf(lm: LogMixture, y) -> np.ndarray | float:
    y = np.asarray(y, dtype=float)
    out = np.zeros(y.shape)
    pos = y > 0
    if np.any(pos):
        z = (np.log(y[pos])[..., None] - lm.m) / lm.s
        out[pos] = np.dot(ndtr(z), lm.alpha)
    return out if out.ndim else float(out)


def log_mixture_moments(lm: LogMixture) -> tuple[float, float]:
    """Mean and variance from the component lognormal moments."""
    first = np.exp(lm.m + 0.5 * lm.s**2)
    second = np.exp(2.0 * lm.m + 2.0 * lm.s**2)
    mean = float(np.dot(lm.alpha, first))
    return mean, float(np.dot(lm.alpha, second) - mean * mean)


def log_mixture_quantile(lm: LogMixture, q: float) -> float:
    """exp of the underlying Gaussian-mixture quantile (monotone transform)."""
    base = MixtureParams(alpha=lm.alpha, mu=lm.m, sigma=lm.s, scale_kind="raw")
    return float(np.exp(mixture_quantile(base, q)))


def sample_log_mixture(lm: LogMixture, size: int, rng: np.random.Generator) -> np.ndarray:
    comp = rng.choice(lm.k, size=size, p=lm.alpha / lm.alpha.sum())
    return np.exp(rng.normal(lm.m[comp], lm.s[comp]))
