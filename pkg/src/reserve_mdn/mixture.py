"""Mixture-Gaussian distributions: density, moments, CDF, quantiles, sampling.

Parameters may live on the normalized response scale (as produced by a
network forward pass) or on the raw currency scale (after denormalizing);
the math is scale-agnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class MixtureParams:
    """Weights, means and standard deviations of a K-component Gaussian mixture."""

    alpha: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    scale_kind: str = "raw"  # "raw" | "log": scale of the response the mixture was fit to

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))
        if not (self.alpha.shape == self.mu.shape == self.sigma.shape):
            raise ValueError("alpha, mu, sigma must share one shape (K,)")

    @property
    def k(self) -> int:
        return self.alpha.size


def validate_mixture(params: MixtureParams, tol: float = 1e-10) -> None:
    if abs(params.alpha.sum() - 1.0) > tol:
        raise ValueError(f"mixture weights sum to {params.alpha.sum()!r}, not 1")
    if np.any(params.alpha < 0) or np.any(params.alpha > 1):
        raise ValueError("mixture weights outside [0, 1]")
    if np.any(params.sigma <= 0):
        raise ValueError("component standard deviations must be positive")


def _log_phi(x, mu, sigma):
    z = (x - mu) / sigma
    return -0.5 * LOG_2PI - np.log(sigma) - 0.5 * z * z


def mixture_log_pdf(params: MixtureParams, x) -> np.ndarray | float:
    """log density of the mixture at x (log-sum-exp over components)."""
    x = np.asarray(x, dtype=float)
    comp = np.log(params.alpha) + _log_phi(x[..., None], params.mu, params.sigma)
    out = logsumexp(comp, axis=-1)
    return out if out.ndim else float(out)

def mixture_pdf(params: MixtureParams, x) -> np.ndarray | float:
    return np.exp(mixture_log_pdf(params, x))


def mixture_mean(params: MixtureParams) -> float:
    return float(np.dot(params.alpha, params.mu))


def mixture_moments(params: MixtureParams) -> tuple[float, float]:
    """Mean and variance via the component second moments."""
    mean = mixture_mean(params)
    second = np.dot(params.alpha, params.sigma**2 + params.mu**2)
    return mean, float(second - mean * mean)


def mixture_cdf(params: MixtureParams, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    z = (x[..., None] - params.mu) / params.sigma
    out = np.dot(ndtr(z), params.alpha)
    return out if out.ndim else float(out)


def mixture_quantile(params: MixtureParams, q: float) -> float:
    """Smallest x with CDF(x) >= q, by bisection on the analytic CDF.

    The bracket is shrunk to floating-point convergence, which is well
    inside the 1e-8 relative target.
    """
    if not (0.0 < q < 1.0):
        raise ValueError("quantile level must lie strictly between 0 and 1")
    lo = float(np.min(params.mu - 10.0 * params.sigma))
    hi = float(np.max(params.mu + 10.0 * params.sigma))
    while mixture_cdf(params, lo) > q:
        lo -= (hi - lo)
    while mixture_cdf(params, hi) < q:
        hi += (hi - lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if mixture_cdf(params, mid) >= q:
            hi = mid
        else:
            lo = mid
    return hi


def sample_mixture(params: MixtureParams, size: int, rng: np.random.Generator) -> np.ndarray:
    comp = rng.choice(params.k, size=size, p=params.alpha / params.alpha.sum())
    return rng.normal(params.mu[comp], params.sigma[comp])
