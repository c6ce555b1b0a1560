"""GLM-boosted mixture density network.

A frozen embedding table stores, per cell, the mixture-Gaussian
approximation of the fitted cross-classified ODP (weights spread evenly
over the K components, component mean A_i*B_j and sd sqrt(D*A_i*B_j), both
on the normalized response scale). The table feeds the network's head
pre-activations through the additive-offset hook, so with zero-initialized
head weights and biases the first forward pass reproduces the GLM
approximation exactly, and training boosts its residual structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ccodp import CcOdpFit
from .mdn import MdnConfig, NetworkWeights, _forward_core, forward, init_weights
from .mixture import MixtureParams
from .triangle import Normalizer


def cell_code(i: int, j: int, n: int) -> int:
    """Integer code identifying cell (i, j) in the embedding table."""
    return n * (i - 1) + j


@dataclass(frozen=True)
class GlmEmbedding:
    """Frozen per-cell head offsets: (log weights, means, log sds), each
    (n, n, K), on the normalized response scale. Covers the full square so
    forecasting reaches lower-triangle cells."""

    n: int
    k: int
    log_alpha: np.ndarray
    mu: np.ndarray
    log_sigma: np.ndarray

    def __post_init__(self):
        shape = (self.n, self.n, self.k)
        for arr in (self.log_alpha, self.mu, self.log_sigma):
            if arr.shape != shape:
                raise ValueError(f"embedding arrays must have shape {shape}")
            arr.setflags(write=False)

    def offsets_for(self, cells) -> tuple:
        ii = np.array([c[0] for c in cells], dtype=int) - 1
        jj = np.array([c[1] for c in cells], dtype=int) - 1
        return (self.log_alpha[ii, jj], self.mu[ii, jj], self.log_sigma[ii, jj])

    def decoded_mixture(self, i: int, j: int) -> MixtureParams:
        """The GLM approximation this table encodes at one cell, decoded
        through the same activations the network applies (softmax / exp)."""
        la = self.log_alpha[i - 1, j - 1]
        shifted = la - la.max()
        ea = np.exp(shifted)
        return MixtureParams(
            alpha=ea / ea.sum(),
            mu=self.mu[i - 1, j - 1].copy(),
            sigma=np.exp(self.log_sigma[i - 1, j - 1]),
            scale_kind="raw",
        )


def build_embedding(fit: CcOdpFit, config: MdnConfig,
                    normalizer: Normalizer) -> GlmEmbedding:
    """Populate the table for every cell of the square: equal component
    weights 1/K, normalized component mean (A_i*B_j - mean)/std and sd
    sqrt(D*A_i*B_j)/std."""
    if config.scale_kind != "raw":
        raise ValueError("the GLM-boosted model is defined on the raw (Gaussian) scale")
    if normalizer.scale_kind != "raw":
        raise ValueError("embedding needs a raw-scale normalizer")
    n, k = fit.n, config.components
    means = fit.mean_surface()
    mu = (means - normalizer.mean) / normalizer.std
    sigma = np.sqrt(fit.D * means) / normalizer.std
    return GlmEmbedding(
        n=n,
        k=k,
        log_alpha=np.full((n, n, k), -np.log(k)),
        mu=np.repeat(mu[:, :, None], k, axis=2),
        log_sigma=np.repeat(np.log(sigma)[:, :, None], k, axis=2),
    )


def init_resmdn(config: MdnConfig, seed: int) -> NetworkWeights:
    """Glorot hidden layers; head weights and biases zero, so the first
    forward pass reproduces the embedding."""
    return init_weights(config, np.random.default_rng(seed), zero_heads=True)


def resmdn_forward(weights: NetworkWeights, embedding: GlmEmbedding,
                   config: MdnConfig, cell, mode: str = "eval",
                   rng: np.random.Generator | None = None) -> MixtureParams:
    """Forward pass with the embedding added to the head pre-activations:
    alpha_k proportional to alpha_GLM_k * exp(z_alpha_k), mu_k = mu_GLM_k + z_mu_k,
    sigma_k = sigma_GLM_k * exp(z_sigma_k)."""
    offsets = embedding.offsets_for([cell])
    return forward(weights, config, cell, embedding.n, mode=mode, rng=rng,
                   offsets=tuple(o[0] for o in offsets))


def boost_report(weights: NetworkWeights, embedding: GlmEmbedding,
                 config: MdnConfig, cells=None) -> list[tuple]:
    """Per-cell fully connected head pre-activations (the boosting terms):
    rows (i, j, component, z_alpha, z_mu, z_sigma), eval mode.

    Reconstruction identities: sigma_boosted/sigma_GLM = exp(z_sigma) and
    mu_boosted - mu_GLM = z_mu at every cell.
    """
    if cells is None:
        cells = [(i, j) for i in range(1, embedding.n + 1)
                 for j in range(1, embedding.n + 1)]
    from .triangle import scale_inputs

    X = scale_inputs(cells, embedding.n)
    *_, zeta = _forward_core(weights, config, X)  # no offsets: raw z values
    rows = []
    for r, (i, j) in enumerate(cells):
        for k in range(config.components):
            rows.append((i, j, k + 1,
                         float(zeta["alpha"][r, k]),
                         float(zeta["mu"][r, k]),
                         float(zeta["sigma"][r, k])))
    return rows
