"""Final fitting and forecasting: the five-run ensemble, per-cell predictive
mixtures (component weights divided by the ensemble size), quantiles, and
Monte Carlo total-reserve distributions with independent cells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ccodp import CcOdpFit, adjust_latest_accident, fit_ccodp
from .logscale import (LogMixture, log_mixture_log_pdf, log_mixture_moments,
                       log_mixture_quantile, sample_log_mixture, sigma_cap,
                       to_log_mixture)
from .mdn import ConstraintSet, MdnConfig, NetworkWeights, forward_batch, train
from .mixture import (MixtureParams, mixture_log_pdf, mixture_moments,
                      mixture_quantile as _gaussian_quantile, sample_mixture)
from .partition import DataSplit, adjusted_partitions, final_fit_split
from .resmdn import GlmEmbedding, build_embedding, init_resmdn
from .triangle import (IncrementalTriangle, Normalizer, fit_normalizer,
                       lower_triangle_cells, scale_inputs, upper_triangle_cells)

ENSEMBLE_SIZE = 5
DEFAULT_NSIM = 100_000
# Constraint-satisfaction reporting tolerance: share of the triangle's mean
# cell value by which an ensemble mean may overshoot a bound.
CONSTRAINT_TOL_SHARE = 0.05


@dataclass
class EnsembleModel:
    """Trained ensemble members plus everything needed to predict."""

    members: list[NetworkWeights]
    config: MdnConfig
    normalizer: Normalizer
    model_kind: str                      # "mdn" | "resmdn"
    n: int
    embedding: GlmEmbedding | None = None
    sd_cap: float | None = None          # log-scale component-sd cap
    backbone: CcOdpFit | None = None     # the embedded GLM fit, if any

    def __post_init__(self):
        if self.model_kind not in ("mdn", "resmdn"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if self.model_kind == "resmdn" and self.embedding is None:
            raise ValueError("resmdn ensemble needs its embedding")


def member_splits(scheme: str, tri: IncrementalTriangle, count: int,
                  partition_seed: int = 0) -> list[DataSplit]:
    """Final-fit split per ensemble member: one shared split under the
    rolling scheme; three ADJ3 / two ADJ4 assignments under the adjusted
    scheme (extra members alternate)."""
    if scheme == "rolling":
        split = final_fit_split(tri.n)
        return [split] * count
    if scheme == "adjusted":
        _, _, adj3, adj4 = adjusted_partitions(tri.n, partition_seed)
        return [adj3 if m < 3 else adj4 for m in range(count)]
    raise ValueError(f"unknown partition scheme {scheme!r}")


def fit_final(config: MdnConfig, tri: IncrementalTriangle,
              constraints: ConstraintSet | None = None,
              seeds=(0, 1, 2, 3, 4), model_kind: str = "mdn",
              scheme: str = "rolling", partition_seed: int = 0,
              adjust_backbone: bool = True) -> EnsembleModel:
    """Train the final ensemble (default five members) on the final-fit
    split. All members share one normalizer, fitted on the first member's
    training cells, so their mixture parameters live on a common scale."""
    seeds = list(seeds)
    splits = member_splits(scheme, tri, len(seeds), partition_seed)
    normalizer = fit_normalizer(tri.values_at(sorted(splits[0].train)),
                                config.scale_kind)
    embedding = None
    backbone = None
    if model_kind == "resmdn":
        backbone = fit_ccodp(tri)
        if adjust_backbone:
            backbone = adjust_latest_accident(backbone)
        embedding = build_embedding(backbone, config, normalizer)

    members = []
    for seed, split in zip(seeds, splits):
        weights0 = init_resmdn(config, seed) if model_kind == "resmdn" else None
        result = train(config, tri, split, constraints=constraints, seed=seed,
                       weights0=weights0, embedding=embedding,
                       normalizer=normalizer)
        members.append(result.weights)

    cap = sigma_cap(tri.upper_values()) if config.scale_kind == "log" else None
    return EnsembleModel(members=members, config=config, normalizer=normalizer,
                         model_kind=model_kind, n=tri.n, embedding=embedding,
                         sd_cap=cap, backbone=backbone)


def _member_params(model: EnsembleModel, cells) -> list[tuple]:
    """(alpha, mu, sigma) arrays per member over the given cells."""
    X = scale_inputs(cells, model.n)
    offsets = None
    if model.embedding is not None:
        offsets = model.embedding.offsets_for(cells)
    return [forward_batch(w, model.config, X, offsets=offsets)
            for w in model.members]


def _ensemble_mixture(model: EnsembleModel, per_member, row: int):
    z = len(per_member)
    alpha = np.concatenate([alpha[row] / z for alpha, _, _ in per_member])
    mu = np.concatenate([mu[row] for _, mu, _ in per_member])
    sigma = np.concatenate([sigma[row] for _, _, sigma in per_member])
    return MixtureParams(alpha=alpha, mu=mu, sigma=sigma,
                         scale_kind=model.config.scale_kind)


def predict_cell(model: EnsembleModel, i: int, j: int):
    """Raw-currency predictive distribution at one cell: the members'
    components pooled with weights divided by the ensemble size. Gaussian
    fits denormalize to a raw-scale mixture; log fits pass through the
    log-mixture transform including the component-sd cap."""
    per_member = _member_params(model, [(i, j)])
    pooled = _ensemble_mixture(model, per_member, 0)
    if model.config.scale_kind == "raw":
        return MixtureParams(
            alpha=pooled.alpha,
            mu=pooled.mu * model.normalizer.std + model.normalizer.mean,
            sigma=pooled.sigma * model.normalizer.std,
            scale_kind="raw",
        )
    return to_log_mixture(pooled, model.normalizer, cap=model.sd_cap)


def predictive_distributions(model: EnsembleModel, cells) -> list:
    """Raw-scale predictive distribution per cell (batched forward pass)."""
    per_member = _member_params(model, cells)
    out = []
    for r in range(len(cells)):
        pooled = _ensemble_mixture(model, per_member, r)
        if model.config.scale_kind == "raw":
            out.append(MixtureParams(
                alpha=pooled.alpha,
                mu=pooled.mu * model.normalizer.std + model.normalizer.mean,
                sigma=pooled.sigma * model.normalizer.std,
                scale_kind="raw"))
        else:
            out.append(to_log_mixture(pooled, model.normalizer, cap=model.sd_cap))
    return out


def mixture_quantile(dist, q: float) -> float:
    """Quantile of a raw-scale predictive distribution (either kind)."""
    if isinstance(dist, LogMixture):
        return log_mixture_quantile(dist, q)
    return _gaussian_quantile(dist, q)


def distribution_moments(dist) -> tuple[float, float]:
    if isinstance(dist, LogMixture):
        return log_mixture_moments(dist)
    return mixture_moments(dist)


def distribution_log_pdf(dist, x):
    if isinstance(dist, LogMixture):
        return log_mixture_log_pdf(dist, x)
    return mixture_log_pdf(dist, x)


def sample_distribution(dist, size: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(dist, LogMixture):
        return sample_log_mixture(dist, size, rng)
    return sample_mixture(dist, size, rng)


@dataclass(frozen=True)
class ReserveDistribution:
    """Monte Carlo draws of the total reserve plus summary statistics."""

    samples: np.ndarray
    mean: float
    std: float
    quantiles: dict

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "ReserveDistribution":
        qs = {q: float(np.quantile(samples, q)) for q in (0.25, 0.5, 0.75, 0.95)}
        return cls(samples=samples, mean=float(samples.mean()),
                   std=float(samples.std(ddof=1)), quantiles=qs)


def simulate_reserves(model: EnsembleModel, tri: IncrementalTriangle,
                      nsim: int = DEFAULT_NSIM, seed: int = 0) -> ReserveDistribution:
    """Sum independent per-cell draws over the lower triangle. Raw-scale
    mixtures keep negative draws: the fitted support is the real line."""
    if nsim < 1000:
        raise ValueError("reserve simulation needs nsim >= 1000")
    rng = np.random.default_rng(seed)
    cells = lower_triangle_cells(tri.n)
    dists = predictive_distributions(model, cells)
    total = np.zeros(nsim)
    for dist in dists:
        total += sample_distribution(dist, nsim, rng)
    return ReserveDistribution.from_samples(total)


def analytic_reserve_mean(model: EnsembleModel, tri: IncrementalTriangle) -> float:
    cells = lower_triangle_cells(tri.n)
    return float(sum(distribution_moments(d)[0]
                     for d in predictive_distributions(model, cells)))


@dataclass
class CellForecastTable:
    """Per-cell predictive summaries used by the CSV emitters and metrics."""

    cells: list
    mean: np.ndarray
    std: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    q95: np.ndarray
    log_density_at: np.ndarray | None = None   # filled when actuals are known


def forecast_table(model: EnsembleModel, cells,
                   actuals: np.ndarray | None = None) -> CellForecastTable:
    dists = predictive_distributions(model, cells)
    count = len(cells)
    mean = np.empty(count)
    std = np.empty(count)
    q25 = np.empty(count)
    q75 = np.empty(count)
    q95 = np.empty(count)
    logd = np.empty(count) if actuals is not None else None
    for r, dist in enumerate(dists):
        m, v = distribution_moments(dist)
        mean[r], std[r] = m, np.sqrt(max(v, 0.0))
        q25[r] = mixture_quantile(dist, 0.25)
        q75[r] = mixture_quantile(dist, 0.75)
        q95[r] = mixture_quantile(dist, 0.95)
        if actuals is not None:
            logd[r] = float(distribution_log_pdf(dist, actuals[r]))
    return CellForecastTable(cells=list(cells), mean=mean, std=std, q25=q25,
                             q75=q75, q95=q95, log_density_at=logd)


def constraint_satisfaction(model: EnsembleModel, tri: IncrementalTriangle,
                            constraints: ConstraintSet,
                            tol_share: float = CONSTRAINT_TOL_SHARE):
    """Fraction of constrained cells whose ensemble mean lies within its
    bounds, allowing a tolerance of ``tol_share`` of the triangle's mean
    observed cell value; returns (fraction, per-cell booleans)."""
    tol = tol_share * float(np.mean(tri.amounts[tri.observed]))
    dists = predictive_distributions(model, list(constraints.cells))
    ok = np.empty(len(constraints), dtype=bool)
    for r, dist in enumerate(dists):
        m, _ = distribution_moments(dist)
        ok[r] = (m >= constraints.lower[r] - tol) and (m <= constraints.upper[r] + tol)
    return float(ok.mean()), ok
