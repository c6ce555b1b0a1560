"""Quantitative evaluation: RMSE, floored log score, pinball quantile
scores, and aggregation of per-triangle reports into comparison tables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_SCORE_FLOOR = -50.0


def rmse(predicted, actual) -> float:
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.size == 0 or predicted.shape != actual.shape:
        raise ValueError("need aligned nonempty prediction/actual vectors")
    return float(np.sqrt(np.mean((predicted - actual) ** 2)))


def log_score(densities, actuals=None, floor: float = LOG_SCORE_FLOOR) -> float:
    """Mean of max(floor, ln f(actual)). ``densities`` is either an array of
    density values already evaluated at the actuals, or a sequence of
    callables to evaluate there. Zero densities hit the floor instead of
    producing -inf."""
    if actuals is not None and len(densities) and callable(densities[0]):
        densities = np.array([f(a) for f, a in zip(densities, actuals)])
    densities = np.asarray(densities, dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.log(densities)
    return float(np.mean(np.maximum(floor, logs)))


def log_score_from_log_densities(log_densities, floor: float = LOG_SCORE_FLOOR) -> float:
    return float(np.mean(np.maximum(floor, np.asarray(log_densities, dtype=float))))


def quantile_score(predicted_quantiles, actuals, q: float) -> float:
    """Mean pinball score (1{actual < qhat} - q) * (qhat - actual);
    nonnegative, zero only where the quantile equals the actual."""
    qhat = np.asarray(predicted_quantiles, dtype=float)
    actual = np.asarray(actuals, dtype=float)
    if qhat.shape != actual.shape:
        raise ValueError("need aligned quantile/actual vectors")
    indicator = (actual < qhat).astype(float)
    return float(np.mean((indicator - q) * (qhat - actual)))


@dataclass
class EvaluationReport:
    """Cell-level metrics of one model on one triangle, plus its reserve
    point/quantile predictions for cross-triangle aggregation."""

    model: str
    rmse_cells: float
    log_score: float
    qs75: float
    qs95: float
    reserve_actual: float | None = None
    reserve_mean: float | None = None
    reserve_q75: float | None = None
    reserve_q95: float | None = None
    detail: dict = field(default_factory=dict)


def evaluate_cells(model_name: str, actuals, means, log_densities, q75, q95,
                   reserve: dict | None = None, cells=None) -> EvaluationReport:
    actuals = np.asarray(actuals, dtype=float)
    report = EvaluationReport(
        model=model_name,
        rmse_cells=rmse(means, actuals),
        log_score=log_score_from_log_densities(log_densities),
        qs75=quantile_score(q75, actuals, 0.75),
        qs95=quantile_score(q95, actuals, 0.95),
        detail={"cells": list(cells) if cells is not None else None,
                "actual": actuals,
                "mean": np.asarray(means, dtype=float),
                "log_density": np.asarray(log_densities, dtype=float),
                "q75": np.asarray(q75, dtype=float),
                "q95": np.asarray(q95, dtype=float)},
    )
    if reserve is not None:
        report.reserve_actual = float(reserve["actual"])
        report.reserve_mean = float(reserve["mean"])
        report.reserve_q75 = float(reserve.get("q75", np.nan))
        report.reserve_q95 = float(reserve.get("q95", np.nan))
    return report


CELL_METRICS = ("rmse_cells", "log_score", "qs75", "qs95")


def _outperforms(metric: str, model_value: float, base_value: float) -> bool:
    # strict inequality: ties count against the challenger
    if metric == "log_score":
        return model_value > base_value
    return model_value < base_value


@dataclass
class AggregateComparison:
    """Cross-triangle means, RMSE as a percent of the baseline (mean of
    per-triangle ratios), and per-metric outperformance percentages."""

    model: str
    baseline: str
    triangles: int
    mean_model: dict
    mean_baseline: dict
    rmse_pct_of_baseline: float
    outperformance_pct: dict
    reserve_model: dict | None = None
    reserve_baseline: dict | None = None


def aggregate(reports: list[EvaluationReport],
              baseline_reports: list[EvaluationReport]) -> AggregateComparison:
    if len(reports) != len(baseline_reports) or not reports:
        raise ValueError("need equally many model and baseline reports")
    mean_model = {m: float(np.mean([getattr(r, m) for r in reports]))
                  for m in CELL_METRICS}
    mean_base = {m: float(np.mean([getattr(r, m) for r in baseline_reports]))
                 for m in CELL_METRICS}
    ratios = [r.rmse_cells / b.rmse_cells
              for r, b in zip(reports, baseline_reports)]
    outperf = {
        m: 100.0 * float(np.mean([
            _outperforms(m, getattr(r, m), getattr(b, m))
            for r, b in zip(reports, baseline_reports)]))
        for m in CELL_METRICS
    }

    def reserve_block(rs):
        if any(r.reserve_actual is None for r in rs):
            return None
        actual = np.array([r.reserve_actual for r in rs])
        mean = np.array([r.reserve_mean for r in rs])
        q75 = np.array([r.reserve_q75 for r in rs])
        q95 = np.array([r.reserve_q95 for r in rs])
        return {
            "rmse": rmse(mean, actual),
            "qs75": quantile_score(q75, actual, 0.75),
            "qs95": quantile_score(q95, actual, 0.95),
        }

    return AggregateComparison(
        model=reports[0].model,
        baseline=baseline_reports[0].model,
        triangles=len(reports),
        mean_model=mean_model,
        mean_baseline=mean_base,
        rmse_pct_of_baseline=100.0 * float(np.mean(ratios)),
        outperformance_pct=outperf,
        reserve_model=reserve_block(reports),
        reserve_baseline=reserve_block(baseline_reports),
    )
