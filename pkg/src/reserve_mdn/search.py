"""Sequential hyper-parameter selection on rolling-origin test error.

One coordinate is optimized at a time by grid search (weight penalty, then
sd-activity penalty, then dropout, then hidden layers); the final stage
couples the neuron count and the component count, incrementing K while the
coupled test error keeps improving. Test error averages the negative log
predictive density of independently trained runs over both partitions'
test sets, weighted by test-set size.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .logscale import log_mixture_log_pdf, sigma_cap, to_log_mixture
from .mdn import MdnConfig, forward_batch, train
from .mixture import MixtureParams, mixture_log_pdf
from .partition import DataSplit, rolling_origin
from .triangle import IncrementalTriangle, scale_inputs

SEARCH_EPOCH_CAP = 10_000
DEFAULT_RUNS_PER_PARTITION = 3
DEFAULT_K_CEILING = 8

DEFAULT_GRIDS = {
    "lambda_w": [0.0, 0.0001, 0.001, 0.01, 0.1],
    "lambda_sigma": [0.0, 0.0001, 0.001, 0.01, 0.1],
    "dropout": [0.0, 0.1, 0.2],
    "neurons": [20, 40, 60, 80, 100],
    "layers": [1, 2, 3, 4],
}

STAGES = ("lambda_w", "lambda_sigma", "dropout", "layers", "neurons_components", "done")


@dataclass(frozen=True)
class TestErrorReport:
    """Per-partition and size-weighted combined test errors of one design."""

    err_p1: float
    err_p2: float
    err_total: float
    runs: int
    n_test_p1: int
    n_test_p2: int


def combine_errors(err_p1: float, n1: int, err_p2: float, n2: int) -> float:
    return (n1 * err_p1 + n2 * err_p2) / (n1 + n2)


@dataclass
class TraceRecord:
    stage: str
    config: MdnConfig
    report: TestErrorReport


@dataclass
class SearchState:
    theta: MdnConfig
    stage: str = "lambda_w"
    trace: list = field(default_factory=list)


def _run_seed(seed: int, partition_index: int, run_index: int) -> int:
    ss = np.random.SeedSequence([int(seed), partition_index, run_index])
    return int(ss.generate_state(1)[0])


def raw_scale_log_density(params: MixtureParams, amounts, normalizer,
                          cap: float | None) -> np.ndarray:
    """Log predictive density on the raw currency scale, for either fitted
    scale kind, so designs are comparable across scale kinds."""
    amounts = np.asarray(amounts, dtype=float)
    if params.scale_kind == "raw":
        z = normalizer.normalize(amounts)
        return np.asarray(mixture_log_pdf(params, z)) - np.log(normalizer.std)
    lm = to_log_mixture(params, normalizer, cap=cap)
    return np.asarray(log_mixture_log_pdf(lm, amounts))


def test_error(config: MdnConfig, tri: IncrementalTriangle,
               partitions: tuple[DataSplit, DataSplit], runs: int = DEFAULT_RUNS_PER_PARTITION,
               seed: int = 0, constraints=None) -> TestErrorReport:
    """Train ``runs`` independently seeded models per partition and average
    the negative log raw-scale predictive density over their test cells."""
    if runs < 1:
        raise ValueError("need at least one run per partition")
    cap = None
    if config.scale_kind == "log":
        cap = sigma_cap(tri.upper_values())
    errs = []
    sizes = []
    for p, split in enumerate(partitions):
        test_cells = sorted(split.test)
        if not test_cells:
            raise ValueError(f"partition {split.name} has an empty test set")
        amounts = tri.values_at(test_cells)
        x_test = scale_inputs(test_cells, tri.n)
        total = 0.0
        for t in range(runs):
            result = train(config, tri, split, constraints=constraints,
                           seed=_run_seed(seed, p, t))
            alpha, mu, sigma = forward_batch(result.weights, config, x_test)
            for r in range(len(test_cells)):
                params = MixtureParams(alpha=alpha[r], mu=mu[r], sigma=sigma[r],
                                       scale_kind=config.scale_kind)
                total += float(raw_scale_log_density(
                    params, amounts[r:r + 1], result.normalizer, cap)[0])
        errs.append(-total / (runs * len(test_cells)))
        sizes.append(len(test_cells))
    err_total = combine_errors(errs[0], sizes[0], errs[1], sizes[1])
    return TestErrorReport(err_p1=errs[0], err_p2=errs[1], err_total=err_total,
                           runs=runs, n_test_p1=sizes[0], n_test_p2=sizes[1])


def argmin_tiebreak(candidates):
    """Index of the lowest error; ties go to the smaller (simpler) key.

    ``candidates`` is a sequence of (key, error) pairs with comparable keys.
    """
    if not candidates:
        raise ValueError("no candidates")
    best = 0
    for i in range(1, len(candidates)):
        key, err = candidates[i]
        bkey, berr = candidates[best]
        if err < berr or (err == berr and key < bkey):
            best = i
    return best


def select_hyperparameters(tri: IncrementalTriangle, grids=None,
                           theta_initial: MdnConfig | None = None,
                           runs: int = DEFAULT_RUNS_PER_PARTITION, seed: int = 0,
                           error_fn=None, k_ceiling: int = DEFAULT_K_CEILING):
    """Run the six-stage selection and return (config, SearchState).

    ``error_fn(config) -> TestErrorReport`` defaults to rolling-origin
    ``test_error``; injecting a stub makes the decision path testable
    without training.
    """
    grids = dict(DEFAULT_GRIDS) if grids is None else dict(grids)
    theta = theta_initial if theta_initial is not None else MdnConfig(
        lambda_w=0.0, lambda_sigma=0.0, dropout=0.0, neurons=60, layers=2,
        components=2)
    theta = replace(theta, max_epochs=min(theta.max_epochs, SEARCH_EPOCH_CAP))
    if error_fn is None:
        partitions = rolling_origin(tri.n)

        def error_fn(config: MdnConfig) -> TestErrorReport:
            return test_error(config, tri, partitions, runs=runs, seed=seed)

    state = SearchState(theta=theta)

    def evaluate(stage: str, config: MdnConfig) -> TestErrorReport:
        report = error_fn(config)
        if not np.isfinite(report.err_total):
            raise ValueError(f"non-finite test error for {config}")
        state.trace.append(TraceRecord(stage=stage, config=config, report=report))
        return report

    for stage in ("lambda_w", "lambda_sigma", "dropout", "layers"):
        state.stage = stage
        candidates = []
        reports = []
        for value in grids[stage]:
            cand = replace(theta, **{stage: value})
            reports.append(evaluate(stage, cand))
            candidates.append((value, reports[-1].err_total))
        theta = replace(theta, **{stage: grids[stage][argmin_tiebreak(candidates)]})
        state.theta = theta

    state.stage = "neurons_components"

    def best_neurons(k: int):
        candidates = []
        for width in grids["neurons"]:
            cand = replace(theta, neurons=width, components=k)
            rep = evaluate("neurons_components", cand)
            candidates.append((width, rep.err_total))
        best = argmin_tiebreak(candidates)
        return grids["neurons"][best], candidates[best][1]

    k = 1
    width_k, err_k = best_neurons(k)
    while k < k_ceiling:
        width_next, err_next = best_neurons(k + 1)
        if err_k < err_next:
            break
        k, width_k, err_k = k + 1, width_next, err_next
    theta = replace(theta, neurons=width_k, components=k)
    state.theta = theta
    state.stage = "done"
    return theta, state
