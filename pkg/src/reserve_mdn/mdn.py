"""Mixture density network on (accident, development) inputs.

Everything is implemented directly on numpy arrays: sigmoid hidden layers,
three affine output heads (softmax weights / identity means / exponential
standard deviations), a composite training loss (negative log likelihood +
optional squared-error, weight-decay, sd-activity and projection-constraint
penalties), exact analytic gradients, full-batch Adam, inverted dropout and
early stopping on a validation loss.

The forward pass accepts optional per-cell head offsets; the GLM-boosted
variant feeds its frozen embedding through that hook, so one gradient
implementation serves both model kinds.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .mixture import LOG_2PI, MixtureParams
from .triangle import IncrementalTriangle, Normalizer, fit_normalizer, scale_inputs

HEADS = ("alpha", "mu", "sigma")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class DivergenceError(RuntimeError):
    """Raised when a training run produces a non-finite loss."""


@dataclass(frozen=True)
class MdnConfig:
    """Hyper-parameters of one network design plus its training protocol."""

    lambda_w: float = 0.0        # L2 penalty on weights (biases excluded)
    lambda_sigma: float = 0.0    # activity penalty on squared component sds
    dropout: float = 0.0         # inverted-dropout rate on hidden activations
    neurons: int = 60            # width of every hidden layer
    layers: int = 2              # number of hidden layers
    components: int = 2          # mixture components K
    mse_weight: float = 0.0      # weight of the squared-error term (normalized scale)
    scale_kind: str = "raw"      # "raw": mixture Gaussian; "log": mixture Log-Gaussian
    max_epochs: int = 10_000
    patience: int = 1_000
    learning_rate: float = 0.001
    lambda_c: float = 10.0       # projection-constraint penalty coefficient

    def __post_init__(self):
        if self.components < 1 or self.neurons < 1 or self.layers < 1:
            raise ValueError("components, neurons and layers must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout rate must lie in [0, 1)")
        if min(self.lambda_w, self.lambda_sigma, self.mse_weight, self.lambda_c) < 0:
            raise ValueError("penalty coefficients must be nonnegative")
        if self.scale_kind not in ("raw", "log"):
            raise ValueError(f"unknown scale_kind {self.scale_kind!r}")
        if self.max_epochs < 1 or self.patience < 1 or not self.learning_rate > 0:
            raise ValueError("invalid training protocol settings")


@dataclass(frozen=True)
class ConstraintSet:
    """Bounds on raw-scale central estimates of lower-triangle cells."""

    cells: tuple
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple((int(i), int(j)) for i, j in self.cells))
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if len(self.cells) != self.lower.size or len(self.cells) != self.upper.size:
            raise ValueError("cells, lower, upper must align")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bounds must not exceed upper bounds")

    def __len__(self) -> int:
        return len(self.cells)

    def validate_for(self, n: int) -> None:
        for i, j in self.cells:
            if i + j <= n + 1:
                raise ValueError(f"constraint cell ({i},{j}) is not in the lower triangle")

    @classmethod
    def from_entries(cls, entries) -> "ConstraintSet":
        cells = [(i, j) for i, j, _, _ in entries]
        lower = [lo for _, _, lo, _ in entries]
        upper = [up for _, _, _, up in entries]
        return cls(cells=tuple(cells), lower=np.array(lower), upper=np.array(upper))


# ---------------------------------------------------------------------------
# weights


class NetworkWeights:
    """All weights/biases as views into one flat float64 vector.

    Order (layer-major, row-major): hidden W/b per layer, then the alpha,
    mu, sigma head W/b. This order is also the serialized layout.
    """

    def __init__(self, config: MdnConfig, data: np.ndarray | None = None):
        widths = [2] + [config.neurons] * config.layers
        shapes: list[tuple[str, tuple]] = []
        for l in range(config.layers):
            shapes.append((f"hidden_w{l}", (widths[l], widths[l + 1])))
            shapes.append((f"hidden_b{l}", (widths[l + 1],)))
        for head in HEADS:
            shapes.append((f"head_w_{head}", (widths[-1], config.components)))
            shapes.append((f"head_b_{head}", (config.components,)))
        self.config = config
        self._shapes = shapes
        self._offsets = {}
        offset = 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            self._offsets[name] = (offset, shape)
            offset += size
        self.size = offset
        self.data = np.zeros(offset) if data is None else np.asarray(data, dtype=float)
        if self.data.size != offset:
            raise ValueError(f"flat weight vector has size {self.data.size}, expected {offset}")

    def view(self, name: str) -> np.ndarray:
        offset, shape = self._offsets[name]
        return self.data[offset:offset + int(np.prod(shape))].reshape(shape)

    def hidden_w(self, l: int) -> np.ndarray:
        return self.view(f"hidden_w{l}")

    def hidden_b(self, l: int) -> np.ndarray:
        return self.view(f"hidden_b{l}")

    def head_w(self, head: str) -> np.ndarray:
        return self.view(f"head_w_{head}")

    def head_b(self, head: str) -> np.ndarray:
        return self.view(f"head_b_{head}")

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(self.config, self.data.copy())


def _weight_matrix_names(config: MdnConfig) -> list[str]:
    names = [f"hidden_w{l}" for l in range(config.layers)]
    names += [f"head_w_{h}" for h in HEADS]
    return names


def init_weights(config: MdnConfig, rng: np.random.Generator,
                 zero_heads: bool = False) -> NetworkWeights:
    """Glorot-uniform weight matrices, zero biases; optionally zero head
    weights and biases so the first forward pass reproduces head offsets."""
    w = NetworkWeights(config)
    for name in _weight_matrix_names(config):
        mat = w.view(name)
        if zero_heads and name.startswith("head_w_"):
            continue  # stays zero
        limit = np.sqrt(6.0 / sum(mat.shape))
        mat[...] = rng.uniform(-limit, limit, size=mat.shape)
    return w


def save_weights(weights: NetworkWeights, path) -> None:
    """Flat layer-major, row-major CSV (index,value), full float precision."""
    lines = ["index,value"]
    for idx, v in enumerate(weights.data):
        lines.append(f"{idx},{float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_weights(config: MdnConfig, path) -> NetworkWeights:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    vals = [float(line.split(",")[1]) for line in lines[1:] if line.strip()]
    return NetworkWeights(config, np.array(vals))


# ---------------------------------------------------------------------------
# forward pass


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def draw_dropout_masks(config: MdnConfig, n_rows: int, rng: np.random.Generator):
    """One keep/drop mask per hidden layer, independent per row and unit."""
    if config.dropout <= 0.0:
        return None
    return [
        (rng.random((n_rows, config.neurons)) >= config.dropout).astype(float)
        for _ in range(config.layers)
    ]


def _forward_core(weights: NetworkWeights, config: MdnConfig, X: np.ndarray,
                  masks=None, offsets=None):
    """Returns (cache, zeta) where zeta maps head -> pre-activation (N, K)."""
    keep = 1.0 - config.dropout
    inputs = [X]          # input consumed by each hidden layer
    sigmoids = []         # pre-dropout activations (for the derivative)
    a = X
    for l in range(config.layers):
        z = a @ weights.hidden_w(l) + weights.hidden_b(l)
        s = _sigmoid(z)
        sigmoids.append(s)
        if masks is not None:
            s = s * masks[l] / keep
        inputs.append(s)
        a = s
    zeta = {}
    for h, head in enumerate(HEADS):
        z = a @ weights.head_w(head) + weights.head_b(head)
        if offsets is not None:
            z = z + offsets[h]
        zeta[head] = z
    return inputs, sigmoids, zeta


def _activate(zeta):
    za = zeta["alpha"]
    log_alpha = za - logsumexp(za, axis=1, keepdims=True)
    alpha = np.exp(log_alpha)
    mu = zeta["mu"]
    sigma = np.exp(zeta["sigma"])
    return log_alpha, alpha, mu, sigma


def forward(weights: NetworkWeights, config: MdnConfig, cell, n: int,
            mode: str = "eval", rng: np.random.Generator | None = None,
            offsets=None) -> MixtureParams:
    """Mixture parameters for one cell. ``train`` mode applies inverted
    dropout (requires rng); ``eval`` mode is deterministic."""
    X = scale_inputs([cell], n)
    masks = None
    if mode == "train" and config.dropout > 0.0:
        if rng is None:
            raise ValueError("train mode with dropout needs an rng")
        masks = draw_dropout_masks(config, 1, rng)
    elif mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    off = None if offsets is None else tuple(o.reshape(1, -1) for o in offsets)
    *_, zeta = _forward_core(weights, config, X, masks=masks, offsets=off)
    _, alpha, mu, sigma = _activate(zeta)
    return MixtureParams(alpha=alpha[0], mu=mu[0], sigma=sigma[0],
                         scale_kind=config.scale_kind)


def forward_batch(weights: NetworkWeights, config: MdnConfig, X: np.ndarray,
                  masks=None, offsets=None):
    """Vectorized forward over pre-scaled inputs; returns (alpha, mu, sigma)."""
    *_, zeta = _forward_core(weights, config, X, masks=masks, offsets=offsets)
    _, alpha, mu, sigma = _activate(zeta)
    return alpha, mu, sigma


# ---------------------------------------------------------------------------
# loss and analytic gradient


@dataclass
class ConstraintBatch:
    """Pre-assembled constraint inputs for one loss evaluation."""

    inputs: np.ndarray            # (M, 2) scaled cells
    lower: np.ndarray             # (M,) raw currency
    upper: np.ndarray             # (M,) raw currency
    scale: float                  # reference amount; violations divide by scale^2
    offsets: tuple | None = None  # per-head (M, K) embedding offsets


def make_constraint_batch(constraints: ConstraintSet, n: int, scale: float,
                          indices=None, embedding=None) -> ConstraintBatch | None:
    if constraints is None or len(constraints) == 0:
        return None
    idx = np.arange(len(constraints)) if indices is None else np.asarray(indices, dtype=int)
    if idx.size == 0:
        return None
    cells = [constraints.cells[i] for i in idx]
    offsets = None if embedding is None else embedding.offsets_for(cells)
    return ConstraintBatch(
        inputs=scale_inputs(cells, n),
        lower=constraints.lower[idx],
        upper=constraints.upper[idx],
        scale=float(scale),
        offsets=offsets,
    )


def _raw_mean_and_head_grads(alpha, mu, sigma, normalizer: Normalizer):
    """Raw-scale predictive mean per row plus its gradients w.r.t. the
    head pre-activations. For a log-scale fit the mean is the lognormal
    mixture mean of the denormalized components."""
    if normalizer.scale_kind == "raw":
        e_norm = np.sum(alpha * mu, axis=1)
        raw = e_norm * normalizer.std + normalizer.mean
        d_za = alpha * (mu - e_norm[:, None]) * normalizer.std
        d_zm = alpha * normalizer.std
        d_zs = np.zeros_like(alpha)
    else:
        m = mu * normalizer.std + normalizer.mean
        s = sigma * normalizer.std
        g = np.exp(m + 0.5 * s * s)
        raw = np.sum(alpha * g, axis=1)
        d_za = alpha * (g - raw[:, None])
        d_zm = alpha * g * normalizer.std
        d_zs = alpha * g * (s * s)
    return raw, d_za, d_zm, d_zs


def _constraint_penalty(alpha, mu, sigma, batch: ConstraintBatch,
                        normalizer: Normalizer, lambda_c: float):
    """Mean squared bound violation of raw-scale central estimates, with
    gradients w.r.t. the head pre-activations of the constraint rows."""
    raw, d_za, d_zm, d_zs = _raw_mean_and_head_grads(alpha, mu, sigma, normalizer)
    v_up = np.maximum(0.0, raw - batch.upper)
    v_lo = np.maximum(0.0, batch.lower - raw)
    coeff = lambda_c / (len(raw) * batch.scale**2)
    loss = coeff * float(np.sum(v_up**2 + v_lo**2))
    g = coeff * 2.0 * (v_up - v_lo)
    return loss, g[:, None] * d_za, g[:, None] * d_zm, g[:, None] * d_zs


def _backprop(weights: NetworkWeights, config: MdnConfig, inputs, sigmoids,
              d_zeta: dict, grad: NetworkWeights, masks=None) -> None:
    """Accumulate head/hidden gradients into ``grad`` given d(loss)/d(zeta)."""
    keep = 1.0 - config.dropout
    a_last = inputs[-1]
    da = np.zeros_like(a_last)
    for head in HEADS:
        dz = d_zeta[head]
        grad.view(f"head_w_{head}")[...] += a_last.T @ dz
        grad.view(f"head_b_{head}")[...] += dz.sum(axis=0)
        da += dz @ weights.head_w(head).T
    for l in range(config.layers - 1, -1, -1):
        if masks is not None:
            da = da * masks[l] / keep
        s = sigmoids[l]
        dz = da * s * (1.0 - s)
        grad.view(f"hidden_w{l}")[...] += inputs[l].T @ dz
        grad.view(f"hidden_b{l}")[...] += dz.sum(axis=0)
        if l > 0:
            da = dz @ weights.hidden_w(l).T


def loss_and_gradient(weights: NetworkWeights, config: MdnConfig,
                      inputs: np.ndarray, responses: np.ndarray,
                      constraint_batch: ConstraintBatch | None = None,
                      normalizer: Normalizer | None = None,
                      masks=None, constraint_masks=None,
                      offsets=None, want_grad: bool = True):
    """Composite training loss and its exact gradient (flat vector).

    loss = mean NLL + mse_weight * mean squared mean-error
         + lambda_w * sum of squared weights (biases excluded)
         + lambda_sigma * sum over cells/components of sigma^2
         + (lambda_c / M) * summed squared bound violations / scale^2
    """
    n_cells = responses.size
    if n_cells == 0:
        raise ValueError("empty training set")
    fwd_inputs, sigmoids, zeta = _forward_core(weights, config, inputs,
                                               masks=masks, offsets=offsets)
    log_alpha, alpha, mu, sigma = _activate(zeta)

    y = responses[:, None]
    log_phi = -0.5 * LOG_2PI - zeta["sigma"] - 0.5 * ((y - mu) / sigma) ** 2
    comp = log_alpha + log_phi
    lf = logsumexp(comp, axis=1)
    loss = -float(lf.mean())
    gamma = np.exp(comp - lf[:, None])

    d_za = -(gamma - alpha) / n_cells
    d_zm = -gamma * (y - mu) / sigma**2 / n_cells
    d_zs = -gamma * (((y - mu) / sigma) ** 2 - 1.0) / n_cells

    if config.mse_weight > 0.0:
        e_mix = np.sum(alpha * mu, axis=1)
        err = e_mix - responses
        loss += config.mse_weight * float(np.mean(err**2))
        c = 2.0 * config.mse_weight / n_cells
        d_zm += c * err[:, None] * alpha
        d_za += c * err[:, None] * alpha * (mu - e_mix[:, None])

    if config.lambda_sigma > 0.0:
        loss += config.lambda_sigma * float(np.sum(sigma**2))
        d_zs += 2.0 * config.lambda_sigma * sigma**2

    grad = NetworkWeights(config) if want_grad else None
    if want_grad:
        _backprop(weights, config, fwd_inputs, sigmoids,
                  {"alpha": d_za, "mu": d_zm, "sigma": d_zs}, grad, masks=masks)

    if constraint_batch is not None and config.lambda_c > 0.0:
        if normalizer is None:
            raise ValueError("constraint penalty needs the response normalizer")
        c_inputs, c_sigmoids, c_zeta = _forward_core(
            weights, config, constraint_batch.inputs,
            masks=constraint_masks, offsets=constraint_batch.offsets)
        _, c_alpha, c_mu, c_sigma = _activate(c_zeta)
        c_loss, c_dza, c_dzm, c_dzs = _constraint_penalty(
            c_alpha, c_mu, c_sigma, constraint_batch, normalizer, config.lambda_c)
        loss += c_loss
        if want_grad:
            _backprop(weights, config, c_inputs, c_sigmoids,
                      {"alpha": c_dza, "mu": c_dzm, "sigma": c_dzs}, grad,
                      masks=constraint_masks)

    if config.lambda_w > 0.0:
        for name in _weight_matrix_names(config):
            w = weights.view(name)
            loss += config.lambda_w * float(np.sum(w * w))
            if want_grad:
                grad.view(name)[...] += 2.0 * config.lambda_w * w

    return (loss, grad.data) if want_grad else loss


def training_loss(weights: NetworkWeights, config: MdnConfig,
                  inputs: np.ndarray, responses: np.ndarray,
                  constraint_batch: ConstraintBatch | None = None,
                  normalizer: Normalizer | None = None,
                  masks=None, constraint_masks=None, offsets=None) -> float:
    return loss_and_gradient(weights, config, inputs, responses,
                             constraint_batch=constraint_batch,
                             normalizer=normalizer, masks=masks,
                             constraint_masks=constraint_masks,
                             offsets=offsets, want_grad=False)


def validation_loss(weights: NetworkWeights, config: MdnConfig,
                    inputs: np.ndarray, responses: np.ndarray,
                    constraint_batch: ConstraintBatch | None = None,
                    normalizer: Normalizer | None = None, offsets=None) -> float:
    """NLL plus the constraint penalty on validation-assigned constraint
    cells; no weight, sd-activity or squared-error terms, no dropout."""
    *_, zeta = _forward_core(weights, config, inputs, offsets=offsets)
    log_alpha, alpha, mu, sigma = _activate(zeta)
    y = responses[:, None]
    log_phi = -0.5 * LOG_2PI - zeta["sigma"] - 0.5 * ((y - mu) / sigma) ** 2
    loss = -float(logsumexp(log_alpha + log_phi, axis=1).mean())
    if constraint_batch is not None and config.lambda_c > 0.0:
        *_, c_zeta = _forward_core(weights, config, constraint_batch.inputs,
                                   offsets=constraint_batch.offsets)
        _, c_alpha, c_mu, c_sigma = _activate(c_zeta)
        c_loss, *_ = _constraint_penalty(c_alpha, c_mu, c_sigma,
                                         constraint_batch, normalizer,
                                         config.lambda_c)
        loss += c_loss
    return loss


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    weights: NetworkWeights
    train_history: np.ndarray
    val_history: np.ndarray
    best_epoch: int            # 1-based epoch of the lowest validation loss
    best_val: float
    epochs_run: int
    normalizer: Normalizer
    seed: int
    restarted: bool = False


def _derive_seed(seed: int) -> int:
    return int(seed) + 1_000_003


def train(config: MdnConfig, tri: IncrementalTriangle, split,
          constraints: ConstraintSet | None = None, seed: int = 0,
          weights0: NetworkWeights | None = None, embedding=None,
          normalizer: Normalizer | None = None) -> TrainResult:
    """Full-batch Adam with early stopping on the validation loss.

    Responses are normalized with statistics from the split's training
    cells (unless a shared normalizer is passed in, as the ensemble driver
    does). Constraint cells are split half/half between the training and
    validation objectives. A non-finite loss restarts once from a derived
    seed, then fails.
    """
    try:
        return _train_once(config, tri, split, constraints, seed,
                           weights0, embedding, normalizer)
    except DivergenceError:
        retry = _derive_seed(seed)
        try:
            result = _train_once(config, tri, split, constraints, retry,
                                 weights0, embedding, normalizer)
        except DivergenceError:
            raise DivergenceError(
                f"training diverged twice (seeds {seed} and {retry})") from None
        result.restarted = True
        return result


def _train_once(config, tri, split, constraints, seed, weights0, embedding,
                normalizer) -> TrainResult:
    rng = np.random.default_rng(seed)
    train_cells = sorted(split.train)
    val_cells = sorted(split.val)
    if not train_cells or not val_cells:
        raise ValueError("split must provide nonempty training and validation sets")

    raw_train = tri.values_at(train_cells)
    if normalizer is None:
        normalizer = fit_normalizer(raw_train, config.scale_kind)
    y_train = normalizer.normalize(raw_train)
    y_val = normalizer.normalize(tri.values_at(val_cells))
    x_train = scale_inputs(train_cells, tri.n)
    x_val = scale_inputs(val_cells, tri.n)
    off_train = None if embedding is None else embedding.offsets_for(train_cells)
    off_val = None if embedding is None else embedding.offsets_for(val_cells)

    cb_train = cb_val = None
    if constraints is not None and len(constraints) > 0:
        constraints.validate_for(tri.n)
        scale = float(np.mean(tri.amounts[tri.observed]))
        perm = rng.permutation(len(constraints))
        half = (len(constraints) + 1) // 2
        cb_train = make_constraint_batch(constraints, tri.n, scale,
                                         indices=perm[:half], embedding=embedding)
        cb_val = make_constraint_batch(constraints, tri.n, scale,
                                       indices=perm[half:], embedding=embedding)

    if weights0 is not None:
        weights = weights0.copy()
    else:
        weights = init_weights(config, rng, zero_heads=embedding is not None)

    m = np.zeros(weights.size)
    v = np.zeros(weights.size)
    lr = config.learning_rate
    best_val = np.inf
    best_epoch = 0
    best_data = weights.data.copy()
    since_best = 0
    train_hist: list[float] = []
    val_hist: list[float] = []

    for epoch in range(1, config.max_epochs + 1):
        masks = draw_dropout_masks(config, len(train_cells), rng)
        cmasks = None
        if cb_train is not None and config.dropout > 0.0:
            cmasks = draw_dropout_masks(config, cb_train.inputs.shape[0], rng)
        loss, grad = loss_and_gradient(
            weights, config, x_train, y_train, constraint_batch=cb_train,
            normalizer=normalizer, masks=masks, constraint_masks=cmasks,
            offsets=off_train)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite training loss at epoch {epoch} (seed {seed})")

        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad * grad
        m_hat = m / (1.0 - ADAM_BETA1**epoch)
        v_hat = v / (1.0 - ADAM_BETA2**epoch)
        weights.data -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

        vloss = validation_loss(weights, config, x_val, y_val,
                                constraint_batch=cb_val, normalizer=normalizer,
                                offsets=off_val)
        if not np.isfinite(vloss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch} (seed {seed})")
        train_hist.append(loss)
        val_hist.append(vloss)
        if vloss < best_val:
            best_val = vloss
            best_epoch = epoch
            best_data = weights.data.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    return TrainResult(
        weights=NetworkWeights(config, best_data),
        train_history=np.array(train_hist),
        val_history=np.array(val_hist),
        best_epoch=best_epoch,
        best_val=best_val,
        epochs_run=len(val_hist),
        normalizer=normalizer,
        seed=seed,
    )
