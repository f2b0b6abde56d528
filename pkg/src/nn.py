"""Minimal deterministic feed-forward network engine.

Dense layers, ReLU, inverted dropout, softmax cross-entropy and SGD with L2
weight decay. Used for the swarm clients' models and for attack classifiers.
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DatasetError, NumericError, ShapeError
from .schemas import Activation, ForwardMode, LayerSpec, TrainConfig

logger = logging.getLogger(__name__)

LOG_CLAMP = 1e-12


@dataclass
class ModelParams:
    """Per-layer parameters of a dense classifier; the unit exchanged during aggregation."""

    specs: tuple[LayerSpec, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.specs = tuple(self.specs)
        if not self.specs or len(self.specs) != len(self.weights) or len(self.weights) != len(self.biases):
            raise ShapeError("specs, weights and biases must be nonempty and of equal length")
        previous_out = None
        for k, (spec, w, b) in enumerate(zip(self.specs, self.weights, self.biases)):
            if w.shape != (spec.out_dim, spec.in_dim) or b.shape != (spec.out_dim,):
                raise ShapeError(f"layer {k}: expected {(spec.out_dim, spec.in_dim)}, got {w.shape} / {b.shape}")
            if previous_out is not None and spec.in_dim != previous_out:
                raise ShapeError(f"layer {k}: in_dim {spec.in_dim} does not chain to {previous_out}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericError(f"layer {k} holds non-finite parameters")
            previous_out = spec.out_dim

    @property
    def input_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.specs[-1].out_dim

    @property
    def shapes(self) -> list[tuple[tuple[int, int], tuple[int]]]:
        return [(w.shape, b.shape) for w, b in zip(self.weights, self.biases)]

    def copy(self) -> "ModelParams":
        return ModelParams(self.specs, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def with_specs(self, specs: Sequence[LayerSpec]) -> "ModelParams":
        """Same parameters under different layer specs (e.g. dropout rates)."""
        return ModelParams(tuple(specs), [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def same_shape(self, other: "ModelParams") -> bool:
        return self.shapes == other.shapes

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in zip(self.weights, self.biases)])

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for w, b in zip(self.weights, self.biases):
            digest.update(np.ascontiguousarray(w, dtype=np.float64).tobytes())
            digest.update(np.ascontiguousarray(b, dtype=np.float64).tobytes())
        return digest.hexdigest()

    def bit_equal(self, other: "ModelParams") -> bool:
        return self.same_shape(other) and self.fingerprint() == other.fingerprint()


def build_layer_specs(
    input_dim: int,
    hidden: Sequence[int],
    output_dim: int,
    dropout_rates: Sequence[float] = (),
) -> list[LayerSpec]:
    """ReLU hidden layers followed by an identity output layer."""
    if len(dropout_rates) > len(hidden):
        raise ShapeError("more dropout rates than hidden layers")
    widths = [input_dim, *hidden, output_dim]
    specs = []
    for k in range(len(widths) - 1):
        is_output = k == len(widths) - 2
        specs.append(LayerSpec(
            in_dim=widths[k],
            out_dim=widths[k + 1],
            activation=Activation.IDENTITY if is_output else Activation.RELU,
            dropout_rate=0.0 if is_output or k >= len(dropout_rates) else dropout_rates[k],
        ))
    return specs


def init_model(specs: Sequence[LayerSpec], seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in specs:
        limit = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        weights.append(rng.uniform(-limit, limit, size=(spec.out_dim, spec.in_dim)))
        biases.append(np.zeros(spec.out_dim))
    return ModelParams(tuple(specs), weights, biases)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def _forward_batch(model: ModelParams, inputs: np.ndarray, train: bool, rng: Optional[np.random.Generator]):
    if inputs.ndim != 2 or inputs.shape[1] != model.input_dim:
        raise ShapeError(f"expected inputs of width {model.input_dim}, got shape {inputs.shape}")
    activations = np.asarray(inputs, dtype=np.float64)
    cache = []
    for spec, w, b in zip(model.specs, model.weights, model.biases):
        pre = activations @ w.T + b
        out = np.maximum(pre, 0.0) if spec.activation == Activation.RELU else pre
        mask = None
        if train and spec.dropout_rate > 0.0:
            if rng is None:
                raise ValueError("train mode with dropout needs an rng")
            keep = 1.0 - spec.dropout_rate
            mask = (rng.random(out.shape) < keep) / keep
            out = out * mask
        cache.append((activations, pre, mask))
        activations = out
    if not np.all(np.isfinite(activations)):
        raise NumericError("non-finite logits")
    return softmax(activations), cache


def forward(
    model: ModelParams,
    x: np.ndarray,
    mode: ForwardMode = ForwardMode.EVAL,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Softmax prediction vector for one input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("forward takes a single feature vector")
    probs, _ = _forward_batch(model, x[None, :], ForwardMode(mode) == ForwardMode.TRAIN, rng)
    return probs[0]


def predict_proba(model: ModelParams, inputs: np.ndarray) -> np.ndarray:
    """Eval-mode prediction vectors for a batch (rows)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape[0] == 0:
        return np.zeros((0, model.output_dim))
    probs, _ = _forward_batch(model, inputs, False, None)
    return probs


def accuracy(model: ModelParams, dataset) -> float:
    """Eval accuracy; 0.0 for an empty dataset."""
    if len(dataset) == 0:
        return 0.0
    predictions = np.argmax(predict_proba(model, dataset.features), axis=1)
    return float(np.mean(predictions == dataset.labels))


def _check_batch(model: ModelParams, inputs: np.ndarray, labels: np.ndarray) -> None:
    if len(labels) == 0 or inputs.shape[0] == 0:
        raise DatasetError("empty batch")
    if inputs.shape[0] != len(labels):
        raise ShapeError("inputs and labels differ in length")
    if labels.min() < 0 or labels.max() >= model.output_dim:
        raise DatasetError(f"labels must lie in [0, {model.output_dim})")


def loss_and_gradients(
    model: ModelParams,
    batch: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, ModelParams]:
    """Mean cross-entropy + (l2/2)*sum||W||^2 and its gradients (L2 folded in)."""
    inputs, labels = np.asarray(batch[0], dtype=np.float64), np.asarray(batch[1], dtype=np.int64)
    _check_batch(model, inputs, labels)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    probs, cache = _forward_batch(model, inputs, True, rng)

    n = len(labels)
    rows = np.arange(n)
    cross_entropy = -np.mean(np.log(np.maximum(probs[rows, labels], LOG_CLAMP)))
    decay = 0.5 * cfg.l2_lambda * sum(float(np.sum(w * w)) for w in model.weights)

    delta = probs.copy()
    delta[rows, labels] -= 1.0
    delta /= n
    grad_w: list[np.ndarray] = [None] * len(model.weights)
    grad_b: list[np.ndarray] = [None] * len(model.biases)
    for k in range(len(model.specs) - 1, -1, -1):
        layer_input, pre, mask = cache[k]
        if mask is not None:
            delta = delta * mask
        if model.specs[k].activation == Activation.RELU:
            delta = delta * (pre > 0.0)
        grad_w[k] = delta.T @ layer_input + cfg.l2_lambda * model.weights[k]
        grad_b[k] = delta.sum(axis=0)
        delta = delta @ model.weights[k]

    return float(cross_entropy + decay), ModelParams(model.specs, grad_w, grad_b)


def sgd_step(model: ModelParams, grads: ModelParams, cfg: TrainConfig) -> ModelParams:
    """params - learning_rate * grads."""
    if not model.same_shape(grads):
        raise ShapeError("gradient shapes do not match the model")
    lr = cfg.learning_rate
    return ModelParams(
        model.specs,
        [w - lr * g for w, g in zip(model.weights, grads.weights)],
        [b - lr * g for b, g in zip(model.biases, grads.biases)],
    )


def train_local(model: ModelParams, dataset, cfg: TrainConfig) -> ModelParams:
    """cfg.epochs epochs of shuffled mini-batch SGD; shuffling and dropout driven only by cfg.seed."""
    if len(dataset) == 0:
        raise DatasetError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    features = np.asarray(dataset.features, dtype=np.float64)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    params = model.copy()
    for _ in range(cfg.epochs):
        order = rng.permutation(len(labels))
        for start in range(0, len(labels), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            _, grads = loss_and_gradients(params, (features[batch], labels[batch]), cfg, rng)
            params = sgd_step(params, grads, cfg)
    return params


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / scale))


def _random_gradcheck_case(rng: np.random.Generator, with_dropout: bool, mask_seed: int):
    widths = [int(rng.integers(2, 6)) for _ in range(4)]
    rates = [0.3, 0.2] if with_dropout else []
    specs = build_layer_specs(widths[0], widths[1:3], widths[3], rates)
    model = init_model(specs, int(rng.integers(0, 2 ** 32)))
    model = ModelParams(model.specs, model.weights, [rng.normal(scale=0.5, size=b.shape) for b in model.biases])
    # Keep every hidden pre-activation away from the ReLU kink under the masks the loss will draw.
    while True:
        inputs = rng.normal(size=(int(rng.integers(2, 6)), widths[0]))
        _, cache = _forward_batch(model, inputs, True, np.random.default_rng(mask_seed))
        if all(np.min(np.abs(pre)) > 1e-3 for _, pre, _ in cache[:-1]):
            break
    labels = rng.integers(0, widths[3], size=inputs.shape[0])
    return model, inputs, labels


def gradient_check(trials: int = 20, seed: int = 0, step: float = 1e-5, l2_lambda: float = 1e-3) -> float:
    """Max relative error of analytic vs central finite-difference gradients over random 3-layer nets."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        model, inputs, labels = _random_gradcheck_case(rng, with_dropout=trial % 2 == 1, mask_seed=trial)
        cfg = TrainConfig(learning_rate=1.0, l2_lambda=l2_lambda, seed=trial)

        def loss_at(params: ModelParams) -> float:
            return loss_and_gradients(params, (inputs, labels), cfg, np.random.default_rng(trial))[0]

        _, grads = loss_and_gradients(model, (inputs, labels), cfg, np.random.default_rng(trial))
        for group in ("weights", "biases"):
            for k, tensor in enumerate(getattr(model, group)):
                numeric = np.zeros_like(tensor)
                for index in np.ndindex(tensor.shape):
                    plus, minus = model.copy(), model.copy()
                    getattr(plus, group)[k][index] += step
                    getattr(minus, group)[k][index] -= step
                    numeric[index] = (loss_at(plus) - loss_at(minus)) / (2.0 * step)
                worst = max(worst, _relative_error(getattr(grads, group)[k], numeric))
    logger.debug("gradient check over %d trials: max relative error %.3e", trials, worst)
    return worst
