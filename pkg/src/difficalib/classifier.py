"""Softmax heads over embeddings with difficulty-aware entropy regularization.

The difficulty-aware objective per sample is

    -log p[y] - alpha * s * H(p)

with s the precomputed difficulty weight; constant-weight entropy
regularization is the same formula with s = 1. Baselines: plain
cross-entropy, label smoothing, focal loss, L1-norm logit regularization,
and Poly-1. All gradients are analytic, including the entropy term's path
through the softmax.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .difficulty import DifficultyScores
from .embedding_store import EmbeddingDataset, validate_dataset
from .errors import ConfigError, CorruptionError, FormatError, ValidationError

LOSS_KINDS = ("ce", "ls", "focal", "l1norm", "er_const", "poly1", "difficulty_er")

MODEL_MAGIC = b"MDL1"
MODEL_VERSION = 1


@dataclass
class LossConfig:
    """Which per-sample objective to train, and its knobs."""

    kind: str = "ce"
    alpha: float = 0.2            # global entropy-regularization strength
    ls_epsilon: float = 0.1
    focal_gamma: float = 3.0
    l1_coeff: float = 0.01
    poly_epsilon: float = 2.0

    def validate(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        for name in ("alpha", "ls_epsilon", "focal_gamma", "l1_coeff", "poly_epsilon"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")
        if self.ls_epsilon >= 1:
            raise ValidationError(f"ls_epsilon must be < 1, got {self.ls_epsilon}")


@dataclass
class OptimConfig:
    """SGD-with-momentum settings; weight decay skips biases."""

    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 128
    epochs: int = 50
    seed: int = 0
    lr_decay_epochs: tuple[int, ...] = ()
    lr_decay_factor: float = 0.1

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValidationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValidationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")

    def lr_at(self, epoch: int) -> float:
        lr = self.learning_rate
        for boundary in self.lr_decay_epochs:
            if epoch >= boundary:
                lr *= self.lr_decay_factor
        return lr


@dataclass(eq=False)
class ClassifierModel:
    """MLP with rectifier hidden layers and a softmax output."""

    weights: list[np.ndarray]  # per layer, (fan_in, fan_out) float64
    biases: list[np.ndarray]   # per layer, (fan_out,) float64

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_model(layer_sizes: list[int], rng: np.random.Generator) -> ClassifierModel:
    """Zero-mean uniform weights scaled by 1/sqrt(fan_in); zero biases."""
    if len(layer_sizes) < 2:
        raise ValidationError("layer_sizes needs at least input and output width")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ClassifierModel(weights=weights, biases=biases)


def _forward(model: ClassifierModel, x: np.ndarray) -> list[np.ndarray]:
    """All layer activations; the last entry holds the logits."""
    acts = [x]
    h = x
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if i < len(model.weights) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def predict(model: ClassifierModel, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Logits and softmax probabilities for a feature matrix."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.weights[0].shape[0]:
        raise ValidationError(
            f"features have width {x.shape[-1]}, model expects {model.weights[0].shape[0]}"
        )
    logits = _forward(model, x)[-1]
    return logits, metrics.softmax(logits)


def entropy(probabilities: np.ndarray) -> np.ndarray:
    """Row entropies in nats, with 0*log(0) = 0."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 2:
        raise ValidationError("probabilities must be a 2-d array")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6) or np.any(p < 0):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ValidationError(f"row {bad} is not a probability distribution (sum {sums[bad]})")
    plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -plogp.sum(axis=1)


def _loss_and_dlogits(
    logits: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray | None,
    cfg: LossConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample losses and d(loss_i)/d(logits_i)."""
    n, k = logits.shape
    probs = metrics.softmax(logits)
    rows = np.arange(n)
    p_true = probs[rows, labels]
    onehot = np.zeros_like(probs)
    onehot[rows, labels] = 1.0

    if cfg.kind in ("ce", "er_const", "difficulty_er"):
        with np.errstate(divide="ignore"):
            losses = -np.log(p_true)
        dlogits = probs - onehot
        if cfg.kind != "ce":
            s = np.ones(n) if cfg.kind == "er_const" else weights
            logp = np.where(probs > 0, np.log(np.where(probs > 0, probs, 1.0)), 0.0)
            h = -(probs * logp).sum(axis=1)
            losses = losses - cfg.alpha * s * h
            # dH/dz_j = -p_j (log p_j + H); the loss carries -alpha*s*H
            dlogits = dlogits + cfg.alpha * s[:, None] * probs * (logp + h[:, None])
    elif cfg.kind == "ls":
        eps = cfg.ls_epsilon
        target = (1 - eps) * onehot + eps / k
        logp = np.where(probs > 0, np.log(np.where(probs > 0, probs, 1.0)), 0.0)
        losses = -(target * logp).sum(axis=1)
        dlogits = probs - target
    elif cfg.kind == "focal":
        gamma = cfg.focal_gamma
        with np.errstate(divide="ignore"):
            log_p = np.log(p_true)
        losses = -((1 - p_true) ** gamma) * log_p
        g = gamma * (1 - p_true) ** (gamma - 1) * p_true * log_p - (1 - p_true) ** gamma
        dlogits = g[:, None] * (onehot - probs)
    elif cfg.kind == "l1norm":
        with np.errstate(divide="ignore"):
            losses = -np.log(p_true) + cfg.l1_coeff * np.abs(logits).mean(axis=1)
        dlogits = probs - onehot + (cfg.l1_coeff / k) * np.sign(logits)
    elif cfg.kind == "poly1":
        with np.errstate(divide="ignore"):
            losses = -np.log(p_true) + cfg.poly_epsilon * (1 - p_true)
        dlogits = (probs - onehot) * (1 + cfg.poly_epsilon * p_true)[:, None]
    else:
        raise ConfigError(f"unknown loss kind {cfg.kind!r}")
    return losses, dlogits


def loss_and_grad(
    model: ClassifierModel,
    features: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray | None,
    cfg: LossConfig,
) -> tuple[float, tuple[list[np.ndarray], list[np.ndarray]]]:
    """Batch-mean loss and its exact gradients w.r.t. every parameter.

    weights are the per-sample difficulty values s; they are required by
    difficulty_er and ignored by every other kind.
    """
    cfg.validate()
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or len(x) == 0:
        raise ValidationError("batch must be a non-empty 2-d feature array")
    if cfg.kind == "difficulty_er":
        if weights is None:
            raise ConfigError("difficulty_er requires per-sample weights")
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(x),):
            raise ValidationError(
                f"weight vector length {weights.shape} does not match batch size {len(x)}"
            )
    acts = _forward(model, x)
    losses, dlogits = _loss_and_dlogits(acts[-1], labels, weights, cfg)
    loss = float(losses.mean())

    delta = dlogits / len(x)
    grad_w = [np.empty_like(w) for w in model.weights]
    grad_b = [np.empty_like(b) for b in model.biases]
    for layer in range(len(model.weights) - 1, -1, -1):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (acts[layer] > 0)
    return loss, (grad_w, grad_b)


def _weights_for(ds: EmbeddingDataset, scores: DifficultyScores) -> np.ndarray:
    """Difficulty weights aligned to dataset order via the id join."""
    sorter = np.argsort(scores.ids)
    sorted_ids = scores.ids[sorter]
    pos = np.searchsorted(sorted_ids, ds.ids)
    missing = (pos >= len(sorted_ids)) | (sorted_ids[np.minimum(pos, len(sorted_ids) - 1)] != ds.ids)
    if missing.any():
        raise ValidationError(f"scores missing id {int(ds.ids[np.flatnonzero(missing)[0]])}")
    return scores.weight[sorter[pos]]


def train(
    ds: EmbeddingDataset,
    scores: DifficultyScores | None,
    loss_cfg: LossConfig,
    optim_cfg: OptimConfig,
    *,
    hidden_sizes: tuple[int, ...] = (),
    val: EmbeddingDataset | None = None,
) -> tuple[ClassifierModel, list[dict]]:
    """Mini-batch SGD with momentum; deterministic given (inputs, seed).

    Returns the trained model and a per-epoch log with train_loss and, when
    a validation split is given, val_acc and val_ece.
    """
    validate_dataset(ds)
    loss_cfg.validate()
    optim_cfg.validate()
    if loss_cfg.kind == "difficulty_er":
        if scores is None:
            raise ConfigError("difficulty_er requires difficulty scores")
        sample_weights = _weights_for(ds, scores)
    else:
        sample_weights = None

    rng = np.random.default_rng(np.random.SeedSequence(optim_cfg.seed))
    layer_sizes = [ds.dim, *hidden_sizes, ds.num_classes]
    model = init_model(layer_sizes, rng)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]

    x = ds.features.astype(np.float64)
    y = ds.labels
    log: list[dict] = []
    for epoch in range(optim_cfg.epochs):
        lr = optim_cfg.lr_at(epoch)
        perm = rng.permutation(ds.n)
        epoch_loss = 0.0
        for start in range(0, ds.n, optim_cfg.batch_size):
            batch = perm[start:start + optim_cfg.batch_size]
            w_batch = sample_weights[batch] if sample_weights is not None else None
            loss, (grad_w, grad_b) = loss_and_grad(model, x[batch], y[batch], w_batch, loss_cfg)
            epoch_loss += loss * len(batch)
            for layer in range(len(model.weights)):
                g_w = grad_w[layer] + optim_cfg.weight_decay * model.weights[layer]
                vel_w[layer] = optim_cfg.momentum * vel_w[layer] + g_w
                model.weights[layer] -= lr * vel_w[layer]
                vel_b[layer] = optim_cfg.momentum * vel_b[layer] + grad_b[layer]
                model.biases[layer] -= lr * vel_b[layer]
        entry = {"epoch": epoch, "train_loss": epoch_loss / ds.n, "val_acc": None, "val_ece": None}
        if val is not None:
            _, probs = predict(model, val.features)
            entry["val_acc"] = metrics.accuracy(probs, val.labels)
            entry["val_ece"] = metrics.ece(probs, val.labels, ids=val.ids)[0]
        log.append(entry)
    return model, log


def save_model(model: ClassifierModel, path) -> None:
    """Write an MDL1 file: layer sizes, then per-layer W and b as float64 LE."""
    sizes = model.layer_sizes
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", MODEL_VERSION, len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> ClassifierModel:
    """Read an MDL1 file; inverse of save_model."""
    data = Path(path).read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: not an MDL1 file (bad magic)")
    version, n_sizes = struct.unpack_from("<II", data, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported MDL1 version {version}")
    sizes = struct.unpack_from(f"<{n_sizes}I", data, 12)
    offset = 12 + 4 * n_sizes
    expected = offset + 8 * sum(
        fi * fo + fo for fi, fo in zip(sizes[:-1], sizes[1:])
    )
    if len(data) != expected:
        raise CorruptionError(f"{path}: expected {expected} bytes, found {len(data)}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += fan_in * fan_out * 8
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
        offset += fan_out * 8
        weights.append(w.reshape(fan_in, fan_out).copy())
        biases.append(b.copy())
    return ClassifierModel(weights=weights, biases=biases)
