"""Mini-batch SGD with Adagrad step sizes, momentum and L2 weight decay."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import DenoisingAutoencoderLayer, layer_gradients

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


class TrainingDivergedError(RuntimeError):
    def __init__(self, message: str, epoch: int, batch: int, layer_index: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.layer_index = layer_index


@dataclass(frozen=True)
class TrainingConfig:
    base_learning_rate: float = 0.01
    momentum: float = 0.0
    weight_decay: float = 0.0
    corruption_rate: float = 0.1
    batch_size: int = 100
    epochs: int = 50
    seed: int = 0
    adagrad_epsilon: float = 1e-8

    def __post_init__(self):
        if not self.base_learning_rate > 0:
            raise ValueError("base_learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if not 0.0 <= self.corruption_rate <= 1.0:
            raise ValueError("corruption_rate must be in [0, 1]")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be at least 1")
        if not self.adagrad_epsilon > 0:
            raise ValueError("adagrad_epsilon must be positive")

    def replace(self, **changes) -> "TrainingConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class AdagradState:
    accumulators: list[np.ndarray]
    velocity: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, params) -> "AdagradState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adagrad_delta(state: AdagradState, grads, cfg: TrainingConfig, params=None) -> list[np.ndarray]:
    """Per-coordinate update for each parameter block; mutates ``state``.

    Order: accumulate squared gradient, raw Adagrad step, add the weight
    decay term, blend into the momentum buffer. ``params`` is required
    only when ``cfg.weight_decay`` is nonzero.
    """
    grads = list(grads)
    if len(grads) != len(state.accumulators):
        raise ValueError(f"expected {len(state.accumulators)} gradient blocks, got {len(grads)}")
    if cfg.weight_decay and params is None:
        raise ValueError("weight decay needs the current parameters")
    lr = cfg.base_learning_rate
    updates = []
    for i, g in enumerate(grads):
        acc = state.accumulators[i]
        if g.shape != acc.shape:
            raise ValueError(f"block {i}: gradient shape {g.shape} does not match state shape {acc.shape}")
        acc += g * g
        step = -lr * g / (np.sqrt(acc) + cfg.adagrad_epsilon)
        if cfg.weight_decay:
            step -= lr * cfg.weight_decay * params[i]
        vel = state.velocity[i]
        vel *= cfg.momentum
        vel += step
        updates.append(vel.copy())
    return updates


def batch_slices(n_rows: int, batch_size: int) -> list[slice]:
    """Consecutive batches; the final short batch is kept."""
    return [slice(i, min(i + batch_size, n_rows)) for i in range(0, n_rows, batch_size)]


def train_layer(layer: DenoisingAutoencoderLayer, data, cfg: TrainingConfig):
    """Train a copy of ``layer`` on ``data``.

    Returns the trained layer and the mean training loss of each epoch.
    The layer is trained with ``cfg.corruption_rate``. All randomness
    (shuffling and masking) comes from ``cfg.seed``.
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != layer.input_dim:
        raise ValueError(f"dimension mismatch: layer expects {layer.input_dim} columns, data has shape {X.shape}")
    if X.shape[0] < cfg.batch_size:
        raise ValueError(f"need at least batch_size={cfg.batch_size} rows, got {X.shape[0]}")

    layer = layer.copy()
    layer.corruption_rate = cfg.corruption_rate
    rng = np.random.default_rng(cfg.seed)
    state = AdagradState.zeros_like(layer.params())
    epoch_losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(X.shape[0])
        losses = []
        for b, sl in enumerate(batch_slices(X.shape[0], cfg.batch_size)):
            grads, loss = layer_gradients(layer, X[order[sl]], rng)
            if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
                raise TrainingDivergedError(
                    f"training diverged at epoch {epoch + 1}, batch {b + 1}: loss={loss}", epoch + 1, b + 1
                )
            params = layer.params()
            for p, u in zip(params, adagrad_delta(state, grads.blocks(), cfg, params)):
                p += u
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)))
        if not all(np.all(np.isfinite(p)) for p in layer.params()):
            raise TrainingDivergedError(f"non-finite parameters after epoch {epoch + 1}", epoch + 1, len(losses))
        log.debug("epoch %d mean loss %.6g", epoch + 1, epoch_losses[-1])
    return layer, epoch_losses
