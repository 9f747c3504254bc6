"""A single de-noising autoencoder layer.

Encoder ``y = sigmoid(W x~ + b)`` on a masked copy ``x~`` of the input,
affine decoder ``z = W' y + b'`` with untied weights, and a mean squared
reconstruction loss normalized per feature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# sigmoid output is clipped into the open interval (0, 1)
_Y_MIN = np.finfo(np.float64).tiny
_Y_MAX = np.nextafter(1.0, 0.0)


def sigmoid(a):
    a = np.asarray(a, dtype=np.float64)
    e = np.exp(-np.abs(a))
    s = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.clip(s, _Y_MIN, _Y_MAX)


@dataclass
class DenoisingAutoencoderLayer:
    W: np.ndarray
    b: np.ndarray
    W_prime: np.ndarray
    b_prime: np.ndarray
    corruption_rate: float = 0.0

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.W_prime = np.asarray(self.W_prime, dtype=np.float64)
        self.b_prime = np.asarray(self.b_prime, dtype=np.float64)
        if self.W.ndim != 2 or min(self.W.shape) < 1:
            raise ValueError(f"W must be a non-empty n x d matrix, got shape {self.W.shape}")
        n, d = self.W.shape
        if self.b.shape != (n,) or self.W_prime.shape != (d, n) or self.b_prime.shape != (d,):
            raise ValueError(
                f"inconsistent parameter shapes: W {self.W.shape}, b {self.b.shape}, "
                f"W' {self.W_prime.shape}, b' {self.b_prime.shape}"
            )
        if not 0.0 <= self.corruption_rate <= 1.0:
            raise ValueError(f"corruption_rate must be in [0, 1], got {self.corruption_rate}")
        for name in ("W", "b", "W_prime", "b_prime"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"parameter {name} has non-finite entries")

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W.shape[0]

    @property
    def n_params(self) -> int:
        n, d = self.W.shape
        return 2 * n * d + n + d

    def params(self) -> tuple[np.ndarray, ...]:
        return self.W, self.b, self.W_prime, self.b_prime

    def copy(self) -> "DenoisingAutoencoderLayer":
        return DenoisingAutoencoderLayer(
            self.W.copy(), self.b.copy(), self.W_prime.copy(), self.b_prime.copy(), self.corruption_rate
        )


@dataclass
class LayerGradients:
    dW: np.ndarray
    db: np.ndarray
    dW_prime: np.ndarray
    db_prime: np.ndarray

    def blocks(self) -> tuple[np.ndarray, ...]:
        return self.dW, self.db, self.dW_prime, self.db_prime


def init_layer(input_dim: int, hidden_dim: int, rng: np.random.Generator, corruption_rate: float = 0.0):
    """Uniform weights on +-sqrt(6 / (n + d)) for W and W' independently; zero biases."""
    if input_dim < 1 or hidden_dim < 1:
        raise ValueError("layer dimensions must be positive")
    bound = np.sqrt(6.0 / (input_dim + hidden_dim))
    W = rng.uniform(-bound, bound, size=(hidden_dim, input_dim))
    W_prime = rng.uniform(-bound, bound, size=(input_dim, hidden_dim))
    return DenoisingAutoencoderLayer(W, np.zeros(hidden_dim), W_prime, np.zeros(input_dim), corruption_rate)


def corrupt(x, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Zero each coordinate independently with probability ``rate``."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"corruption rate must be in [0, 1], got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if rate == 0.0:
        return x.copy()
    if rate == 1.0:
        return np.zeros_like(x)
    keep = rng.random(x.shape) >= rate
    return np.where(keep, x, 0.0)


def _check_dim(x, expected: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != expected:
        raise ValueError(f"dimension mismatch: {what} expects last dimension {expected}, got shape {x.shape}")
    return x


def encode_layer(layer: DenoisingAutoencoderLayer, x) -> np.ndarray:
    """Hidden code for a vector or a batch of row vectors."""
    x = _check_dim(x, layer.input_dim, "encoder")
    return sigmoid(x @ layer.W.T + layer.b)


def decode_layer(layer: DenoisingAutoencoderLayer, y) -> np.ndarray:
    y = _check_dim(y, layer.hidden_dim, "decoder")
    return y @ layer.W_prime.T + layer.b_prime


def reconstruction_loss(x, z) -> float:
    """Squared error averaged over features, then over rows for a batch."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {z.shape}")
    return float(np.mean((x - z) ** 2))


def layer_gradients(layer: DenoisingAutoencoderLayer, x_batch, rng: np.random.Generator):
    """Exact gradients of the batch-mean loss, and the loss itself.

    Each row is corrupted once with ``layer.corruption_rate``; the loss
    compares the reconstruction against the clean row.
    """
    x = np.asarray(x_batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    _check_dim(x, layer.input_dim, "layer_gradients")
    if not np.all(np.isfinite(x)):
        raise ValueError("batch contains non-finite values")

    x_tilde = corrupt(x, layer.corruption_rate, rng)
    y = sigmoid(x_tilde @ layer.W.T + layer.b)
    z = y @ layer.W_prime.T + layer.b_prime
    resid = z - x
    loss = float(np.mean(resid**2))

    dz = (2.0 / resid.size) * resid
    dW_prime = dz.T @ y
    db_prime = dz.sum(axis=0)
    da = (dz @ layer.W_prime) * y * (1.0 - y)
    dW = da.T @ x_tilde
    db = da.sum(axis=0)
    return LayerGradients(dW, db, dW_prime, db_prime), loss
