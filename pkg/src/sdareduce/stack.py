"""Stacked de-noising autoencoders: greedy layer-wise pretraining,
encoding, and the ``SDA1`` model file format.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .autoencoder import DenoisingAutoencoderLayer, decode_layer, encode_layer, init_layer, reconstruction_loss
from .data import StandardizationParams, apply_standardizer, as_feature_matrix
from .optimizer import TrainingConfig, TrainingDivergedError, train_layer
from .seeding import derive_seed

MAGIC = b"SDA1"
FORMAT_VERSION = 1
MAX_DEPTH = 5


class ModelFormatError(ValueError):
    """Unreadable, truncated or corrupted model file."""


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not 1 <= len(self.hidden_dims) <= MAX_DEPTH:
            raise ValueError(f"architecture needs 1 to {MAX_DEPTH} hidden layers, got {len(self.hidden_dims)}")
        if min(self.hidden_dims) < 1:
            raise ValueError("every hidden dim must be at least 1")

    @property
    def depth(self) -> int:
        return len(self.hidden_dims)

    @property
    def output_dim(self) -> int:
        return self.hidden_dims[-1]

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(input, hidden) pairs for each layer."""
        dims = (self.input_dim, *self.hidden_dims)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self) -> int:
        return sum(2 * d * n + d + n for d, n in self.layer_dims)

    def __str__(self) -> str:
        return "-".join(str(v) for v in (self.input_dim, *self.hidden_dims))


def identity_standardizer(dim: int) -> StandardizationParams:
    return StandardizationParams(means=np.zeros(dim), stds=np.ones(dim))


@dataclass
class StackedModel:
    layers: list[DenoisingAutoencoderLayer]
    standardizer: StandardizationParams
    architecture: Architecture
    training_log: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if len(self.layers) != self.architecture.depth:
            raise ValueError(f"architecture has {self.architecture.depth} layers, got {len(self.layers)}")
        for k, (layer, (d, n)) in enumerate(zip(self.layers, self.architecture.layer_dims)):
            if (layer.input_dim, layer.hidden_dim) != (d, n):
                raise ValueError(
                    f"layer {k} maps {layer.input_dim}->{layer.hidden_dim}, architecture says {d}->{n}"
                )
        if self.standardizer.output_dim != self.architecture.input_dim:
            raise ValueError("standardizer output dimension does not match the architecture input dimension")

    @property
    def input_dim(self) -> int:
        """Columns expected by :func:`encode` when standardizing."""
        return self.standardizer.input_dim

    @property
    def output_dim(self) -> int:
        return self.architecture.output_dim


def layer_seed(seed: int, k: int) -> int:
    return seed if k == 0 else derive_seed(seed, k)


def initial_layer(input_dim: int, hidden_dim: int, cfg: TrainingConfig) -> DenoisingAutoencoderLayer:
    """Seeded initial parameters for a layer trained with ``cfg``."""
    return init_layer(input_dim, hidden_dim, np.random.default_rng([cfg.seed, 1]), cfg.corruption_rate)


def pretrain_stack(
    data,
    arch: Architecture,
    cfg: TrainingConfig,
    standardizer: Optional[StandardizationParams] = None,
) -> StackedModel:
    """Greedy layer-wise training of a stack on already-standardized ``data``.

    Layer k is trained on the clean encoding of ``data`` by the frozen layers
    below it; masking noise is applied only at the active layer's input.
    ``standardizer`` is stored with the model for later :func:`encode` calls.
    """
    X = as_feature_matrix(data, "data")
    if X.shape[1] != arch.input_dim:
        raise ValueError(f"dimension mismatch: data has {X.shape[1]} columns, architecture expects {arch.input_dim}")
    if standardizer is None:
        standardizer = identity_standardizer(arch.input_dim)

    layers: list[DenoisingAutoencoderLayer] = []
    training_log: list[dict] = []
    H = X
    for k, (d, n) in enumerate(arch.layer_dims):
        layer_cfg = cfg.replace(seed=layer_seed(cfg.seed, k))
        try:
            layer, losses = train_layer(initial_layer(d, n, layer_cfg), H, layer_cfg)
        except TrainingDivergedError as exc:
            raise TrainingDivergedError(f"layer {k}: {exc}", exc.epoch, exc.batch, layer_index=k) from exc
        layers.append(layer)
        training_log.append(
            {
                "layer": k,
                "input_dim": d,
                "hidden_dim": n,
                "epoch_losses": losses,
                "min_loss": min(losses),
                "final_loss": losses[-1],
                "config": layer_cfg.to_dict(),
            }
        )
        H = encode_layer(layer, H)
    return StackedModel(layers, standardizer, arch, training_log)


def encode(model: StackedModel, X, standardize: bool = True) -> np.ndarray:
    """Clean encoding of ``X`` through every layer; values lie in (0, 1)."""
    X = np.asarray(X, dtype=np.float64)
    expected = model.input_dim if standardize else model.architecture.input_dim
    if X.ndim != 2 or X.shape[1] != expected:
        raise ValueError(f"dimension mismatch: model expects {expected} columns, got shape {X.shape}")
    H = apply_standardizer(X, model.standardizer) if standardize else X
    for layer in model.layers:
        H = encode_layer(layer, H)
    return H


def reconstruct(model: StackedModel, X) -> np.ndarray:
    """Encode clean standardized ``X`` through the stack and decode back down."""
    H = np.asarray(X, dtype=np.float64)
    for layer in model.layers:
        H = encode_layer(layer, H)
    for layer in reversed(model.layers):
        H = decode_layer(layer, H)
    return H


def stack_reconstruction_loss(model: StackedModel, X) -> float:
    """Clean full-stack reconstruction loss in (standardized) input space."""
    X = as_feature_matrix(X)
    return reconstruction_loss(X, reconstruct(model, X))


def layer_reconstruction_losses(model: StackedModel, X) -> list[float]:
    """Clean per-layer reconstruction loss of each layer on its own input."""
    H = as_feature_matrix(X)
    out = []
    for layer in model.layers:
        Y = encode_layer(layer, H)
        out.append(reconstruction_loss(H, decode_layer(layer, Y)))
        H = Y
    return out


# --- serialization ---------------------------------------------------------

def _metadata(model: StackedModel) -> dict:
    return {
        "artifact_version": __version__,
        "architecture": {
            "input_dim": model.architecture.input_dim,
            "hidden_dims": list(model.architecture.hidden_dims),
        },
        "corruption_rates": [layer.corruption_rate for layer in model.layers],
        "standardizer": model.standardizer.to_dict(),
        "training_log": model.training_log,
    }


def model_to_bytes(model: StackedModel) -> bytes:
    meta = json.dumps(_metadata(model), sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(meta)), meta]
    for layer in model.layers:
        for block in layer.params():
            parts.append(np.ascontiguousarray(block, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def model_from_bytes(buf: bytes) -> StackedModel:
    if len(buf) < 20:
        raise ModelFormatError("file too short to be a model file")
    if buf[:4] != MAGIC:
        raise ModelFormatError(f"bad magic bytes {buf[:4]!r}, expected {MAGIC!r}")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version}, expected {FORMAT_VERSION}")
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ModelFormatError("checksum mismatch (file truncated or corrupted)")
    (meta_len,) = struct.unpack_from("<Q", buf, 8)
    offset = 16
    if offset + meta_len > len(body):
        raise ModelFormatError("metadata block runs past the end of the file")
    try:
        meta = json.loads(body[offset:offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable metadata block: {exc}") from None
    offset += meta_len

    arch = Architecture(meta["architecture"]["input_dim"], tuple(meta["architecture"]["hidden_dims"]))
    rates = meta["corruption_rates"]
    layers = []
    for k, (d, n) in enumerate(arch.layer_dims):
        blocks = []
        for shape in ((n, d), (n,), (d, n), (d,)):
            size = int(np.prod(shape))
            end = offset + 8 * size
            if end > len(body):
                raise ModelFormatError(f"parameter data for layer {k} is truncated")
            blocks.append(np.frombuffer(body, dtype="<f8", count=size, offset=offset).astype(np.float64).reshape(shape))
            offset = end
        layers.append(DenoisingAutoencoderLayer(*blocks, corruption_rate=rates[k]))
    if offset != len(body):
        raise ModelFormatError(f"{len(body) - offset} unexpected trailing bytes")
    return StackedModel(layers, StandardizationParams.from_dict(meta["standardizer"]), arch, meta["training_log"])


def save_model(model: StackedModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> StackedModel:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    return model_from_bytes(buf)
