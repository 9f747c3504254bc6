"""Reduce labelled data with each reducer and score the embeddings."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .baselines import KernelSpec, kpca_fit, kpca_transform, pca_fit, pca_transform
from .clustering import ProtocolReport, clustering_protocol
from .distances import DegenerateEmbeddingError, DistanceSummary, sample_distances, separation_ratio
from .optimizer import TrainingConfig
from .seeding import derive_seed
from .stack import Architecture, StackedModel, encode, pretrain_stack

log = logging.getLogger(__name__)

REDUCERS = ("sda", "pca", "kpca")

# Base learning rate for SdA models trained inside an evaluation. Chosen on
# held-out synthetic seeds; the general training default stays at 0.01.
SDA_EVAL_LEARNING_RATE = 0.05


@dataclass
class ReducerOptions:
    sda_hidden: Sequence[int] = (700, 500)
    train: TrainingConfig = field(default_factory=lambda: TrainingConfig(base_learning_rate=SDA_EVAL_LEARNING_RATE))
    kernel: KernelSpec = field(default_factory=KernelSpec)
    kpca_cap: int = 5000
    kpca_subsample: bool = False
    model: Optional[StackedModel] = None  # used for "sda" when its output dim matches


def reduce(name: str, X, dims: int, options: ReducerOptions, seed: int = 0) -> np.ndarray:
    """Embed standardized ``X`` into ``dims`` dimensions with reducer ``name``."""
    X = np.asarray(X, dtype=np.float64)
    if name == "pca":
        return pca_transform(pca_fit(X, dims), X)
    if name == "kpca":
        model = kpca_fit(X, dims, options.kernel, cap=options.kpca_cap, subsample=options.kpca_subsample, seed=seed)
        return kpca_transform(model, X)
    if name == "sda":
        if options.model is not None and options.model.output_dim == dims:
            return encode(options.model, X, standardize=False)
        arch = Architecture(X.shape[1], (*options.sda_hidden, dims))
        model = pretrain_stack(X, arch, options.train.replace(seed=seed))
        return encode(model, X, standardize=False)
    raise ValueError(f"unknown reducer {name!r}; expected one of {', '.join(REDUCERS)}")


@dataclass
class EmbeddingScore:
    reducer: str
    dims: int
    protocol: ProtocolReport
    distances: DistanceSummary

    @property
    def separation(self) -> Optional[float]:
        try:
            return separation_ratio(self.distances)
        except DegenerateEmbeddingError:
            return None


def score_embedding(
    E, labels, reducer: str, seed: int, n_pairs: int = 10_000, repeats: int = 5, restarts: int = 10, restart_iters: int = 10
) -> EmbeddingScore:
    dims = E.shape[1]
    protocol = clustering_protocol(
        E, labels, master_seed=seed, n_repeats=repeats, n_restarts=restarts, restart_iters=restart_iters, reducer=reducer
    )
    distances = sample_distances(E, labels, n_pairs=n_pairs, seed=seed)
    return EmbeddingScore(reducer, dims, protocol, distances)


def evaluate(
    X,
    labels,
    reducers: Sequence[str],
    dims_list: Sequence[int],
    options: ReducerOptions,
    seed: int = 0,
    **score_kw,
) -> list[EmbeddingScore]:
    """Every reducer x target dimension; seeds depend only on (seed, reducer, dims)."""
    unknown = [r for r in reducers if r not in REDUCERS]
    if unknown:
        raise ValueError(f"unknown reducer(s) {unknown}; expected a subset of {list(REDUCERS)}")
    labels = np.asarray(labels)
    scores = []
    for name in reducers:
        for dims in dims_list:
            point_seed = derive_seed(seed, REDUCERS.index(name), dims)
            log.info("reducing with %s to %d dims", name, dims)
            E = reduce(name, X, dims, options, seed=point_seed)
            scores.append(score_embedding(E, labels, name, point_seed, **score_kw))
    return scores
