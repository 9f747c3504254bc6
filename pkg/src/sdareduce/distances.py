"""Sampled intra-label and inter-label Euclidean distance distributions."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

DEFAULT_N_PAIRS = 10_000
N_BINS = 50


class DegenerateEmbeddingError(ValueError):
    pass


@dataclass
class DistanceSummary:
    intra: dict[int, np.ndarray]  # class -> sampled same-class distances
    inter: dict[tuple[int, int], np.ndarray]  # (class a, class b), a < b -> sampled distances
    intra_class_means: dict[int, float]
    intra_mean: float  # average of the per-class means
    inter_mean: float  # mean over every inter-class sample
    bin_edges: np.ndarray
    intra_counts: np.ndarray
    inter_counts: np.ndarray
    n_pairs_sampled: dict[str, int]

    def to_dict(self, class_names: Optional[Sequence[str]] = None, include_samples: bool = False) -> dict:
        def name(c):
            return class_names[c] if class_names is not None else str(c)

        out = {
            "intra_mean": self.intra_mean,
            "inter_mean": self.inter_mean,
            "intra_class_means": {name(c): m for c, m in self.intra_class_means.items()},
            "inter_pair_means": {
                f"{name(a)}|{name(b)}": float(v.mean()) for (a, b), v in self.inter.items() if v.size
            },
            "n_pairs_sampled": self.n_pairs_sampled,
            "histogram": {
                "bin_edges": self.bin_edges.tolist(),
                "intra_counts": self.intra_counts.tolist(),
                "inter_counts": self.inter_counts.tolist(),
            },
        }
        if self.intra_mean > 0:
            out["separation_ratio"] = separation_ratio(self)
        if include_samples:
            out["intra_samples"] = {name(c): v.tolist() for c, v in self.intra.items()}
            out["inter_samples"] = {f"{name(a)}|{name(b)}": v.tolist() for (a, b), v in self.inter.items()}
        return out


def _pairwise_rows(X, i, j) -> np.ndarray:
    return np.sqrt(((X[i] - X[j]) ** 2).sum(axis=1))


def sample_distances(X, labels, n_pairs: int = DEFAULT_N_PAIRS, seed: int = 0) -> DistanceSummary:
    """Sample ``n_pairs`` same-label and ``n_pairs`` different-label pairs.

    Same-label pairs: a class uniformly at random, then two distinct members.
    Different-label pairs: an unordered class pair uniformly at random, then
    one member of each.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if X.ndim != 2 or labels.shape != (X.shape[0],):
        raise ValueError("need a 2-d embedding and one label per row")
    if n_pairs < 1:
        raise ValueError("n_pairs must be positive")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("inter-label sampling needs at least 2 classes")
    members = {int(c): np.flatnonzero(labels == c) for c in classes}
    small = [c for c, m in members.items() if m.size < 2]
    if small:
        raise ValueError(f"class(es) {small} have fewer than 2 members")

    rng = np.random.default_rng(seed)
    class_list = list(members)
    pick = rng.integers(len(class_list), size=n_pairs)
    intra: dict[int, np.ndarray] = {}
    for ci, c in enumerate(class_list):
        m = members[c]
        count = int((pick == ci).sum())
        first = rng.integers(m.size, size=count)
        # second index drawn from the other m.size - 1 members
        second = rng.integers(m.size - 1, size=count)
        second += second >= first
        intra[c] = _pairwise_rows(X, m[first], m[second])

    pairs = list(itertools.combinations(class_list, 2))
    pick = rng.integers(len(pairs), size=n_pairs)
    inter: dict[tuple[int, int], np.ndarray] = {}
    for pi, (a, b) in enumerate(pairs):
        count = int((pick == pi).sum())
        ia = members[a][rng.integers(members[a].size, size=count)]
        ib = members[b][rng.integers(members[b].size, size=count)]
        inter[(a, b)] = _pairwise_rows(X, ia, ib)

    class_means = {c: float(v.mean()) for c, v in intra.items() if v.size}
    all_intra = np.concatenate(list(intra.values()))
    all_inter = np.concatenate(list(inter.values()))
    top = max(all_intra.max(initial=0.0), all_inter.max(initial=0.0))
    edges = np.linspace(0.0, top if top > 0 else 1.0, N_BINS + 1)
    return DistanceSummary(
        intra=intra,
        inter=inter,
        intra_class_means=class_means,
        intra_mean=float(np.mean(list(class_means.values()))),
        inter_mean=float(all_inter.mean()),
        bin_edges=edges,
        intra_counts=np.histogram(all_intra, bins=edges)[0],
        inter_counts=np.histogram(all_inter, bins=edges)[0],
        n_pairs_sampled={"intra": int(all_intra.size), "inter": int(all_inter.size)},
    )


def separation_ratio(summary: DistanceSummary) -> float:
    """Mean inter-label distance over the class-averaged intra-label mean."""
    if not summary.intra_mean > 0:
        raise DegenerateEmbeddingError("intra-label mean distance is zero; the embedding collapses each class")
    return summary.inter_mean / summary.intra_mean


def write_distance_csv(summary: DistanceSummary, path, class_names: Optional[Sequence[str]] = None) -> None:
    """One row per sampled distance: ``group, class_or_pair, distance``."""
    def name(c):
        return class_names[c] if class_names is not None else str(c)

    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group", "class_or_pair", "distance"])
        for c, values in summary.intra.items():
            writer.writerows(("intra", name(c), repr(float(v))) for v in values)
        for (a, b), values in summary.inter.items():
            writer.writerows(("inter", f"{name(a)}|{name(b)}", repr(float(v))) for v in values)
