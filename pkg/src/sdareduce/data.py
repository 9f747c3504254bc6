"""Feature table ingestion, standardization and synthetic benchmark data.

Feature matrices are plain ``float64`` numpy arrays of shape ``(N, d)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed input tables and invalid feature matrices."""


def as_feature_matrix(values, name: str = "X") -> np.ndarray:
    """Validate and return ``values`` as a finite 2-d float64 array."""
    X = np.asarray(values, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if X.shape[1] < 1:
        raise DataError(f"{name} must have at least one column")
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise DataError(f"{name} has a non-finite value at row {bad[0]}, column {bad[1]}")
    return X


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    class_names: Optional[list[str]] = None
    row_ids: Optional[list[str]] = None
    feature_names: Optional[list[str]] = None

    def __post_init__(self):
        X = as_feature_matrix(self.features, "features")
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64)
            if y.shape != (X.shape[0],):
                raise DataError(f"expected {X.shape[0]} labels, got {y.shape[0]}")
            n_classes = len(self.class_names) if self.class_names is not None else int(y.max(initial=-1)) + 1
            if n_classes < 1:
                raise DataError("labelled dataset needs at least one class")
            if y.size and (y.min() < 0 or y.max() >= n_classes):
                raise DataError(f"labels must lie in [0, {n_classes})")
            object.__setattr__(self, "labels", y)
        if self.row_ids is not None and len(self.row_ids) != X.shape[0]:
            raise DataError("row_ids length does not match the number of rows")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            return 0
        if self.class_names is not None:
            return len(self.class_names)
        return int(self.labels.max(initial=-1)) + 1

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index)
        return LabeledDataset(
            features=self.features[index],
            labels=None if self.labels is None else self.labels[index],
            class_names=self.class_names,
            row_ids=None if self.row_ids is None else [self.row_ids[i] for i in index],
            feature_names=self.feature_names,
        )


def load_csv(
    path,
    id_col: Optional[str] = None,
    label_col: Optional[str] = None,
    feature_cols: Optional[Sequence[str]] = None,
) -> LabeledDataset:
    """Read a comma-separated feature table with a header row.

    Every column other than ``id_col`` and ``label_col`` is a feature unless
    ``feature_cols`` names them explicitly. Labels are mapped to dense
    indices in order of first appearance.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        for name in (id_col, label_col):
            if name is not None and name not in header:
                raise DataError(f"{path}: unknown column {name!r} (header: {', '.join(header)})")
        if feature_cols is None:
            feature_cols = [h for h in header if h not in (id_col, label_col)]
        else:
            missing = [c for c in feature_cols if c not in header]
            if missing:
                raise DataError(f"{path}: unknown feature column(s) {missing}")
        if not feature_cols:
            raise DataError(f"{path}: no feature columns")
        feat_idx = [header.index(c) for c in feature_cols]
        id_idx = header.index(id_col) if id_col is not None else None
        lab_idx = header.index(label_col) if label_col is not None else None

        rows: list[list[float]] = []
        ids: list[str] = []
        raw_labels: list[str] = []
        for line_no, record in enumerate(reader, start=2):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if len(record) != len(header):
                raise DataError(
                    f"{path}: row {line_no} has {len(record)} fields, expected {len(header)}"
                )
            values = []
            for j in feat_idx:
                cell = record[j].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {line_no}, column {header[j]!r}"
                    ) from None
                if not np.isfinite(v):
                    raise DataError(
                        f"{path}: non-finite value {cell!r} at row {line_no}, column {header[j]!r}"
                    )
                values.append(v)
            rows.append(values)
            if id_idx is not None:
                ids.append(record[id_idx])
            if lab_idx is not None:
                raw_labels.append(record[lab_idx].strip())

    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_idx))
    labels = class_names = None
    if lab_idx is not None:
        lookup: dict[str, int] = {}
        for lab in raw_labels:
            lookup.setdefault(lab, len(lookup))
        class_names = list(lookup)
        labels = np.array([lookup[lab] for lab in raw_labels], dtype=np.int64)
    return LabeledDataset(
        features=X,
        labels=labels,
        class_names=class_names,
        row_ids=ids if id_idx is not None else None,
        feature_names=list(feature_cols),
    )


def write_csv(dataset: LabeledDataset, path, id_col: str = "id", label_col: str = "label") -> None:
    """Write ``dataset`` in the layout accepted by :func:`load_csv`.

    Values use ``repr`` formatting, which round-trips float64 exactly.
    """
    X = dataset.features
    names = dataset.feature_names or [f"f{j + 1}" for j in range(X.shape[1])]
    header = []
    if dataset.row_ids is not None:
        header.append(id_col)
    if dataset.labels is not None:
        header.append(label_col)
    header.extend(names)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(X.shape[0]):
            row = []
            if dataset.row_ids is not None:
                row.append(dataset.row_ids[i])
            if dataset.labels is not None:
                lab = int(dataset.labels[i])
                row.append(dataset.class_names[lab] if dataset.class_names else str(lab))
            row.extend(repr(float(v)) for v in X[i])
            writer.writerow(row)


@dataclass(frozen=True)
class StandardizationParams:
    means: np.ndarray
    stds: np.ndarray
    # Set only when constant columns were dropped at fit time.
    kept_columns: Optional[np.ndarray] = None
    n_input_columns: Optional[int] = None

    @property
    def input_dim(self) -> int:
        return self.n_input_columns if self.kept_columns is not None else self.means.shape[0]

    @property
    def output_dim(self) -> int:
        return self.means.shape[0]

    def to_dict(self) -> dict:
        out = {"means": self.means.tolist(), "stds": self.stds.tolist()}
        if self.kept_columns is not None:
            out["kept_columns"] = self.kept_columns.tolist()
            out["n_input_columns"] = self.n_input_columns
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationParams":
        kept = d.get("kept_columns")
        return cls(
            means=np.asarray(d["means"], dtype=np.float64),
            stds=np.asarray(d["stds"], dtype=np.float64),
            kept_columns=None if kept is None else np.asarray(kept, dtype=np.int64),
            n_input_columns=d.get("n_input_columns"),
        )


def fit_standardizer(X, drop_constant: bool = False, names: Optional[Sequence[str]] = None) -> StandardizationParams:
    """Column means and population standard deviations of ``X``.

    Constant columns raise :class:`DataError` unless ``drop_constant`` is set,
    in which case they are excluded and the params remember which columns to keep.
    """
    X = as_feature_matrix(X)
    if X.shape[0] < 2:
        raise DataError("fitting a standardizer needs at least 2 rows")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    constant = stds == 0.0
    if not constant.any():
        return StandardizationParams(means=means, stds=stds)
    if not drop_constant:
        j = int(np.flatnonzero(constant)[0])
        label = repr(names[j]) if names is not None else str(j)
        raise DataError(f"column {label} is constant (std = 0); pass drop_constant to exclude it")
    kept = np.flatnonzero(~constant)
    if kept.size == 0:
        raise DataError("every column is constant")
    return StandardizationParams(
        means=means[kept], stds=stds[kept], kept_columns=kept, n_input_columns=X.shape[1]
    )


def apply_standardizer(X, params: StandardizationParams) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected a 2-d matrix, got shape {X.shape}")
    expected = params.input_dim
    if X.shape[1] != expected:
        raise DataError(f"dimension mismatch: matrix has {X.shape[1]} columns, standardizer expects {expected}")
    if params.kept_columns is not None:
        X = X[:, params.kept_columns]
    return (X - params.means) / params.stds


def train_validation_split(n_samples: int, validation_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random split of row indices into (train, validation)."""
    if not 0.0 < validation_fraction < 1.0:
        raise DataError("validation_fraction must be in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n_samples)
    n_val = max(1, int(round(n_samples * validation_fraction)))
    if n_val >= n_samples:
        raise DataError("split leaves no training rows")
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _latent_clusters(rng, n_per_class, n_classes, latent_dim, class_separation):
    if n_classes <= latent_dim:
        # equidistant centres: scaled rows of a random orthogonal matrix
        Q, _ = np.linalg.qr(rng.normal(size=(latent_dim, latent_dim)))
        centres = Q[:n_classes] * (class_separation / np.sqrt(2.0))
    else:
        centres = rng.normal(scale=class_separation / np.sqrt(2.0 * latent_dim), size=(n_classes, latent_dim))
    labels = np.repeat(np.arange(n_classes), n_per_class)
    Z = centres[labels] + rng.normal(size=(labels.size, latent_dim))
    return Z, labels


def _check_manifold_args(n_per_class, n_classes, latent_dim, ambient_dim, noise_std):
    if n_classes < 2:
        raise DataError("n_classes must be at least 2")
    if not 1 <= latent_dim < ambient_dim:
        raise DataError("need 1 <= latent_dim < ambient_dim")
    if n_per_class < 1 or noise_std < 0:
        raise DataError("n_per_class must be positive and noise_std nonnegative")


def synthetic_manifold(
    seed: int,
    n_per_class: int,
    n_classes: int,
    latent_dim: int,
    ambient_dim: int,
    noise_std: float,
    class_separation: float = 7.0,
    hidden_width: int = 16,
    warp: float = 4.0,
    return_latent: bool = False,
):
    """Labelled point clouds on a seeded nonlinear manifold.

    Each class is a unit-variance Gaussian in latent space. When
    ``n_classes <= latent_dim`` the class centres sit at pairwise distance
    ``class_separation`` along random orthogonal directions; otherwise they
    are random with that typical spacing. Points go through
    ``tanh(A z + a)`` with a random ``hidden_width x latent_dim`` map of gain
    ``warp``, then a second random affine map into ``ambient_dim``
    dimensions, plus isotropic Gaussian noise of scale ``noise_std``.

    With ``return_latent`` the latent-space dataset is returned as well.
    Rows are shuffled identically in both.
    """
    _check_manifold_args(n_per_class, n_classes, latent_dim, ambient_dim, noise_std)
    rng = np.random.default_rng(seed)
    Z, labels = _latent_clusters(rng, n_per_class, n_classes, latent_dim, class_separation)
    A = rng.normal(scale=warp / np.sqrt(latent_dim), size=(hidden_width, latent_dim))
    a = rng.normal(size=hidden_width)
    B = rng.normal(scale=1.0 / np.sqrt(hidden_width), size=(ambient_dim, hidden_width))
    c = rng.normal(size=ambient_dim)
    X = np.tanh(Z @ A.T + a) @ B.T + c
    if noise_std > 0:
        X += rng.normal(scale=noise_std, size=X.shape)
    order = rng.permutation(labels.size)
    names = [f"class{k}" for k in range(n_classes)]
    ds = LabeledDataset(features=X[order], labels=labels[order], class_names=names)
    if not return_latent:
        return ds
    return ds, LabeledDataset(features=Z[order], labels=labels[order], class_names=names)
