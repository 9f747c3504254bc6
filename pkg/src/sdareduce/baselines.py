"""PCA and kernel PCA comparators.

Both use a deterministic sign convention: the largest-magnitude entry of
each component (or coefficient vector) is positive.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .data import as_feature_matrix

DEFAULT_KPCA_CAP = 5000
EIGENVALUE_FLOOR = 1e-12


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so that each column's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x d, orthonormal rows
    eigenvalues: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def pca_fit(X, k: int) -> PcaModel:
    """Top-``k`` eigenvectors of the sample covariance of ``X``."""
    X = as_feature_matrix(X)
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 rows")
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k={k} out of range: need 1 <= k <= min(N-1, d) = {min(n - 1, d)}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:k]
    evals = evals[order]
    if evals.min() < -1e-10 * max(1.0, evals.max()):
        raise np.linalg.LinAlgError(f"covariance has a negative eigenvalue {evals.min()}")
    evals = np.clip(evals, 0.0, None)
    components = _fix_signs(evecs[:, order]).T
    return PcaModel(mean=mean, components=np.ascontiguousarray(components), eigenvalues=evals)


def pca_transform(model: PcaModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.mean.shape[0]:
        raise ValueError(f"dimension mismatch: PCA model expects {model.mean.shape[0]} columns, got shape {X.shape}")
    return (X - model.mean) @ model.components.T


def pca_reconstruction_error(model: PcaModel, X) -> float:
    scores = pca_transform(model, X)
    recon = scores @ model.components + model.mean
    return float(np.mean((np.asarray(X) - recon) ** 2))


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: Optional[float] = None  # rbf only; None means 1 / d

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel {self.kind!r}; expected 'rbf' or 'linear'")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


def kernel_matrix(A, B, kernel: KernelSpec, gamma: Optional[float] = None) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if kernel.kind == "linear":
        return A @ B.T
    g = gamma if gamma is not None else (kernel.gamma if kernel.gamma is not None else 1.0 / A.shape[1])
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-g * sq)


def center_kernel(K: np.ndarray) -> np.ndarray:
    """Double-centre a square training kernel matrix."""
    return K - K.mean(axis=0)[None, :] - K.mean(axis=1)[:, None] + K.mean()


@dataclass(frozen=True)
class KernelPcaModel:
    training_points: np.ndarray
    kernel: KernelSpec
    gamma: Optional[float]  # resolved rbf gamma
    alphas: np.ndarray  # M x k
    kernel_row_means: np.ndarray  # column means of the training kernel matrix
    kernel_total_mean: float
    eigenvalues: np.ndarray
    training_scores: np.ndarray

    @property
    def n_components(self) -> int:
        return self.alphas.shape[1]


class KernelMatrixTooLarge(ValueError):
    pass


def kpca_fit(
    X,
    k: int,
    kernel: KernelSpec = KernelSpec(),
    cap: int = DEFAULT_KPCA_CAP,
    subsample: bool = False,
    seed: int = 0,
) -> KernelPcaModel:
    """Kernel PCA on (at most ``cap``) training points.

    With more than ``cap`` rows the fit fails unless ``subsample`` is set,
    in which case ``cap`` rows are drawn without replacement.
    Components with eigenvalue <= 1e-12 are dropped, so the model may keep
    fewer than ``k``.
    """
    X = as_feature_matrix(X)
    if X.shape[0] > cap:
        if not subsample:
            raise KernelMatrixTooLarge(
                f"kernel PCA on {X.shape[0]} points needs a {X.shape[0]}x{X.shape[0]} kernel matrix "
                f"(quadratic memory); the cap is {cap}. Enable subsampling or raise the cap."
            )
        idx = np.sort(np.random.default_rng(seed).choice(X.shape[0], size=cap, replace=False))
        X = X[idx]
    m = X.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"k={k} out of range for {m} training points")
    gamma = None
    if kernel.kind == "rbf":
        gamma = kernel.gamma if kernel.gamma is not None else 1.0 / X.shape[1]
    K = kernel_matrix(X, X, kernel, gamma)
    row_means = K.mean(axis=0)
    total = float(K.mean())
    Kc = center_kernel(K)
    Kc = 0.5 * (Kc + Kc.T)
    evals, evecs = scipy.linalg.eigh(Kc, subset_by_index=[m - k, m - 1])
    evals, evecs = evals[::-1], evecs[:, ::-1]
    keep = evals > EIGENVALUE_FLOOR
    evals, evecs = evals[keep], _fix_signs(evecs[:, keep])
    alphas = evecs / np.sqrt(evals)
    return KernelPcaModel(
        training_points=X,
        kernel=kernel,
        gamma=gamma,
        alphas=alphas,
        kernel_row_means=row_means,
        kernel_total_mean=total,
        eigenvalues=evals,
        training_scores=Kc @ alphas,
    )


def kpca_transform(model: KernelPcaModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.training_points.shape[1]:
        raise ValueError(
            f"dimension mismatch: kernel PCA model expects {model.training_points.shape[1]} columns, got shape {X.shape}"
        )
    Kx = kernel_matrix(X, model.training_points, model.kernel, model.gamma)
    Kx_c = Kx - model.kernel_row_means[None, :] - Kx.mean(axis=1)[:, None] + model.kernel_total_mean
    return Kx_c @ model.alphas
