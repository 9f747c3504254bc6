"""Gaussian mixture clustering by EM, the restart-then-converge evaluation
protocol, and the homogeneity score.

Covariances get ``reg`` added to the diagonal in every M-step. That update
is the exact maximizer of the log-likelihood plus a per-point penalty
``-reg/2 * tr(inv(cov))``, so the traced objective is that penalized
log-likelihood (mean per sample). With the penalty included EM is
monotone; it differs from the plain log-likelihood by a negligible amount.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .seeding import derive_seed

REG_SCALE = 1e-6
STARVED_MASS = 1e-10
CONVERGENCE_TOL = 1e-7
MAX_CONVERGE_ITERS = 500


class EmError(RuntimeError):
    pass


@dataclass
class GaussianMixture:
    weights: np.ndarray  # K
    means: np.ndarray  # K x k
    covariances: np.ndarray  # K x k x k
    reg: float = 0.0

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def copy(self) -> "GaussianMixture":
        return GaussianMixture(self.weights.copy(), self.means.copy(), self.covariances.copy(), self.reg)


@dataclass
class GmmFit:
    model: GaussianMixture
    trace: list[float]  # objective before the first M-step, then after each iteration
    n_iter: int
    converged: bool
    responsibilities: np.ndarray
    events: list[dict] = field(default_factory=list)


def _weighted_log_densities(model: GaussianMixture, X: np.ndarray) -> np.ndarray:
    """N x K matrix of log(weight_k) + log f_k(x_i), f_k the penalized Gaussian density."""
    n, k = X.shape
    out = np.empty((n, model.n_components))
    for j in range(model.n_components):
        try:
            L = np.linalg.cholesky(model.covariances[j])
        except np.linalg.LinAlgError:
            raise EmError(f"covariance of component {j} is not positive definite") from None
        diff = np.linalg.solve(L, (X - model.means[j]).T)
        maha = np.einsum("ij,ij->j", diff, diff)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        logpdf = -0.5 * (k * np.log(2 * np.pi) + logdet + maha)
        if model.reg:
            Linv = np.linalg.solve(L, np.eye(k))
            logpdf -= 0.5 * model.reg * np.einsum("ij,ij->", Linv, Linv)
        out[:, j] = np.log(model.weights[j]) + logpdf
    return out


def e_step(model: GaussianMixture, X: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """Responsibilities, mean per-sample objective, per-sample log mixture density."""
    wl = _weighted_log_densities(model, X)
    log_px = logsumexp(wl, axis=1)
    if not np.all(np.isfinite(log_px)):
        raise EmError("non-finite likelihood")
    resp = np.exp(wl - log_px[:, None])
    return resp, float(log_px.mean()), log_px


def m_step(X: np.ndarray, resp: np.ndarray, reg: float) -> GaussianMixture:
    nk = resp.sum(axis=0)
    weights = nk / nk.sum()
    means = (resp.T @ X) / nk[:, None]
    k = X.shape[1]
    covs = np.empty((resp.shape[1], k, k))
    for j in range(resp.shape[1]):
        diff = X - means[j]
        c = (resp[:, j, None] * diff).T @ diff / nk[j]
        c = 0.5 * (c + c.T)
        c[np.diag_indices(k)] += reg
        covs[j] = c
    return GaussianMixture(weights, means, covs, reg)


def regularization(X: np.ndarray, reg_scale: float = REG_SCALE) -> float:
    return reg_scale * float(X.var(axis=0).mean())


def random_init(X: np.ndarray, K: int, rng: np.random.Generator, reg: float) -> GaussianMixture:
    """K distinct data rows as means, the global covariance for every component, uniform weights."""
    idx = rng.choice(X.shape[0], size=K, replace=False)
    cov = np.atleast_2d(np.cov(X, rowvar=False, bias=True))
    cov = 0.5 * (cov + cov.T) + reg * np.eye(X.shape[1])
    return GaussianMixture(np.full(K, 1.0 / K), X[idx].copy(), np.repeat(cov[None], K, axis=0), reg)


def gmm_em_fit(
    X,
    K: int,
    rng: Optional[np.random.Generator] = None,
    max_iters: int = 100,
    tol: Optional[float] = CONVERGENCE_TOL,
    init: Optional[GaussianMixture] = None,
    reg_scale: float = REG_SCALE,
) -> GmmFit:
    """Fit a full-covariance mixture by EM.

    Starts from ``init`` if given, else from :func:`random_init` with
    ``rng``. Runs at most ``max_iters`` iterations; stops early when the
    objective improves by less than ``tol`` relative to its magnitude
    (``tol=None`` always runs ``max_iters``).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if k < 1 or K < 1:
        raise ValueError("need at least one dimension and one component")
    if n < K:
        raise ValueError(f"need at least K={K} rows, got {n}")
    if init is None:
        if rng is None:
            raise ValueError("either rng or init is required")
        reg = regularization(X, reg_scale)
        model = random_init(X, K, rng, reg)
    else:
        model = init.copy()
        reg = model.reg
    if model.dim != k or model.n_components != K:
        raise ValueError("initial mixture does not match data dimension or K")

    resp, ll, log_px = e_step(model, X)
    trace = [ll]
    events: list[dict] = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        nk = resp.sum(axis=0)
        starved = np.flatnonzero(nk < STARVED_MASS)
        if starved.size:
            model = _revive(model, X, log_px, starved, reg)
            events.append({"iteration": it, "event": "reinit_starved_component", "components": starved.tolist()})
            resp, ll, log_px = e_step(model, X)
        model = m_step(X, resp, reg)
        resp, ll, log_px = e_step(model, X)
        prev = trace[-1]
        trace.append(ll)
        if tol is not None and ll - prev < tol * max(abs(prev), 1e-300):
            converged = True
            break
    return GmmFit(model, trace, it, converged, resp, events)


def _revive(model, X, log_px, starved, reg):
    model = model.copy()
    worst = np.argsort(log_px, kind="stable")
    cov = np.atleast_2d(np.cov(X, rowvar=False, bias=True)) + reg * np.eye(X.shape[1])
    for i, j in enumerate(starved):
        model.means[j] = X[worst[i]]
        model.covariances[j] = cov
        model.weights[j] = 1.0 / model.n_components
    model.weights /= model.weights.sum()
    return model


def gmm_responsibilities(model: GaussianMixture, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: mixture has dimension {model.dim}, got shape {X.shape}")
    return e_step(model, X)[0]


def gmm_assign(model: GaussianMixture, X) -> np.ndarray:
    """Most responsible component per row; ties go to the lowest index."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: mixture has dimension {model.dim}, got shape {X.shape}")
    return np.argmax(_weighted_log_densities(model, X), axis=1)


def contingency_table(true_labels, cluster_labels) -> np.ndarray:
    true_labels = np.asarray(true_labels)
    cluster_labels = np.asarray(cluster_labels)
    if true_labels.shape != cluster_labels.shape or true_labels.ndim != 1:
        raise ValueError("label arrays must be 1-d and of equal length")
    if true_labels.size == 0:
        raise ValueError("need at least one sample")
    _, c_idx = np.unique(true_labels, return_inverse=True)
    _, k_idx = np.unique(cluster_labels, return_inverse=True)
    table = np.zeros((c_idx.max() + 1, k_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (c_idx, k_idx), 1)
    return table


def homogeneity(true_labels, cluster_labels) -> float:
    """1 - H(class | cluster) / H(class), natural-log entropies; 1 if H(class) = 0."""
    table = contingency_table(true_labels, cluster_labels).astype(np.float64)
    n = table.sum()
    pc = table.sum(axis=1) / n
    h_c = -np.sum(pc * np.log(pc))
    if h_c <= 0.0:
        return 1.0
    nk = table.sum(axis=0)
    nz = table > 0
    h_c_given_k = -np.sum(table[nz] / n * np.log(table[nz] / np.broadcast_to(nk, table.shape)[nz]))
    return float(min(1.0, max(0.0, 1.0 - h_c_given_k / h_c)))


@dataclass
class ProtocolReport:
    homogeneity_values: list[float]
    mean: float
    std: float
    K: int
    dims: int
    seed: int
    reducer: Optional[str] = None
    restart_traces: list[list[list[float]]] = field(default_factory=list)
    selected_restarts: list[int] = field(default_factory=list)
    final_traces: list[list[float]] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "homogeneity_values": self.homogeneity_values,
            "mean": self.mean,
            "std": self.std,
            "k": self.K,
            "dims": self.dims,
            "seed": self.seed,
            "reducer": self.reducer,
            "restart_traces": self.restart_traces,
            "selected_restarts": self.selected_restarts,
            "final_traces": self.final_traces,
            "events": self.events,
        }


def clustering_protocol(
    X,
    true_labels,
    K: Optional[int] = None,
    master_seed: int = 0,
    n_repeats: int = 5,
    n_restarts: int = 10,
    restart_iters: int = 10,
    tol: float = CONVERGENCE_TOL,
    max_iters: int = MAX_CONVERGE_ITERS,
    reducer: Optional[str] = None,
) -> ProtocolReport:
    """Repeat ``n_repeats`` times: ``n_restarts`` random EM fits of exactly
    ``restart_iters`` iterations, continue the one with the highest
    objective to convergence, score its assignments by homogeneity.

    ``K`` defaults to the number of distinct labels. The spread is the
    sample standard deviation of the repeated scores.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d embedding, got shape {X.shape}")
    labels = np.asarray(true_labels)
    if labels.shape != (X.shape[0],):
        raise ValueError("need one label per row")
    n_distinct = np.unique(labels).size
    if K is None:
        K = n_distinct
    if n_distinct < K:
        raise ValueError(f"K={K} but only {n_distinct} distinct labels")

    values, restart_traces, selected, final_traces, events = [], [], [], [], []
    for r in range(n_repeats):
        fits = [
            gmm_em_fit(X, K, np.random.default_rng(derive_seed(master_seed, r, j)), max_iters=restart_iters, tol=None)
            for j in range(n_restarts)
        ]
        best = max(range(n_restarts), key=lambda j: (fits[j].trace[-1], -j))
        final = gmm_em_fit(X, K, init=fits[best].model, max_iters=max_iters, tol=tol)
        assignment = gmm_assign(final.model, X)
        values.append(homogeneity(labels, assignment))
        restart_traces.append([f.trace for f in fits])
        selected.append(best)
        final_traces.append(final.trace)
        for j, f in enumerate(fits):
            events.extend({**e, "repeat": r, "restart": j} for e in f.events)
        events.extend({**e, "repeat": r, "restart": "final"} for e in final.events)
    values_arr = np.array(values)
    return ProtocolReport(
        homogeneity_values=values,
        mean=float(values_arr.mean()),
        std=float(values_arr.std(ddof=1)) if n_repeats > 1 else 0.0,
        K=K,
        dims=X.shape[1],
        seed=master_seed,
        reducer=reducer,
        restart_traces=restart_traces,
        selected_restarts=selected,
        final_traces=final_traces,
        events=events,
    )
