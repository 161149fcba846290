"""Domain types and shared dense-matrix helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Tolerances shared by the solver modules.
CONSTRAINT_TOL = 1e-6
SIMPLEX_TOL = 1e-10
IDENTITY_TOL = 1e-8


class ConfigurationError(ValueError):
    """Raised for inconsistent shapes or hyperparameters."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``X`` (d x n), binary labels ``Y`` (n x c) and a labeled mask.

    ``labels`` keeps the full ground truth; ``working_labels`` is the matrix the
    solver sees, with unlabeled rows zeroed.
    """

    features: np.ndarray
    labels: np.ndarray
    labeled_mask: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        Y = np.asarray(self.labels, dtype=float)
        mask = np.asarray(self.labeled_mask, dtype=bool)
        if X.ndim != 2 or Y.ndim != 2 or mask.ndim != 1:
            raise ConfigurationError("features and labels must be 2-D, mask 1-D")
        d, n = X.shape
        if d < 1 or n < 2:
            raise ConfigurationError(f"need d >= 1 and n >= 2, got d={d}, n={n}")
        if Y.shape[0] != n or Y.shape[1] < 1:
            raise ConfigurationError(f"labels shape {Y.shape} does not match n={n}")
        if mask.shape[0] != n:
            raise ConfigurationError(f"mask length {mask.shape[0]} != n={n}")
        if not np.all((Y == 0) | (Y == 1)):
            raise ConfigurationError("labels must be binary (0/1)")
        if not np.all(np.isfinite(X)):
            raise ConfigurationError("features contain non-finite values")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", Y)
        object.__setattr__(self, "labeled_mask", mask)

    @property
    def n_features(self) -> int:
        return self.features.shape[0]

    @property
    def n_instances(self) -> int:
        return self.features.shape[1]

    @property
    def n_labels(self) -> int:
        return self.labels.shape[1]

    @property
    def n_labeled(self) -> int:
        return int(self.labeled_mask.sum())

    @property
    def working_labels(self) -> np.ndarray:
        Y = self.labels.copy()
        Y[~self.labeled_mask] = 0.0
        return Y

    def with_mask(self, mask) -> "Dataset":
        return Dataset(self.features, self.labels, mask, self.name)

    def check_semi_supervised(self):
        n1 = self.n_labeled
        if n1 < 1:
            raise ConfigurationError("at least one labeled instance is required")
        if n1 == self.n_instances:
            raise ConfigurationError("at least one unlabeled instance is required")

    def summary(self) -> dict:
        card = float(self.labels.sum(axis=1).mean())
        return {
            "instances": self.n_instances,
            "features": self.n_features,
            "labels": self.n_labels,
            "cardinality": card,
            "density": card / self.n_labels,
        }


@dataclass(frozen=True)
class Hyperparameters:
    lam: float = 1.0
    theta: float = 1.0
    mu: float = 1.0
    k_s: int = 5
    k_p: int = 3
    epsilon: float = 1e-8
    max_outer_iters: int = 50
    max_w_iters: int = 20
    tol_rel_obj: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigurationError("lambda must be positive (keeps R positive definite)")
        if self.theta < 0 or self.mu < 0:
            raise ConfigurationError("theta and mu must be nonnegative")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.k_s < 1 or self.k_p < 1:
            raise ConfigurationError("neighbor counts must be >= 1")
        if self.max_outer_iters < 1 or self.max_w_iters < 1:
            raise ConfigurationError("iteration caps must be >= 1")
        if not self.tol_rel_obj > 0:
            raise ConfigurationError("tol_rel_obj must be positive")

    def check_sizes(self, n: int, c: int, *, need_s=True, need_p=True):
        if need_s and not self.k_s <= n - 2:
            raise ConfigurationError(f"k_s={self.k_s} must be <= n-2={n - 2}")
        if need_p and not self.k_p <= c - 1:
            raise ConfigurationError(f"k_p={self.k_p} must be <= c-1={c - 1}")


@dataclass(frozen=True)
class RowRegularizer:
    """Per-row regularizers picked by the S and P closed forms."""

    alpha_rows: np.ndarray
    beta_rows: np.ndarray

    @property
    def alpha(self) -> float:
        return float(np.mean(self.alpha_rows)) if self.alpha_rows.size else 0.0

    @property
    def beta(self) -> float:
        return float(np.mean(self.beta_rows)) if self.beta_rows.size else 0.0


@dataclass(frozen=True)
class GraphPair:
    laplacian_s: np.ndarray
    laplacian_p: np.ndarray

    @classmethod
    def from_graphs(cls, S, P) -> "GraphPair":
        return cls(laplacian(S), laplacian(P))


@dataclass(frozen=True)
class ModelState:
    W: np.ndarray
    b: np.ndarray
    F: np.ndarray
    S: np.ndarray
    P: np.ndarray
    D: np.ndarray
    objective: float = float("nan")
    regs: RowRegularizer | None = field(default=None, compare=False)


def centering_matrix(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


def laplacian(A) -> np.ndarray:
    """Laplacian of the symmetrized graph ``(A + A^T) / 2``."""
    A = np.asarray(A, dtype=float)
    sym = 0.5 * (A + A.T)
    return np.diag(sym.sum(axis=1)) - sym


def sparse_laplacian(A):
    """Same as :func:`laplacian`, as a CSR matrix (for the sparse k-NN graphs)."""
    import scipy.sparse as sp

    A = sp.csr_matrix(A, dtype=float)
    sym = (0.5 * (A + A.T)).tocsr()
    return (sp.diags(np.asarray(sym.sum(axis=1)).ravel()) - sym).tocsr()


def l21_norm(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.sqrt((M * M).sum(axis=1)).sum())


def label_indicator(mask) -> np.ndarray:
    return np.diag(np.asarray(mask, dtype=float))


def trace_quadratic(F, L) -> float:
    """``Tr(F^T L F)`` for a column-block ``F``; ``L`` may be sparse."""
    return float(np.sum(F * np.asarray(L @ F)))
