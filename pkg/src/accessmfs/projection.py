"""Projection update under the extended uncorrelated constraint ``W^T R W = I``.

``R = X H X^T + lam * D + theta * X L_s X^T`` where ``D`` is the reweighting
diagonal of the l2,1 penalty. For fixed ``D`` the problem reduces to
``max Tr(W^T X H F)`` on the constraint set, which an orthogonal Procrustes
step on ``B = R^{-1/2} X H F`` solves exactly.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError, l21_norm

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-10
ILL_CONDITIONED_RTOL = 1e-12


class IllConditionedError(np.linalg.LinAlgError):
    pass


class RankDeficiencyWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ConstraintMatrix:
    R: np.ndarray
    inv_sqrt: np.ndarray


def _center(X, H):
    """``X H`` for the data matrix; ``H=None`` stands for the centering matrix."""
    return X - X.mean(axis=1, keepdims=True) if H is None else X @ H


def build_R(X, H, D, L_s, lam: float, theta: float) -> ConstraintMatrix:
    X = np.asarray(X, dtype=float)
    base = _center(X, H) @ X.T + theta * (X @ (L_s @ X.T))
    return _constraint(base, D, lam)


def _constraint(base, D, lam) -> ConstraintMatrix:
    """``R = base + lam * D`` and its inverse square root."""
    R = base + lam * np.asarray(D)
    R = 0.5 * (R + R.T)
    evals, Q = np.linalg.eigh(R)
    top = evals[-1]
    if top <= 0 or evals[0] <= ILL_CONDITIONED_RTOL * top:
        raise IllConditionedError(
            f"R is not positive definite (eigenvalues {evals[0]:.3g}..{top:.3g}); "
            "increase lambda")
    inv_sqrt = (Q / np.sqrt(evals)) @ Q.T
    return ConstraintMatrix(R, 0.5 * (inv_sqrt + inv_sqrt.T))


def update_D(W, epsilon: float) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    return np.diag(1.0 / (2.0 * np.sqrt((W * W).sum(axis=1) + epsilon)))


def _complete_basis(U: np.ndarray, keep: int) -> np.ndarray:
    """Replace columns ``keep:`` of ``U`` by an orthonormal completion."""
    d, c = U.shape
    basis = [U[:, j] for j in range(keep)]
    for i in range(d):
        if len(basis) == c:
            break
        v = np.zeros(d)
        v[i] = 1.0
        for _ in range(2):
            for q in basis:
                v -= (q @ v) * q
        nrm = np.linalg.norm(v)
        if nrm > 1e-8:
            basis.append(v / nrm)
    return np.column_stack(basis)


def procrustes(B) -> np.ndarray:
    """Maximize ``Tr(A^T B)`` subject to ``A^T A = I``: ``A = U V^T`` from the thin SVD."""
    B = np.asarray(B, dtype=float)
    d, c = B.shape
    if c > d:
        raise ConfigurationError(f"need c <= d for orthonormal columns, got {B.shape}")
    U, sig, Vt = np.linalg.svd(B, full_matrices=False)
    top = sig[0] if sig.size else 0.0
    rank = int(np.sum(sig > RANK_RTOL * top)) if top > 0 else 0
    if rank < c:
        warnings.warn(f"rank-deficient Procrustes target (rank {rank} < {c})",
                      RankDeficiencyWarning, stacklevel=2)
        U = _complete_basis(U, rank)
    return U @ Vt


def w_surrogate(X, H, F, W, D, L_s, lam, theta) -> float:
    """``||H X^T W - H F||^2 + lam Tr(W^T D W) + theta Tr(W^T X L_s X^T W)``."""
    XtW = X.T @ W
    fit = H @ (XtW - F)
    return float(np.sum(fit**2) + lam * np.sum(np.diag(D)[:, None] * W * W)
                 + theta * np.sum(XtW * (L_s @ XtW)))


def w_objective(X, H, F, W, L_s, lam, theta) -> float:
    """The W sub-objective with the true l2,1 penalty."""
    XtW = X.T @ W
    fit = H @ (XtW - F)
    return float(np.sum(fit**2) + lam * l21_norm(W) + theta * np.sum(XtW * (L_s @ XtW)))


@dataclass
class WUpdate:
    W: np.ndarray
    D: np.ndarray
    R: np.ndarray
    iterations: int
    surrogate_trace: list
    constraint_residual: float
    rank_deficient: int


def update_W(X, H, F, L_s, lam, theta, max_w_iters=20, epsilon=1e-8, tol=1e-5, D0=None):
    """Alternate the Procrustes step with the ``D`` reweighting.

    ``D`` starts at the identity unless ``D0`` is given. ``H=None`` applies the
    centering matrix implicitly and ``L_s`` may be sparse. ``surrogate_trace``
    records the surrogate at each ``(W_{t+1}, D_t)`` pair.
    """
    X = np.asarray(X, dtype=float)
    F = np.asarray(F, dtype=float)
    d = X.shape[0]
    D = np.eye(d) if D0 is None else np.asarray(D0, dtype=float)
    # everything that does not depend on D is formed once
    XH = _center(X, H)
    HF = _center(F.T, H).T if H is None else H @ F
    XHF = XH @ F
    XLX = X @ (L_s @ X.T) if theta else np.zeros((d, d))
    base = XH @ X.T + theta * XLX
    trace = []
    W = None
    R = None
    n_rank = 0
    prev = None
    it = 0
    for it in range(1, max_w_iters + 1):
        cm = _constraint(base, D, lam)
        B = cm.inv_sqrt @ XHF
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RankDeficiencyWarning)
            A = procrustes(B)
        n_rank += len(caught)
        W = cm.inv_sqrt @ A
        R = cm.R
        fit = XH.T @ W - HF
        value = float(np.sum(fit**2) + lam * np.sum(np.diag(D)[:, None] * W * W)
                      + theta * np.sum(W * (XLX @ W)))
        trace.append(value)
        D = update_D(W, epsilon)
        if prev is not None and abs(prev - value) <= tol * max(abs(prev), 1e-12):
            break
        prev = value
    resid = float(np.linalg.norm(W.T @ R @ W - np.eye(W.shape[1])))
    if n_rank:
        logger.debug("W update: %d rank-deficient Procrustes steps", n_rank)
    return WUpdate(W, D, R, it, trace, resid, n_rank)
