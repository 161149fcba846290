"""Predicted-label update: solve ``Q F + mu F L_p = C``.

With ``L_p = V diag(lam_j) V^T`` the equation decouples into ``c`` shifted
systems ``(Q + mu lam_j I) g_j = (C V)_j`` and ``F = G V^T``.

When the system is assembled from its parts, ``Q = theta L_s + H + U`` is a
sparse graph Laplacian plus a diagonal minus the rank-one centering term
``11^T / n``. Each shifted system is then solved with Jacobi-preconditioned
conjugate gradients on the sparse part and a Sherman-Morrison correction for
the rank-one part, which keeps the cost near ``nnz(L_s)`` per column instead of
``n^3``. Every column is checked against the true residual and falls back to a
dense Cholesky solve if it misses the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import cg

SINGULAR_TOL = 1e-12
CG_ATOL = 1e-13            # relative to ||b|| + 1
VERIFY_RTOL = 1e-12        # accepted residual of the structured route, relative to ||b|| + 1
CG_MAXITER = 5000


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class LabelOperator:
    """``Q = theta * L_s + I + diag(labeled) - 11^T / n`` kept in factored form."""

    theta: float
    Ls: sp.csr_matrix
    labeled: np.ndarray

    @property
    def n(self) -> int:
        return self.labeled.size

    def shifted(self, shift: float) -> sp.csr_matrix:
        return (self.theta * self.Ls + sp.diags(1.0 + shift + self.labeled)).tocsr()

    def dense(self) -> np.ndarray:
        n = self.n
        Q = self.theta * self.Ls.toarray() + np.diag(1.0 + self.labeled) - 1.0 / n
        return 0.5 * (Q + Q.T)


@dataclass(frozen=True)
class SylvesterSystem:
    """``Q`` may be ``None`` when ``parts`` is given; :meth:`dense_q` builds it on demand."""

    Q: np.ndarray | None
    Lp: np.ndarray
    C: np.ndarray
    mu: float
    parts: LabelOperator | None = None

    def dense_q(self) -> np.ndarray:
        return self.Q if self.Q is not None else self.parts.dense()


def assemble_system(X, W, Y, L_s, L_p, U, H, theta, mu) -> SylvesterSystem:
    Q = theta * L_s + H + U
    Q = 0.5 * (Q + Q.T)
    C = H @ (X.T @ W) + U @ Y
    parts = None
    n = Q.shape[0]
    if _is_centering(H) and _is_diagonal(U):
        Ls = sp.csr_matrix(0.5 * (L_s + L_s.T)) if theta else sp.csr_matrix((n, n))
        parts = LabelOperator(float(theta), Ls, np.diag(U).astype(float).copy())
    return SylvesterSystem(Q, np.asarray(L_p, dtype=float), C, float(mu), parts)


def label_system(X, W, Y, labeled, L_s, L_p, theta, mu) -> SylvesterSystem:
    """Same system as :func:`assemble_system` with ``H`` and ``U`` implicit and ``L_s`` sparse."""
    labeled = np.asarray(labeled, dtype=float)
    XtW = X.T @ W
    C = XtW - XtW.mean(axis=0) + labeled[:, None] * Y
    Ls = sp.csr_matrix(L_s) if theta else sp.csr_matrix((labeled.size, labeled.size))
    Ls = (0.5 * (Ls + Ls.T)).tocsr()
    parts = LabelOperator(float(theta), Ls, labeled)
    return SylvesterSystem(None, np.asarray(L_p, dtype=float), C, float(mu), parts)


def _is_centering(H) -> bool:
    H = np.asarray(H)
    n = H.shape[0]
    off = np.abs(H + 1.0 / n)
    np.fill_diagonal(off, 0.0)
    return off.max(initial=0.0) <= 1e-14 and np.abs(np.diag(H) - (1 - 1.0 / n)).max() <= 1e-14


def _is_diagonal(M) -> bool:
    M = np.asarray(M)
    return np.count_nonzero(M - np.diag(np.diag(M))) == 0


def _solve_dense(Q, shift, b):
    A = Q + shift * np.eye(Q.shape[0])
    try:
        factor = cho_factor(A)
    except np.linalg.LinAlgError:
        factor = None
    # A singular PSD matrix can still factor with a vanishing pivot.
    if factor is None or np.min(np.diag(factor[0])) ** 2 <= SINGULAR_TOL * np.max(np.diag(A)):
        raise SingularSystemError(
            "label system is singular; at least one labeled instance is required")
    return cho_solve(factor, b)


def _structured_apply(A, u, g):
    return A @ g - u * (u @ g)


def _cg(A, b, precond):
    x, info = cg(A, b, rtol=0.0, atol=CG_ATOL * (np.linalg.norm(b) + 1), maxiter=CG_MAXITER,
                 M=precond)
    return x if info == 0 else None


def _solve_structured(op: LabelOperator, shift, B):
    """Solve ``(Q + shift I) g = b`` for every column of ``B``; ``None`` when not trusted."""
    A = op.shifted(shift)
    precond = sp.diags(1.0 / A.diagonal())
    u = np.full(op.n, 1.0 / np.sqrt(op.n))
    y = _cg(A, u, precond)
    if y is None:
        return None
    denom = 1.0 - u @ y
    if denom <= SINGULAR_TOL:
        return None
    out = np.empty_like(B)
    for j in range(B.shape[1]):
        b = B[:, j]
        tol = VERIFY_RTOL * (np.linalg.norm(b) + 1)
        g = np.zeros_like(b)
        r = b
        # one solve plus up to two refinement sweeps on the residual
        for _ in range(3):
            x = _cg(A, r, precond)
            if x is None:
                return None
            g = g + x + y * ((u @ x) / denom)
            r = b - _structured_apply(A, u, g)
            if np.linalg.norm(r) <= tol:
                break
        else:
            return None
        out[:, j] = g
    return out


def solve_F(sys: SylvesterSystem) -> np.ndarray:
    C, mu = sys.C, sys.mu
    n, c = C.shape
    Lp = 0.5 * (sys.Lp + sys.Lp.T)
    shifts, V = np.linalg.eigh(Lp)
    Ct = C @ V
    G = np.empty_like(Ct)
    for j in range(c):
        shift = mu * max(shifts[j], 0.0)
        g = None
        if sys.parts is not None:
            g = _solve_structured(sys.parts, shift, Ct[:, j:j + 1])
        G[:, j] = g[:, 0] if g is not None else _solve_dense(sys.dense_q(), shift, Ct[:, j])
    return G @ V.T


def f_objective(sys: SylvesterSystem, F) -> float:
    """``Tr(F^T Q F - 2 F^T C) + mu Tr(F L_p F^T)``."""
    return float(np.sum(F * (sys.dense_q() @ F)) - 2 * np.sum(F * sys.C)
                 + sys.mu * np.sum(F * (F @ sys.Lp)))


def residual(sys: SylvesterSystem, F) -> float:
    return float(np.linalg.norm(sys.dense_q() @ F + sys.mu * F @ sys.Lp - sys.C))
