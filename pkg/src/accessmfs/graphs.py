"""Adaptive k-sparse similarity graphs over instances (S) and labels (P).

Each row solves ``min_s  sum_j m_j s_j + reg * ||s||^2`` over the probability
simplex with the self entry pinned to zero. Choosing ``reg`` so that exactly
the k cheapest neighbours survive gives the closed form

    s_j = (m_(k+1) - m_j) / (k * m_(k+1) - sum_{h<=k} m_(h))    for the k nearest,
    reg = (k * m_(k+1) - sum_{h<=k} m_(h)) / 2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from .core import ConfigurationError

logger = logging.getLogger(__name__)

# Relative size below which the closed-form denominator counts as zero.
DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True)
class PairwiseCost:
    values: np.ndarray
    kind: str  # "instance" or "label"

    @property
    def size(self) -> int:
        return self.values.shape[0]


class GraphUpdate(NamedTuple):
    weights: np.ndarray
    reg: np.ndarray
    n_degenerate: int


def _half_sqdist(points) -> np.ndarray:
    D = 0.5 * cdist(points, points, "sqeuclidean")
    np.fill_diagonal(D, 0.0)
    return D


def instance_cost(X, W, F) -> PairwiseCost:
    """``m_ij = 1/2 ||W^T x_i - W^T x_j||^2 + 1/2 ||f_i - f_j||^2``."""
    X, W, F = (np.asarray(a, dtype=float) for a in (X, W, F))
    d, n = X.shape
    if W.shape[0] != d or F.shape[0] != n or W.shape[1] != F.shape[1]:
        raise ConfigurationError(
            f"shape mismatch: X {X.shape}, W {W.shape}, F {F.shape}")
    M = _half_sqdist((W.T @ X).T) + _half_sqdist(F)
    return PairwiseCost(M, "instance")


def label_cost(F) -> PairwiseCost:
    """``g_ij = 1/2 ||f_.i - f_.j||^2`` over label columns."""
    F = np.asarray(F, dtype=float)
    if F.ndim != 2:
        raise ConfigurationError("F must be 2-D")
    return PairwiseCost(_half_sqdist(F.T), "label")


def sparse_simplex_row(costs, k: int, exclude: int | None = None):
    """Closed-form k-sparse simplex weights for one row of costs.

    ``exclude`` is the self index; it never receives weight. Returns
    ``(weights, reg, degenerate)``. When the k+1 smallest costs coincide the
    closed form is 0/0 and the row falls back to uniform weights over the k
    nearest with ``reg = 0``.
    """
    costs = np.asarray(costs, dtype=float).copy()
    m = costs.shape[0]
    if exclude is not None:
        costs[exclude] = np.inf
    n_candidates = m - (exclude is not None)
    if not 1 <= k <= n_candidates - 1:
        raise ConfigurationError(
            f"k={k} needs at least k+1 candidates, have {n_candidates}")
    order = np.argsort(costs, kind="stable")
    nearest = order[:k]
    m_next = costs[order[k]]
    head = costs[nearest]
    denom = k * m_next - head.sum()
    weights = np.zeros(m)
    if denom <= DEGENERATE_RTOL * k * abs(m_next):
        weights[nearest] = 1.0 / k
        return weights, 0.0, True
    weights[nearest] = (m_next - head) / denom
    return weights, 0.5 * denom, False


def _k_smallest(C, k1: int) -> np.ndarray:
    """Per row, the ``k1`` smallest entries ordered by (cost, index).

    Same result as a stable full argsort truncated to ``k1`` columns, at
    linear cost per row.
    """
    m = C.shape[1]
    if k1 >= m:
        return np.argsort(C, axis=1, kind="stable")[:, :k1]
    kth = np.partition(C, k1 - 1, axis=1)[:, k1 - 1:k1]
    below = C < kth
    tied = C == kth
    need = k1 - below.sum(axis=1, keepdims=True)
    chosen = below | (tied & (np.cumsum(tied, axis=1) <= need))
    idx = np.nonzero(chosen)[1].reshape(-1, k1)          # ascending index per row
    vals = np.take_along_axis(C, idx, axis=1)
    return np.take_along_axis(idx, np.argsort(vals, axis=1, kind="stable"), axis=1)


def _update_graph(cost: PairwiseCost, k: int) -> GraphUpdate:
    C = np.array(cost.values, dtype=float)
    m = C.shape[0]
    if not 1 <= k <= m - 1:
        raise ConfigurationError(f"neighbor count {k} must lie in [1, {m - 1}]")
    if k == m - 1:
        # Every candidate is a neighbour and no (k+1)-th cost exists.
        out = (np.ones((m, m)) - np.eye(m)) / k
        return GraphUpdate(out, np.zeros(m), m if m > 2 else 0)
    np.fill_diagonal(C, np.inf)
    order = _k_smallest(C, k + 1)
    rows = np.arange(m)[:, None]
    nearest = order[:, :k]
    head = C[rows, nearest]
    m_next = C[np.arange(m), order[:, k]]
    denom = k * m_next - head.sum(axis=1)
    degenerate = denom <= DEGENERATE_RTOL * k * np.abs(m_next)
    safe = np.where(degenerate, 1.0, denom)
    vals = (m_next[:, None] - head) / safe[:, None]
    vals[degenerate] = 1.0 / k
    out = np.zeros((m, m))
    out[rows, nearest] = vals
    reg = np.where(degenerate, 0.0, 0.5 * denom)
    n_deg = int(degenerate.sum())
    if n_deg:
        logger.debug("%s graph: %d degenerate rows fell back to uniform", cost.kind, n_deg)
    return GraphUpdate(out, reg, n_deg)


def update_S(cost: PairwiseCost, k_s: int) -> GraphUpdate:
    """Instance graph: every row keeps its ``k_s`` cheapest neighbours."""
    return _update_graph(cost, k_s)


def update_P(cost: PairwiseCost, k_p: int) -> GraphUpdate:
    """Label graph, same closed form on the label-column costs."""
    return _update_graph(cost, k_p)


def graph_penalty(cost: PairwiseCost, weights, reg) -> np.ndarray:
    """Per-row ``sum_j m_ij s_ij + reg_i ||s_i||^2``."""
    weights = np.asarray(weights, dtype=float)
    return (cost.values * weights).sum(axis=1) + np.asarray(reg) * (weights**2).sum(axis=1)
