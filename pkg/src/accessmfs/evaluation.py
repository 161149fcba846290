"""ML-KNN classifier and the ranking / classification metrics used to score feature subsets.

Score matrices are ``n x c`` (instances by labels). Tied scores are resolved
in expectation over a uniform tie-break, so a tie between a relevant and an
irrelevant label costs half a mistake. Reductions use ``math.fsum`` so each
metric is the correctly rounded value of its terms, independent of summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist


class UndefinedMetricError(ValueError):
    pass


# ---------------------------------------------------------------- ML-KNN

@dataclass(frozen=True)
class MlknnModel:
    k_neighbors: int
    smoothing: float
    prior_pos: np.ndarray          # P(H1_j), length c
    cond_pos: np.ndarray           # P(E_delta | H1_j), c x (k+1)
    cond_neg: np.ndarray           # P(E_delta | H0_j), c x (k+1)
    counts_pos: np.ndarray         # raw histograms, c x (k+1)
    counts_neg: np.ndarray
    train_features: np.ndarray     # n_train x p (instances as rows)
    train_labels: np.ndarray

    @property
    def prior_neg(self) -> np.ndarray:
        return 1.0 - self.prior_pos


def _neighbors(query, train, k, exclude_self=False):
    dist = cdist(query, train, "sqeuclidean")
    if exclude_self:
        np.fill_diagonal(dist, np.inf)
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def mlknn_train(features, labels, k_neighbors: int = 10, smoothing: float = 1.0) -> MlknnModel:
    """Fit ML-KNN. ``features`` is ``p x n_train`` (features by instances)."""
    Xtr = np.asarray(features, dtype=float).T
    Y = np.asarray(labels, dtype=float)
    n, c = Y.shape
    if Xtr.shape[0] != n:
        raise ValueError(f"features have {Xtr.shape[0]} instances, labels {n}")
    if not 1 <= k_neighbors < n:
        raise ValueError(f"need 1 <= k_neighbors < n_train, got k={k_neighbors}, n={n}")
    if not smoothing > 0:
        raise ValueError("smoothing must be positive")
    k, s = k_neighbors, smoothing
    prior = (s + Y.sum(axis=0)) / (2 * s + n)
    nn = _neighbors(Xtr, Xtr, k, exclude_self=True)
    delta = Y[nn].sum(axis=1).astype(int)            # n x c neighbour label counts
    counts_pos = np.zeros((c, k + 1))
    counts_neg = np.zeros((c, k + 1))
    for j in range(c):
        pos = Y[:, j] == 1
        counts_pos[j] = np.bincount(delta[pos, j], minlength=k + 1)
        counts_neg[j] = np.bincount(delta[~pos, j], minlength=k + 1)
    cond_pos = (s + counts_pos) / (s * (k + 1) + counts_pos.sum(axis=1, keepdims=True))
    cond_neg = (s + counts_neg) / (s * (k + 1) + counts_neg.sum(axis=1, keepdims=True))
    return MlknnModel(k, s, prior, cond_pos, cond_neg, counts_pos, counts_neg, Xtr, Y)


def mlknn_predict(model: MlknnModel, features):
    """Posterior ``P(H1 | E)`` per label and the MAP decision. ``features`` is ``p x n_test``."""
    Xte = np.asarray(features, dtype=float).T
    if Xte.shape[1] != model.train_features.shape[1]:
        raise ValueError(f"feature dimension {Xte.shape[1]} != "
                         f"{model.train_features.shape[1]} seen in training")
    nn = _neighbors(Xte, model.train_features, model.k_neighbors)
    delta = model.train_labels[nn].sum(axis=1).astype(int)
    cols = np.arange(model.prior_pos.size)
    p1 = model.prior_pos * model.cond_pos[cols, delta]
    p0 = model.prior_neg * model.cond_neg[cols, delta]
    scores = p1 / (p1 + p0)
    return scores, (p1 > p0).astype(int)


# ---------------------------------------------------------------- metrics

def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def _as_pair(scores, truth):
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth) > 0
    if scores.shape != truth.shape or scores.ndim != 2:
        raise ValueError(f"shape mismatch: scores {scores.shape}, truth {truth.shape}")
    return scores, truth


def average_precision(scores, truth) -> float:
    scores, truth = _as_pair(scores, truth)
    keep = truth.any(axis=1)
    if not keep.any():
        raise UndefinedMetricError("average precision needs an instance with a relevant label")
    S, T = scores[keep], truth[keep]
    # Expected positions under uniform tie-breaking: every other label tied
    # with y counts 1/2, y itself counts 1. Without ties this is the usual rank.
    above = (S[:, None, :] > S[:, :, None]) + 0.5 * (S[:, None, :] == S[:, :, None])  # [i, y, y']
    rank = above.sum(axis=2) + 0.5
    hits = (above * T[:, None, :]).sum(axis=2) + 0.5
    ratios = hits / rank
    return _mean(_mean(r[t]) for r, t in zip(ratios, T))


def ranking_loss(scores, truth) -> float:
    scores, truth = _as_pair(scores, truth)
    n_rel = truth.sum(axis=1)
    n_irr = truth.shape[1] - n_rel
    keep = (n_rel > 0) & (n_irr > 0)
    if not keep.any():
        raise UndefinedMetricError("ranking loss needs an instance with relevant and irrelevant labels")
    S, T = scores[keep], truth[keep]
    diff = S[:, :, None] - S[:, None, :]                       # [i, rel, irr]
    pair = T[:, :, None] & ~T[:, None, :]
    bad = ((diff < 0) + 0.5 * (diff == 0)) * pair
    # bad counts are exact multiples of 1/2, so the per-instance sum is exact
    per_inst = bad.sum(axis=(1, 2)) / (n_rel[keep] * n_irr[keep])
    return _mean(per_inst)


def one_error(scores, truth) -> float:
    scores, truth = _as_pair(scores, truth)
    keep = truth.any(axis=1)
    if not keep.any():
        raise UndefinedMetricError("one error needs an instance with a relevant label")
    S, T = scores[keep], truth[keep]
    top = S == S.max(axis=1, keepdims=True)
    # tied top labels are drawn uniformly: expected miss rate
    miss = (top & ~T).sum(axis=1) / top.sum(axis=1)
    return _mean(miss)


def macro_f1(predictions, truth) -> float:
    P = np.asarray(predictions) > 0
    T = np.asarray(truth) > 0
    if P.shape != T.shape or P.ndim != 2:
        raise ValueError(f"shape mismatch: predictions {P.shape}, truth {T.shape}")
    tp = (P & T).sum(axis=0)
    fp = (P & ~T).sum(axis=0)
    fn = (~P & T).sum(axis=0)
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    return _mean(f1)


@dataclass
class EvaluationReport:
    ap: float
    maf: float
    rl: float
    oe: float
    dataset: str = ""
    variant: str = ""
    lam: float = float("nan")
    theta: float = float("nan")
    mu: float = float("nan")
    labeled_ratio: float = float("nan")
    n_features: int = 0
    seed: int | str = 0
    iterations: float = 0
    runtime_ms: float = float("nan")
    excluded: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def evaluate(scores, predictions, truth) -> dict:
    """All four metrics plus how many instances each one skipped."""
    T = np.asarray(truth) > 0
    n_rel = T.sum(axis=1)
    return {
        "ap": average_precision(scores, truth),
        "maf": macro_f1(predictions, truth),
        "rl": ranking_loss(scores, truth),
        "oe": one_error(scores, truth),
        "excluded": {
            "ap": int((n_rel == 0).sum()),
            "oe": int((n_rel == 0).sum()),
            "rl": int(((n_rel == 0) | (n_rel == T.shape[1])).sum()),
        },
    }
