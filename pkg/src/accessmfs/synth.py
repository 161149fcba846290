"""Planted-structure multi-label data for desk-scale checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PlantedData:
    features: np.ndarray        # d x n
    labels: np.ndarray          # n x c, binary
    informative: np.ndarray     # indices of the informative features
    mixing: np.ndarray          # informative x c linear map
    thresholds: np.ndarray      # per-label offsets

    def label_scores(self) -> np.ndarray:
        """Noise-free linear scores; positive exactly where a label is on (zero noise)."""
        return self.features[self.informative].T @ self.mixing - self.thresholds


def make_planted(n=300, d=50, informative=10, c=5, noise=0.1, density=0.3,
                 seed=0, shuffle_features=True) -> PlantedData:
    """Labels come from a random linear map of an informative feature block plus a threshold.

    The remaining ``d - informative`` features are independent Gaussian noise.
    ``density`` sets each label's positive rate through a quantile threshold.
    """
    if not 1 <= informative <= d:
        raise ValueError("need 1 <= informative <= d")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((d, n))
    idx = (np.sort(rng.permutation(d)[:informative]) if shuffle_features
           else np.arange(informative))
    mixing = rng.standard_normal((informative, c))
    z = X[idx].T @ mixing
    if noise > 0:
        z = z + noise * z.std(axis=0) * rng.standard_normal(z.shape)
    thresholds = np.quantile(z, 1.0 - density, axis=0)
    Y = (z > thresholds).astype(float)
    # every instance gets at least one label: switch on its highest-margin label
    empty = Y.sum(axis=1) == 0
    if np.any(empty):
        top = np.argmax(z[empty] - thresholds, axis=1)
        Y[np.flatnonzero(empty), top] = 1.0
    return PlantedData(X, Y, idx, mixing, thresholds)
