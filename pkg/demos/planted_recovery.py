"""Fit on planted data and see how many informative features reach the top of the ranking."""

import numpy as np

from accessmfs import (Dataset, Hyperparameters, SplitSpec, apply_split, fit, make_planted,
                       make_split, select_features, standardize)

for seed in range(1, 6):
    p = make_planted(seed=seed)
    data = Dataset(standardize(p.features), p.labels, np.ones(p.labels.shape[0], bool))
    data = apply_split(data, make_split(data, SplitSpec(0.3, 1.0, seed)))
    res = fit(data, Hyperparameters(seed=seed))
    top = select_features(res.ranking, 15)
    found = len(set(top.tolist()) & set(p.informative.tolist()))
    print(f"seed {seed}: {found}/10 informative features in the top 15 "
          f"({res.trace.iterations_run} iterations)")
