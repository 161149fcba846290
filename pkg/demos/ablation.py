"""Compare the full model against the graph-free variants by ML-KNN average precision."""

import numpy as np

from accessmfs import Dataset, Hyperparameters, make_planted, run_cell, standardize
from accessmfs.solver import Variant

ap = {v: [] for v in Variant}
for seed in range(1, 11):
    p = make_planted(seed=seed)
    data = Dataset(standardize(p.features), p.labels, np.ones(p.labels.shape[0], bool))
    for v in Variant:
        reports, _, _ = run_cell(data, Hyperparameters(), v, 0.3, seed, [15])
        ap[v].append(reports[0].ap)

for v, values in ap.items():
    print(f"{v.value:32s} mean AP {np.mean(values):.4f}  (sd {np.std(values):.4f})")
