"""End-to-end protocol for one (dataset, hyperparameters, ratio, seed) cell."""

from __future__ import annotations

import hashlib
import time
from dataclasses import replace

import numpy as np

from .core import Dataset, Hyperparameters
from .data import SplitSpec, apply_split, make_split
from .evaluation import EvaluationReport, evaluate, mlknn_predict, mlknn_train
from .solver import Variant, fit, select_features

BASELINE = "all_features"


def split_digest(split) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(split.labeled, dtype=np.int64).tobytes())
    h.update(b"|")
    h.update(np.asarray(split.test, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


def score_subset(data: Dataset, split, features, mlknn_k=10, smoothing=1.0) -> dict:
    """Train ML-KNN on the labeled training instances restricted to ``features``; score the test set."""
    X = data.features[np.asarray(features)]
    model = mlknn_train(X[:, split.labeled], data.labels[split.labeled], mlknn_k, smoothing)
    scores, preds = mlknn_predict(model, X[:, split.test])
    return evaluate(scores, preds, data.labels[split.test])


def run_cell(data: Dataset, hp: Hyperparameters, variant, labeled_ratio: float, seed: int,
             feature_counts, mlknn_k: int = 10, smoothing: float = 1.0):
    """Fit once and evaluate every requested feature count.

    ``variant`` may be :data:`BASELINE`, which skips selection and scores all
    features. Returns ``(reports, fit_result_or_None, split)``.
    """
    split = make_split(data, SplitSpec(labeled_ratio, 1.0, seed))
    meta = {"split": split_digest(split), "n_labeled": int(split.labeled.size),
            "n_test": int(split.test.size)}
    if variant == BASELINE:
        t0 = time.perf_counter()
        res = score_subset(data, split, np.arange(data.n_features), mlknn_k, smoothing)
        ms = 1e3 * (time.perf_counter() - t0)
        return [_report(res, data, hp, BASELINE, labeled_ratio, data.n_features, seed, 0, ms,
                        meta)], None, split
    variant = Variant.parse(variant)
    hp = replace(hp, seed=seed)
    t0 = time.perf_counter()
    result = fit(apply_split(data, split), hp, variant)
    fit_ms = 1e3 * (time.perf_counter() - t0)
    meta = {**meta, "trace": result.trace.to_dict()}
    reports = []
    for k in feature_counts:
        sel = select_features(result.ranking, int(k))
        res = score_subset(data, split, sel, mlknn_k, smoothing)
        reports.append(_report(res, data, hp, variant.value, labeled_ratio, int(k), seed,
                               result.trace.iterations_run, fit_ms,
                               {**meta, "selected": sel.tolist()}))
    return reports, result, split


def _report(res, data, hp, variant, ratio, k, seed, iters, ms, extra):
    return EvaluationReport(ap=res["ap"], maf=res["maf"], rl=res["rl"], oe=res["oe"],
                            dataset=data.name, variant=variant, lam=hp.lam, theta=hp.theta,
                            mu=hp.mu, labeled_ratio=ratio, n_features=k, seed=seed,
                            iterations=iters, runtime_ms=ms, excluded=res["excluded"],
                            extra=dict(extra))


def mean_reports(cells) -> list[EvaluationReport]:
    """Average per-seed cells that share every other key; seed becomes ``"mean"``."""
    groups: dict = {}
    for c in cells:
        if isinstance(c.seed, str):
            continue
        key = (c.dataset, c.variant, c.lam, c.theta, c.mu, c.labeled_ratio, c.n_features)
        groups.setdefault(key, []).append(c)
    out = []
    for key, group in groups.items():
        group = sorted(group, key=lambda c: c.seed)
        avg = {m: float(np.mean([getattr(c, m) for c in group]))
               for m in ("ap", "maf", "rl", "oe", "iterations", "runtime_ms")}
        out.append(EvaluationReport(dataset=key[0], variant=key[1], lam=key[2], theta=key[3],
                                    mu=key[4], labeled_ratio=key[5], n_features=key[6],
                                    seed="mean", **avg,
                                    extra={"seeds": [c.seed for c in group]}))
    return out
