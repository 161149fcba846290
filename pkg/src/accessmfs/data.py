"""Dataset files, semi-supervised splits and experiment reports.

Two input formats are understood:

``dense_csv``
    One header row, then one row per instance. Feature columns come first;
    every column whose header starts with ``label:`` is a binary label and
    those columns must trail the features.

``sparse_multilabel``
    First line ``<n_instances> <n_features> <n_labels>``, then one line per
    instance: a comma-separated list of 0-based label indices (possibly
    empty) followed by ``index:value`` feature pairs, e.g. ``0,3 5:0.25 17:1``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Dataset

LABEL_PREFIX = "label:"
SCHEMA_VERSION = 1

REPORT_COLUMNS = ["dataset", "variant", "lambda", "theta", "mu", "labeled_ratio",
                  "n_features", "seed", "AP", "MaF", "RL", "OE", "iterations",
                  "runtime_ms"]
KEY_COLUMNS = REPORT_COLUMNS[:8]


class DataFormatError(ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


# ---------------------------------------------------------------- loading

def standardize(X) -> np.ndarray:
    """Z-score every feature (row); constant features become zero."""
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=1, keepdims=True)
    std = X.std(axis=1, keepdims=True)
    return (X - mean) / np.where(std > 0, std, 1.0)


def _load_dense_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError("empty file", path)
    header = rows[0]
    is_label = [h.startswith(LABEL_PREFIX) for h in header]
    if not any(is_label):
        raise DataFormatError(f"header declares no '{LABEL_PREFIX}' columns", path, 1)
    d = is_label.index(True)
    if not all(is_label[d:]) or d == 0:
        raise DataFormatError("label columns must trail at least one feature column", path, 1)
    width = len(header)
    feats, labs = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise DataFormatError(f"expected {width} fields, got {len(row)}", path, lineno)
        try:
            values = [float(v) for v in row]
        except ValueError as exc:
            raise DataFormatError(f"malformed number ({exc})", path, lineno) from None
        lab = values[d:]
        if any(v not in (0.0, 1.0) for v in lab):
            raise DataFormatError("labels must be 0 or 1", path, lineno)
        feats.append(values[:d])
        labs.append(lab)
    return np.array(feats, dtype=float).T.reshape(d, -1), np.array(labs).reshape(-1, width - d)


def _load_sparse(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError("empty file", path)
    try:
        n, d, c = (int(t) for t in lines[0].split())
    except ValueError:
        raise DataFormatError("first line must be '<n_instances> <n_features> <n_labels>'",
                              path, 1) from None
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != n:
        raise DataFormatError(f"header declares {n} instances, found {len(body)}", path)
    X = np.zeros((d, n))
    Y = np.zeros((n, c))
    for col, (lineno, line) in enumerate(body):
        tokens = line.split()
        if tokens and ":" not in tokens[0]:
            label_tok, feat_toks = tokens[0], tokens[1:]
        else:
            label_tok, feat_toks = "", tokens
        for t in filter(None, label_tok.split(",")):
            try:
                j = int(t)
            except ValueError:
                raise DataFormatError(f"bad label index {t!r}", path, lineno) from None
            if not 0 <= j < c:
                raise DataFormatError(f"label index {j} outside [0, {c})", path, lineno)
            Y[col, j] = 1.0
        for t in feat_toks:
            try:
                idx, val = t.split(":")
                i, v = int(idx), float(val)
            except ValueError:
                raise DataFormatError(f"bad feature pair {t!r}", path, lineno) from None
            if not 0 <= i < d:
                raise DataFormatError(f"feature index {i} outside [0, {d})", path, lineno)
            X[i, col] = v
    return X, Y


def load_dataset(path, format: str = "dense_csv", standardize_features: bool = False,
                 name: str | None = None) -> Dataset:
    """Read a dataset; every instance starts out labeled."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    if format == "dense_csv":
        X, Y = _load_dense_csv(path)
    elif format == "sparse_multilabel":
        X, Y = _load_sparse(path)
    else:
        raise ValueError(f"unknown format {format!r}")
    if Y.shape[0] < 2:
        raise DataFormatError("need at least two instances", path)
    if standardize_features:
        X = standardize(X)
    return Dataset(X, Y, np.ones(Y.shape[0], dtype=bool), name or path.stem)


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def write_dataset(data: Dataset, path, format: str = "dense_csv"):
    """Write ``data`` so that :func:`load_dataset` reproduces it exactly."""
    X, Y = data.features, data.labels
    d, n = X.shape
    c = Y.shape[1]
    path = Path(path)
    if format == "dense_csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"f{i}" for i in range(d)] + [f"{LABEL_PREFIX}{j}" for j in range(c)])
            for i in range(n):
                w.writerow([_fmt(v) for v in X[:, i]] + [str(int(v)) for v in Y[i]])
    elif format == "sparse_multilabel":
        with open(path, "w") as fh:
            fh.write(f"{n} {d} {c}\n")
            for i in range(n):
                labs = ",".join(str(j) for j in np.flatnonzero(Y[i]))
                feats = " ".join(f"{j}:{_fmt(X[j, i])}" for j in np.flatnonzero(X[:, i]))
                fh.write(" ".join(t for t in (labs, feats) if t) + "\n")
    else:
        raise ValueError(f"unknown format {format!r}")


# ---------------------------------------------------------------- splits

@dataclass(frozen=True)
class SplitSpec:
    """``train_fraction`` of instances form the training set; within it,
    ``labeled_ratio_within_protocol`` keep their labels. Everything else,
    test set included, is unlabeled."""

    train_fraction: float
    labeled_ratio_within_protocol: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0 < self.labeled_ratio_within_protocol <= 1:
            raise ValueError("labeled_ratio_within_protocol must lie in (0, 1]")


@dataclass(frozen=True)
class Split:
    labeled: np.ndarray
    unlabeled: np.ndarray
    test: np.ndarray

    @property
    def train(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.labeled.size + self.unlabeled.size),
                            self.test)

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[self.labeled] = True
        return m


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_split(data: Dataset | int, spec: SplitSpec) -> Split:
    n = data if isinstance(data, int) else data.n_instances
    rng = np.random.default_rng(spec.seed)
    n_train = _round_half_up(spec.train_fraction * n)
    n_lab = _round_half_up(spec.labeled_ratio_within_protocol * n_train)
    if not 1 <= n_lab <= n - 1 or n_train >= n:
        raise ValueError(f"split of {n} instances leaves {n_lab} labeled, "
                         f"{n - n_train} test instances")
    perm = rng.permutation(n)
    train, test = perm[:n_train], perm[n_train:]
    labeled = np.sort(train[:n_lab])
    unlabeled = np.sort(np.concatenate([train[n_lab:], test]))
    return Split(labeled, unlabeled, np.sort(test))


def apply_split(data: Dataset, split: Split) -> Dataset:
    return data.with_mask(split.mask(data.n_instances))


# ---------------------------------------------------------------- reports

def _seed_key(seed):
    return (0, int(seed), "") if not isinstance(seed, str) else (1, 0, seed)


def _row_key(cell):
    return (cell.dataset, cell.variant, float(cell.lam), float(cell.theta), float(cell.mu),
            float(cell.labeled_ratio), int(cell.n_features), _seed_key(cell.seed))


def _cell_row(cell, with_runtime: bool):
    runtime = _fmt(cell.runtime_ms) if with_runtime and not math.isnan(cell.runtime_ms) else ""
    return [cell.dataset, cell.variant, _fmt(cell.lam), _fmt(cell.theta), _fmt(cell.mu),
            _fmt(cell.labeled_ratio), str(int(cell.n_features)), str(cell.seed),
            _fmt(cell.ap), _fmt(cell.maf), _fmt(cell.rl), _fmt(cell.oe),
            _fmt(cell.iterations), runtime]


def report_csv_text(cells, with_runtime: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(REPORT_COLUMNS)
    for cell in sorted(cells, key=_row_key):
        w.writerow(_cell_row(cell, with_runtime))
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def write_report(cells, path, config: dict | None = None, with_runtime: bool = False,
                 extra: dict | None = None) -> Path:
    """CSV (canonical row order) plus a JSON sidecar with config and traces.

    ``runtime_ms`` is left blank in the CSV unless ``with_runtime`` is set, so
    repeated runs produce identical CSV bytes; the sidecar always records it.
    """
    path = Path(path)
    cells = sorted(cells, key=_row_key)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(report_csv_text(cells, with_runtime))
        sidecar = {
            "schema": SCHEMA_VERSION,
            "config": config or {},
            "cells": [
                {
                    "key": dict(zip(KEY_COLUMNS, _cell_row(c, False)[:8])),
                    "metrics": {"AP": c.ap, "MaF": c.maf, "RL": c.rl, "OE": c.oe},
                    "iterations": c.iterations,
                    "runtime_ms": c.runtime_ms,
                    "excluded": c.excluded,
                    **c.extra,
                }
                for c in cells
            ],
        }
        if extra:
            sidecar.update(extra)
        with open(sidecar_path(path), "w") as fh:
            json.dump(_jsonable(sidecar), fh, indent=1, sort_keys=True)
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc}") from exc
    return path


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
