from fractions import Fraction
from math import fsum

import numpy as np
import pytest

from accessmfs.core import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, d=12, n=30, c=4, labeled=0.4, name="rand"):
    X = rng.standard_normal((d, n))
    Y = (rng.random((n, c)) < 0.35).astype(float)
    Y[np.arange(n), rng.integers(0, c, n)] = 1.0
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[:max(1, int(labeled * n))]] = True
    return Dataset(X, Y, mask, name)


def random_stochastic(rng, m, k=None):
    """Row-stochastic, zero diagonal, optionally k-sparse rows."""
    A = rng.random((m, m))
    np.fill_diagonal(A, 0.0)
    if k is not None:
        for i in range(m):
            keep = rng.permutation([j for j in range(m) if j != i])[:k]
            row = np.zeros(m)
            row[keep] = A[i, keep]
            A[i] = row
    return A / A.sum(axis=1, keepdims=True)


def project_simplex_bisection(v, support):
    """Euclidean projection of v onto {s >= 0, sum s = 1, s = 0 off support} by bisection on the shift."""
    v = np.asarray(v, dtype=float)
    lo, hi = v[support].min() - 1.0, v[support].max()
    for _ in range(80):
        tau = 0.5 * (lo + hi)
        if np.maximum(v[support] - tau, 0).sum() > 1:
            lo = tau
        else:
            hi = tau
    out = np.zeros_like(v)
    out[support] = np.maximum(v[support] - 0.5 * (lo + hi), 0)
    return out


def simplex_qp_oracle(costs, reg, exclude=None, iters=2000):
    """Projected gradient on  sum_j m_j s_j + reg ||s||^2  over the simplex."""
    costs = np.asarray(costs, dtype=float)
    m = costs.size
    support = np.array([j for j in range(m) if j != exclude])
    s = np.zeros(m)
    s[support] = 1.0 / support.size
    step = 0.25 / reg
    for _ in range(iters):
        grad = costs + 2 * reg * s
        s_new = project_simplex_bisection(s - step * grad, support)
        if np.max(np.abs(s_new - s)) < 1e-14:
            s = s_new
            break
        s = s_new
    return s


def kron_sylvester_oracle(Q, Lp, C, mu):
    n, c = C.shape
    K = np.kron(np.eye(c), Q) + mu * np.kron(Lp.T, np.eye(n))
    vec = np.linalg.solve(K, C.reshape(-1, order="F"))
    return vec.reshape((n, c), order="F")


def random_orthonormal(rng, d, c):
    Q, _ = np.linalg.qr(rng.standard_normal((d, c)))
    return Q


# ---- definitional metric oracles (plain loops, ties in expectation)
# Averages use fsum, i.e. the correctly rounded sum, so the comparison can be exact.

def _position(row, y, among):
    """Expected 1-based position of y among ``among`` under a uniform tie-break."""
    pos = 1.0
    for y2 in among:
        if y2 == y:
            continue
        if row[y2] > row[y]:
            pos += 1
        elif row[y2] == row[y]:
            pos += 0.5
    return pos


def ap_oracle(S, T):
    per_inst = []
    for row, truth in zip(S.tolist(), T.tolist()):
        rel = [y for y, t in enumerate(truth) if t]
        if not rel:
            continue
        terms = [_position(row, y, rel) / _position(row, y, range(len(row))) for y in rel]
        per_inst.append(fsum(terms) / len(rel))
    return fsum(per_inst) / len(per_inst)


def rl_oracle(S, T):
    per_inst = []
    for row, truth in zip(S.tolist(), T.tolist()):
        rel = [y for y, t in enumerate(truth) if t]
        irr = [y for y, t in enumerate(truth) if not t]
        if not rel or not irr:
            continue
        bad = 0.0
        for a in rel:
            for b in irr:
                if row[a] < row[b]:
                    bad += 1
                elif row[a] == row[b]:
                    bad += 0.5
        per_inst.append(bad / (len(rel) * len(irr)))
    return fsum(per_inst) / len(per_inst)


def oe_oracle(S, T):
    per_inst = []
    for row, truth in zip(S.tolist(), T.tolist()):
        if not any(truth):
            continue
        top = [y for y, v in enumerate(row) if v == max(row)]
        per_inst.append(sum(1 for y in top if not truth[y]) / len(top))
    return fsum(per_inst) / len(per_inst)


def maf_oracle(P, T):
    f1s = []
    for j in range(T.shape[1]):
        tp = fp = fn = 0
        for i in range(T.shape[0]):
            p, t = bool(P[i, j]), bool(T[i, j])
            tp += p and t
            fp += p and not t
            fn += t and not p
        # exact rationals, rounded once
        prec = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        rec = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f1s.append(float(2 * prec * rec / (prec + rec)) if prec + rec else 0.0)
    return fsum(f1s) / len(f1s)


def random_metric_case(r):
    n, c = int(r.integers(1, 21)), int(r.integers(2, 11))
    # coarse grids produce plenty of ties; continuous draws produce none
    if r.random() < 0.5:
        S = r.integers(0, 4, (n, c)).astype(float) / 3
    else:
        S = r.random((n, c))
    T = (r.random((n, c)) < r.uniform(0.1, 0.7)).astype(int)
    T[0, int(r.integers(c))] = 1
    if c > 1 and T[0].all():
        T[0, 0] = 0
    P = (r.random((n, c)) < 0.4).astype(int)
    return S, T, P


# ---- acceptance summary: one PASS/FAIL line per criterion at the end of the run

ACCEPTANCE_LINES: list = []


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
