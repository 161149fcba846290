import warnings
from dataclasses import replace

import numpy as np
import pytest

from accessmfs import graphs, labels, projection
from accessmfs.core import (Dataset, Hyperparameters, ModelState, RowRegularizer,
                            laplacian)
from accessmfs.solver import (ConvergenceTrace, FeatureRanking, Variant, _Workspace,
                              compute_b, first_increase, fit, initialize, objective,
                              objective_terms, outer_step, select_features)
from conftest import random_dataset, random_stochastic


def test_compute_b_examples(rng):
    X = rng.standard_normal((4, 6))
    assert np.array_equal(compute_b(np.zeros((6, 2)), np.zeros((4, 2)), X), np.zeros(2))
    Xc = X - X.mean(axis=1, keepdims=True)
    assert np.abs(compute_b(np.zeros((6, 2)), rng.standard_normal((4, 2)), Xc)).max() < 1e-14


def test_compute_b_finite_difference(rng):
    X, W, F = rng.standard_normal((4, 7)), rng.standard_normal((4, 3)), rng.standard_normal((7, 3))
    b = compute_b(F, W, X)

    def first_term(bb):
        return np.sum((X.T @ W + np.outer(np.ones(7), bb) - F) ** 2)

    base = first_term(b)
    for j in range(3):
        for step in (1e-6, -1e-6):
            e = np.zeros(3)
            e[j] = step
            assert first_term(b + e) > base


def _state(rng, data, k_s=3, k_p=2):
    d, n, c = data.n_features, data.n_instances, data.n_labels
    S = random_stochastic(rng, n, k=k_s)
    P = random_stochastic(rng, c, k=k_p)
    W = rng.standard_normal((d, c))
    F = rng.standard_normal((n, c))
    regs = RowRegularizer(rng.random(n), rng.random(c))
    return ModelState(W, compute_b(F, W, data.features), F, S, P,
                      projection.update_D(W, 1e-8), regs=regs)


def test_objective_zero_state():
    n, d, c = 5, 3, 2
    data = Dataset(np.zeros((d, n)), np.zeros((n, c)), [True, False, True, False, False])
    st = ModelState(np.zeros((d, c)), np.zeros(c), np.zeros((n, c)),
                    random_stochastic(np.random.default_rng(0), n),
                    np.array([[0, 1.0], [1.0, 0]]), np.eye(d),
                    regs=RowRegularizer(np.zeros(n), np.zeros(c)))
    assert objective(st, data, Hyperparameters()) == 0.0
    W = np.zeros((d, 2))
    W[0] = [3, 4]
    st = replace(st, W=W)
    terms = objective_terms(st, data, Hyperparameters(lam=0.3))
    assert terms["l21"] == pytest.approx(1.5, abs=1e-15)
    assert terms["fit"] == 0.0


def test_objective_scalar_oracle(rng):
    data = random_dataset(rng, d=5, n=9, c=3)
    st = _state(rng, data)
    hp = Hyperparameters(lam=0.7, theta=1.3, mu=0.4)
    X, W, F, S, P = data.features, st.W, st.F, st.S, st.P
    n, c = F.shape
    proj = [W.T @ X[:, i] for i in range(n)]
    fbar = sum(proj[i] - F[i] for i in range(n)) / n
    fit_term = sum(np.sum((proj[i] - F[i] - fbar) ** 2) for i in range(n))
    l21 = sum(np.sqrt(np.sum(W[i] ** 2)) for i in range(W.shape[0]))
    lab = sum(np.sum((F[i] - data.labels[i]) ** 2) for i in range(n) if data.labeled_mask[i])
    inst = 0.0
    for i in range(n):
        for j in range(n):
            inst += 0.5 * S[i, j] * (np.sum((F[i] - F[j]) ** 2) + np.sum((proj[i] - proj[j]) ** 2))
        inst += st.regs.alpha_rows[i] * np.sum(S[i] ** 2)
    lab_g = 0.0
    for i in range(c):
        for j in range(c):
            lab_g += 0.5 * P[i, j] * np.sum((F[:, i] - F[:, j]) ** 2)
        lab_g += st.regs.beta_rows[i] * np.sum(P[i] ** 2)
    ref = fit_term + hp.lam * l21 + lab + hp.theta * inst + hp.mu * lab_g
    assert objective(st, data, hp) == pytest.approx(ref, rel=1e-8)


def test_objective_variants_drop_terms(rng):
    data = random_dataset(rng, d=5, n=9, c=3)
    st = _state(rng, data)
    hp = Hyperparameters()
    t1 = objective_terms(st, data, hp, variant="1")
    t2 = objective_terms(st, data, hp, variant="2")
    t3 = objective_terms(st, data, hp, variant="3")
    assert t1["label_graph"] == 0 and t1["instance_graph"] > 0
    assert t2["instance_graph"] == 0 and t2["label_graph"] > 0
    assert t3["label_graph"] == 0 and t3["instance_graph"] == 0


def _check_rows(G, k):
    assert G.min() >= 0
    assert np.all(np.diag(G) == 0)
    assert np.abs(G.sum(axis=1) - 1).max() < 1e-10
    assert np.all((G != 0).sum(axis=1) <= k)


def test_initialize(rng):
    data = random_dataset(rng)
    hp = Hyperparameters(k_s=4, k_p=2, seed=7)
    a, b = initialize(data, hp), initialize(data, hp)
    for f in ("W", "F", "S", "P", "D", "b"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert np.array_equal(a.F[data.labeled_mask], data.labels[data.labeled_mask])
    assert np.all(a.F[~data.labeled_mask] == 0)
    assert np.abs(a.W.T @ a.W - np.eye(data.n_labels)).max() < 1e-12
    _check_rows(a.S, 4)
    _check_rows(a.P, 2)
    assert np.allclose(np.diag(a.D), 1 / (2 * np.sqrt((a.W**2).sum(axis=1) + 1e-8)), rtol=1e-14)


def test_select_features():
    r = FeatureRanking.from_W(np.array([[0.1], [0.9], [0.5]]))
    assert select_features(r, 2).tolist() == [1, 2]
    assert sorted(select_features(r, 3).tolist()) == [0, 1, 2]
    with pytest.raises(ValueError):
        select_features(r, 0)
    with pytest.raises(ValueError):
        select_features(r, 4)
    tied = FeatureRanking.from_W(np.array([[1.0], [2.0], [1.0], [2.0]]))
    assert tied.order.tolist() == [1, 3, 0, 2]


def test_ranking_scale_invariant(rng):
    W = rng.standard_normal((20, 3))
    base = FeatureRanking.from_W(W).order
    for g in (1e-3, 0.5, 7.0, 1e4):
        assert np.array_equal(FeatureRanking.from_W(g * W).order, base)


def test_first_increase():
    assert first_increase([3.0, 2.0, 2.0, 1.0]) is None
    assert first_increase([3.0, 2.0, 2.5, 1.0]) == 2
    assert first_increase([1.0, 1.0 + 1e-12]) is None
    tr = ConvergenceTrace(objective_values=[2.0, 1.0, 1.5])
    assert not tr.is_monotone()


def test_fit_blocks_and_constraint(rng):
    data = random_dataset(rng, d=15, n=40, c=4)
    hp = Hyperparameters(k_s=4, k_p=2, seed=3)
    state = initialize(data, hp)
    ws = _Workspace(data)
    for _ in range(6):
        prev = state
        state, info = outer_step(state, data, hp, "full", ws)
        up = info["w_update"]
        assert up.constraint_residual <= 1e-6
        assert np.linalg.norm(state.W.T @ up.R @ state.W - np.eye(4)) <= 1e-6
        # F block: exact minimizer, so never worse than the previous F on the same system
        sysF = info["system"]
        assert labels.f_objective(sysF, state.F) <= labels.f_objective(sysF, prev.F) + 1e-9
        # S and P blocks: per-row optimal for the regularizers they return
        cost_s = graphs.instance_cost(data.features, state.W, state.F)
        new_pen = graphs.graph_penalty(cost_s, state.S, state.regs.alpha_rows)
        old_pen = graphs.graph_penalty(cost_s, prev.S, state.regs.alpha_rows)
        assert np.all(new_pen <= old_pen + 1e-10)
        cost_p = graphs.label_cost(state.F)
        assert np.all(graphs.graph_penalty(cost_p, state.P, state.regs.beta_rows)
                      <= graphs.graph_penalty(cost_p, prev.P, state.regs.beta_rows) + 1e-10)
        _check_rows(state.S, 4)
        _check_rows(state.P, 2)


def test_variants_freeze_graphs(rng):
    data = random_dataset(rng, d=12, n=30, c=4)
    hp = Hyperparameters(k_s=4, k_p=2, max_outer_iters=4)
    init = initialize(data, hp)
    r3 = fit(data, hp, Variant.NO_GRAPHS)
    assert np.array_equal(r3.state.S, init.S) and np.array_equal(r3.state.P, init.P)
    r2 = fit(data, hp, "variant2")
    assert np.array_equal(r2.state.S, init.S) and not np.array_equal(r2.state.P, init.P)
    r1 = fit(data, hp, "variant1")
    assert np.array_equal(r1.state.P, init.P) and not np.array_equal(r1.state.S, init.S)
    for r in (r1, r2, r3):
        assert max(r.trace.constraint_residuals) <= 1e-6


def test_variant_parse():
    assert Variant.parse("3") is Variant.NO_GRAPHS
    assert Variant.parse("variant1_instance_graph_only") is Variant.INSTANCE_ONLY
    with pytest.raises(ValueError):
        Variant.parse("variant9")


def test_fit_deterministic_and_label_permutation(rng):
    data = random_dataset(rng, d=20, n=40, c=4)
    hp = Hyperparameters(k_s=4, k_p=2, seed=11, max_outer_iters=8)
    a, b = fit(data, hp), fit(data, hp)
    assert np.array_equal(a.ranking.order, b.ranking.order)
    assert a.trace.objective_values == b.trace.objective_values
    perm = np.array([2, 0, 3, 1])
    pdata = Dataset(data.features, data.labels[:, perm], data.labeled_mask)
    c = fit(pdata, hp)
    assert set(select_features(a.ranking, 5)) == set(select_features(c.ranking, 5))


def test_fit_single_label():
    rng = np.random.default_rng(4)
    data = random_dataset(rng, d=8, n=20, c=1)
    res = fit(data, Hyperparameters(k_s=3, max_outer_iters=5), "variant1")
    assert res.state.W.shape == (8, 1)
    assert max(res.trace.constraint_residuals) <= 1e-6
