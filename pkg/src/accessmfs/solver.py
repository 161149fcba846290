"""Alternating optimization of the projection, predicted labels and both graphs."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import graphs, labels, projection
from .core import (ConfigurationError, Dataset, Hyperparameters, ModelState,
                   RowRegularizer, l21_norm, laplacian, sparse_laplacian,
                   trace_quadratic)

logger = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    FULL = "full"
    INSTANCE_ONLY = "variant1_instance_graph_only"
    LABEL_ONLY = "variant2_label_graph_only"
    NO_GRAPHS = "variant3_no_graphs"

    @property
    def uses_s(self) -> bool:
        return self in (Variant.FULL, Variant.INSTANCE_ONLY)

    @property
    def uses_p(self) -> bool:
        return self in (Variant.FULL, Variant.LABEL_ONLY)

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        aliases = {"full": cls.FULL, "1": cls.INSTANCE_ONLY, "variant1": cls.INSTANCE_ONLY,
                   "2": cls.LABEL_ONLY, "variant2": cls.LABEL_ONLY,
                   "3": cls.NO_GRAPHS, "variant3": cls.NO_GRAPHS}
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        return cls(key)


@dataclass
class ConvergenceTrace:
    objective_values: list = field(default_factory=list)
    constraint_residuals: list = field(default_factory=list)
    iteration_seconds: list = field(default_factory=list)
    w_inner_iterations: list = field(default_factory=list)
    degenerate_rows: int = 0
    iterations_run: int = 0
    converged: bool = False

    def is_monotone(self, rtol: float = 1e-9) -> bool:
        return first_increase(self.objective_values, rtol) is None

    def to_dict(self) -> dict:
        return {
            "objective_values": [float(v) for v in self.objective_values],
            "constraint_residuals": [float(v) for v in self.constraint_residuals],
            "iteration_seconds": [float(v) for v in self.iteration_seconds],
            "w_inner_iterations": list(self.w_inner_iterations),
            "degenerate_rows": self.degenerate_rows,
            "iterations_run": self.iterations_run,
            "converged": self.converged,
        }


def first_increase(values, rtol: float = 1e-9):
    """Index of the first entry exceeding its predecessor beyond ``rtol`` slack."""
    for t in range(1, len(values)):
        prev, cur = values[t - 1], values[t]
        if cur > prev + rtol * max(abs(prev), 1.0):
            return t
    return None


@dataclass(frozen=True)
class FeatureRanking:
    scores: np.ndarray
    order: np.ndarray

    @classmethod
    def from_W(cls, W) -> "FeatureRanking":
        scores = np.sqrt((np.asarray(W, dtype=float) ** 2).sum(axis=1))
        # lexsort: last key is primary -> descending score, then ascending index
        order = np.lexsort((np.arange(scores.size), -scores))
        return cls(scores, order)


class FitResult(NamedTuple):
    state: ModelState
    trace: ConvergenceTrace
    ranking: FeatureRanking


def select_features(ranking: FeatureRanking, k: int) -> np.ndarray:
    d = ranking.order.size
    if not 1 <= k <= d:
        raise ValueError(f"k={k} must lie in [1, {d}]")
    return ranking.order[:k].copy()


def compute_b(F, W, X) -> np.ndarray:
    """Optimal bias ``b = (F^T 1 - W^T X 1) / n``."""
    F, W, X = (np.asarray(a, dtype=float) for a in (F, W, X))
    n = F.shape[0]
    return (F.sum(axis=0) - W.T @ X.sum(axis=1)) / n


def _effective(hp: Hyperparameters, variant: Variant):
    return (hp.theta if variant.uses_s else 0.0), (hp.mu if variant.uses_p else 0.0)


def objective_terms(state: ModelState, data: Dataset, hp: Hyperparameters,
                    regs: RowRegularizer | None = None, variant=Variant.FULL) -> dict:
    """Every term of the b-eliminated objective, already weighted."""
    variant = Variant.parse(variant)
    regs = regs if regs is not None else state.regs
    X = data.features
    W, F = state.W, state.F
    n = X.shape[1]
    theta, mu = _effective(hp, variant)
    XtW = X.T @ W
    resid = XtW - F
    resid = resid - resid.mean(axis=0)
    Y = data.working_labels
    lab = (F - Y)[data.labeled_mask]
    terms = {
        "fit": float(np.sum(resid**2)),
        "l21": hp.lam * l21_norm(W),
        "labels": float(np.sum(lab**2)),
        "instance_graph": 0.0,
        "label_graph": 0.0,
    }
    if theta:
        L_s = sparse_laplacian(state.S)
        alpha = regs.alpha_rows if regs is not None else np.zeros(n)
        terms["instance_graph"] = theta * (
            trace_quadratic(F, L_s) + trace_quadratic(XtW, L_s)
            + float(np.dot(alpha, (state.S**2).sum(axis=1))))
    if mu:
        L_p = laplacian(state.P)
        beta = regs.beta_rows if regs is not None else np.zeros(F.shape[1])
        terms["label_graph"] = mu * (
            trace_quadratic(F.T, L_p) + float(np.dot(beta, (state.P**2).sum(axis=1))))
    return terms


def objective(state: ModelState, data: Dataset, hp: Hyperparameters,
              regs: RowRegularizer | None = None, variant=Variant.FULL) -> float:
    return float(sum(objective_terms(state, data, hp, regs, variant).values()))


def _random_orthonormal(rng, d: int, c: int) -> np.ndarray:
    if c > d:
        raise ConfigurationError(f"need c <= d, got c={c}, d={d}")
    Q, Rm = np.linalg.qr(rng.standard_normal((d, c)))
    return Q * np.sign(np.where(np.diag(Rm) == 0, 1.0, np.diag(Rm)))


def _check(data: Dataset, hp: Hyperparameters, variant: Variant):
    data.check_semi_supervised()
    hp.check_sizes(data.n_instances, data.n_labels,
                   need_s=True, need_p=variant.uses_p)
    if data.n_labels > data.n_features:
        raise ConfigurationError("the projection needs c <= d")


def initialize(data: Dataset, hp: Hyperparameters, variant=Variant.FULL) -> ModelState:
    """``F = Y`` (unlabeled rows zero), seeded random orthonormal ``W``, graphs from the closed forms."""
    variant = Variant.parse(variant)
    _check(data, hp, variant)
    rng = np.random.default_rng(hp.seed)
    X = data.features
    F = data.working_labels
    W = _random_orthonormal(rng, data.n_features, data.n_labels)
    s_up = graphs.update_S(graphs.instance_cost(X, W, F), hp.k_s)
    c = data.n_labels
    if c >= 2:
        p_up = graphs.update_P(graphs.label_cost(F), min(hp.k_p, c - 1))
        P, beta = p_up.weights, p_up.reg
    else:
        P, beta = np.zeros((1, 1)), np.zeros(1)
    regs = RowRegularizer(s_up.reg, beta)
    state = ModelState(W=W, b=compute_b(F, W, X), F=F, S=s_up.weights, P=P,
                       D=projection.update_D(W, hp.epsilon), regs=regs)
    return _with_objective(state, data, hp, variant)


def _with_objective(state, data, hp, variant):
    return ModelState(state.W, state.b, state.F, state.S, state.P, state.D,
                      objective(state, data, hp, state.regs, variant), state.regs)


class _Workspace:
    """Quantities fixed for the whole fit. Centering and the labeled
    indicator are applied implicitly rather than stored as n x n matrices."""

    def __init__(self, data: Dataset):
        self.X = data.features
        self.n = data.n_instances
        self.labeled = data.labeled_mask
        self.Y = data.working_labels


def outer_step(state: ModelState, data: Dataset, hp: Hyperparameters,
               variant=Variant.FULL, ws: _Workspace | None = None):
    """One sweep W -> F -> S -> P. Returns ``(state, info)``."""
    variant = Variant.parse(variant)
    ws = ws or _Workspace(data)
    theta, mu = _effective(hp, variant)
    X = ws.X
    L_s = sparse_laplacian(state.S)
    L_p = laplacian(state.P)

    w_up = projection.update_W(X, None, state.F, L_s, hp.lam, theta,
                               max_w_iters=hp.max_w_iters, epsilon=hp.epsilon,
                               tol=hp.tol_rel_obj)
    W = w_up.W

    system = labels.label_system(X, W, ws.Y, ws.labeled, L_s, L_p, theta, mu)
    F = labels.solve_F(system)

    S, alpha = state.S, state.regs.alpha_rows
    P, beta = state.P, state.regs.beta_rows
    n_deg = 0
    if variant.uses_s:
        s_up = graphs.update_S(graphs.instance_cost(X, W, F), hp.k_s)
        S, alpha = s_up.weights, s_up.reg
        n_deg += s_up.n_degenerate
    if variant.uses_p:
        p_up = graphs.update_P(graphs.label_cost(F), hp.k_p)
        P, beta = p_up.weights, p_up.reg
        n_deg += p_up.n_degenerate
    regs = RowRegularizer(alpha, beta)
    new = ModelState(W=W, b=compute_b(F, W, X), F=F, S=S, P=P, D=w_up.D, regs=regs)
    new = _with_objective(new, data, hp, variant)
    info = {"w_update": w_up, "system": system, "degenerate_rows": n_deg}
    return new, info


def fit(data: Dataset, hp: Hyperparameters | None = None, variant=Variant.FULL) -> FitResult:
    hp = hp or Hyperparameters()
    variant = Variant.parse(variant)
    state = initialize(data, hp, variant)
    ws = _Workspace(data)
    trace = ConvergenceTrace(objective_values=[state.objective])
    for it in range(1, hp.max_outer_iters + 1):
        t0 = time.perf_counter()
        state, info = outer_step(state, data, hp, variant, ws)
        trace.iteration_seconds.append(time.perf_counter() - t0)
        trace.constraint_residuals.append(info["w_update"].constraint_residual)
        trace.w_inner_iterations.append(info["w_update"].iterations)
        trace.degenerate_rows += info["degenerate_rows"]
        trace.objective_values.append(state.objective)
        trace.iterations_run = it
        prev = trace.objective_values[-2]
        if abs(prev - state.objective) < hp.tol_rel_obj * max(abs(prev), 1e-12):
            trace.converged = True
            break
    logger.info("fit %s: %d iterations, objective %.6g, converged=%s",
                variant.value, trace.iterations_run, state.objective, trace.converged)
    return FitResult(state, trace, FeatureRanking.from_W(state.W))
