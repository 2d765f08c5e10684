"""Certified unlearning: Newton update, residual bounds, budget accounting.

A removal request is processed as: mutate the graph, update the embeddings
incrementally, then per binary task take one Newton step
``w- = w + H^{-1} (grad_pre - grad_post)`` where both gradients are of the
unperturbed loss and H is the post-removal Hessian at the current weights.
Each task accumulates the data-dependent unlearning term; once
``beta + 2*c1*||1^T R||`` exceeds the privacy budget
``alpha * eps / sqrt(2 * ln(1.5/delta))`` for any task, all tasks retrain
on the current approximate embeddings (fresh noise, no re-propagation).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import models, oracle
from .errors import ConfigError
from .graph import Graph
from .models import LossSpec, OneVsAllModel
from .propagation import (
    PropagationState,
    adjust_edge_removal,
    adjust_feature_removal,
    adjust_node_removal,
    apply_batch_removal,
    apply_edge_removal,
    apply_feature_removal,
    apply_node_removal,
    basic_prop,
    init_propagation,
    materialize_embeddings,
)

__all__ = [
    "EdgeRemoval",
    "NodeRemoval",
    "FeatureRemoval",
    "BatchRemoval",
    "UnlearnStep",
    "BudgetLedger",
    "StepReport",
    "newton_update",
    "worst_case_bound",
    "data_dependent_bound",
    "privacy_budget",
    "spectral_norm",
    "UnlearnEngine",
    "RetrainBaseline",
    "normalize_feature_rows",
]


# -- removal requests -------------------------------------------------------


@dataclass(frozen=True)
class EdgeRemoval:
    u: int
    v: int
    kind = "edge"


@dataclass(frozen=True)
class NodeRemoval:
    u: int
    kind = "node"


@dataclass(frozen=True)
class FeatureRemoval:
    u: int
    kind = "feature"


@dataclass(frozen=True)
class BatchRemoval:
    items: tuple
    kind = "batch"


# -- bounds -----------------------------------------------------------------


def spectral_norm(M: np.ndarray, max_iter: int = 100, tol: float = 1e-6) -> float:
    """Largest singular value by power iteration on M^T M (deterministic start)."""
    if M.size == 0:
        return 0.0
    F = M.shape[1]
    v = np.full(F, 1.0 / math.sqrt(F))
    s_prev = 0.0
    s = 0.0
    for _ in range(max_iter):
        w = M.T @ (M @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        s = float(np.linalg.norm(M @ v))
        if abs(s - s_prev) <= tol * max(s, 1e-300):
            break
        s_prev = s
    return s


def privacy_budget(alpha: float, eps: float, delta: float) -> float:
    """alpha * eps / sqrt(2 * ln(1.5/delta)); the residual norm the noise can mask."""
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    if eps <= 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    if not (0 < delta < 1.5):
        raise ConfigError(f"delta must be in (0, 1.5), got {delta}")
    return alpha * eps / math.sqrt(2.0 * math.log(1.5 / delta))


def worst_case_bound(kind: str, spec: LossSpec, n_features: int, n_train: int,
                     eps1: float, deg_u: float | None = None, deg_v: float | None = None,
                     neighbor_degs=None) -> float:
    """Closed-form a-priori residual bound for one removal.

    ``n_train`` is the post-removal training-set size, which covers both
    the removed-node-was-training and was-not-training cases.  Degrees
    follow the per-removal embedding-perturbation analysis: post-removal
    endpoint degrees for an edge, the removed node's pre-removal degree
    plus its neighbors' post-removal degrees for a node.
    """
    if n_train < 1:
        raise ConfigError(f"worst-case bound undefined for training size {n_train}")
    c, c1, g1, lam = spec.c, spec.c1, spec.gamma1, spec.lam
    F = n_features
    lead = c * g1 * F / lam + c1 * math.sqrt(F * n_train)
    if kind == "feature":
        if deg_u is None:
            raise ConfigError("feature bound needs the node degree")
        return lead * (eps1 + (8.0 * g1 * F / (lam * n_train)) * math.sqrt(deg_u))
    if kind == "edge":
        if deg_u is None or deg_v is None:
            raise ConfigError("edge bound needs both endpoint degrees")
        pert = 4.0 / math.sqrt(deg_u) + 4.0 / math.sqrt(deg_v)
    elif kind == "node":
        if deg_u is None or neighbor_degs is None:
            raise ConfigError("node bound needs the removed degree and neighbor degrees")
        pert = 4.0 * math.sqrt(deg_u) + sum(4.0 / math.sqrt(dw) for dw in neighbor_degs)
    elif kind == "batch":
        # App-A.2 style Minkowski aggregation: per-item perturbations add up.
        pert = float(deg_u) if deg_u is not None else 0.0
    else:
        raise ConfigError(f"unknown removal kind {kind!r}")
    head = 4.0 * c * g1 * F / (lam * n_train)
    return head + lead * (eps1 + (2.0 * g1 * F / (lam * n_train)) * (2.0 * eps1 + pert))


@dataclass
class UnlearnStep:
    """One task's Newton-step ingredients and its bound terms."""

    delta: np.ndarray  # grad_pre - grad_post, unperturbed losses
    hess: np.ndarray  # post-removal Hessian at the pre-update weights
    direction: np.ndarray  # H^{-1} delta
    data_term1: float  # 2 * c1 * ||1^T R||
    data_term2: float  # gamma2 * ||Z'|| * ||H^{-1}d|| * ||Z' H^{-1}d||


def data_dependent_bound(step: UnlearnStep) -> float:
    return step.data_term1 + step.data_term2


def _unlearn_step(w, grad_pre, Z_new, y_pm, mask_new, spec, resid_sums,
                  z_spec_norm=None) -> UnlearnStep:
    grad_post = models.gradient(w, Z_new, y_pm, mask_new, spec)
    delta = grad_pre - grad_post
    H = models.hessian(w, Z_new, mask_new, spec)
    direction = models.solve_spd(H, delta)
    Zt = Z_new[np.asarray(mask_new, dtype=bool)]
    if z_spec_norm is None:
        z_spec_norm = spectral_norm(Zt)
    term1 = 2.0 * spec.c1 * float(np.linalg.norm(np.asarray(resid_sums)))
    term2 = spec.gamma2 * z_spec_norm * float(np.linalg.norm(direction)) \
        * float(np.linalg.norm(Zt @ direction))
    return UnlearnStep(delta=delta, hess=H, direction=direction,
                       data_term1=term1, data_term2=term2)


def newton_update(w_star, Z_old, Z_new, y_pm, mask_old, mask_new, spec: LossSpec,
                  resid_sums=None, grad_pre=None):
    """One-step correction toward the post-removal optimum.

    ``grad_pre`` (the unperturbed gradient on the pre-removal data) may be
    supplied from a cache; otherwise it is computed from ``Z_old``/``mask_old``.
    Returns the updated weights and the step record.
    """
    if grad_pre is None:
        grad_pre = models.gradient(w_star, Z_old, y_pm, mask_old, spec)
    if resid_sums is None:
        resid_sums = np.zeros(Z_new.shape[1])
    step = _unlearn_step(w_star, grad_pre, Z_new, y_pm, mask_new, spec, resid_sums)
    return w_star + step.direction, step


# -- ledger and reports -------------------------------------------------------


@dataclass
class BudgetLedger:
    """Accumulated unlearning error per task against the privacy budget."""

    alpha: float
    eps: float
    delta: float
    budget: float
    beta: np.ndarray  # (K,) accumulated data_term2 per task
    retrains: int = 0

    @staticmethod
    def create(alpha, eps, delta, n_tasks) -> "BudgetLedger":
        return BudgetLedger(alpha=alpha, eps=eps, delta=delta,
                            budget=privacy_budget(alpha, eps, delta),
                            beta=np.zeros(n_tasks))

    def exceeded(self, term1: float) -> bool:
        return bool((self.beta + term1 > self.budget).any())


@dataclass
class StepReport:
    """Per-request record mirroring the JSON-lines report schema."""

    kind: str
    total_ms: float = 0.0
    prop_ms: float = 0.0
    retrained: bool = False
    bound_data: float = 0.0  # max over tasks
    bound_worst: float = 0.0
    term1: float = 0.0
    term2_max: float = 0.0
    push_events: int = 0
    prop_ops: int = 0
    residual_true: Optional[float] = None  # max over tasks, oracle-backed
    per_class: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "total_ms": self.total_ms,
            "prop_ms": self.prop_ms,
            "retrained": self.retrained,
            "bound_data": self.bound_data,
            "bound_worst": self.bound_worst,
            "term1": self.term1,
            "term2_max": self.term2_max,
            "push_events": self.push_events,
            "prop_ops": self.prop_ops,
            "per_class": self.per_class,
        }
        if self.residual_true is not None:
            out["residual_true"] = self.residual_true
        return out


# -- engine -------------------------------------------------------------------


def normalize_feature_rows(X: np.ndarray) -> np.ndarray:
    """Divide all rows by the maximum row 2-norm (no-op on an all-zero matrix)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    max_norm = float(np.linalg.norm(X, axis=1).max(initial=0.0))
    return X / max_norm if max_norm > 0 else X.copy()


class UnlearnEngine:
    """Holds graph, propagation state, one-vs-all models, and the ledger."""

    def __init__(self, g: Graph, L: int, weights, rmax: float, spec: LossSpec,
                 alpha: float, eps: float, delta: float, seed: int,
                 tol: float | None = None, n_threads: int = 1):
        if g.features is None:
            raise ConfigError("engine needs a graph with features/labels/masks")
        self.graph = g
        self.spec = spec
        self.L = L
        self.rmax = rmax
        self.tol = tol
        self.n_threads = n_threads
        self._rng = np.random.default_rng(seed)

        X_scaled = normalize_feature_rows(g.features.X)
        self.state: PropagationState = init_propagation(g, X_scaled, L, weights, rmax)
        emb = materialize_embeddings(self.state, g)
        self.model: OneVsAllModel = models.train(
            emb.Z, g.features.y, g.features.train_mask, spec, alpha, seed,
            tol=tol, n_threads=n_threads)
        self.ledger = BudgetLedger.create(alpha, eps, delta, self.model.n_classes)
        self._grad_pre = self._unperturbed_gradients(emb.Z)

    @classmethod
    def from_trained(cls, g: Graph, state: PropagationState, model: OneVsAllModel,
                     eps: float, delta: float, tol: float | None = None,
                     n_threads: int = 1):
        """Resume from persisted train artifacts instead of training again.

        The ledger starts fresh (beta = 0); alpha and the loss come from the
        model file.
        """
        if g.features is None:
            raise ConfigError("engine needs a graph with features/labels/masks")
        engine = cls.__new__(cls)
        engine.graph = g
        engine.spec = model.spec
        engine.L = state.L
        engine.rmax = state.rmax
        engine.tol = tol
        engine.n_threads = n_threads
        engine._rng = np.random.default_rng(model.seed + 1)
        engine.state = state
        engine.model = model
        engine.ledger = BudgetLedger.create(model.alpha, eps, delta, model.n_classes)
        engine._grad_pre = engine._unperturbed_gradients(
            materialize_embeddings(state, g).Z)
        return engine

    # -- helpers ----------------------------------------------------------

    def _task_labels(self, k: int) -> np.ndarray:
        return self.model.binary_labels(self.graph.features.y, k)

    def _unperturbed_gradients(self, Z) -> np.ndarray:
        mask = self.graph.features.train_mask
        return np.stack([
            models.gradient(self.model.W[k], Z, self._task_labels(k), mask, self.spec)
            for k in range(self.model.n_classes)
        ])

    def embeddings(self):
        return materialize_embeddings(self.state, self.graph)

    def accuracy(self, which: str = "test") -> float:
        feats = self.graph.features
        mask = {"train": feats.train_mask, "val": feats.val_mask,
                "test": feats.test_mask}[which]
        return models.accuracy(self.model, self.embeddings().Z, feats.y, mask)

    def eps1(self) -> float:
        return math.sqrt(self.graph.n) * self.L * self.rmax

    # -- request processing -------------------------------------------------

    def _mutate_and_propagate(self, req):
        """Apply one request to graph+state; returns (kind, worst_bound_args)."""
        g, st = self.graph, self.state
        if isinstance(req, EdgeRemoval):
            delta = g.remove_edge(req.u, req.v)
            t0 = time.perf_counter()
            apply_edge_removal(st, g, delta)
            dt = time.perf_counter() - t0
            return "edge", dt, dict(deg_u=g.degree(req.u), deg_v=g.degree(req.v))
        if isinstance(req, NodeRemoval):
            deltas = g.remove_node(req.u)
            pre_deg = deltas[-1].old_deg_u + len(deltas) - 1
            nbr_degs = [dl.old_deg_v - 1 for dl in deltas if not dl.is_self_loop]
            t0 = time.perf_counter()
            apply_node_removal(st, g, req.u, deltas)
            dt = time.perf_counter() - t0
            return "node", dt, dict(deg_u=pre_deg, neighbor_degs=nbr_degs)
        if isinstance(req, FeatureRemoval):
            deg = g.degree(req.u)
            g.zero_feature(req.u)
            t0 = time.perf_counter()
            apply_feature_removal(st, g, req.u)
            dt = time.perf_counter() - t0
            return "feature", dt, dict(deg_u=deg)
        raise ConfigError(f"unsupported request {req!r}")

    def _mutate_and_propagate_batch(self, items):
        g, st = self.graph, self.state
        pert = 0.0
        if all(isinstance(it, EdgeRemoval) for it in items):
            deltas = [g.remove_edge(it.u, it.v) for it in items]
            t0 = time.perf_counter()
            apply_batch_removal(st, g, deltas)
            dt = time.perf_counter() - t0
            for dl in deltas:
                pert += 4.0 / math.sqrt(g.degree(dl.u)) + 4.0 / math.sqrt(g.degree(dl.v))
            return dt, pert
        # mixed batch: per-item residue adjustments, one deferred push
        t_prop = 0.0
        for it in items:
            if isinstance(it, EdgeRemoval):
                delta = g.remove_edge(it.u, it.v)
                t0 = time.perf_counter()
                adjust_edge_removal(st, g, delta)
                t_prop += time.perf_counter() - t0
                pert += 4.0 / math.sqrt(g.degree(it.u)) + 4.0 / math.sqrt(g.degree(it.v))
            elif isinstance(it, NodeRemoval):
                deltas = g.remove_node(it.u)
                pre_deg = deltas[-1].old_deg_u + len(deltas) - 1
                t0 = time.perf_counter()
                adjust_node_removal(st, g, it.u, deltas)
                t_prop += time.perf_counter() - t0
                pert += 4.0 * math.sqrt(pre_deg) + sum(
                    4.0 / math.sqrt(dl.old_deg_v - 1)
                    for dl in deltas if not dl.is_self_loop)
            elif isinstance(it, FeatureRemoval):
                deg = g.degree(it.u)
                g.zero_feature(it.u)
                t0 = time.perf_counter()
                adjust_feature_removal(st, g, it.u)
                t_prop += time.perf_counter() - t0
                pert += math.sqrt(deg)
            else:
                raise ConfigError(f"unsupported batch item {it!r}")
        t0 = time.perf_counter()
        basic_prop(st, g)
        t_prop += time.perf_counter() - t0
        return t_prop, pert

    def _finish_request(self, report: StepReport, worst_args, oracle_check: bool,
                        t_start: float) -> StepReport:
        """Shared Newton/guard/retrain tail of process_request and batch_request."""
        g, spec = self.graph, self.spec
        feats = g.features
        mask = feats.train_mask
        n_t = feats.n_train
        emb = self.embeddings()
        try:
            report.bound_worst = worst_case_bound(
                report.kind, spec, self.state.F, n_t, self.eps1(), **worst_args)
        except ConfigError:
            report.bound_worst = float("inf")

        Zt = emb.Z[mask]
        z_norm = spectral_norm(Zt)
        K = self.model.n_classes

        def make_step(k):
            return _unlearn_step(self.model.W[k], self._grad_pre[k], emb.Z,
                                 self._task_labels(k), mask, spec,
                                 emb.residual_sums, z_spec_norm=z_norm)

        if self.n_threads > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=self.n_threads) as pool:
                steps = list(pool.map(make_step, range(K)))
        else:
            steps = [make_step(k) for k in range(K)]

        report.term1 = steps[0].data_term1
        report.term2_max = max(s.data_term2 for s in steps)
        report.bound_data = max(data_dependent_bound(s) for s in steps)
        self.ledger.beta += np.array([s.data_term2 for s in steps])

        residuals = None
        if oracle_check:
            Z_exact = oracle.exact_embeddings(g, self.state.signal, self.L,
                                              self.state.weights)
            residuals = []
            for k, s in enumerate(steps):
                w_cand = self.model.W[k] + s.direction
                grad = models.gradient(w_cand, Z_exact, self._task_labels(k), mask, spec)
                residuals.append(float(np.linalg.norm(grad)))
            report.residual_true = max(residuals)

        if self.ledger.exceeded(report.term1):
            report.retrained = True
            retrain_seed = int(self._rng.integers(0, 2**62))
            self.model = models.train(emb.Z, feats.y, mask, spec, self.ledger.alpha,
                                      retrain_seed, tol=self.tol,
                                      classes=self.model.classes,
                                      n_threads=self.n_threads)
            self.ledger.beta[:] = 0.0
            self.ledger.retrains += 1
        else:
            for k, s in enumerate(steps):
                self.model.W[k] = self.model.W[k] + s.direction
        self._grad_pre = self._unperturbed_gradients(emb.Z)

        report.per_class = [
            {
                "class": int(self.model.classes[k]),
                "term2": steps[k].data_term2,
                "bound_data": data_dependent_bound(steps[k]),
                **({"residual_true": residuals[k]} if residuals is not None else {}),
            }
            for k in range(K)
        ]
        report.total_ms = (time.perf_counter() - t_start) * 1e3
        return report

    def process_request(self, req, oracle_check: bool = False) -> StepReport:
        if isinstance(req, BatchRemoval):
            return self.batch_request(list(req.items), oracle_check=oracle_check)
        t_start = time.perf_counter()
        ops0, pushes0 = self.state.op_count, self.state.push_events
        kind, t_prop, worst_args = self._mutate_and_propagate(req)
        report = StepReport(kind=kind, prop_ms=t_prop * 1e3,
                            push_events=self.state.push_events - pushes0,
                            prop_ops=self.state.op_count - ops0)
        return self._finish_request(report, worst_args, oracle_check, t_start)

    def batch_request(self, reqs, oracle_check: bool = False) -> StepReport:
        t_start = time.perf_counter()
        if not reqs:
            return StepReport(kind="batch",
                              total_ms=(time.perf_counter() - t_start) * 1e3)
        ops0, pushes0 = self.state.op_count, self.state.push_events
        t_prop, pert = self._mutate_and_propagate_batch(reqs)
        report = StepReport(kind="batch", prop_ms=t_prop * 1e3,
                            push_events=self.state.push_events - pushes0,
                            prop_ops=self.state.op_count - ops0)
        return self._finish_request(report, dict(deg_u=pert), oracle_check, t_start)


class RetrainBaseline:
    """Full re-propagation + fresh training after every request.

    Used for accuracy comparison; runs in its own engine-free loop so the
    unlearning engine's timings stay uncontaminated.
    """

    def __init__(self, g: Graph, L, weights, rmax, spec, alpha, seed,
                 tol=None, n_threads: int = 1):
        if g.features is None:
            raise ConfigError("baseline needs a graph with features")
        self.graph = g
        self.L, self.weights, self.rmax = L, np.asarray(weights, float), rmax
        self.spec, self.alpha, self.tol = spec, alpha, tol
        self.n_threads = n_threads
        self._rng = np.random.default_rng(seed)
        self._row_norm = float(np.linalg.norm(g.features.X, axis=1).max(initial=0.0))
        self.model = None
        self.Z = None
        self.refit()

    def refit(self):
        X = self.graph.features.X
        Xs = X / self._row_norm if self._row_norm > 0 else X.copy()
        state = init_propagation(self.graph, Xs, self.L, self.weights, self.rmax)
        self.Z = materialize_embeddings(state, self.graph).Z
        seed = int(self._rng.integers(0, 2**62))
        self.model = models.train(self.Z, self.graph.features.y,
                                  self.graph.features.train_mask, self.spec,
                                  self.alpha, seed, tol=self.tol,
                                  n_threads=self.n_threads)

    def process_request(self, req):
        g = self.graph
        items = list(req.items) if isinstance(req, BatchRemoval) else [req]
        for it in items:
            if isinstance(it, EdgeRemoval):
                g.remove_edge(it.u, it.v)
            elif isinstance(it, NodeRemoval):
                g.remove_node(it.u)
            elif isinstance(it, FeatureRemoval):
                g.zero_feature(it.u)
            else:
                raise ConfigError(f"unsupported request {it!r}")
        self.refit()

    def accuracy(self, which: str = "test") -> float:
        feats = self.graph.features
        mask = {"train": feats.train_mask, "val": feats.val_mask,
                "test": feats.test_mask}[which]
        return models.accuracy(self.model, self.Z, feats.y, mask)
