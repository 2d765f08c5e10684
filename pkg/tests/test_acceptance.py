"""Acceptance suite: one test per criterion, each printing a PASS line.

Numbered criteria:
 1. reserve/residue invariant across 200 random graphs x 30-step removal
    sequences (< 2 min)
 2. per-column error bound sqrt(n)*L*rmax vs the dense oracle on those same
    sequences; exact mode agrees entrywise to 1e-9*n
 3. removal-perturbation inequalities (feature/edge/node) on oracle
    embeddings, 100 removals each
 4. residual_true <= data-dependent <= worst-case bound, 50 removals per
    kind, logistic, alpha=0, zero violations
 5. least-squares Newton step equals direct retrain to 1e-8 over 100 steps
 6. gradient/Hessian vs finite differences, 100 probes; Hessian min
    eigenvalue >= lam * n_t
 7. privacy budget value, alpha=0 retrain behavior, ledger invariant
 8. rmax sweep: retrain count non-increasing, propagation cost per removal
    inside a 3x band
 9. adversarial-edge recovery tracks full retraining and returns to the
    clean baseline
10. batch removal consistency vs from-scratch and sequential paths
"""

import math
import time

import numpy as np
import pytest

from graphunlearn import datasets, workloads
from graphunlearn.graph import FeatureStore, Graph
from graphunlearn.models import LossSpec, gradient, hessian, loss, train_binary
from graphunlearn.oracle import exact_embeddings
from graphunlearn.propagation import (
    apply_batch_removal,
    apply_edge_removal,
    apply_feature_removal,
    apply_node_removal,
    init_propagation,
    invariant_violation,
    materialize_embeddings,
)
from graphunlearn.unlearn import (
    EdgeRemoval,
    FeatureRemoval,
    NodeRemoval,
    RetrainBaseline,
    UnlearnEngine,
    privacy_budget,
)

from conftest import random_edges, random_weights


def normalized_signal(n, F, rng):
    X = rng.normal(size=(n, F))
    max_norm = np.linalg.norm(X, axis=1).max()
    return X / max_norm if max_norm > 0 else X


# =====================================================================
# criteria 1 + 2: invariant suite and error bound over random sequences
# =====================================================================

N_GRAPHS = 200
N_STEPS = 30
RMAX_CHOICES = (0.0, 1e-3, 1e-6)


@pytest.fixture(scope="module")
def invariant_suite():
    results = {
        "max_inv_ratio": 0.0,       # invariant violation / (1e-8 * L)
        "residue_ok": True,
        "err_bound_violations": 0,
        "exact_violations": 0,
        "steps": 0,
        "elapsed": 0.0,
    }
    t_start = time.perf_counter()
    for gi in range(N_GRAPHS):
        rng = np.random.default_rng(1000 + gi)
        n = int(rng.integers(10, 201))
        mean_deg = rng.uniform(2.0, 6.0)
        p = min(0.9, mean_deg / max(n - 1, 1))
        L = int(rng.integers(1, 5))
        weights = random_weights(L, rng)
        rmax = RMAX_CHOICES[gi % len(RMAX_CHOICES)]
        F = 2
        edges = random_edges(n, p, rng)
        X = normalized_signal(n, F, rng)
        feats = FeatureStore(X=X.copy(), y=np.zeros(n, int),
                             train_mask=np.ones(n, bool))
        g = Graph(n, edges, features=feats)
        state = init_propagation(g, X, L, weights, rmax)
        tol = 1e-8 * L
        bound = math.sqrt(n) * L * rmax

        def check():
            results["steps"] += 1
            inv = invariant_violation(state, g)
            results["max_inv_ratio"] = max(results["max_inv_ratio"], inv / tol)
            if any(np.abs(state.r[ell]).max(initial=0.0) > rmax for ell in range(L)) \
                    or state.r[L].any():
                results["residue_ok"] = False
            Z_hat = materialize_embeddings(state, g).Z
            Z = exact_embeddings(g, state.signal, L, weights)
            if rmax == 0.0:
                if np.abs(Z_hat - Z).max() > 1e-9 * n:
                    results["exact_violations"] += 1
            else:
                col_err = np.linalg.norm(Z_hat - Z, axis=0)
                if (col_err > bound).any():
                    results["err_bound_violations"] += 1

        check()
        for _ in range(N_STEPS):
            op = int(rng.integers(4))
            edge_list = list(g.edges())
            live = np.flatnonzero(g.live_mask())
            if op == 0 and edge_list:
                delta = g.remove_edge(*edge_list[rng.integers(len(edge_list))])
                apply_edge_removal(state, g, delta)
            elif op == 1 and len(live) > 0:
                u = int(rng.choice(live))
                g.zero_feature(u)
                apply_feature_removal(state, g, u)
            elif op == 2 and len(live) > 2:
                u = int(rng.choice(live))
                apply_node_removal(state, g, u, g.remove_node(u))
            elif edge_list:
                k = int(rng.integers(1, min(4, len(edge_list)) + 1))
                picks = rng.choice(len(edge_list), size=k, replace=False)
                deltas = [g.remove_edge(*edge_list[i]) for i in picks]
                apply_batch_removal(state, g, deltas)
            elif len(live) > 0:
                u = int(rng.choice(live))
                g.zero_feature(u)
                apply_feature_removal(state, g, u)
            else:
                break
            check()
    results["elapsed"] = time.perf_counter() - t_start
    return results


def test_criterion_1_invariant_suite(invariant_suite):
    r = invariant_suite
    assert r["steps"] >= N_GRAPHS * 10
    assert r["max_inv_ratio"] <= 1.0, \
        f"invariant violated: {r['max_inv_ratio']:.3f}x the 1e-8*L tolerance"
    assert r["residue_ok"], "residue discipline violated after a public operation"
    assert r["elapsed"] < 120.0, f"suite took {r['elapsed']:.1f}s >= 2 min"
    print(f"\nACCEPTANCE 1 (invariant suite, {r['steps']} states, "
          f"{r['elapsed']:.1f}s): PASS")


def test_criterion_2_error_bound(invariant_suite):
    r = invariant_suite
    assert r["err_bound_violations"] == 0, \
        f"{r['err_bound_violations']} column-norm bound violations"
    assert r["exact_violations"] == 0, \
        f"{r['exact_violations']} exact-mode entrywise violations"
    print("\nACCEPTANCE 2 (error bound vs oracle, exact-mode agreement): PASS")


# =====================================================================
# criterion 3: removal-perturbation inequalities on oracle embeddings
# =====================================================================


def test_criterion_3_perturbation_inequalities():
    checks = 0
    for trial in range(100):
        rng = np.random.default_rng(5000 + trial)
        n = int(rng.integers(20, 60))
        p = min(0.5, rng.uniform(3.0, 7.0) / n)
        L = int(rng.integers(1, 4))
        weights = random_weights(L, rng)
        edges = random_edges(n, p, rng)
        X = normalized_signal(n, 2, rng)
        feats = FeatureStore(X=X.copy(), y=np.zeros(n, int),
                             train_mask=np.ones(n, bool))

        # one graph per kind so each removal perturbs the same base state
        for kind in ("feature", "edge", "node"):
            g = Graph(n, edges, features=feats)
            g.features = FeatureStore(X=X.copy(), y=np.zeros(n, int),
                                      train_mask=np.ones(n, bool))
            state = init_propagation(g, X.copy(), L, weights, 0.0)
            Z_pre = exact_embeddings(g, state.signal, L, weights)
            if kind == "feature":
                u = int(rng.integers(n))
                bound = math.sqrt(g.degree(u))
                g.zero_feature(u)
                apply_feature_removal(state, g, u)
            elif kind == "edge":
                edge_list = list(g.edges())
                if not edge_list:
                    continue
                u, v = edge_list[rng.integers(len(edge_list))]
                delta = g.remove_edge(u, v)
                apply_edge_removal(state, g, delta)
                bound = 4.0 / math.sqrt(g.degree(u)) + 4.0 / math.sqrt(g.degree(v))
            else:
                u = int(rng.integers(n))
                pre_deg = g.degree(u)
                nbrs = [w for w in g.neighbors(u) if w != u]
                deltas = g.remove_node(u)
                apply_node_removal(state, g, u, deltas)
                bound = 4.0 * math.sqrt(pre_deg) + sum(
                    4.0 / math.sqrt(g.degree(w)) for w in nbrs)
            Z_post = exact_embeddings(g, state.signal, L, weights)
            diff = np.linalg.norm(Z_pre - Z_post, axis=0)
            assert (diff <= bound + 1e-12).all(), \
                f"{kind} perturbation {diff.max():.3e} > bound {bound:.3e}"
            checks += 1
    assert checks >= 290
    print(f"\nACCEPTANCE 3 (perturbation inequalities, {checks} removals): PASS")


# =====================================================================
# criterion 4: bound ordering (plus ledger evidence for criterion 7)
# =====================================================================


def crit4_engine(seed):
    g = datasets.make_blob_graph(n=300, n_classes=3, n_features=4, seed=seed,
                                 p_in=0.05, p_out=0.005, class_sep=2.0, noise=0.4)
    return UnlearnEngine(g, 2, [0.0, 0.0, 1.0], 1e-8, LossSpec.logistic(1e-2),
                         alpha=0.0, eps=1.0, delta=1e-4, seed=seed, tol=1e-13)


@pytest.fixture(scope="module")
def bound_ordering_runs():
    records = []
    for kind, seed in (("edge", 41), ("node", 42), ("feature", 43)):
        eng = crit4_engine(seed)
        rng = np.random.default_rng(seed)
        done = 0
        while done < 50:
            if kind == "edge":
                edge_list = list(eng.graph.edges())
                u, v = edge_list[rng.integers(len(edge_list))]
                req = EdgeRemoval(u, v)
            else:
                live = np.flatnonzero(eng.graph.live_mask()
                                      & eng.graph.features.train_mask)
                u = int(rng.choice(live))
                req = NodeRemoval(u) if kind == "node" else FeatureRemoval(u)
            rep = eng.process_request(req, oracle_check=True)
            ledger_ok = rep.retrained or \
                (eng.ledger.beta + rep.term1 <= eng.ledger.budget + 1e-15).all()
            records.append({
                "kind": kind,
                "retrained": rep.retrained,
                "bound_worst": rep.bound_worst,
                "per_class": rep.per_class,
                "ledger_ok": ledger_ok,
            })
            done += 1
    return records


def test_criterion_4_bound_ordering(bound_ordering_runs):
    violations = []
    for i, rec in enumerate(bound_ordering_runs):
        for pc in rec["per_class"]:
            if not (pc["residual_true"] <= pc["bound_data"] <= rec["bound_worst"]):
                violations.append((i, rec["kind"], pc))
    assert not violations, f"{len(violations)} ordering violations: {violations[:3]}"
    counts = {k: sum(1 for r in bound_ordering_runs if r["kind"] == k)
              for k in ("edge", "node", "feature")}
    assert all(c == 50 for c in counts.values())
    print("\nACCEPTANCE 4 (residual <= data bound <= worst bound, "
          "150 removals, 3 tasks each): PASS")


# =====================================================================
# criterion 5: least-squares exactness over a 100-step sequence
# =====================================================================


def test_criterion_5_least_squares_exactness():
    g = datasets.make_blob_graph(n=200, n_classes=2, n_features=4, seed=31,
                                 p_in=0.05, p_out=0.006, class_sep=2.0, noise=0.4)
    eng = UnlearnEngine(g, 2, [0.0, 0.0, 1.0], 1e-9, LossSpec.least_squares(1e-3),
                        alpha=0.01, eps=1.0, delta=1e-4, seed=4)
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        pick = rng.integers(0, 10)
        live = np.flatnonzero(eng.graph.live_mask())
        edge_list = list(eng.graph.edges())
        if pick < 7 and edge_list:
            u, v = edge_list[rng.integers(len(edge_list))]
            req = EdgeRemoval(u, v)
        elif pick < 9:
            req = FeatureRemoval(int(rng.choice(live)))
        else:
            req = NodeRemoval(int(rng.choice(live)))
        eng.process_request(req)
        Z = eng.embeddings().Z
        feats = eng.graph.features
        for k in range(eng.model.n_classes):
            y_pm = eng.model.binary_labels(feats.y, k)
            w_direct = train_binary(Z, y_pm, feats.train_mask, eng.spec,
                                    b=eng.model.B[k])
            worst = max(worst, float(np.linalg.norm(eng.model.W[k] - w_direct)))
    assert eng.ledger.retrains == 0, "Newton path was not exercised"
    assert worst <= 1e-8, f"max |w- - w_retrain| = {worst:.3e}"
    print(f"\nACCEPTANCE 5 (least-squares exactness, max dev {worst:.2e}): PASS")


# =====================================================================
# criterion 6: calculus checks
# =====================================================================


def test_criterion_6_calculus_checks():
    worst_grad = worst_hess = 0.0
    for trial in range(100):
        rng = np.random.default_rng(7000 + trial)
        kind = "logistic" if trial % 2 == 0 else "least_squares"
        n_t = int(rng.integers(10, 40))
        F = int(rng.integers(2, 6))
        Z = rng.normal(size=(n_t, F)) * 0.5
        y = np.where(rng.random(n_t) < 0.5, 1.0, -1.0)
        mask = np.ones(n_t, bool)
        lam = float(rng.uniform(1e-3, 1e-1))
        spec = LossSpec.make(kind, lam)
        w = rng.normal(size=F)
        b = rng.normal(size=F) * 0.1
        h = 1e-6
        eye = np.eye(F)
        g_an = gradient(w, Z, y, mask, spec, b)
        g_fd = np.array([
            (loss(w + h * e, Z, y, mask, spec, b)
             - loss(w - h * e, Z, y, mask, spec, b)) / (2 * h) for e in eye])
        worst_grad = max(worst_grad,
                         np.abs(g_an - g_fd).max() / max(1.0, np.abs(g_fd).max()))
        H_an = hessian(w, Z, mask, spec)
        H_fd = np.stack([
            (gradient(w + h * e, Z, y, mask, spec, b)
             - gradient(w - h * e, Z, y, mask, spec, b)) / (2 * h) for e in eye])
        worst_hess = max(worst_hess,
                         np.abs(H_an - H_fd).max() / max(1.0, np.abs(H_fd).max()))
        assert np.linalg.eigvalsh(H_an).min() >= lam * n_t - 1e-9
    assert worst_grad <= 1e-5, f"gradient FD mismatch {worst_grad:.3e}"
    assert worst_hess <= 1e-5, f"hessian FD mismatch {worst_hess:.3e}"
    print(f"\nACCEPTANCE 6 (calculus: grad dev {worst_grad:.1e}, "
          f"hess dev {worst_hess:.1e}): PASS")


# =====================================================================
# criterion 7: budget mechanics
# =====================================================================


def test_criterion_7_budget_mechanics(bound_ordering_runs):
    budget = privacy_budget(0.1, 1.0, 1e-4)
    assert abs(budget - 0.022806) <= 1e-5, f"budget {budget:.6f}"
    # alpha = 0 forces a retrain on every request (zero budget)
    assert all(rec["retrained"] for rec in bound_ordering_runs)
    # ledger invariant held after every processed request
    assert all(rec["ledger_ok"] for rec in bound_ordering_runs)
    print(f"\nACCEPTANCE 7 (budget {budget:.6f}, alpha=0 retrains, ledger): PASS")


# =====================================================================
# criterion 8: rmax trade-off trend
# =====================================================================


def trend_graph(seed=8):
    """500-node planted partition with sparse indicator signals.

    Concentrated per-column mass keeps removal-induced residues above even
    the coarsest threshold in the sweep, the regime where update cost is
    threshold-independent.
    """
    g = datasets.make_blob_graph(n=500, n_classes=2, n_features=4, seed=seed,
                                 p_in=0.03, p_out=0.004, class_sep=2.0, noise=0.4)
    rng = np.random.default_rng(seed + 1)
    y = g.features.y
    X = np.zeros((500, 4))
    for j in range(4):
        pool = np.flatnonzero(y == (j % 2))
        X[rng.choice(pool, size=30, replace=False), j] = 1.0
    g.features.X = X
    return g


def test_criterion_8_rmax_tradeoff_trend():
    requests = workloads.random_edge_workload(trend_graph(), 100, seed=77)
    retrains, op_means = [], []
    for rmax in (1e-3, 1e-5, 1e-7):
        eng = UnlearnEngine(trend_graph(), 2, [0.0, 0.0, 1.0], rmax,
                            LossSpec.logistic(1e-3), alpha=0.02, eps=1.0,
                            delta=1e-4, seed=1)
        ops = []
        for req in requests:
            rep = eng.process_request(req)
            ops.append(rep.prop_ops)
        retrains.append(eng.ledger.retrains)
        op_means.append(float(np.mean(ops)))
    assert retrains[0] >= retrains[1] >= retrains[2], \
        f"retrain counts not non-increasing: {retrains}"
    assert retrains[0] > retrains[2], f"sweep degenerate: {retrains}"
    assert max(op_means) <= 3.0 * min(op_means), \
        f"propagation cost band exceeded: {op_means}"
    print(f"\nACCEPTANCE 8 (retrains {retrains}, cost means "
          f"{[f'{m:.0f}' for m in op_means]}, band "
          f"{max(op_means) / min(op_means):.2f}x): PASS")


# =====================================================================
# criterion 9: adversarial-edge recovery trend
# =====================================================================


def test_criterion_9_adversarial_recovery():
    def clean_graph():
        return datasets.make_blob_graph(n=400, n_classes=2, n_features=4, seed=21,
                                        p_in=0.025, p_out=0.003, class_sep=1.5,
                                        noise=0.6)

    g0 = clean_graph()
    new_edges, schedule = workloads.adversarial_edge_workload(
        g0, 50, seed=5, n_targets=12, batch_size=5)

    def poisoned_graph():
        g = clean_graph()
        feats = g.features
        return Graph(g.n, list(g.edges()) + new_edges,
                     features=FeatureStore(X=feats.X.copy(), y=feats.y.copy(),
                                           train_mask=feats.train_mask.copy(),
                                           val_mask=feats.val_mask.copy(),
                                           test_mask=feats.test_mask.copy()))

    spec = LossSpec.logistic(1e-3)
    clean_eng = UnlearnEngine(clean_graph(), 2, [0.0, 0.0, 1.0], 1e-7, spec,
                              alpha=0.0, eps=1.0, delta=1e-4, seed=2)
    acc_clean = clean_eng.accuracy("test")

    eng = UnlearnEngine(poisoned_graph(), 2, [0.0, 0.0, 1.0], 1e-7, spec,
                        alpha=0.0, eps=1.0, delta=1e-4, seed=2)
    baseline = RetrainBaseline(poisoned_graph(), 2, [0.0, 0.0, 1.0], 1e-7, spec,
                               alpha=0.0, seed=2)
    acc_poisoned = eng.accuracy("test")
    assert acc_poisoned <= acc_clean - 0.015, \
        "adversarial edges failed to degrade accuracy"

    max_track_gap = 0.0
    for batch in schedule:
        eng.process_request(batch)
        baseline.process_request(batch)
        max_track_gap = max(max_track_gap,
                            abs(eng.accuracy("test") - baseline.accuracy("test")))
    final_gap = abs(eng.accuracy("test") - acc_clean)
    assert final_gap <= 0.02, f"final accuracy gap {final_gap * 100:.2f} points"
    assert max_track_gap <= 0.03, f"tracking gap {max_track_gap * 100:.2f} points"
    print(f"\nACCEPTANCE 9 (poisoned {acc_poisoned:.3f} -> recovered "
          f"{eng.accuracy('test'):.3f} vs clean {acc_clean:.3f}; track gap "
          f"{max_track_gap * 100:.2f}pt): PASS")


# =====================================================================
# criterion 10: batch consistency
# =====================================================================


@pytest.mark.parametrize("k", [1, 5, 20])
def test_criterion_10_batch_consistency(k):
    n, L = 100, 2
    weights = [0.0, 0.0, 1.0]
    rng = np.random.default_rng(100 + k)
    edges = random_edges(n, 0.08, rng)
    X = normalized_signal(n, 2, rng)

    # exact mode: batch equals from-scratch propagation entrywise
    g = Graph(n, edges)
    state = init_propagation(g, X.copy(), L, weights, 0.0)
    edge_list = list(g.edges())
    picks = rng.choice(len(edge_list), size=k, replace=False)
    chosen = [edge_list[i] for i in picks]
    deltas = [g.remove_edge(u, v) for u, v in chosen]
    apply_batch_removal(state, g, deltas)
    Z_batch = materialize_embeddings(state, g).Z
    Z_fresh = exact_embeddings(g, state.signal, L, weights)
    assert np.abs(Z_batch - Z_fresh).max() <= 1e-9 * n

    # approximate mode: batch within 2*sqrt(n)*L*rmax of the sequential path
    rmax = 1e-4
    g_b = Graph(n, edges)
    s_b = init_propagation(g_b, X.copy(), L, weights, rmax)
    apply_batch_removal(s_b, g_b, [g_b.remove_edge(u, v) for u, v in chosen])
    g_s = Graph(n, edges)
    s_s = init_propagation(g_s, X.copy(), L, weights, rmax)
    for u, v in chosen:
        apply_edge_removal(s_s, g_s, g_s.remove_edge(u, v))
    Zb = materialize_embeddings(s_b, g_b).Z
    Zs = materialize_embeddings(s_s, g_s).Z
    tol = 2.0 * math.sqrt(n) * L * rmax
    col_gap = np.linalg.norm(Zb - Zs, axis=0)
    assert (col_gap <= tol).all(), f"batch-vs-sequential gap {col_gap.max():.3e}"
    print(f"\nACCEPTANCE 10 (batch consistency, k={k}): PASS")
