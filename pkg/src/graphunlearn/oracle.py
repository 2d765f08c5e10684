"""Exact reference computations backing the propagation and bound tests.

The embedding oracle accumulates ``sum_l w_l * P^l * x`` with
``P = D^{-1/2} A D^{-1/2}`` by direct neighbor sums over the adjacency
lists — no thresholds, no reserves/residues — so it shares no code with
the push engine it is used to check.  Desk scale only (n up to a few
thousand).
"""

from __future__ import annotations

import numpy as np

from .graph import Graph
from . import models

__all__ = ["exact_embeddings", "exact_gradient_residual"]


def exact_embeddings(g: Graph, signal: np.ndarray, L: int, weights) -> np.ndarray:
    """Dense GPR embedding of ``signal`` (already scaled) on the current graph."""
    weights = np.asarray(weights, dtype=np.float64)
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim == 1:
        signal = signal[:, None]
    n = g.n
    srcs, dsts = [], []
    for u in range(n):
        if not g.live(u):
            continue
        nbrs = g.neighbors(u)
        dsts.append(np.full(len(nbrs), u, dtype=np.int64))
        srcs.append(np.asarray(nbrs, dtype=np.int64))
    if srcs:
        src = np.concatenate(srcs)
        dst = np.concatenate(dsts)
    else:
        src = dst = np.zeros(0, dtype=np.int64)
    d = g.degree_vector().astype(np.float64)
    inv_sqrt_d = np.where(d > 0, 1.0 / np.sqrt(np.maximum(d, 1.0)), 0.0)
    coef = (inv_sqrt_d[src] * inv_sqrt_d[dst])[:, None]

    t = signal.copy()
    Z = weights[0] * t
    for ell in range(1, L + 1):
        t_next = np.zeros_like(t)
        np.add.at(t_next, dst, coef * t[src])
        t = t_next
        Z += weights[ell] * t
    return Z


def exact_gradient_residual(w: np.ndarray, g: Graph, signal: np.ndarray, L: int,
                            weights, y_pm: np.ndarray, train_mask: np.ndarray,
                            spec) -> float:
    """||grad L(w, D')||_2 on exact post-removal embeddings, unperturbed loss.

    This is the model error that all the closed-form and data-dependent
    bounds dominate.
    """
    Z = exact_embeddings(g, signal, L, weights)
    grad = models.gradient(w, Z, y_pm, train_mask, spec)
    return float(np.linalg.norm(grad))
