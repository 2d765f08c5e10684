"""Lazy local propagation for generalized-PageRank embeddings.

Per signal column the state keeps, for each level ``0..L``, a reserve
vector ``q`` (settled mass) and a residue vector ``r`` (mass not yet
distributed).  The pair satisfies, for every live node u,

    q0(u) + r0(u) = sqrt(d(u)) * x(u)
    ql(u) + rl(u) = sum_{t in N(u)} q_{l-1}(t) / d(t)      (0 < l <= L)

after every public operation.  A push moves any residue with magnitude
strictly above ``rmax`` into the reserve and spreads it over the node's
neighbors at the next level; the embedding read-out is
``sum_l w_l * d^{-1/2} * q_l`` and its per-column error against the exact
embedding is at most ``sqrt(n) * L * rmax``.

Removals adjust residues (and, for batches, reserves) locally to restore
the invariant on the mutated graph, then run one push sweep.  Columns are
independent, so all F of them are updated together as (n, F) blocks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError
from .graph import EdgeDelta, Graph

__all__ = [
    "PropagationState",
    "EmbeddingMatrix",
    "init_propagation",
    "basic_prop",
    "materialize_embeddings",
    "apply_edge_removal",
    "apply_feature_removal",
    "apply_node_removal",
    "apply_batch_removal",
    "adjust_edge_removal",
    "adjust_feature_removal",
    "adjust_node_removal",
    "invariant_violation",
    "save_snapshot",
    "load_snapshot",
]

_WEIGHT_SUM_TOL = 1e-12


@dataclass
class EmbeddingMatrix:
    """Materialized approximate embeddings plus per-column residue sums."""

    Z: np.ndarray  # (n, F)
    residual_sums: np.ndarray  # (F,) signed total residue per column


class PropagationState:
    """Reserves/residues for all levels and columns of one signal matrix."""

    def __init__(self, n: int, F: int, L: int, weights, rmax: float,
                 signal: np.ndarray, scales: np.ndarray):
        self.n = n
        self.F = F
        self.L = L
        self.weights = np.asarray(weights, dtype=np.float64)
        self.rmax = float(rmax)
        self.signal = signal  # (n, F) column-scaled signal, rows zeroed on removal
        self.scales = scales  # (F,) frozen column scale factors
        self.q = np.zeros((L + 1, n, F), dtype=np.float64)
        self.r = np.zeros((L + 1, n, F), dtype=np.float64)
        # counters: push_events = (node, level, column) pushes;
        # op_count = residue updates incl. adjustment touches (cost-model units)
        self.push_events = 0
        self.op_count = 0

    def residual_column_sums(self) -> np.ndarray:
        return self.r.sum(axis=(0, 1))


def _validate_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ConfigError("weights must be a non-empty 1-d sequence")
    if np.abs(w).sum() > 1.0 + _WEIGHT_SUM_TOL:
        raise ConfigError(f"sum of |weights| is {np.abs(w).sum():.6g} > 1")
    return w


def init_propagation(g: Graph, X: np.ndarray, L: int, weights, rmax: float) -> PropagationState:
    """Scale columns, seed level-0 residues with sqrt(d)*x, and push.

    ``X`` rows must already satisfy max row 2-norm <= 1; each column j is
    divided by ``s_j = max(1, ||sqrt(d) * X[:, j]||_1)`` computed on the
    current graph and frozen for the lifetime of the state.
    """
    w = _validate_weights(weights)
    if len(w) != L + 1:
        raise ConfigError(f"need L+1={L + 1} weights, got {len(w)}")
    if rmax < 0:
        raise ConfigError(f"rmax must be >= 0, got {rmax}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != g.n:
        raise ConfigError(f"signal has {X.shape[0]} rows for a {g.n}-node graph")
    row_norms = np.linalg.norm(X, axis=1)
    if row_norms.size and row_norms.max() > 1.0 + 1e-9:
        raise ConfigError(
            f"max feature row 2-norm is {row_norms.max():.6g}; rows must be pre-scaled to <= 1"
        )
    d = g.degree_vector().astype(np.float64)
    sqrt_d = np.sqrt(d)
    scales = np.maximum(1.0, np.abs(sqrt_d[:, None] * X).sum(axis=0))
    signal = X / scales
    state = PropagationState(g.n, X.shape[1], L, w, rmax, signal, scales)
    state.r[0] = sqrt_d[:, None] * signal
    basic_prop(state, g)
    return state


def basic_prop(state: PropagationState, g: Graph) -> None:
    """One level-ordered push sweep; establishes |r| <= rmax below level L.

    Pushing at level l only feeds level l+1, so a single pass over levels
    0..L-1 (all above-threshold nodes at once) settles every level; the
    final level then absorbs its residue into the reserve.
    """
    A = g.adjacency_csr()
    d = g.degree_vector().astype(np.float64)
    inv_d = np.where(d > 0, 1.0 / np.maximum(d, 1.0), 0.0)
    rmax = state.rmax
    for ell in range(state.L):
        r_ell = state.r[ell]
        mask = np.abs(r_ell) > rmax
        if not mask.any():
            continue
        pushed = np.where(mask, r_ell, 0.0)
        state.q[ell] += pushed
        state.r[ell] = np.where(mask, 0.0, r_ell)
        state.r[ell + 1] += A @ (pushed * inv_d[:, None])
        state.push_events += int(mask.sum())
        state.op_count += int((mask * d[:, None]).sum())
    state.q[state.L] += state.r[state.L]
    state.r[state.L] = 0.0


def materialize_embeddings(state: PropagationState, g: Graph) -> EmbeddingMatrix:
    """Read out Z_hat = sum_l w_l * d^{-1/2} * q_l with current degrees."""
    d = g.degree_vector().astype(np.float64)
    inv_sqrt_d = np.where(d > 0, 1.0 / np.sqrt(np.maximum(d, 1.0)), 0.0)
    Z = np.tensordot(state.weights, state.q, axes=(0, 0))
    Z *= inv_sqrt_d[:, None]
    return EmbeddingMatrix(Z=Z, residual_sums=state.residual_column_sums())


# -- removal updates ------------------------------------------------------


def _adjust_one_endpoint(state, u, d_u_new, nbrs_u, other, d_other_old):
    """Residue corrections for endpoint u of a removed edge (u, other).

    ``d_u_new`` is u's degree after the removal, ``nbrs_u`` its neighborhood
    after the removal (self-loop included, ``other`` excluded), and
    ``d_other_old`` the other endpoint's degree before the removal.
    """
    state.r[0][u] += (np.sqrt(d_u_new) - np.sqrt(d_u_new + 1.0)) * state.signal[u]
    state.op_count += state.F
    for ell in range(1, state.L + 1):
        state.r[ell][u] -= state.q[ell - 1][other] / d_other_old
        state.r[ell][nbrs_u] += state.q[ell - 1][u] / (d_u_new * (d_u_new + 1.0))
        state.op_count += state.F * (1 + len(nbrs_u))


def adjust_edge_removal(state: PropagationState, g: Graph, delta: EdgeDelta) -> None:
    """Restore the invariant after one edge removal; no push.

    The graph must already reflect the removal, so ``g.degree`` returns new
    degrees and ``g.neighbors`` the new neighborhoods.
    """
    u, v = delta.u, delta.v
    d_u, d_v = g.degree(u), g.degree(v)
    _adjust_one_endpoint(state, u, d_u, g.neighbors(u), v, delta.old_deg_v)
    _adjust_one_endpoint(state, v, d_v, g.neighbors(v), u, delta.old_deg_u)


def apply_edge_removal(state: PropagationState, g: Graph, delta: EdgeDelta) -> None:
    adjust_edge_removal(state, g, delta)
    basic_prop(state, g)


def adjust_feature_removal(state: PropagationState, g: Graph, u: int) -> None:
    """Zero u's signal and set r0(u) = -q0(u); no push."""
    state.signal[u, :] = 0.0
    state.r[0][u] = -state.q[0][u]
    state.op_count += state.F


def apply_feature_removal(state: PropagationState, g: Graph, u: int) -> None:
    adjust_feature_removal(state, g, u)
    basic_prop(state, g)


def adjust_node_removal(state: PropagationState, g: Graph, u: int, deltas) -> None:
    """Replay u's incident-edge removals against the final graph; no push.

    ``deltas`` come from ``Graph.remove_node`` (ascending neighbor id, then
    the self-loop).  The graph is already fully mutated, so each virtual
    intermediate step is reconstructed from the recorded old degrees: at
    step k node u still neighbors the not-yet-removed ``w_{k+1}, ...`` plus
    itself, while each removed neighbor w_k already has its final degree
    and neighborhood (it only ever lost the edge to u).  u's own state is
    zeroed at the end, which is how the self-loop leaves the system.
    """
    removed = [dl for dl in deltas if not dl.is_self_loop]
    neighbor_ids = [dl.v for dl in removed]
    for k, dl in enumerate(removed):
        w = dl.v
        d_u_step = dl.old_deg_u - 1
        nbrs_u_step = [u] + neighbor_ids[k + 1:]
        _adjust_one_endpoint(state, u, d_u_step, nbrs_u_step, w, dl.old_deg_v)
        _adjust_one_endpoint(state, w, dl.old_deg_v - 1, g.neighbors(w), u, dl.old_deg_u)
    adjust_feature_removal(state, g, u)
    state.q[:, u, :] = 0.0
    state.r[:, u, :] = 0.0
    state.op_count += state.F * (state.L + 1)


def apply_node_removal(state: PropagationState, g: Graph, u: int, deltas) -> None:
    adjust_node_removal(state, g, u, deltas)
    basic_prop(state, g)


def apply_batch_removal(state: PropagationState, g: Graph, batch) -> None:
    """Parallel-style batch edge removal: rescale reserves, fix residues, push.

    Scaling q_l(u) by d(u)/(d(u)+Delta(u)) keeps q_l(u)/d(u) — the quantity
    u's surviving neighbors see — unchanged, so only the affected endpoints
    need touching.  The residue bump uses the post-scaling reserve and each
    removed neighbor is subtracted at its new degree with its rescaled
    reserve, which restores the invariant exactly.
    """
    batch = list(batch)
    if not batch:
        return
    removed_nbrs: dict[int, list[int]] = {}
    for dl in batch:
        if dl.is_self_loop:
            raise ConfigError("batch removal takes non-self-loop edge deltas only")
        removed_nbrs.setdefault(dl.u, []).append(dl.v)
        removed_nbrs.setdefault(dl.v, []).append(dl.u)
    affected = np.array(sorted(removed_nbrs), dtype=np.int64)
    d_new = g.degree_vector()[affected].astype(np.float64)
    n_removed = np.array([len(removed_nbrs[int(u)]) for u in affected], dtype=np.float64)
    shrink = (d_new / (d_new + n_removed))[:, None]

    state.q[0][affected] *= shrink
    state.r[0][affected] = np.sqrt(d_new)[:, None] * state.signal[affected] - state.q[0][affected]
    state.op_count += state.F * len(affected)
    for ell in range(1, state.L + 1):
        state.q[ell][affected] *= shrink
        state.r[ell][affected] += (n_removed / d_new)[:, None] * state.q[ell][affected]
        for i, u in enumerate(affected):
            for v in removed_nbrs[int(u)]:
                state.r[ell][u] -= state.q[ell - 1][v] / g.degree(v)
            state.op_count += state.F * (1 + len(removed_nbrs[int(u)]))
    basic_prop(state, g)


# -- diagnostics ----------------------------------------------------------


def invariant_violation(state: PropagationState, g: Graph) -> float:
    """Max absolute violation of the reserve/residue invariant on live nodes."""
    live = g.live_mask()
    d = g.degree_vector().astype(np.float64)
    lhs0 = state.q[0] + state.r[0]
    rhs0 = np.sqrt(d)[:, None] * state.signal
    worst = np.abs(lhs0[live] - rhs0[live]).max(initial=0.0)
    if state.L >= 1:
        A = g.adjacency_csr()
        inv_d = np.where(d > 0, 1.0 / np.maximum(d, 1.0), 0.0)
        for ell in range(1, state.L + 1):
            rhs = A @ (state.q[ell - 1] * inv_d[:, None])
            lhs = state.q[ell] + state.r[ell]
            worst = max(worst, np.abs(lhs[live] - rhs[live]).max(initial=0.0))
    return float(worst)


# -- snapshot persistence -------------------------------------------------

_SNAP_MAGIC = b"GULP"
_SNAP_VERSION = 1


def save_snapshot(state: PropagationState, path) -> None:
    """Checkpoint: header, then per column dense q levels + sparse residue triples.

    All scalars little-endian; floats are 64-bit.
    """
    with open(path, "wb") as fh:
        fh.write(_SNAP_MAGIC)
        fh.write(struct.pack("<IiiId", _SNAP_VERSION, state.n, state.F, state.L, state.rmax))
        state.weights.astype("<f8").tofile(fh)
        state.scales.astype("<f8").tofile(fh)
        for j in range(state.F):
            state.q[:, :, j].astype("<f8").tofile(fh)
            ells, us = np.nonzero(state.r[:, :, j])
            fh.write(struct.pack("<q", len(ells)))
            triples = np.empty(len(ells), dtype=[("ell", "<i4"), ("u", "<i4"), ("r", "<f8")])
            triples["ell"] = ells
            triples["u"] = us
            triples["r"] = state.r[ells, us, j]
            triples.tofile(fh)


def load_snapshot(path, g: Graph) -> PropagationState:
    """Restore a snapshot against the graph it was taken on.

    The scaled signal is rebuilt from the level-0 invariant,
    signal(u) = (q0(u) + r0(u)) / sqrt(d(u)).
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _SNAP_MAGIC:
            raise ParseError(f"{path}: not a propagation snapshot")
        version, n, F, L, rmax = struct.unpack("<IiiId", fh.read(24))
        if version != _SNAP_VERSION:
            raise ParseError(f"{path}: unsupported snapshot version {version}")
        if n != g.n:
            raise ParseError(f"{path}: snapshot has n={n}, graph has n={g.n}")
        weights = np.fromfile(fh, dtype="<f8", count=L + 1)
        scales = np.fromfile(fh, dtype="<f8", count=F)
        state = PropagationState(n, F, L, weights, rmax, np.zeros((n, F)), scales)
        for j in range(F):
            q = np.fromfile(fh, dtype="<f8", count=(L + 1) * n)
            if q.size != (L + 1) * n:
                raise ParseError(f"{path}: truncated reserve block for column {j}")
            state.q[:, :, j] = q.reshape(L + 1, n)
            (count,) = struct.unpack("<q", fh.read(8))
            triples = np.fromfile(
                fh, dtype=[("ell", "<i4"), ("u", "<i4"), ("r", "<f8")], count=count
            )
            if triples.size != count:
                raise ParseError(f"{path}: truncated residue block for column {j}")
            state.r[triples["ell"], triples["u"], j] = triples["r"]
    d = g.degree_vector().astype(np.float64)
    inv_sqrt_d = np.where(d > 0, 1.0 / np.sqrt(np.maximum(d, 1.0)), 0.0)
    state.signal = (state.q[0] + state.r[0]) * inv_sqrt_d[:, None]
    return state
