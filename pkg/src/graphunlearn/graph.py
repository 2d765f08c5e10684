"""Dynamic undirected graph store with self-loops and removable node data.

Every live node carries its own self-loop, so degrees stay >= 1 and the
push rules in :mod:`graphunlearn.propagation` never divide by zero.  Node
ids are dense ``0..n-1`` and never reused; removed nodes leave tombstones
(empty neighbor list, ``live=False``) so embedding row indices stay stable.

Mutations are exclusive-access operations; concurrent readers are safe
between mutations.
"""

from __future__ import annotations

import warnings
from bisect import bisect_left, insort
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, NotFoundError, ParseError

__all__ = [
    "EdgeDelta",
    "FeatureStore",
    "Graph",
    "load_edge_list",
    "load_features",
    "load_labels",
    "load_masks",
    "load_dataset",
]


@dataclass(frozen=True)
class EdgeDelta:
    """Record of one removed edge; degrees are the values before removal."""

    u: int
    v: int
    old_deg_u: int
    old_deg_v: int

    @property
    def is_self_loop(self) -> bool:
        return self.u == self.v


@dataclass
class FeatureStore:
    """Raw node features, labels, and train/val/test masks."""

    X: np.ndarray
    y: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray = field(default=None)
    test_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y)
        self.train_mask = np.asarray(self.train_mask, dtype=bool)
        n = self.X.shape[0]
        if self.y.shape[0] != n or self.train_mask.shape[0] != n:
            raise ConfigError("feature/label/mask row counts disagree")
        if self.val_mask is None:
            self.val_mask = np.zeros(n, dtype=bool)
        if self.test_mask is None:
            self.test_mask = np.zeros(n, dtype=bool)

    @property
    def n_train(self) -> int:
        return int(self.train_mask.sum())

    def zero_row(self, u: int) -> None:
        """Zero the feature row and drop u from the training loss."""
        self.X[u, :] = 0.0
        self.train_mask[u] = False


class Graph:
    """Undirected graph over nodes 0..n-1 with an explicit self-loop per node."""

    def __init__(self, n: int, edges=(), features: FeatureStore | None = None):
        if n <= 0:
            raise ConfigError(f"node count must be positive, got {n}")
        self.n = n
        self._adj: list[list[int]] = [[u] for u in range(n)]
        self._deg = np.ones(n, dtype=np.int64)
        self._live = np.ones(n, dtype=bool)
        self.features = features
        self._version = 0
        self._csr_cache = None
        self._csr_version = -1
        for u, v in edges:
            self._add_edge(u, v)

    # -- construction -----------------------------------------------------

    def _add_edge(self, u: int, v: int) -> None:
        if not (0 <= u < self.n and 0 <= v < self.n):
            raise ConfigError(f"edge ({u},{v}) endpoint out of range 0..{self.n - 1}")
        if u == v:
            raise ConfigError(f"explicit self-loop ({u},{u}) not allowed in input")
        if not self._contains(u, v):
            insort(self._adj[u], v)
            insort(self._adj[v], u)
            self._deg[u] += 1
            self._deg[v] += 1
            self._version += 1

    def _contains(self, u: int, v: int) -> bool:
        row = self._adj[u]
        i = bisect_left(row, v)
        return i < len(row) and row[i] == v

    # -- read access ------------------------------------------------------

    def neighbors(self, u: int) -> list[int]:
        """Sorted neighbor list of u, including u's self-loop. Do not mutate."""
        return self._adj[u]

    def degree(self, u: int) -> int:
        return int(self._deg[u])

    def degree_vector(self) -> np.ndarray:
        return self._deg

    def live(self, u: int) -> bool:
        return bool(self._live[u])

    def live_mask(self) -> np.ndarray:
        return self._live

    def has_edge(self, u: int, v: int) -> bool:
        return self._contains(u, v)

    def edge_count(self) -> int:
        """Number of live non-self-loop undirected edges."""
        return int((self._deg[self._live] - 1).sum()) // 2

    def edges(self):
        """Iterate non-self-loop edges once each as (u, v) with u < v."""
        for u in range(self.n):
            for v in self._adj[u]:
                if v > u:
                    yield (u, v)

    def adjacency_csr(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency with self-loops, rebuilt when stale."""
        if self._csr_version != self._version:
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            indptr[1:] = np.cumsum([len(row) for row in self._adj])
            indices = np.fromiter(
                (v for row in self._adj for v in row), dtype=np.int64, count=indptr[-1]
            )
            data = np.ones(indptr[-1], dtype=np.float64)
            self._csr_cache = sp.csr_matrix((data, indices, indptr), shape=(self.n, self.n))
            self._csr_version = self._version
        return self._csr_cache

    # -- mutations --------------------------------------------------------

    def _remove_directed(self, u: int, v: int) -> None:
        row = self._adj[u]
        i = bisect_left(row, v)
        row.pop(i)
        self._deg[u] -= 1

    def remove_edge(self, u: int, v: int) -> EdgeDelta:
        """Remove undirected edge (u, v); both endpoints lose one degree."""
        if u == v:
            raise NotFoundError(f"cannot remove self-loop ({u},{u}) as an edge")
        if not (0 <= u < self.n and 0 <= v < self.n) or not self._contains(u, v):
            raise NotFoundError(f"edge ({u},{v}) not present")
        delta = EdgeDelta(u, v, self.degree(u), self.degree(v))
        self._remove_directed(u, v)
        self._remove_directed(v, u)
        self._version += 1
        return delta

    def remove_node(self, u: int) -> list[EdgeDelta]:
        """Remove u: incident edges (ascending neighbor id), features, self-loop.

        Returns one delta per incident non-self-loop edge plus a final
        self-loop delta, in removal order.
        """
        if not (0 <= u < self.n) or not self._live[u]:
            raise NotFoundError(f"node {u} not live")
        deltas = []
        for v in [w for w in self._adj[u] if w != u]:
            deltas.append(self.remove_edge(u, v))
        if self.features is not None:
            self.features.zero_row(u)
        deltas.append(EdgeDelta(u, u, self.degree(u), self.degree(u)))
        self._adj[u] = []
        self._deg[u] = 0
        self._live[u] = False
        self._version += 1
        return deltas

    def zero_feature(self, u: int) -> None:
        """Zero u's feature row and remove its label from the training loss."""
        if not (0 <= u < self.n) or not self._live[u]:
            raise NotFoundError(f"node {u} not live")
        if self.features is None:
            raise ConfigError("graph has no feature store attached")
        self.features.zero_row(u)


# -- file ingestion -------------------------------------------------------


def load_edge_list(path, n: int) -> Graph:
    """Parse one whitespace-separated 0-indexed edge "u v" per line."""
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 'u v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer endpoint in {line!r}") from None
            if u == v:
                raise ParseError(f"{path}:{lineno}: self-loop {u} {v} not allowed")
            if not (0 <= u < n and 0 <= v < n):
                raise ParseError(f"{path}:{lineno}: endpoint out of range 0..{n - 1}")
            edges.append((u, v))
    return Graph(n, edges)


def load_features(path) -> np.ndarray:
    """CSV of decimal floats, row i = node i."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            X = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if X.size == 0:
        raise ParseError(f"{path}: feature file contains no rows")
    return X


def load_labels(path) -> np.ndarray:
    """One integer class per line."""
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer label {line!r}") from None
    return np.asarray(labels, dtype=np.int64)


def load_masks(path):
    """One of {train,val,test} per line; returns three boolean arrays."""
    kinds = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            word = line.strip()
            if not word:
                continue
            if word not in ("train", "val", "test"):
                raise ParseError(f"{path}:{lineno}: expected train/val/test, got {word!r}")
            kinds.append(word)
    arr = np.asarray(kinds)
    return arr == "train", arr == "val", arr == "test"


def load_dataset(edges_path, features_path, labels_path, masks_path) -> Graph:
    """Assemble a Graph with an attached FeatureStore from the four files."""
    X = load_features(features_path)
    y = load_labels(labels_path)
    train, val, test = load_masks(masks_path)
    n = X.shape[0]
    for name, arr in (("labels", y), ("masks", train)):
        if arr.shape[0] != n:
            raise ParseError(f"{name} row count {arr.shape[0]} != feature rows {n}")
    g = load_edge_list(edges_path, n)
    g.features = FeatureStore(X=X, y=y, train_mask=train, val_mask=val, test_mask=test)
    return g
