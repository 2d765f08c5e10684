"""Shared builders for random graphs and removal sequences."""

import numpy as np
import pytest

from graphunlearn.graph import FeatureStore, Graph


def random_edges(n, p, rng):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return list(zip(iu[keep].tolist(), ju[keep].tolist()))


def random_graph(n, p, seed, n_features=2, with_features=True):
    rng = np.random.default_rng(seed)
    edges = random_edges(n, p, rng)
    feats = None
    if with_features:
        X = rng.normal(size=(n, n_features))
        max_norm = np.linalg.norm(X, axis=1).max()
        if max_norm > 0:
            X = X / max_norm
        y = rng.integers(0, 2, size=n)
        train = rng.random(n) < 0.6
        train[0] = True  # never an empty training set
        feats = FeatureStore(X=X, y=y, train_mask=train,
                             val_mask=np.zeros(n, bool), test_mask=~train)
    return Graph(n, edges, features=feats)


def random_weights(L, rng):
    w = rng.normal(size=L + 1)
    total = np.abs(w).sum()
    return w / total if total > 0 else np.full(L + 1, 1.0 / (L + 1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
