"""Built-in synthetic datasets: Gaussian blob features on a planted partition.

Keeps the test and demo pipelines self-contained — no downloads.  Classes
get one Gaussian feature prototype each; edges are sampled independently
with probability ``p_in`` inside a class and ``p_out`` across classes.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError
from .graph import FeatureStore, Graph

__all__ = ["make_blob_graph", "write_dataset"]


def make_blob_graph(n: int, n_classes: int, n_features: int, seed: int,
                    p_in: float = 0.05, p_out: float = 0.005,
                    train_frac: float = 0.5, val_frac: float = 0.1,
                    class_sep: float = 1.0, noise: float = 0.5) -> Graph:
    """Planted-partition graph with class-conditional Gaussian features."""
    if n_classes < 1 or n < n_classes:
        raise ConfigError("need at least one node per class")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_classes, size=n)
    # guarantee every class appears
    labels[:n_classes] = np.arange(n_classes)

    protos = rng.normal(0.0, class_sep, size=(n_classes, n_features))
    X = protos[labels] + rng.normal(0.0, noise, size=(n, n_features))

    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    p = np.where(same, p_in, p_out)
    keep = rng.random(len(iu)) < p
    edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))

    order = rng.permutation(n)
    n_train = int(round(train_frac * n))
    n_val = int(round(val_frac * n))
    train_mask = np.zeros(n, dtype=bool)
    val_mask = np.zeros(n, dtype=bool)
    test_mask = np.zeros(n, dtype=bool)
    train_mask[order[:n_train]] = True
    val_mask[order[n_train:n_train + n_val]] = True
    test_mask[order[n_train + n_val:]] = True

    feats = FeatureStore(X=X, y=labels, train_mask=train_mask,
                         val_mask=val_mask, test_mask=test_mask)
    return Graph(n, edges, features=feats)


def write_dataset(g: Graph, out_dir) -> dict:
    """Write edges/features/labels/masks in the plain-text ingestion formats."""
    if g.features is None:
        raise ConfigError("graph has no features to write")
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "edges": os.path.join(out_dir, "edges.txt"),
        "features": os.path.join(out_dir, "features.csv"),
        "labels": os.path.join(out_dir, "labels.txt"),
        "masks": os.path.join(out_dir, "masks.txt"),
    }
    with open(paths["edges"], "w") as fh:
        for u, v in g.edges():
            fh.write(f"{u} {v}\n")
    np.savetxt(paths["features"], g.features.X, delimiter=",", fmt="%.17g")
    with open(paths["labels"], "w") as fh:
        for label in g.features.y:
            fh.write(f"{int(label)}\n")
    with open(paths["masks"], "w") as fh:
        for i in range(g.n):
            if g.features.train_mask[i]:
                fh.write("train\n")
            elif g.features.val_mask[i]:
                fh.write("val\n")
            else:
                fh.write("test\n")
    return paths
