"""Workload generation and the JSON-lines request wire format.

One request per line:

    {"op": "edge", "u": i, "v": j}
    {"op": "node", "u": i}
    {"op": "feature", "u": i}
    {"op": "batch", "items": [...]}

Generators are deterministic given a seed.  The adversarial generator
plants cross-label edges and therefore emits an augmented edge list next
to the removal schedule; replaying the schedule restores the input graph.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ConfigError, ParseError
from .graph import Graph
from .unlearn import BatchRemoval, EdgeRemoval, FeatureRemoval, NodeRemoval

__all__ = [
    "request_to_dict",
    "request_from_dict",
    "write_workload",
    "read_workload",
    "random_edge_workload",
    "random_node_workload",
    "random_feature_workload",
    "vulnerable_edge_workload",
    "adversarial_edge_workload",
    "batched",
]


def request_to_dict(req) -> dict:
    if isinstance(req, EdgeRemoval):
        return {"op": "edge", "u": req.u, "v": req.v}
    if isinstance(req, NodeRemoval):
        return {"op": "node", "u": req.u}
    if isinstance(req, FeatureRemoval):
        return {"op": "feature", "u": req.u}
    if isinstance(req, BatchRemoval):
        return {"op": "batch", "items": [request_to_dict(it) for it in req.items]}
    raise ConfigError(f"unknown request {req!r}")


def request_from_dict(obj: dict, where: str = "workload"):
    try:
        op = obj["op"]
        if op == "edge":
            return EdgeRemoval(int(obj["u"]), int(obj["v"]))
        if op == "node":
            return NodeRemoval(int(obj["u"]))
        if op == "feature":
            return FeatureRemoval(int(obj["u"]))
        if op == "batch":
            return BatchRemoval(tuple(request_from_dict(it, where) for it in obj["items"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{where}: bad request {obj!r}: {exc}") from None
    raise ParseError(f"{where}: unknown op {obj.get('op')!r}")


def write_workload(path, requests) -> None:
    with open(path, "w") as fh:
        for req in requests:
            fh.write(json.dumps(request_to_dict(req)) + "\n")


def read_workload(path) -> list:
    requests = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            requests.append(request_from_dict(obj, where=f"{path}:{lineno}"))
    return requests


def batched(requests, batch_size: int) -> list:
    """Group single removals into batch requests of the given size."""
    if batch_size <= 1:
        return list(requests)
    out = []
    bucket = []
    for req in requests:
        bucket.append(req)
        if len(bucket) == batch_size:
            out.append(BatchRemoval(tuple(bucket)))
            bucket = []
    if bucket:
        out.append(BatchRemoval(tuple(bucket)))
    return out


def _non_self_edges(g: Graph) -> list:
    return list(g.edges())


def random_edge_workload(g: Graph, count: int, seed: int, batch_size: int = 1) -> list:
    """Uniform sample of existing edges, without replacement."""
    edges = _non_self_edges(g)
    if count > len(edges):
        raise ConfigError(f"requested {count} edges but only {len(edges)} exist")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(edges), size=count, replace=False)
    reqs = [EdgeRemoval(*edges[i]) for i in picks]
    return batched(reqs, batch_size)


def random_node_workload(g: Graph, count: int, seed: int, batch_size: int = 1) -> list:
    live = np.flatnonzero(g.live_mask())
    if count > len(live):
        raise ConfigError(f"requested {count} nodes but only {len(live)} are live")
    rng = np.random.default_rng(seed)
    picks = rng.choice(live, size=count, replace=False)
    return batched([NodeRemoval(int(u)) for u in picks], batch_size)


def random_feature_workload(g: Graph, count: int, seed: int, batch_size: int = 1) -> list:
    live = np.flatnonzero(g.live_mask())
    if count > len(live):
        raise ConfigError(f"requested {count} features but only {len(live)} nodes are live")
    rng = np.random.default_rng(seed)
    picks = rng.choice(live, size=count, replace=False)
    return batched([FeatureRemoval(int(u)) for u in picks], batch_size)


def vulnerable_edge_workload(g: Graph, count: int, seed: int, degree_threshold: int,
                             batch_size: int = 1) -> list:
    """Edges joining low-degree test nodes to low-degree same-label nodes.

    Low degree hurts the worst-case bound the most, so these removals are
    the ones most likely to move model accuracy.
    """
    if g.features is None:
        raise ConfigError("vulnerable-edge selection needs labels and masks")
    y = g.features.y
    test_mask = g.features.test_mask
    deg = g.degree_vector()
    rng = np.random.default_rng(seed)
    low_test = [int(u) for u in np.flatnonzero(test_mask & g.live_mask())
                if deg[u] <= degree_threshold]
    rng.shuffle(low_test)
    chosen = []
    seen = set()
    for u in low_test:
        for v in g.neighbors(u):
            if v == u or deg[v] > degree_threshold or y[v] != y[u]:
                continue
            key = (min(u, v), max(u, v))
            if key in seen:
                continue
            seen.add(key)
            chosen.append(EdgeRemoval(*key))
            if len(chosen) == count:
                return batched(chosen, batch_size)
    raise ConfigError(
        f"only {len(chosen)} vulnerable edges available below degree "
        f"{degree_threshold}, requested {count}")


def adversarial_edge_workload(g: Graph, count: int, seed: int, n_targets: int = 2000,
                              batch_size: int = 1, max_tries: int = 1_000_000):
    """Plant cross-label edges on sampled test nodes; emit (new_edges, schedule).

    The returned edges must be added to the dataset copy before training;
    removing the full schedule recovers the original graph.
    """
    if g.features is None:
        raise ConfigError("adversarial-edge selection needs labels and masks")
    y = g.features.y
    rng = np.random.default_rng(seed)
    test_nodes = np.flatnonzero(g.features.test_mask & g.live_mask())
    if len(test_nodes) == 0:
        raise ConfigError("no test nodes to target")
    targets = rng.choice(test_nodes, size=min(n_targets, len(test_nodes)), replace=False)
    live = np.flatnonzero(g.live_mask())
    new_edges = []
    seen = set()
    tries = 0
    while len(new_edges) < count:
        tries += 1
        if tries > max_tries:
            raise ConfigError(
                f"only found {len(new_edges)} adversarial pairs in {max_tries} draws, "
                f"requested {count}")
        u = int(rng.choice(targets))
        v = int(rng.choice(live))
        if u == v or y[u] == y[v]:
            continue
        key = (min(u, v), max(u, v))
        if key in seen or g.has_edge(u, v):
            continue
        seen.add(key)
        new_edges.append(key)
    schedule = batched([EdgeRemoval(*e) for e in new_edges], batch_size)
    return new_edges, schedule
