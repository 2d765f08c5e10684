"""Command-line harness: train, unlearn, gen-workload, report.

Flags mirror run-config fields one-to-one; a ``--config`` file of
``key=value`` lines may set any of them, with explicit flags taking
precedence.  Exit codes: 0 success, 1 config/parse error, 2 runtime error.
``GRAPHUNLEARN_THREADS`` caps per-class training parallelism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import models, propagation, reporting, workloads
from .errors import ConfigError, GraphUnlearnError, NotFoundError, ParseError
from .graph import load_dataset
from .models import LossSpec
from .unlearn import RetrainBaseline, UnlearnEngine

__all__ = ["main"]


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GRAPHUNLEARN_THREADS", "1")))
    except ValueError:
        return 1


def _add_dataset_args(p):
    p.add_argument("--edges", required=True, help="edge list file, one 'u v' per line")
    p.add_argument("--features", required=True, help="CSV feature matrix")
    p.add_argument("--labels", required=True, help="one class index per line")
    p.add_argument("--masks", required=True, help="one of train/val/test per line")


def _add_engine_args(p):
    p.add_argument("--depth", type=int, default=2, help="propagation depth L")
    p.add_argument("--weights", default=None,
                   help="comma-separated w_0..w_L (default: delta at level L)")
    p.add_argument("--rmax", type=float, default=1e-7, help="push threshold (0 = exact)")
    p.add_argument("--loss", default="logistic", choices=["logistic", "least_squares"])
    p.add_argument("--lam", type=float, default=None, help="ridge strength (required)")
    p.add_argument("--alpha", type=float, default=0.1, help="noise standard deviation")
    p.add_argument("--eps", type=float, default=1.0, help="privacy epsilon")
    p.add_argument("--delta", type=float, default=None,
                   help="privacy delta (default 1/#edges or 1/#nodes by workload)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=None, help="trainer gradient tolerance")


def _parse_weights(args, L):
    if args.weights is None:
        w = np.zeros(L + 1)
        w[L] = 1.0
        return w
    try:
        w = np.array([float(tok) for tok in args.weights.split(",")])
    except ValueError:
        raise ConfigError(f"cannot parse weights {args.weights!r}") from None
    if len(w) != L + 1:
        raise ConfigError(f"need {L + 1} weights for depth {L}, got {len(w)}")
    return w


def _require_lam(args):
    if args.lam is None:
        raise ConfigError("missing required field: lam")
    return args.lam


def _load_graph(args):
    return load_dataset(args.edges, args.features, args.labels, args.masks)


def _default_delta(args, g, requests):
    if args.delta is not None:
        return args.delta
    def flat(reqs):
        for r in reqs:
            if hasattr(r, "items"):
                yield from flat(r.items)
            else:
                yield r
    items = list(flat(requests))
    structural = any(r.kind in ("node", "feature") for r in items)
    return 1.0 / g.n if structural else 1.0 / max(g.edge_count(), 1)


def cmd_train(args) -> int:
    g = _load_graph(args)
    lam = _require_lam(args)
    weights = _parse_weights(args, args.depth)
    delta = args.delta if args.delta is not None else 1e-4
    spec = LossSpec.make(args.loss, lam)
    t0 = time.perf_counter()
    engine = UnlearnEngine(g, args.depth, weights, args.rmax, spec, args.alpha,
                           args.eps, delta, args.seed, tol=args.tol,
                           n_threads=_threads())
    train_s = time.perf_counter() - t0
    os.makedirs(args.out_dir, exist_ok=True)
    models.save_model(engine.model, os.path.join(args.out_dir, "model.bin"))
    propagation.save_snapshot(engine.state, os.path.join(args.out_dir, "propagation.snap"))
    report = {
        "n": g.n,
        "edges": g.edge_count(),
        "n_train": g.features.n_train,
        "depth": args.depth,
        "rmax": args.rmax,
        "lam": lam,
        "alpha": args.alpha,
        "budget": engine.ledger.budget,
        "train_seconds": train_s,
        "accuracy": {which: engine.accuracy(which) for which in ("train", "val", "test")},
    }
    with open(os.path.join(args.out_dir, "train_report.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    print(json.dumps(report, indent=2))
    return 0


def _build_engine(args, g, requests):
    delta = _default_delta(args, g, requests)
    if args.state_dir:
        state = propagation.load_snapshot(
            os.path.join(args.state_dir, "propagation.snap"), g)
        model = models.load_model(os.path.join(args.state_dir, "model.bin"))
        return UnlearnEngine.from_trained(g, state, model, args.eps, delta,
                                          tol=args.tol, n_threads=_threads())
    lam = _require_lam(args)
    weights = _parse_weights(args, args.depth)
    spec = LossSpec.make(args.loss, lam)
    return UnlearnEngine(g, args.depth, weights, args.rmax, spec, args.alpha,
                         args.eps, delta, args.seed, tol=args.tol,
                         n_threads=_threads())


def cmd_unlearn(args) -> int:
    g = _load_graph(args)
    requests = workloads.read_workload(args.workload)
    engine = _build_engine(args, g, requests)
    baseline = None
    if args.compare_retrain:
        g2 = _load_graph(args)
        baseline = RetrainBaseline(g2, engine.state.L, engine.state.weights,
                                   engine.state.rmax, engine.spec,
                                   engine.ledger.alpha, args.seed,
                                   tol=args.tol, n_threads=_threads())

    records = []
    skipped = 0
    for i, req in enumerate(requests):
        try:
            rep = engine.process_request(req, oracle_check=args.oracle_checks)
        except NotFoundError as exc:
            if args.strict:
                raise
            skipped += 1
            print(f"request {i}: skipped ({exc})", file=sys.stderr)
            continue
        rec = rep.to_json_dict()
        if baseline is not None:
            baseline.process_request(req)
            rec["accuracy_unlearn"] = engine.accuracy("test")
            rec["accuracy_retrain"] = baseline.accuracy("test")
        records.append(rec)
    reporting.write_jsonl(args.out, records)

    n = len(records)
    summary = {
        "requests": n,
        "skipped": skipped,
        "retrains": engine.ledger.retrains,
        "budget": engine.ledger.budget,
        "mean_total_ms": sum(r["total_ms"] for r in records) / n if n else 0.0,
        "mean_prop_ms": sum(r["prop_ms"] for r in records) / n if n else 0.0,
        "final_accuracy": {which: engine.accuracy(which)
                           for which in ("train", "val", "test")},
    }
    if baseline is not None:
        summary["final_accuracy_retrain"] = {
            which: baseline.accuracy(which) for which in ("train", "val", "test")}
    if args.summary:
        with open(args.summary, "w") as fh:
            json.dump(summary, fh, indent=2)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_gen_workload(args) -> int:
    g = _load_graph(args)
    kind = args.kind
    if kind == "random-edges":
        reqs = workloads.random_edge_workload(g, args.count, args.seed, args.batch_size)
    elif kind == "random-nodes":
        reqs = workloads.random_node_workload(g, args.count, args.seed, args.batch_size)
    elif kind == "random-features":
        reqs = workloads.random_feature_workload(g, args.count, args.seed, args.batch_size)
    elif kind == "vulnerable-edges":
        if args.degree_threshold is None:
            raise ConfigError("missing required field: degree_threshold")
        reqs = workloads.vulnerable_edge_workload(g, args.count, args.seed,
                                                  args.degree_threshold, args.batch_size)
    elif kind == "adversarial-edges":
        if args.augmented_edges is None:
            raise ConfigError("missing required field: augmented_edges")
        new_edges, reqs = workloads.adversarial_edge_workload(
            g, args.count, args.seed, n_targets=args.n_targets,
            batch_size=args.batch_size)
        with open(args.augmented_edges, "w") as fh:
            for u, v in list(g.edges()) + new_edges:
                fh.write(f"{u} {v}\n")
    else:
        raise ConfigError(f"unknown workload kind {kind!r}")
    workloads.write_workload(args.out, reqs)
    print(f"wrote {len(reqs)} requests to {args.out}")
    return 0


def cmd_report(args) -> int:
    records = []
    for path in args.reports:
        records.extend(reporting.read_jsonl(path))
    os.makedirs(args.out_dir, exist_ok=True)
    summary_path = os.path.join(args.out_dir, "summary.csv")
    trace_path = os.path.join(args.out_dir, "bounds.csv")
    reporting.write_summary_csv(records, summary_path)
    reporting.write_bound_trace_csv(records, trace_path)
    print(f"wrote {summary_path} and {trace_path}")
    return 0


def _apply_config_file(argv):
    """Fold key=value lines from --config into argv as defaults."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise ConfigError("--config needs a file path")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2:]
    injected = []
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            flag = "--" + key.strip().replace("_", "-")
            if flag in rest:
                continue  # explicit flag wins
            if value.strip().lower() in ("true", "false"):
                if value.strip().lower() == "true":
                    injected.append(flag)
            else:
                injected.extend([flag, value.strip()])
    # insert after the subcommand so argparse treats them as that command's flags
    return rest[:1] + injected + rest[1:]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphunlearn",
        description="Certified graph unlearning on lazily maintained GPR embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="propagate, train, and save model + snapshot")
    _add_dataset_args(p)
    _add_engine_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("unlearn", help="replay a removal workload")
    _add_dataset_args(p)
    _add_engine_args(p)
    p.add_argument("--state-dir", default=None,
                   help="resume from a train run's model.bin + propagation.snap "
                        "instead of training from scratch")
    p.add_argument("--workload", required=True)
    p.add_argument("--out", required=True, help="JSON-lines report stream")
    p.add_argument("--summary", default=None, help="summary JSON path")
    p.add_argument("--compare-retrain", action="store_true",
                   help="also run a full re-propagation + retrain baseline")
    p.add_argument("--oracle-checks", action="store_true",
                   help="record exact gradient residuals (desk scale only)")
    p.add_argument("--strict", action="store_true",
                   help="abort on requests referencing missing edges/nodes")
    p.set_defaults(func=cmd_unlearn)

    p = sub.add_parser("gen-workload", help="generate a removal workload")
    _add_dataset_args(p)
    p.add_argument("--kind", required=True,
                   choices=["random-edges", "random-nodes", "random-features",
                            "vulnerable-edges", "adversarial-edges"])
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--degree-threshold", type=int, default=None,
                   help="vulnerable-edges: max endpoint degree")
    p.add_argument("--augmented-edges", default=None,
                   help="adversarial-edges: path for the augmented edge list")
    p.add_argument("--n-targets", type=int, default=2000,
                   help="adversarial-edges: size of the sampled test-node pool")
    p.set_defaults(func=cmd_gen_workload)

    p = sub.add_parser("report", help="aggregate JSON-lines reports into CSV")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config_file(argv)
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GraphUnlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
