"""JSON-lines step reports and their CSV aggregation."""

from __future__ import annotations

import csv
import json

from .errors import ParseError

__all__ = ["write_jsonl", "read_jsonl", "summarize_reports", "write_summary_csv",
           "write_bound_trace_csv"]

_REQUIRED = ("kind", "total_ms", "prop_ms", "retrained", "bound_data", "bound_worst")


def write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            missing = [key for key in _REQUIRED if key not in rec]
            if missing:
                raise ParseError(f"{path}:{lineno}: report missing fields {missing}")
            records.append(rec)
    return records


def summarize_reports(records) -> list:
    """One summary row per request kind: counts, mean costs, retrains."""
    by_kind: dict[str, list] = {}
    for rec in records:
        by_kind.setdefault(rec["kind"], []).append(rec)
    rows = []
    for kind in sorted(by_kind):
        group = by_kind[kind]
        n = len(group)
        rows.append({
            "kind": kind,
            "requests": n,
            "mean_total_ms": sum(r["total_ms"] for r in group) / n,
            "mean_prop_ms": sum(r["prop_ms"] for r in group) / n,
            "retrains": sum(1 for r in group if r["retrained"]),
            "mean_bound_data": sum(r["bound_data"] for r in group) / n,
        })
    return rows


def write_summary_csv(records, path) -> None:
    rows = summarize_reports(records)
    fields = ["kind", "requests", "mean_total_ms", "mean_prop_ms", "retrains",
              "mean_bound_data"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def write_bound_trace_csv(records, path) -> None:
    """Step-indexed trace of true residual vs. both bounds, for plotting."""
    fields = ["step", "kind", "residual_true", "bound_data", "bound_worst", "retrained"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for step, rec in enumerate(records):
            writer.writerow({
                "step": step,
                "kind": rec["kind"],
                "residual_true": rec.get("residual_true", ""),
                "bound_data": rec["bound_data"],
                "bound_worst": rec["bound_worst"],
                "retrained": rec["retrained"],
            })
