"""End-to-end command-line pipeline in a temp directory.

Writes a synthetic dataset to disk, then drives the installed CLI through
train -> gen-workload -> unlearn -> report, the same flow you would use on
real edge-list/CSV data.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from graphunlearn import datasets

tmp = Path(tempfile.mkdtemp(prefix="graphunlearn_demo_"))
g = datasets.make_blob_graph(n=150, n_classes=3, n_features=4, seed=11,
                             p_in=0.08, p_out=0.01, class_sep=2.5, noise=0.35)
paths = datasets.write_dataset(g, tmp / "data")
data_flags = ["--edges", paths["edges"], "--features", paths["features"],
              "--labels", paths["labels"], "--masks", paths["masks"]]


def run(*args):
    cmd = [sys.executable, "-m", "graphunlearn.cli", *args]
    print("$ graphunlearn", " ".join(args))
    res = subprocess.run(cmd, capture_output=True, text=True)
    if res.returncode != 0:
        print(res.stderr)
        raise SystemExit(res.returncode)
    return res.stdout


run("train", *data_flags, "--lam", "1e-7", "--alpha", "0", "--rmax", "1e-7",
    "--seed", "3", "--out-dir", str(tmp / "trained"))

run("gen-workload", *data_flags, "--kind", "random-edges", "--count", "20",
    "--batch-size", "5", "--seed", "4", "--out", str(tmp / "workload.jsonl"))

out = run("unlearn", *data_flags, "--lam", "1e-7", "--alpha", "0", "--rmax", "1e-7",
          "--seed", "3", "--workload", str(tmp / "workload.jsonl"),
          "--out", str(tmp / "reports.jsonl"), "--summary", str(tmp / "summary.json"),
          "--compare-retrain")
print(out)

run("report", str(tmp / "reports.jsonl"), "--out-dir", str(tmp / "csv"))
print("summary.csv:")
print((tmp / "csv" / "summary.csv").read_text())

summary = json.loads((tmp / "summary.json").read_text())
print(f"unlearned final test accuracy: {summary['final_accuracy']['test']:.4f}")
print(f"retrain  final test accuracy: {summary['final_accuracy_retrain']['test']:.4f}")
print(f"all artifacts under {tmp}")
