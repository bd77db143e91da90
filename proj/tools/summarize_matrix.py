#!/usr/bin/env python3
"""Markdown tables (mean and std over seeds) from a run_matrix.sh output root."""

import json
import statistics
import sys
from pathlib import Path

RUNS = ["unregcaps", "0.4caps", "0.8caps", "schcaps", "equalcaps", "cnn"]


def final_metrics(run_dir):
    lines = (run_dir / "metrics.jsonl").read_text().splitlines()
    return json.loads(lines[-1])


def mean_std(values):
    if len(values) == 1:
        return f"{values[0]:.4f}"
    return f"{statistics.mean(values):.4f} ± {statistics.stdev(values):.4f}"


def main(root):
    seeds = sorted(p for p in Path(root).iterdir() if p.is_dir() and p.name.startswith("seed"))
    rows = []
    for run in RUNS:
        acc, ent, intact, swapped, drop = [], [], [], [], []
        for seed in seeds:
            d = seed / run
            if not (d / "probe.json").exists():
                continue
            m = final_metrics(d)
            p = json.loads((d / "probe.json").read_text())
            acc.append(m["val_accuracy"])
            ent.append(m["val_entropy_total"])
            intact.append(p["mean_intact"])
            swapped.append(p["mean_swapped"])
            drop.append(p["drop"])
        if acc:
            rows.append((run, len(acc), acc, ent, intact, swapped, drop))

    print("| model | seeds | val accuracy | val entropy (nats) | intact | swapped | drop |")
    print("|---|---|---|---|---|---|---|")
    for run, n, *cols in rows:
        print(f"| {run} | {n} | " + " | ".join(mean_std(c) for c in cols) + " |")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "matrix")
