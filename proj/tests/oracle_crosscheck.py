#!/usr/bin/env python3
"""Cross-implementation oracle for the training loop.

Drives the CLI to generate a dataset and run one always-query pass
(mu = 0 makes the trajectory deterministic), then replays the identical
updates in numpy and compares the emitted trace checkpoint by checkpoint.
Any drift in the update rule, the averaging recurrence, checkpoint
placement, or evaluation shows up as a mismatch far above rounding noise.

Usage: oracle_crosscheck.py <path-to-usgd-cli>
Exits 0 on agreement, 1 on mismatch, 77 if numpy is unavailable (skip).
"""

import csv
import json
import subprocess
import sys
import tempfile
from pathlib import Path

try:
    import numpy as np
except ImportError:
    sys.exit(77)

GAMMA = 0.05
REL_TOL = 1e-9


def load_libsvm(path):
    rows, labels, dim = [], [], 0
    for line in open(path):
        parts = line.split()
        labels.append(int(parts[0]))
        feats = {}
        for tok in parts[1:]:
            idx, val = tok.split(":")
            feats[int(idx)] = float(val)
            dim = max(dim, int(idx))
        rows.append(feats)
    X = np.zeros((len(rows), dim))
    for r, feats in enumerate(rows):
        for i, v in feats.items():
            X[r, i - 1] = v
    return X, np.asarray(labels, dtype=float)


def main():
    if len(sys.argv) != 2:
        print("usage: oracle_crosscheck.py <usgd-cli>", file=sys.stderr)
        return 2
    cli = sys.argv[1]
    with tempfile.TemporaryDirectory(prefix="usgd-oracle-") as tmp:
        tmp = Path(tmp)
        (tmp / "gen.json").write_text(json.dumps({
            "dataset": {"kind": "synthetic", "task": "binary", "d": 8,
                        "n_train": 3000, "n_test": 800, "seed": 21},
            "learner": {"seed": 1},
        }))
        subprocess.run([cli, "generate", "--config", str(tmp / "gen.json"),
                        "--out", str(tmp / "data")], check=True,
                       stdout=subprocess.DEVNULL)
        (tmp / "run.json").write_text(json.dumps({
            "dataset": {"kind": "libsvm", "task": "binary",
                        "train_path": str(tmp / "data/train.libsvm"),
                        "test_path": str(tmp / "data/test.libsvm")},
            "learner": {"gamma": GAMMA, "mu": 0.0, "seed": 1},
            "experiment": {"checkpoints": 10},
        }))
        subprocess.run([cli, "run", "--config", str(tmp / "run.json"),
                        "--out", str(tmp / "out")], check=True,
                       stdout=subprocess.DEVNULL)

        Xtr, ytr = load_libsvm(tmp / "data/train.libsvm")
        Xte, yte = load_libsvm(tmp / "data/test.libsvm")
        want = {int(r["t"]): (float(r["mean_hinge"]), float(r["test_error"]))
                for r in csv.DictReader(open(tmp / "out/trace.csv"))}

        theta = np.zeros(Xtr.shape[1])
        tbar = np.zeros_like(theta)
        worst = 0.0
        for t in range(1, len(Xtr) + 1):
            x = Xtr[t - 1]
            hinge = max(0.0, 1.0 - ytr[t - 1] * float(theta @ x))
            if hinge > 0.0:
                theta = theta + GAMMA * ytr[t - 1] * hinge * x
            w = 1.0 / (t + 1)
            tbar = (1.0 - w) * tbar + w * theta
            if t in want:
                margins = yte * (Xte @ tbar)
                mean_hinge = np.maximum(0.0, 1.0 - margins).mean()
                test_error = float(np.mean(margins <= 0.0))
                rel = abs(mean_hinge - want[t][0]) / max(want[t][0], 1e-300)
                worst = max(worst, rel, abs(test_error - want[t][1]))
        print(f"worst relative disagreement: {worst:.3e}")
        if worst > REL_TOL:
            print("cross-implementation mismatch", file=sys.stderr)
            return 1
        return 0


if __name__ == "__main__":
    sys.exit(main())
