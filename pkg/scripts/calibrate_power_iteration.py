"""Calibrate the K=1 cosine threshold used by the power-iteration acceptance check.

Runs the oracle comparison on blocks of 20 random (8, 16, 3) MLPs, using
seed blocks 0..N-1 (the acceptance run uses block 1000, which is never seen
here), and prints per-block means plus the eig_ratio > 10 subset.

    python3 scripts/calibrate_power_iteration.py --blocks 8
"""
import argparse
import json

import numpy as np

from vatlab.cli import random_oracle_models
from vatlab.oracle import compare_vadv_to_oracle, dense_hessian
from vatlab.perturbation import PerturbConfig


def block_stats(seed, models=20, trials=100, ks=(0, 1, 2, 4)):
    rows = []
    for spec, params, x, r in random_oracle_models(models, seed, 8, (16,), 3):
        hess = dense_hessian(spec, params, x)
        row = {"eig_ratio": hess.eig_ratio}
        for k in ks:
            s = compare_vadv_to_oracle(spec, params, x, PerturbConfig(1.0, power_iterations=k),
                                       trials, r.substream("trials", k), hess)
            row[k] = s["mean_abs_cos"]
        rows.append(row)
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--blocks", type=int, default=8)
    args = ap.parse_args()
    all_rows = []
    for b in range(args.blocks):
        rows = block_stats(b)
        all_rows += rows
        print(json.dumps({"block": b, **{f"K{k}": round(float(np.mean([r[k] for r in rows])), 4)
                                         for k in (0, 1, 2, 4)}}))
    k1 = np.array([[r[1] for r in all_rows[i:i + 20]] for i in range(0, len(all_rows), 20)]).mean(axis=1)
    sharp = [r[1] for r in all_rows if r["eig_ratio"] > 10]
    print(json.dumps({
        "k1_block_mean": float(k1.mean()), "k1_block_sd": float(k1.std(ddof=1)),
        "k1_block_min": float(k1.min()),
        "sharp_models": len(sharp), "sharp_mean": float(np.mean(sharp)), "sharp_min": float(np.min(sharp)),
    }))


if __name__ == "__main__":
    main()
