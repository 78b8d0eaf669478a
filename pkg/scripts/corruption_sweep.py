"""Accuracy of PCL and ER as the label-corruption rate grows.

Also runs ER at twice the learning rate: the PCL loss carries time weights
summing to 2, so this is ER at a matched effective step size.

    python scripts/corruption_sweep.py --seeds 0 1 2 3 4 --out corruption.csv
"""

import argparse
import csv
from dataclasses import replace

import numpy as np

from parabolic_cl.streams import StreamConfig
from parabolic_cl.trainer import RunConfig, run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rates", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", default="corruption.csv")
    args = ap.parse_args(argv)

    variants = {"pcl": dict(method="pcl"), "er": dict(method="er"),
                "er_lr2x": dict(method="er", lr=2 * RunConfig().lr)}
    rows = []
    for rate in args.rates:
        for name, kw in variants.items():
            accs = [run(replace(RunConfig(**kw), stream=StreamConfig(corruption_rate=rate), seed=s)).acc_final
                    for s in args.seeds]
            rows.append({"rate": rate, "variant": name, "acc_mean": float(np.mean(accs)),
                         "acc_sd": float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0})
            print(f"rate={rate:.2f} {name:8s} acc={rows[-1]['acc_mean']:.4f} +- {rows[-1]['acc_sd']:.4f}")
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)

    base = {r["variant"]: r["acc_mean"] for r in rows if r["rate"] == args.rates[0]}
    for r in rows:
        if r["rate"] == args.rates[-1]:
            print(f"{r['variant']:8s} relative drop {(base[r['variant']] - r['acc_mean']) / base[r['variant']]:.3f}")


if __name__ == "__main__":
    main()
