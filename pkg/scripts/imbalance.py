"""PCL vs ER on imbalanced streams (gamma = 2) under each class ordering.

    python scripts/imbalance.py --seeds 0 1 2
"""

import argparse

import numpy as np

from parabolic_cl.streams import StreamConfig, class_counts
from parabolic_cl.trainer import RunConfig, run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--gamma", type=float, default=2.0)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = ap.parse_args(argv)

    for order in ("normal", "reversed", "random"):
        stream = StreamConfig(imbalance=args.gamma, imbalance_order=order)
        if order != "random":
            print(order, "counts", class_counts(stream.samples_per_class, stream.n_classes,
                                                args.gamma, order).tolist())
        for method in ("pcl", "er"):
            res = [run(RunConfig(method=method, stream=stream, seed=s)) for s in args.seeds]
            acc = np.array([r.acc_final for r in res])
            aaa = np.array([r.aaa for r in res])
            print(f"  {order:8s} {method}: acc {acc.mean():.4f} +- {acc.std(ddof=1):.4f}  "
                  f"aaa {aaa.mean():.4f} +- {aaa.std(ddof=1):.4f}")


if __name__ == "__main__":
    main()
