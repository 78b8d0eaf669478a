"""Command-line entry point: ``pcl run|ablate|verify-pde|check-bounds|aggregate``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import bounds, fkpde
from .buffer import load_jsonl
from .config import ConfigError, Experiment, load, parse_overrides
from .errors import IngestionError
from .net import DenseNetwork
from .streams import make_stream
from .trainer import RunConfig, RunRecord, run

log = logging.getLogger("parabolic_cl")

SCHEMA_VERSION = 1
RUNS_COLUMNS = ["schema_version", "label", "seed", "method", "task", "aa", "acc_final", "aaa", "status"]
AGG_COLUMNS = ["schema_version", "label", "method", "n_seeds", "n_diverged",
               "acc_mean", "acc_sd", "aaa_mean", "aaa_sd"]
PDE_COLUMNS = ["problem_id", "x0", "t", "fd_value", "fk_value", "stderr", "status"]
WORKERS_ENV = "PCL_WORKERS"


def _dump(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _atomic_csv(path: Path, columns, rows):
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in columns})
    os.replace(tmp, path)


def _fmt(x) -> str:
    return repr(float(x))


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _run_job(cfg: RunConfig) -> RunRecord:
    return run(cfg)


def write_run(out: Path, label: str, cfg: RunConfig, rec: RunRecord):
    d = out / "runs" / label / f"seed_{cfg.seed}"
    body = rec.to_dict()
    body["label"] = label
    body["config"] = asdict(cfg)
    _dump(body, d / "record.json")
    for ck in rec.checkpoints:
        _dump(ck.net, d / f"net_task{ck.task}.json")
        with open(d / f"buffer_task{ck.task}.jsonl", "w") as fh:
            for s in ck.buffer:
                fh.write(json.dumps(s) + "\n")


def execute(exp: Experiment, jobs: list[tuple[str, str, dict]]) -> int:
    """Run every (label, method, overrides) job for every seed and write the
    results bundle. Returns a process exit code."""
    out = exp.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(exp.text)
    _dump({k: list(v) if isinstance(v, tuple) else v for k, v in exp.values.items()},
          out / "effective_config.json")

    cfgs = [(label, exp.run_config(method, seed, extra))
            for label, method, extra in jobs for seed in exp.seeds]
    for seed in exp.seeds:
        stream_cfg = cfgs[0][1].stream
        make_stream(replace(stream_cfg, seed=seed)).write_manifest(
            out / "manifests" / f"seed_{seed}.json")

    workers = _workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_job, [c for _, c in cfgs]))
    else:
        records = [_run_job(c) for _, c in cfgs]

    timing = {}
    diverged = False
    for (label, cfg), rec in zip(cfgs, records):
        write_run(out, label, cfg, rec)
        timing[f"{label}/seed_{cfg.seed}"] = rec.wall_clock
        diverged |= rec.status != "ok"
        log.info("%s seed=%d acc=%.4f aaa=%.4f %s", label, cfg.seed, rec.acc_final, rec.aaa, rec.status)
    _dump(timing, out / "timing.json")
    aggregate(out)
    return 1 if diverged else 0


def load_records(out: Path) -> list[dict]:
    recs = []
    for p in sorted((out / "runs").glob("*/seed_*/record.json")):
        recs.append(json.loads(p.read_text()))
    recs.sort(key=lambda r: (r["label"], r["seed"]))
    return recs


def aggregate(out: Path) -> list[dict]:
    """Rebuild ``runs.csv`` and ``aggregate.csv`` from per-seed records."""
    out = Path(out)
    recs = load_records(out)
    rows = []
    for r in recs:
        for j, aa in enumerate(r["aa"]):
            rows.append({"schema_version": SCHEMA_VERSION, "label": r["label"], "seed": r["seed"],
                         "method": r["method"], "task": j, "aa": _fmt(aa),
                         "acc_final": _fmt(r["acc_final"]), "aaa": _fmt(r["aaa"]),
                         "status": r["status"]})
    _atomic_csv(out / "runs.csv", RUNS_COLUMNS, rows)

    agg = []
    labels = sorted({r["label"] for r in recs})
    for label in labels:
        group = [r for r in recs if r["label"] == label]
        ok = [r for r in group if r["status"] == "ok"]
        acc = np.array([r["acc_final"] for r in ok])
        aaa = np.array([r["aaa"] for r in ok])
        sd = lambda a: float(a.std(ddof=1)) if len(a) > 1 else 0.0
        mean = lambda a: float(a.mean()) if len(a) else float("nan")
        agg.append({"schema_version": SCHEMA_VERSION, "label": label, "method": group[0]["method"],
                    "n_seeds": len(group), "n_diverged": len(group) - len(ok),
                    "acc_mean": _fmt(mean(acc)), "acc_sd": _fmt(sd(acc)),
                    "aaa_mean": _fmt(mean(aaa)), "aaa_sd": _fmt(sd(aaa))})
    _atomic_csv(out / "aggregate.csv", AGG_COLUMNS, agg)
    return agg


def bounds_for_run(run_dir: Path, n_pairs: int = 1000) -> tuple[list, list]:
    rec = json.loads((run_dir / "record.json").read_text())
    lips = {}
    for c in rec["checkpoints"]:
        net_p = run_dir / f"net_task{c['task']}.json"
        buf_p = run_dir / f"buffer_task{c['task']}.jsonl"
        if not (c["buffer_losses"] and net_p.exists() and buf_p.exists()):
            continue
        net = DenseNetwork.from_dict(json.loads(net_p.read_text()))
        items = load_jsonl(buf_p)
        X = np.stack([s.features for s in items])
        Y = np.stack([s.label for s in items])
        rng = np.random.default_rng([rec["seed"], c["task"]])
        lips[c["task"]] = bounds.lipschitz_estimate(net, X, Y, rng, n_pairs=n_pairs)
    return bounds.check_forgetting(rec), bounds.check_generalization(rec, lips)


def check_bundle(out: Path, min_pass_rate: float = 0.8) -> tuple[list[dict], dict, bool]:
    rows, per_label = [], {}
    for run_dir in sorted((out / "runs").glob("*/seed_*")):
        label = run_dir.parent.name
        f, g = bounds_for_run(run_dir)
        if not f:
            continue
        flags = bounds.pattern_summary(f, g)
        per_label.setdefault(label, []).append(flags)
        gmap = {r.checkpoint: r for r in g}
        for r in f:
            gr = gmap[r.checkpoint]
            rows.append({"label": label, **asdict(r),
                         **{k: v for k, v in asdict(gr).items() if k not in ("seed", "checkpoint")}})
    summary = {}
    ok = bool(per_label)
    for label, flags in per_label.items():
        n = len(flags)
        forget = sum(f["forgetting_max_all"] for f in flags) / n
        lower = sum(f["generalization_lower_all"] for f in flags) / n
        summary[label] = {"n_seeds": n, "forgetting_pass_rate": forget, "lower_bound_pass_rate": lower,
                          "forgetting_avg_pass_rate": sum(f["forgetting_avg_all"] for f in flags) / n,
                          "upper_pass_rate": sum(f["generalization_upper_all"] for f in flags) / n}
        ok &= forget >= min_pass_rate and lower >= min_pass_rate
    return rows, summary, ok


# -- subcommands -------------------------------------------------------------------

def cmd_run(args) -> int:
    exp = load(args.config).with_overrides(parse_overrides(args.set))
    return execute(exp, [(m, m, {}) for m in exp.methods])


def cmd_ablate(args) -> int:
    exp = load(args.config).with_overrides(parse_overrides(args.set))
    return execute(exp, [(name, "pcl", extra) for name, extra in exp.ablation_grid()])


def cmd_verify_pde(args) -> int:
    n_paths, dt, seed = args.n_paths, args.dt, args.seed
    if args.config:
        exp = load(args.config).with_overrides(parse_overrides(args.set))
        n_paths = exp.get("verify.n_paths", n_paths)
        dt = exp.get("verify.dt", dt)
        seed = exp.get("verify.seed", seed)
    rows = fkpde.run_suite(n_paths=n_paths, dt=dt, seed=seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _atomic_csv(out, PDE_COLUMNS, [{**r, **{k: _fmt(r[k]) for k in ("x0", "t", "fd_value", "fk_value", "stderr")}}
                                   for r in rows])
    for r in rows:
        print(f"{r['problem_id']:16s} fd={r['fd_value']:.5f} fk={r['fk_value']:.5f} "
              f"se={r['stderr']:.5f} {r['status']}")
    return 1 if any(r["status"] == "fail" for r in rows) else 0


def cmd_check_bounds(args) -> int:
    out = Path(args.bundle)
    rows, summary, ok = check_bundle(out)
    if not rows:
        print("no runs with buffer checkpoints found", file=sys.stderr)
        return 2
    cols = list(rows[0].keys())
    _atomic_csv(Path(args.out) if args.out else out / "bounds.csv", cols, rows)
    _dump(summary, out / "bounds_summary.json")
    for label, s in summary.items():
        print(f"{label}: forgetting {s['forgetting_pass_rate']:.2f} lower-bound {s['lower_bound_pass_rate']:.2f} "
              f"(avg-buffer {s['forgetting_avg_pass_rate']:.2f}, upper {s['upper_pass_rate']:.2f})")
    return 0 if ok else 1


def cmd_aggregate(args) -> int:
    for row in aggregate(Path(args.bundle)):
        print(f"{row['label']}: acc {float(row['acc_mean']):.4f} ± {float(row['acc_sd']):.4f} "
              f"aaa {float(row['aaa_mean']):.4f} ± {float(row['aaa_sd']):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pcl", description="Parabolic continual learning experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn, help_ in (("run", cmd_run, "train every method/seed in a config"),
                            ("ablate", cmd_ablate, "run the sampling-strategy grid")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
        p.set_defaults(func=fn)

    p = sub.add_parser("verify-pde", help="Feynman-Kac vs finite-difference suite")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.add_argument("--n-paths", type=int, default=10_000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="verify_pde.csv")
    p.set_defaults(func=cmd_verify_pde)

    p = sub.add_parser("check-bounds", help="forgetting/generalisation report for a bundle")
    p.add_argument("bundle")
    p.add_argument("--out")
    p.set_defaults(func=cmd_check_bounds)

    p = sub.add_parser("aggregate", help="rebuild aggregate CSVs from per-seed records")
    p.add_argument("bundle")
    p.set_defaults(func=cmd_aggregate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, IngestionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
