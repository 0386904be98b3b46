"""Command-line entry points: datagen, run, bench, report."""

from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys

from . import workloads
from .runner import Metrics, RunConfig, run


def _cmd_datagen(args):
    if args.dataset == "ds1":
        spec = workloads.ds1_spec(args.count, args.seed)
    elif args.dataset == "ds2":
        spec = workloads.ds2_spec(args.count, args.seed)
    else:
        with open(args.spec) as f:
            raw = json.load(f)
        raw["drifts"] = [workloads.Drift(**d) for d in raw.get("drifts", [])]
        spec = workloads.GeneratorSpec(**raw)
    if args.drift:
        extra = []
        for txt in args.drift:
            offset, attr, lo, hi = txt.split(":")
            extra.append(workloads.Drift(int(offset), attr,
                                         float(lo), float(hi)))
        spec = workloads.inject_drift(spec, extra)
    workloads.write_csv(workloads.generate(spec), args.out)
    print(f"wrote {spec.count} elements to {args.out}")


def _load_config(path: str) -> RunConfig:
    cfg = RunConfig.from_json(path)
    return cfg


def _cmd_run(args):
    cfg = _load_config(args.config)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    stream = workloads.load_csv(args.input)
    m = run(cfg, stream)
    for i in range(m.n):
        rec = "-" if m.recall is None else f"{m.recall[i]:.4f}"
        print(f"P{i + 1}: matches={len(m.matches[i])} recall={rec} "
              f"latency={m.latency_ms[i]:.4f}ms")
    print(f"elements={m.elements} triggers={m.triggers} "
          f"throughput={m.throughput:.0f}/s")
    return 0


def _cmd_bench(args):
    with open(args.suite) as f:
        suite = json.load(f)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, entry in suite.items():
        stream = workloads.load_csv(entry["input"])
        for rep in range(args.repeat):
            cfg = RunConfig(**{**entry["config"],
                               "seed": entry["config"].get("seed", 0) + rep})
            cfg.out_dir = os.path.join(args.out_dir, f"{name}-{rep}")
            m = run(cfg, stream)
            print(f"{name} rep={rep} triggers={m.triggers} "
                  f"recall={m.recall}")
    return 0


def _cmd_report(args):
    rows = []
    for path in sorted(glob.glob(os.path.join(args.in_dir, "*", "run.json"))):
        with open(path) as f:
            manifest = json.load(f)
        run_name = os.path.basename(os.path.dirname(path))
        mpath = os.path.join(os.path.dirname(path), "metrics.csv")
        with open(mpath, newline="") as f:
            for row in csv.DictReader(f):
                rows.append({"run": run_name, **row,
                             "strategy": manifest["config"]["strategy"],
                             "triggers": manifest["triggers"]})
    with open(args.out, "w", newline="") as f:
        if rows:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(prog="matchshed")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("datagen", help="generate a synthetic stream CSV")
    g.add_argument("--dataset", choices=["ds1", "ds2", "custom"],
                   default="ds1")
    g.add_argument("--spec", help="generator spec JSON (custom dataset)")
    g.add_argument("--count", type=int, default=10000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--drift", action="append",
                   help="offset:attr:low:high (repeatable)")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_cmd_datagen)

    r = sub.add_parser("run", help="run one config over a stream")
    r.add_argument("--config", required=True, help="RunConfig JSON")
    r.add_argument("--input", required=True, help="stream CSV")
    r.add_argument("--out-dir")
    r.set_defaults(fn=_cmd_run)

    b = sub.add_parser("bench", help="run a suite of configs")
    b.add_argument("--suite", required=True)
    b.add_argument("--repeat", type=int, default=1)
    b.add_argument("--out-dir", required=True)
    b.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("report", help="aggregate run artifacts")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_report)

    args = ap.parse_args(argv)
    return args.fn(args) or 0


if __name__ == "__main__":
    sys.exit(main())
