"""Command line entry point: ``metaimpute run|summarize|demo``.

Options may also come from a YAML or JSON file passed with ``--config``;
flags given on the command line win over the file.  Without ``--threads``
the worker count is read from the ``METAIMPUTE_THREADS`` environment
variable (default 1).
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import yaml

from . import experiment as ex

RUN_DEFAULTS = {"preset": "desk", "methods": "all", "conditions": "all", "reps": 1, "seed": 0,
                "threads": None, "out": "results.csv", "resume": False}


def _load_config(path):
    text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if not isinstance(data, dict):
        raise SystemExit(f"{path}: config must be a mapping")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = set(data) - set(RUN_DEFAULTS)
    if unknown:
        raise SystemExit(f"{path}: unknown keys {sorted(unknown)}")
    return data


def _as_list(value):
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [t for t in str(value).split(",") if t]


def _methods(value):
    tokens = _as_list(value)
    if tokens == ["all"]:
        return list(ex.ALL_METHODS)
    try:
        return [ex.MethodId(t) for t in tokens]
    except ValueError as exc:
        raise SystemExit(f"unknown method in {tokens}: {exc}")


def resolve_run_options(args):
    opts = dict(RUN_DEFAULTS)
    if args.config:
        opts.update(_load_config(args.config))
    for key in RUN_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            opts[key] = value
    return opts


def _cmd_run(args):
    opts = resolve_run_options(args)
    methods = _methods(opts["methods"])
    conditions = ex.parse_conditions(_as_list(opts["conditions"]))
    threads = ex.resolve_threads(opts["threads"])
    start = time.perf_counter()
    records = ex.run_grid(methods, conditions, int(opts["reps"]), opts["preset"], threads,
                          int(opts["seed"]), opts["out"], bool(opts["resume"]))
    failed = sum(r.status != "ok" for r in records)
    print(f"{len(records)} records ({failed} failed) written to {opts['out']} "
          f"in {time.perf_counter() - start:.1f} s")
    return 0


def _cmd_summarize(args):
    rows = ex.summarize(ex.read_records(args.inp))
    ex.write_summary(rows, args.out)
    print(f"{len(rows)} summary rows written to {args.out}")
    return 0


def _cmd_demo(args):
    report = ex.appendix_a_demo(args.seed)
    print(report.text())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="metaimpute",
                                     description="Meta-level imputation simulation study")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the condition x method x replication grid")
    run.add_argument("--config", help="YAML or JSON file with run options")
    run.add_argument("--preset", choices=sorted(ex.simgen.PRESETS))
    run.add_argument("--methods", help="comma-separated method ids or 'all'")
    run.add_argument("--conditions", help="'all', '50', '90' or 'fraction:missing:noise', "
                                          "comma-separated")
    run.add_argument("--reps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--out")
    run.add_argument("--resume", action="store_true",
                     help="keep records already in --out and run only the rest")
    run.set_defaults(func=_cmd_run)

    summ = sub.add_parser("summarize", help="per-cell statistics of a results file")
    summ.add_argument("--in", dest="inp", required=True)
    summ.add_argument("--out", required=True)
    summ.set_defaults(func=_cmd_summarize)

    demo = sub.add_parser("demo", help="small demonstrations")
    demo.add_argument("name", choices=["appendix-a"])
    demo.add_argument("--seed", type=int, default=0)
    demo.set_defaults(func=_cmd_demo)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
