"""Command line entry point: ``irkswe run | tableau | scan-stability | dump-mesh``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .harness import CSV_HEADER, ExperimentConfig, hierarchy_for, run_experiment
from .imex import imex_stability_scan
from .tableaux import SCHEMES, format_tableau, get_tableau

DEFAULT_SCAN_DTS = (150.0, 300.0, 450.0, 600.0, 900.0, 1200.0, 1800.0, 2400.0, 3600.0)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=None, help="worker threads for patch factorisations")
    p.add_argument("--verbose", action="store_true", default=None, help="solver trace on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irkswe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="step one scheme over one or more dt values and write CSV rows")
    run.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    run.add_argument("--scheme", choices=SCHEMES)
    run.add_argument("--level", type=int)
    run.add_argument("--dt", type=_floats, help="timestep in seconds, or a comma separated list")
    run.add_argument("--tf", type=float, help="end time in seconds")
    run.add_argument("--case", choices=("tc6", "tc2", "linear"))
    run.add_argument("--ref-dt", dest="ref_dt", type=float)
    run.add_argument("--out")
    run.add_argument("--solver", choices=("mg", "direct"))
    run.add_argument("--rtol", type=float, help="Newton relative tolerance")
    run.add_argument("--seed", type=int)
    run.add_argument("--dump", help="prefix for final-state field dumps")
    _common(run)

    tab = sub.add_parser("tableau", help="print Butcher tableau entries to 17 significant digits")
    tab.add_argument("--scheme", choices=SCHEMES, required=True)
    _common(tab)

    scan = sub.add_parser("scan-stability", help="ARK2 stability scan over dt")
    scan.add_argument("--level", type=int, default=4)
    scan.add_argument("--case", choices=("tc6", "tc2"), default="tc6")
    scan.add_argument("--dts", type=_floats, default=list(DEFAULT_SCAN_DTS))
    scan.add_argument("--steps", type=int, default=50)
    _common(scan)

    mesh = sub.add_parser("dump-mesh", help="write vertices, cells and edges of one mesh level")
    mesh.add_argument("--level", type=int, required=True)
    mesh.add_argument("--out", required=True)
    _common(mesh)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise SystemExit("config file must hold a JSON object")
    for key in ("scheme", "level", "dt", "tf", "case", "ref_dt", "out", "solver", "rtol", "seed",
                "dump", "threads", "verbose"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if isinstance(data.get("dt"), list) and len(data["dt"]) == 1:
        data["dt"] = data["dt"][0]
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "tableau":
        print(format_tableau(get_tableau(args.scheme), digits=17))
        return 0
    if args.command == "dump-mesh":
        hierarchy_for(args.level).finest.dump(args.out)
        return 0
    if args.command == "scan-stability":
        scan = imex_stability_scan(args.level, args.dts, steps=args.steps, case=args.case)
        print("dt,stable")
        for dt, ok in zip(scan.dts, scan.stable):
            print(f"{dt:g},{int(ok)}")
        print(f"# max stable dt: {scan.max_stable_dt}; first unstable dt: {scan.min_unstable_dt}")
        return 0
    try:
        cfg = config_from_args(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rows = run_experiment(cfg)
    if not cfg.out:
        print(",".join(CSV_HEADER))
        for r in rows:
            print(",".join(r.csv_fields()))
    return 0 if all(not r.failed for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
