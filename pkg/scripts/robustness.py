"""Outer Krylov iterations per step against dt at fixed level (FGMRES + patch multigrid)."""

import argparse

from irkswe.experiments import dt_robust, dt_sweep
from irkswe.harness import write_csv

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--schemes", default="gl1,gl2,radau1,radau2")
p.add_argument("--dts", default="300,600,1200,2400,3600,7200")
p.add_argument("--level", type=int, default=4)
p.add_argument("--tf", type=float, default=14400.0)
p.add_argument("--threads", type=int, default=1)
p.add_argument("--out", default="robustness.csv")
args = p.parse_args()

rows = []
for scheme in args.schemes.split(","):
    sweep = dt_sweep(scheme, [float(d) for d in args.dts.split(",")], level=args.level, tf=args.tf,
                     threads=args.threads)
    rows.extend(sweep)
    table = "  ".join(f"{r.dt:g}:{'*' if r.failed else f'{r.its_per_step:.2f}'}" for r in sweep)
    flat, rising = dt_robust(sweep)
    print(f"{scheme}: {table}  flat={flat} rising={rising}", flush=True)
write_csv(rows, args.out)
