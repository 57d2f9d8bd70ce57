"""Temporal self-convergence on TC6 (successive dt halvings), one CSV row per run."""

import argparse

from irkswe.experiments import self_convergence
from irkswe.harness import write_csv

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--schemes", default="gl1,gl2,radau1,radau2,ark2")
p.add_argument("--dts", default="300,150,75,37.5", help="halving sequence in seconds")
p.add_argument("--level", type=int, default=3)
p.add_argument("--tf", type=float, default=10800.0)
p.add_argument("--rtol", type=float, default=1e-10, help="Newton relative tolerance")
p.add_argument("--out", default="convergence.csv")
args = p.parse_args()

rows = []
for scheme in args.schemes.split(","):
    study = self_convergence(scheme, [float(d) for d in args.dts.split(",")], level=args.level, tf=args.tf,
                             rtol=args.rtol)
    rows.extend(study.rows)
    local = " ".join(f"{s:.2f}" for s in study.local_slopes)
    print(f"{scheme}: slope eta {study.slope:.2f} (local {local}), slope u {study.slope_u:.2f}", flush=True)
write_csv(rows, args.out)
