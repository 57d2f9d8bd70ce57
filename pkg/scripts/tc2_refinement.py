"""Deviation of TC2 from its steady state after a few steps, per mesh level."""

import argparse

from irkswe.experiments import tc2_deviation
from irkswe.harness import write_csv

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--levels", default="3,4")
p.add_argument("--scheme", default="gl2")
p.add_argument("--dt", type=float, default=300.0)
p.add_argument("--steps", type=int, default=10)
p.add_argument("--out", default="tc2.csv")
args = p.parse_args()

rows = tc2_deviation([int(v) for v in args.levels.split(",")], args.scheme, args.dt, args.steps)
for r in rows:
    print(f"level {r.level}: err_eta {r.err_eta:.3e} err_u {r.err_u:.3e}")
write_csv(rows, args.out)
