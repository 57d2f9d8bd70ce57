"""ARK2 stability scan followed by IRK runs at a multiple of the largest stable ARK2 dt."""

import argparse

from irkswe.experiments import imex_vs_irk
from irkswe.harness import write_csv

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--level", type=int, default=4)
p.add_argument("--dts", default="150,300,450,600,900,1200")
p.add_argument("--steps", type=int, default=50)
p.add_argument("--schemes", default="gl2,radau2")
p.add_argument("--factor", type=float, default=10.0)
p.add_argument("--out", default="stability.csv")
args = p.parse_args()

cmp = imex_vs_irk(args.level, [float(d) for d in args.dts.split(",")], args.steps, args.schemes.split(","),
                  args.factor)
for dt, ok in zip(cmp.scan.dts, cmp.scan.stable):
    print(f"ark2 dt={dt:g} {'stable' if ok else 'unstable'}")
print(f"max stable ark2 dt: {cmp.scan.max_stable_dt}")
for r in cmp.irk_rows:
    print(f"{r.scheme} dt={r.dt:g}: {r.status}, its/step {r.its_per_step:.2f}")
write_csv(cmp.irk_rows, args.out)
