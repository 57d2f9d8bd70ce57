"""FGMRES-multigrid iterations on the linear SWE at rest across mesh levels at fixed dt sqrt(gH)/dx."""

import argparse

from irkswe.experiments import mesh_robustness

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--levels", default="2,3,4")
p.add_argument("--courant", type=float, default=4.0)
p.add_argument("--scheme", default="radau1")
p.add_argument("--rtol", type=float, default=1e-8)
args = p.parse_args()

res = mesh_robustness([int(v) for v in args.levels.split(",")], args.courant, args.scheme, args.rtol)
print("level,dt,iterations,converged")
for row in zip(res.levels, res.dts, res.iterations, res.converged):
    print(f"{row[0]},{row[1]:.1f},{row[2]},{row[3]}")
print(f"# spread {res.spread}")
