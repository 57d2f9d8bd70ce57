"""Experiment driver: problem setup, stepping loops, reference runs, errors and CSV rows."""

from __future__ import annotations

import csv
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from .fespace import write_field_csv
from .forms import ShallowWater, State
from .imex import blew_up, field_norms, imex_setup, imex_step
from .irk import NewtonConfig, NonConvergence, irk_step
from .linsolve import DirectSolver, KrylovConfig, MGHierarchyOperators, MultigridSolver
from .mesh import MeshHierarchy, build_hierarchy
from .tableaux import SCHEMES, get_tableau
from .testcases import gravity_wave_init, tc2_init, tc2_params, tc6_init, tc6_params

SCHEMA = "v1"
CSV_HEADER = (
    "schema", "scheme", "level", "dt", "steps", "newton_its", "krylov_its", "its_per_step",
    "wallclock_s", "err_eta", "err_u", "mass_drift", "energy_drift", "status",
)
CASES = ("tc6", "tc2", "linear")
SOLVERS = ("mg", "direct")
FAILED = "*"
BLOWUP_FACTOR = 10.0

__all__ = [
    "CSV_HEADER", "ExperimentConfig", "ResultRow", "build_problem", "error_norms", "reference_solution",
    "run_experiment", "simulate", "tc2_init", "tc6_init", "write_csv",
]


@dataclass
class ExperimentConfig:
    scheme: str = "gl2"
    level: int = 3
    dt: float | list[float] = 600.0
    tf: float = 10800.0
    case: str = "tc6"
    ref_dt: float | None = None
    out: str | None = None
    solver: str = "mg"
    rtol: float = 1e-6
    atol: float = 1e-12
    maxit: int = 30
    krylov_restart: int = 100
    krylov_maxit: int = 200
    threads: int = 1
    seed: int = 0
    verbose: bool = False
    dump: str | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; choose from {CASES}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        if self.level < 0:
            raise ValueError("level must be >= 0")
        for dt in self.dts:
            if dt <= 0:
                raise ValueError("dt must be positive")
            if self.tf > 0 and self.tf < dt:
                raise ValueError("end time must be >= dt")
            _step_count(self.tf, dt)
        if self.tf < 0:
            raise ValueError("end time must be non-negative")
        if self.ref_dt is not None:
            if self.ref_dt <= 0 or self.ref_dt > min(self.dts) / 8 * (1 + 1e-12):
                raise ValueError("reference dt must be positive and <= dt/8")
            _step_count(self.tf, self.ref_dt)

    @property
    def dts(self) -> list[float]:
        return [float(d) for d in np.atleast_1d(self.dt)]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ResultRow:
    scheme: str
    level: int
    dt: float
    steps: int
    newton_its_total: int
    krylov_its_total: int
    wallclock_s: float
    err_eta: float
    err_u: float
    mass_drift: float
    energy_drift: float
    status: str = "ok"

    @property
    def its_per_step(self) -> float:
        return self.krylov_its_total / self.steps if self.steps else 0.0

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    def csv_fields(self) -> list[str]:
        def num(v):
            if self.failed:
                return FAILED
            return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))

        return [
            SCHEMA, self.scheme, str(self.level), repr(float(self.dt)), str(self.steps),
            str(self.newton_its_total), str(self.krylov_its_total), repr(self.its_per_step),
            f"{self.wallclock_s:.3f}", num(self.err_eta), num(self.err_u), num(self.mass_drift),
            num(self.energy_drift), self.status,
        ]


def _step_count(tf: float, dt: float) -> int:
    n = round(tf / dt)
    if abs(n * dt - tf) > 1e-9 * max(tf, 1.0):
        raise ValueError(f"dt={dt} does not divide the end time {tf}")
    return int(n)


# ---- problems -------------------------------------------------------------


@lru_cache(maxsize=8)
def hierarchy_for(level: int) -> MeshHierarchy:
    return build_hierarchy(level + 1)


@lru_cache(maxsize=8)
def _problem(case: str, level: int):
    mesh = hierarchy_for(level).finest
    if case == "tc2":
        sw = ShallowWater(mesh, tc2_params())
        return sw, tc2_init(sw)
    if case == "linear":
        sw = ShallowWater(mesh, tc6_params(linear=True))
        return sw, gravity_wave_init(sw)
    sw = ShallowWater(mesh, tc6_params())
    return sw, tc6_init(sw)


def build_problem(case: str, level: int) -> tuple[ShallowWater, State]:
    """(forms, initial state) for a named case; the initial state is a fresh copy."""
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}")
    sw, init = _problem(case, level)
    return sw, init.copy()


# ---- stepping -------------------------------------------------------------


@dataclass
class RunTotals:
    steps: int = 0
    newton_its: int = 0
    krylov_its: int = 0
    wallclock_s: float = 0.0
    phases: dict = field(default_factory=dict)
    status: str = "ok"
    message: str = ""


def make_stepper(cfg: ExperimentConfig, sw: ShallowWater, dt: float):
    """A callable state -> (state, stats) for the configured scheme and solver."""
    tab = get_tableau(cfg.scheme)
    if cfg.scheme == "ark2":
        ws = imex_setup(sw, dt, tab)
        return lambda st: imex_step(st, ws, tab)
    ncfg = NewtonConfig(rtol=cfg.rtol, atol=cfg.atol, maxit=cfg.maxit, verbose=cfg.verbose)
    if cfg.solver == "direct":
        solver = DirectSolver()
    else:
        kcfg = KrylovConfig(restart=cfg.krylov_restart, maxit=cfg.krylov_maxit, threads=cfg.threads,
                            verbose=cfg.verbose)
        solver = MultigridSolver(MGHierarchyOperators(hierarchy_for(cfg.level), tab.s, kcfg))
    return lambda st: irk_step(st, dt, tab, sw, ncfg, solver)


def simulate(cfg: ExperimentConfig, dt: float, sw: ShallowWater | None = None,
             init: State | None = None) -> tuple[State, RunTotals]:
    """Step from the initial state to cfg.tf; solver failures and blow-up set status='failed'."""
    if sw is None:
        sw, init = build_problem(cfg.case, cfg.level)
    steps = _step_count(cfg.tf, dt) if cfg.tf > 0 else 0
    totals = RunTotals()
    state = init.copy()
    norms0 = field_norms(sw, state)
    t0 = time.perf_counter()
    step = make_stepper(cfg, sw, dt) if steps else None
    for n in range(steps):
        try:
            state, st = step(state)
        except NonConvergence as exc:
            totals.newton_its += exc.stats.newton_its
            totals.krylov_its += exc.stats.krylov_its
            totals.status, totals.message = "failed", f"step {n}: {exc}"
            break
        totals.steps += 1
        totals.newton_its += st.newton_its
        totals.krylov_its += st.krylov_its
        for name in ("t_assembly", "t_factor", "t_krylov", "t_explicit", "t_solve"):
            if hasattr(st, name):
                totals.phases[name] = totals.phases.get(name, 0.0) + getattr(st, name)
        if blew_up(norms0, field_norms(sw, state), BLOWUP_FACTOR):
            totals.status, totals.message = "failed", f"step {n}: solution blew up"
            break
    totals.wallclock_s = time.perf_counter() - t0
    if cfg.verbose:
        print(f"[{cfg.scheme} L{cfg.level} dt={dt:g}] {totals.steps}/{steps} steps, "
              f"newton {totals.newton_its}, krylov {totals.krylov_its}, {totals.wallclock_s:.1f}s "
              f"{totals.status} {totals.message}", file=sys.stderr)
    return state, totals


def reference_solution(cfg: ExperimentConfig) -> State:
    """Same scheme, space and mesh, stepped with cfg.ref_dt."""
    if cfg.ref_dt is None:
        raise ValueError("config has no reference dt")
    state, totals = simulate(cfg, cfg.ref_dt)
    if totals.status != "ok":
        raise NonConvergence(f"reference run failed: {totals.message}", None)
    return state


def error_norms(state: State, ref: State, H: float) -> tuple[float, float]:
    """Relative L2 errors of eta = D - H and of u."""
    sw_area = state.D.space.mesh.geometry.area
    eta, eta_ref = state.D.coeffs - H, ref.D.coeffs - H
    den_eta = float(np.sqrt(sw_area @ eta_ref**2))
    Mu = state.u.space.mass()
    du = state.u.coeffs - ref.u.coeffs
    den_u = float(np.sqrt(ref.u.coeffs @ (Mu @ ref.u.coeffs)))
    if den_eta == 0.0 or den_u == 0.0:
        raise ZeroDivisionError("reference field has zero norm")
    err_eta = float(np.sqrt(sw_area @ (eta - eta_ref) ** 2)) / den_eta
    err_u = float(np.sqrt(du @ (Mu @ du))) / den_u
    return err_eta, err_u


def _drifts(sw: ShallowWater, init: State, state: State) -> tuple[float, float]:
    m0, m1 = sw.total_mass(init.D.coeffs), sw.total_mass(state.D.coeffs)
    e0, e1 = sw.energy(init.u.coeffs, init.D.coeffs), sw.energy(state.u.coeffs, state.D.coeffs)
    return abs(m1 - m0) / abs(m0), (abs(e1 - e0) / abs(e0) if e0 else abs(e1))


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """One row per dt in cfg.dt, with errors against a reference run when cfg.ref_dt is set.

    For tc2 without a reference dt, errors are measured against the initial
    (steady) state.
    """
    sw, init = build_problem(cfg.case, cfg.level)
    ref = None
    if cfg.ref_dt is not None:
        ref = reference_solution(cfg)
    elif cfg.case == "tc2":
        ref = init
    rows = []
    for dt in cfg.dts:
        state, tot = simulate(cfg, dt, sw, init)
        err = (math.nan, math.nan)
        if ref is not None and tot.status == "ok":
            err = error_norms(state, ref, sw.params.H)
        mass, energy = _drifts(sw, init, state)
        rows.append(ResultRow(cfg.scheme, cfg.level, dt, tot.steps, tot.newton_its, tot.krylov_its,
                              tot.wallclock_s, err[0], err[1], mass, energy, tot.status))
        if cfg.dump:
            dump_state(state, f"{cfg.dump}_{cfg.scheme}_dt{dt:g}")
    if cfg.out:
        write_csv(rows, cfg.out)
    return rows


def write_csv(rows: list[ResultRow], path, append: bool = False) -> None:
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.csv_fields())


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def dump_state(state: State, prefix: str) -> None:
    """Coefficient and centroid dumps of both fields."""
    write_field_csv(state.u, f"{prefix}_u.csv")
    write_field_csv(state.D, f"{prefix}_D.csv")
    write_field_csv(state.D, f"{prefix}_D_centroids.csv", centroids=True)
