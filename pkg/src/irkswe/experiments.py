"""Scaled-down experiments: temporal self-convergence, dt and mesh robustness, IMEX vs IRK stability, TC2 refinement."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .harness import CSV_HEADER, ExperimentConfig, ResultRow, build_problem, error_norms, hierarchy_for, run_experiment, simulate
from .imex import StabilityScan, imex_stability_scan
from .irk import stage_jacobian
from .linsolve import KrylovConfig, MGHierarchyOperators, MultigridSolver
from .tableaux import get_tableau


def fit_slope(dts, errs) -> float:
    """Least-squares slope of log(err) against log(dt)."""
    x, y = np.log(np.asarray(dts, float)), np.log(np.asarray(errs, float))
    if len(x) < 2:
        raise ValueError("need at least two points")
    return float(np.polyfit(x, y, 1)[0])


# ---- temporal convergence -------------------------------------------------


@dataclass
class ConvergenceStudy:
    """Successive-halving self-convergence: differences between the runs at dt and dt/2.

    For a method of order p the differences scale like dt^p, so their log-log slope
    estimates p without an external reference.
    """

    scheme: str
    dts: tuple[float, ...]
    diff_eta: tuple[float, ...]
    diff_u: tuple[float, ...]
    rows: list[ResultRow] = field(default_factory=list)

    @property
    def local_slopes(self) -> np.ndarray:
        d = np.asarray(self.diff_eta)
        return np.log(d[:-1] / d[1:]) / np.log(np.asarray(self.dts[:-2]) / np.asarray(self.dts[1:-1]))

    @property
    def slope(self) -> float:
        return fit_slope(self.dts[:-1], self.diff_eta)

    @property
    def slope_u(self) -> float:
        return fit_slope(self.dts[:-1], self.diff_u)


def self_convergence(scheme: str, dts, level: int = 3, tf: float = 10800.0, case: str = "tc6",
                     **cfg_kw) -> ConvergenceStudy:
    """Run ``scheme`` at each dt (a halving sequence) and measure successive differences."""
    dts = tuple(sorted((float(d) for d in dts), reverse=True))
    if len(dts) < 3 or any(abs(a / b - 2.0) > 1e-12 for a, b in zip(dts, dts[1:])):
        raise ValueError("dts must be at least three successive halvings")
    cfg = ExperimentConfig(scheme=scheme, level=level, dt=list(dts), tf=tf, case=case, **cfg_kw)
    sw, init = build_problem(case, level)
    states, rows = [], []
    for dt in dts:
        state, tot = simulate(cfg, dt, sw, init)
        if tot.status != "ok":
            raise RuntimeError(f"{scheme} dt={dt}: {tot.message}")
        states.append(state)
        rows.append(ResultRow(scheme, level, dt, tot.steps, tot.newton_its, tot.krylov_its, tot.wallclock_s,
                              float("nan"), float("nan"), 0.0, 0.0, tot.status))
    diffs = [error_norms(a, b, sw.params.H) for a, b in zip(states, states[1:])]
    for row, (de, du) in zip(rows, diffs):
        row.err_eta, row.err_u = de, du
    return ConvergenceStudy(scheme, dts, tuple(d[0] for d in diffs), tuple(d[1] for d in diffs), rows)


# ---- dt robustness --------------------------------------------------------


def dt_sweep(scheme: str, dts, level: int = 4, tf: float = 14400.0, **cfg_kw) -> list[ResultRow]:
    """Iteration counts per step over a range of dt; failed runs are kept as failed rows."""
    cfg = ExperimentConfig(scheme=scheme, level=level, dt=[float(d) for d in dts], tf=tf, **cfg_kw)
    return run_experiment(cfg)


def dt_robust(rows: list[ResultRow]) -> tuple[bool, bool]:
    """(flat at the two smallest dt within a factor 2, strictly increasing at the two largest)."""
    ok = sorted((r for r in rows if not r.failed), key=lambda r: r.dt)
    if len(ok) < 3:
        return False, False
    lo, hi = ok[0].its_per_step, ok[1].its_per_step
    flat = max(lo, hi) <= 2 * min(lo, hi)
    rising = ok[-1].its_per_step > ok[-2].its_per_step
    return flat, rising


# ---- mesh robustness ------------------------------------------------------


@dataclass(frozen=True)
class MeshRobustness:
    levels: tuple[int, ...]
    dts: tuple[float, ...]
    iterations: tuple[int, ...]
    converged: tuple[bool, ...]

    @property
    def spread(self) -> int:
        return max(self.iterations) - min(self.iterations)


def mesh_robustness(levels=(2, 3, 4), courant: float = 4.0, scheme: str = "radau1", rtol: float = 1e-8,
                    seed: int = 0) -> MeshRobustness:
    """FGMRES-MG iterations for the linear SWE stage operator at rest, with dt sqrt(gH)/dx fixed."""
    tab = get_tableau(scheme)
    its, conv, dts = [], [], []
    for level in levels:
        sw, _ = build_problem("linear", level)
        dx = float(sw.mesh.geometry.edge_length.mean())
        dt = courant * dx / np.sqrt(sw.params.g * sw.params.H)
        rest = sw.state().vector()
        A = stage_jacobian(np.zeros(tab.s * sw.n), rest, dt, tab, sw)
        solver = MultigridSolver(MGHierarchyOperators(hierarchy_for(level), tab.s, KrylovConfig()))
        solver.setup(A)
        b = np.random.default_rng(seed).standard_normal(A.shape[0])
        _, stats = solver.solve(b, rtol=rtol)
        its.append(stats.iterations)
        conv.append(stats.converged)
        dts.append(dt)
    return MeshRobustness(tuple(levels), tuple(dts), tuple(its), tuple(conv))


# ---- IMEX stability against IRK -------------------------------------------


@dataclass
class StabilityComparison:
    scan: StabilityScan
    irk_dt: float | None
    irk_rows: list[ResultRow]

    @property
    def irk_stable(self) -> bool:
        return bool(self.irk_rows) and all(not r.failed for r in self.irk_rows)


def imex_vs_irk(level: int = 4, scan_dts=(150.0, 300.0, 450.0, 600.0, 900.0, 1200.0), scan_steps: int = 50,
                schemes=("gl2", "radau2"), factor: float = 10.0, irk_steps: int = 3,
                **cfg_kw) -> StabilityComparison:
    """ARK2 stability scan, then each IRK scheme run for a few steps at ``factor`` x the max stable dt."""
    scan = imex_stability_scan(level, scan_dts, steps=scan_steps)
    if scan.max_stable_dt is None or not scan.bracketed:
        return StabilityComparison(scan, None, [])
    dt = factor * scan.max_stable_dt
    rows = []
    for scheme in schemes:
        cfg = ExperimentConfig(scheme=scheme, level=level, dt=dt, tf=irk_steps * dt, **cfg_kw)
        rows.extend(run_experiment(cfg))
    return StabilityComparison(scan, dt, rows)


# ---- TC2 refinement -------------------------------------------------------


def tc2_deviation(levels=(3, 4), scheme: str = "gl2", dt: float = 300.0, steps: int = 10,
                  **cfg_kw) -> list[ResultRow]:
    """Deviation from the projected steady state after ``steps`` steps, per level."""
    rows = []
    for level in levels:
        cfg = ExperimentConfig(scheme=scheme, level=level, dt=dt, tf=steps * dt, case="tc2", **cfg_kw)
        rows.extend(run_experiment(cfg))
    return rows


# ---- determinism ----------------------------------------------------------


def reproducible(cfg: ExperimentConfig, threads=(1, 2)) -> bool:
    """Iteration counts and errors agree exactly across reruns and thread counts."""

    skip = CSV_HEADER.index("wallclock_s")

    def key(c):
        return [r.csv_fields()[:skip] + r.csv_fields()[skip + 1:] for r in run_experiment(c)]

    base = key(replace(cfg, threads=threads[0], out=None))
    runs = [key(replace(cfg, threads=t, out=None)) for t in threads]
    return all(r == base for r in runs)
