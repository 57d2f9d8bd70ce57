"""ARK2 implicit-explicit integrator with a factor-once linear operator.

The linear terms (a_L, c_L) are implicit, the remainder (a_N, c_N) explicit.
Every implicit stage solves (M + dt gamma L) Y_i = rhs_i with the same
sparse LU, built once per (params, dt).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import ShallowWater, State
from .tableaux import DoubleButcherTableau, ark2

MASS_RTOL = 1e-8


class MassSolveError(RuntimeError):
    pass


@dataclass
class ImexStats:
    mass_its: int = 0
    t_explicit: float = 0.0
    t_solve: float = 0.0

    @property
    def newton_its(self) -> int:
        return 0

    @property
    def krylov_its(self) -> int:
        return self.mass_its


@dataclass
class ImexWorkspace:
    sw: ShallowWater
    dt: float
    gamma: float
    operator: sp.csc_matrix
    L: sp.csr_matrix
    mass_u_diag: np.ndarray
    lu: object = None
    factorisations: int = 0
    stages: list = field(default_factory=list)

    def factor(self) -> None:
        self.lu = spla.splu(self.operator)
        self.factorisations += 1

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.lu.solve(rhs)


def imex_setup(sw: ShallowWater, dt: float, tableau: DoubleButcherTableau | None = None) -> ImexWorkspace:
    tableau = tableau or ark2()
    if dt <= 0:
        raise ValueError("dt must be positive")
    diag = np.diag(tableau.implicit.A)[1:]
    if not np.allclose(diag, tableau.gamma, rtol=0, atol=1e-15):
        raise ValueError("implicit tableau needs a constant diagonal after the first stage")
    op = sw.linear_operator(dt * tableau.gamma).tocsc()
    ws = ImexWorkspace(
        sw=sw,
        dt=dt,
        gamma=tableau.gamma,
        operator=op,
        L=sw.linear_blocks().block(),
        mass_u_diag=sw.Mu.diagonal().copy(),
    )
    ws.factor()
    return ws


def solve_velocity_mass(ws: ImexWorkspace, rhs: np.ndarray, x0: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Conjugate gradients on M_u with a Jacobi preconditioner."""
    its = 0

    def count(_):
        nonlocal its
        its += 1

    P = sp.diags(1.0 / ws.mass_u_diag)
    x, info = spla.cg(ws.sw.Mu, rhs, x0=x0, rtol=MASS_RTOL, atol=0.0, M=P, maxiter=500, callback=count)
    if info != 0:
        raise MassSolveError(f"velocity mass solve did not converge (info={info})")
    return x, its


def imex_step(Un: State, ws: ImexWorkspace, tableau: DoubleButcherTableau | None = None) -> tuple[State, ImexStats]:
    tableau = tableau or ark2()
    sw, dt = ws.sw, ws.dt
    A, At = tableau.explicit.A, tableau.implicit.A
    b, bt = tableau.explicit.b, tableau.implicit.b
    nu = sw.nu
    stats = ImexStats()
    x = Un.vector()
    Mx = np.concatenate([sw.Mu @ x[:nu], sw.MD @ x[nu:]])

    Y, N, L = [], [], []
    for i in range(tableau.s):
        t0 = time.perf_counter()
        if i == 0:
            y = x.copy()
        else:
            rhs = Mx.copy()
            for j in range(i):
                rhs -= dt * (A[i, j] * N[j] + At[i, j] * L[j])
            t1 = time.perf_counter()
            y = ws.solve(rhs)
            stats.t_solve += time.perf_counter() - t1
        aL, aN, cL, cN = sw.split_residuals(y[:nu], y[nu:])
        Y.append(y)
        N.append(np.concatenate([aN, cN]))
        L.append(np.concatenate([aL, cL]))
        stats.t_explicit += time.perf_counter() - t0
    ws.stages = Y

    incr = np.zeros_like(x)
    for i in range(tableau.s):
        incr -= dt * (b[i] * N[i] + bt[i] * L[i])
    t1 = time.perf_counter()
    du, its = solve_velocity_mass(ws, incr[:nu])
    stats.t_solve += time.perf_counter() - t1
    stats.mass_its = its
    u = x[:nu] + du
    D = x[nu:] + incr[nu:] / sw.area
    return sw.state(u, D), stats


def field_norms(sw: ShallowWater, state: State) -> tuple[float, float]:
    """(||u||, ||eta||) in L2."""
    u, D = state.u.coeffs, state.D.coeffs
    eta = D - sw.params.H
    return float(np.sqrt(u @ (sw.Mu @ u))), float(np.sqrt(sw.area @ eta**2))


def blew_up(initial: tuple[float, float], current: tuple[float, float], growth: float = 10.0) -> bool:
    """True when a norm is not finite or exceeds growth x its initial value.

    A field that starts at zero has no scale and is only checked for finiteness;
    the coupled other field carries the growth test.
    """
    for n0, n in zip(initial, current):
        if not np.isfinite(n) or (n0 > 0 and n > growth * n0):
            return True
    return False


@dataclass(frozen=True)
class StabilityScan:
    dts: tuple[float, ...]
    stable: tuple[bool, ...]

    @property
    def max_stable_dt(self) -> float | None:
        ok = [dt for dt, s in zip(self.dts, self.stable) if s]
        return max(ok) if ok else None

    @property
    def min_unstable_dt(self) -> float | None:
        bad = [dt for dt, s in zip(self.dts, self.stable) if not s]
        return min(bad) if bad else None

    @property
    def bracketed(self) -> bool:
        lo, hi = self.max_stable_dt, self.min_unstable_dt
        return lo is not None and hi is not None and lo < hi


def run_is_stable(sw: ShallowWater, init: State, dt: float, steps: int, growth: float = 10.0) -> bool:
    ws = imex_setup(sw, dt)
    norms0 = field_norms(sw, init)
    state = init
    for _ in range(steps):
        state, _ = imex_step(state, ws)
        if blew_up(norms0, field_norms(sw, state), growth):
            return False
    return True


def imex_stability_scan(level: int, dts, steps: int = 50, case: str = "tc6") -> StabilityScan:
    """Run ``steps`` ARK2 steps per dt and flag blow-up; returns the scan record."""
    from .harness import build_problem  # local import: harness depends on this module

    sw, init = build_problem(case, level)
    dts = tuple(sorted(float(d) for d in dts))
    stable = tuple(run_is_stable(sw, init, dt, steps) for dt in dts)
    return StabilityScan(dts, stable)
