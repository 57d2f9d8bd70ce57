"""Coupled IRK stage system and its inexact Newton solve.

Stage layout: k = [k_u1, k_D1, k_u2, k_D2, ..., k_us, k_Ds], each stage slice
of length dim V + dim Q. Stage i satisfies

    M k_i + F(U^n + dt sum_j A_ij k_j) = 0,   F = (a, c),

and the step is U^{n+1} = U^n + dt sum_i b_i k_i.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field
from math import sqrt

import numpy as np
import scipy.sparse as sp

from .forms import ShallowWater, State
from .linsolve import DirectSolver, KrylovBreakdown
from .tableaux import ButcherTableau


# Below this relative residual a step that fails to halve the residual is
# treated as having reached the roundoff floor of the stage residual.
STAGNATION_RTOL = float(np.sqrt(np.finfo(float).eps))


class NonConvergence(RuntimeError):
    """Newton failed; ``stats`` holds what was done before giving up."""

    def __init__(self, msg: str, stats: "SolveStats"):
        super().__init__(msg)
        self.stats = stats


@dataclass(frozen=True)
class NewtonConfig:
    rtol: float = 1e-6
    atol: float = 1e-12
    maxit: int = 30
    ew_gamma: float = 1.0
    ew_alpha: float = 0.5 * (1.0 + sqrt(5.0))
    eta0: float = 0.1
    eta_max: float = 0.9
    divergence_window: int = 3
    verbose: bool = False

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.eta0 <= self.eta_max < 1:
            raise ValueError("need 0 < eta0 <= eta_max < 1")
        if self.maxit < 1:
            raise ValueError("maxit must be positive")


@dataclass
class SolveStats:
    newton_its: int = 0
    krylov_its: int = 0
    residuals: list[float] = field(default_factory=list)
    forcing: list[float] = field(default_factory=list)
    t_assembly: float = 0.0
    t_factor: float = 0.0
    t_krylov: float = 0.0
    stagnated: bool = False

    def merge(self, other: "SolveStats") -> None:
        self.newton_its += other.newton_its
        self.krylov_its += other.krylov_its
        self.t_assembly += other.t_assembly
        self.t_factor += other.t_factor
        self.t_krylov += other.t_krylov


@dataclass(frozen=True)
class StageLayout:
    n_u: int
    n_D: int
    stages: int

    @property
    def n(self) -> int:
        return self.n_u + self.n_D

    @property
    def size(self) -> int:
        return self.stages * self.n

    def stage(self, i: int) -> slice:
        return slice(i * self.n, (i + 1) * self.n)

    def u(self, i: int) -> slice:
        return slice(i * self.n, i * self.n + self.n_u)

    def D(self, i: int) -> slice:
        return slice(i * self.n + self.n_u, (i + 1) * self.n)

    def as_stages(self, k: np.ndarray) -> np.ndarray:
        if k.shape != (self.size,):
            raise ValueError(f"stage vector has length {k.shape}, expected {self.size}")
        return k.reshape(self.stages, self.n)


def _layout(sw: ShallowWater, t: ButcherTableau) -> StageLayout:
    return StageLayout(sw.nu, sw.nD, t.s)


def stage_states(k: np.ndarray, Un: np.ndarray, dt: float, t: ButcherTableau, sw: ShallowWater) -> np.ndarray:
    """Rows are U_i = U^n + dt sum_j A_ij k_j."""
    K = _layout(sw, t).as_stages(k)
    return Un[None, :] + dt * (t.A @ K)


def stage_residual(k: np.ndarray, Un: State | np.ndarray, dt: float, t: ButcherTableau,
                   sw: ShallowWater) -> np.ndarray:
    Un = Un.vector() if isinstance(Un, State) else Un
    lay = _layout(sw, t)
    K = lay.as_stages(k)
    X = stage_states(k, Un, dt, t, sw)
    out = np.empty(lay.size)
    for i in range(t.s):
        u, D = X[i, : lay.n_u], X[i, lay.n_u :]
        out[lay.u(i)] = sw.Mu @ K[i, : lay.n_u] + sw.residual_a(u, D)
        out[lay.D(i)] = sw.MD @ K[i, lay.n_u :] + sw.residual_c(u, D)
    return out


def stage_jacobian(k: np.ndarray, Un: State | np.ndarray, dt: float, t: ButcherTableau,
                   sw: ShallowWater) -> sp.csr_matrix:
    """Block (i, j) = delta_ij blockdiag(Mu, MD) + dt A_ij J(U_i)."""
    Un = Un.vector() if isinstance(Un, State) else Un
    lay = _layout(sw, t)
    X = stage_states(k, Un, dt, t, sw)
    M = sp.block_diag([sw.Mu, sw.MD], format="csr")
    rows = []
    for i in range(t.s):
        J = sw.jacobian(X[i, : lay.n_u], X[i, lay.n_u :]).block()
        row = []
        for j in range(t.s):
            blk = dt * t.A[i, j] * J
            row.append(blk + M if i == j else blk)
        rows.append(row)
    A = sp.bmat(rows, format="csr")
    A.sort_indices()
    return A


def forcing_term(cfg: NewtonConfig, res: float, res_prev: float, eta_prev: float) -> float:
    """Eisenstat-Walker choice 2 with the usual safeguard."""
    eta = cfg.ew_gamma * (res / res_prev) ** cfg.ew_alpha
    safe = cfg.ew_gamma * eta_prev**cfg.ew_alpha
    if safe > 0.1:
        eta = max(eta, safe)
    return min(eta, cfg.eta_max)


def _norm(r: np.ndarray, weights) -> float:
    return float(np.linalg.norm(r if weights is None else r * weights))


def newton_solve(Un: State | np.ndarray, dt: float, t: ButcherTableau, sw: ShallowWater,
                 cfg: NewtonConfig | None = None, linsolver=None) -> tuple[np.ndarray, SolveStats]:
    """Solve the stage equations from k = 0.

    Stops at ``max(rtol |F_0|, atol)``, or earlier if the residual is already
    below ``STAGNATION_RTOL |F_0|`` and an iteration fails to halve it; that
    is the roundoff floor of the residual and the best iterate is returned.
    ``linsolver`` needs ``setup(A)`` and ``solve(b, rtol) -> (x, KrylovStats)``;
    a sparse direct solver is used when omitted.
    """
    cfg = cfg or NewtonConfig()
    linsolver = linsolver or DirectSolver()
    weights = getattr(linsolver, "weights", None)
    Un = Un.vector() if isinstance(Un, State) else np.asarray(Un, dtype=float)
    stats = SolveStats()
    k = np.zeros(_layout(sw, t).size)

    t0 = time.perf_counter()
    F = stage_residual(k, Un, dt, t, sw)
    stats.t_assembly += time.perf_counter() - t0
    res = _norm(F, weights)
    stats.residuals.append(res)
    res0 = res
    target = max(cfg.rtol * res, cfg.atol)
    eta = cfg.eta0
    growth = 0
    best_k, best_res = k.copy(), res
    while res > target:
        if stats.newton_its >= cfg.maxit:
            raise NonConvergence(f"Newton hit maxit={cfg.maxit}, residual {res:.3e} > {target:.3e}", stats)
        t0 = time.perf_counter()
        J = stage_jacobian(k, Un, dt, t, sw)
        t1 = time.perf_counter()
        linsolver.setup(J)
        t2 = time.perf_counter()
        try:
            dk, kst = linsolver.solve(-F, rtol=eta)
        except KrylovBreakdown as exc:
            raise NonConvergence(f"linear solver breakdown: {exc}", stats) from exc
        t3 = time.perf_counter()
        stats.t_assembly += t1 - t0
        stats.t_factor += t2 - t1
        stats.t_krylov += t3 - t2
        stats.krylov_its += kst.iterations
        stats.forcing.append(eta)
        stats.newton_its += 1

        k += dk
        t0 = time.perf_counter()
        F = stage_residual(k, Un, dt, t, sw)
        stats.t_assembly += time.perf_counter() - t0
        res_prev, res = res, _norm(F, weights)
        stats.residuals.append(res)
        if cfg.verbose:
            print(f" newton {stats.newton_its}: |F| = {res:.3e} eta = {eta:.2e} krylov {kst.iterations}",
                  file=sys.stderr)
        if not np.isfinite(res):
            raise NonConvergence("non-finite Newton residual", stats)
        if res < best_res:
            best_k, best_res = k.copy(), res
        if res > target and res > 0.5 * res_prev and best_res <= STAGNATION_RTOL * res0:
            stats.stagnated = True
            return best_k, stats
        growth = growth + 1 if res > res_prev else 0
        if growth >= cfg.divergence_window:
            raise NonConvergence(f"Newton residual grew {growth} times in a row", stats)
        eta = forcing_term(cfg, res, res_prev, eta)
    return k, stats


def advance(Un: np.ndarray, k: np.ndarray, dt: float, t: ButcherTableau, sw: ShallowWater) -> np.ndarray:
    K = _layout(sw, t).as_stages(k)
    return Un + dt * (t.b @ K)


def irk_step(Un: State, dt: float, t: ButcherTableau, sw: ShallowWater,
             cfg: NewtonConfig | None = None, linsolver=None) -> tuple[State, SolveStats]:
    x = Un.vector()
    k, stats = newton_solve(x, dt, t, sw, cfg, linsolver)
    x1 = advance(x, k, dt, t, sw)
    return sw.state(x1[: sw.nu], x1[sw.nu :]), stats
