"""Geometric multigrid on the icosahedral hierarchy for the coupled stage system."""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..fespace import DG0, HDIV, build_space, prolongation
from ..mesh import MeshHierarchy
from .krylov import KrylovStats, fgmres, gmres_fixed
from .patches import AdditiveSchwarz, extract_patches


@dataclass
class KrylovConfig:
    restart: int = 100
    maxit: int = 200
    smoother_its: int = 2
    cycles: int = 1
    pre_smooth: int = 1
    post_smooth: int = 1
    threads: int = 1
    verbose: bool = False

    def __post_init__(self):
        if self.restart < 1 or self.maxit < 1:
            raise ValueError("restart and maxit must be positive")


def field_weights(n_u: int, n_D: int, stages: int, w_u: float, w_D: float) -> np.ndarray:
    one = np.concatenate([np.full(n_u, w_u), np.full(n_D, w_D)])
    return np.tile(one, stages)


def stage_prolongation(Pu: sp.spmatrix, PD: sp.spmatrix, stages: int) -> sp.csr_matrix:
    return sp.kron(sp.identity(stages, format="csr"), sp.block_diag([Pu, PD]), format="csr")


@dataclass
class _Level:
    n_u: int
    n_D: int
    asm: AdditiveSchwarz
    weights: np.ndarray
    P: sp.csr_matrix | None = None  # from the level below to this one
    A: sp.csr_matrix | None = None


@dataclass
class SolveTimings:
    setup: float = 0.0
    krylov: float = 0.0


class MGHierarchyOperators:
    """Per-level stage operators, patch factorisations and transfers.

    Levels are stored coarsest first. ``update(A)`` installs a new finest
    operator, builds Galerkin coarse operators P^T A P and refactorises
    every patch.
    """

    def __init__(self, hierarchy: MeshHierarchy, stages: int, cfg: KrylovConfig | None = None,
                 field_scale: tuple[float, float] = (1.0, 1.0), n_levels: int | None = None):
        self.cfg = cfg or KrylovConfig()
        self.stages = stages
        meshes = hierarchy.levels if n_levels is None else hierarchy.levels[-n_levels:]
        self.levels: list[_Level] = []
        prev = None
        for mesh in meshes:
            V, Q = build_space(mesh, HDIV), build_space(mesh, DG0)
            patches = extract_patches(mesh, V.dim, Q.dim, stages)
            n = stages * (V.dim + Q.dim)
            lev = _Level(V.dim, Q.dim, AdditiveSchwarz(patches, n, self.cfg.threads),
                         field_weights(V.dim, Q.dim, stages, *field_scale))
            if prev is not None:
                Pu = prolongation(prev[0], V, hierarchy)
                PD = prolongation(prev[1], Q, hierarchy)
                lev.P = stage_prolongation(Pu, PD, stages)
            self.levels.append(lev)
            prev = (V, Q)
        self.timings = SolveTimings()

    @property
    def n(self) -> int:
        return self.levels[-1].asm.n

    def update(self, A: sp.spmatrix) -> None:
        t0 = time.perf_counter()
        A = sp.csr_matrix(A)
        A.sort_indices()
        self.levels[-1].A = A
        for lev, coarse in zip(self.levels[:0:-1], self.levels[-2::-1]):
            Ac = (lev.P.T @ lev.A @ lev.P).tocsr()
            Ac.sort_indices()
            coarse.A = Ac
        for lev in self.levels:
            lev.asm.factor(lev.A)
        self.timings.setup += time.perf_counter() - t0

    # ---- smoothing and cycling ------------------------------------------

    def smooth(self, i: int, r: np.ndarray) -> np.ndarray:
        lev = self.levels[i]
        return gmres_fixed(lev.A, lev.asm.apply, r, self.cfg.smoother_its, lev.weights)

    def _smooth_n(self, i, r, z, count):
        A = self.levels[i].A
        for _ in range(count):
            res = r - A @ z if z.any() else r
            z = z + self.smooth(i, res)
        return z

    def vcycle(self, r: np.ndarray, i: int | None = None) -> np.ndarray:
        i = len(self.levels) - 1 if i is None else i
        lev = self.levels[i]
        z = np.zeros_like(r)
        if i == 0:
            # no direct solve on the coarsest grid: smooth as often as a full cycle would
            return self._smooth_n(0, r, z, self.cfg.pre_smooth + self.cfg.post_smooth)
        z = self._smooth_n(i, r, z, self.cfg.pre_smooth)
        rc = lev.P.T @ (r - lev.A @ z)
        z = z + lev.P @ self.vcycle(rc, i - 1)
        return self._smooth_n(i, r, z, self.cfg.post_smooth)

    def precondition(self, r: np.ndarray) -> np.ndarray:
        z = self.vcycle(r)
        A = self.levels[-1].A
        for _ in range(self.cfg.cycles - 1):
            z = z + self.vcycle(r - A @ z)
        return z


def mg_vcycle(ops: MGHierarchyOperators, r: np.ndarray) -> np.ndarray:
    return ops.vcycle(r)


class MultigridSolver:
    """Monolithic FGMRES preconditioned by the patch-smoothed V-cycle."""

    def __init__(self, ops: MGHierarchyOperators):
        self.ops = ops
        self.cfg = ops.cfg
        self.factorisations = 0

    @property
    def weights(self) -> np.ndarray:
        return self.ops.levels[-1].weights

    def setup(self, A: sp.spmatrix) -> None:
        self.ops.update(A)
        self.factorisations += 1

    def solve(self, b: np.ndarray, rtol: float, atol: float = 0.0) -> tuple[np.ndarray, KrylovStats]:
        t0 = time.perf_counter()
        A = self.ops.levels[-1].A
        x, stats = fgmres(A, self.ops.precondition, b, rtol=rtol, maxit=self.cfg.maxit,
                          restart=self.cfg.restart, weights=self.weights, atol=atol)
        self.ops.timings.krylov += time.perf_counter() - t0
        if self.cfg.verbose:
            print(f"  fgmres: {stats.iterations} its, residual {stats.residuals[0]:.3e} -> "
                  f"{stats.residuals[-1]:.3e}", file=sys.stderr)
        return x, stats

    @property
    def timings(self) -> SolveTimings:
        return self.ops.timings


class DirectSolver:
    """Sparse LU of the full stage system; reported as one Krylov iteration per solve."""

    def __init__(self, weights: np.ndarray | None = None):
        self._lu = None
        self._weights = weights
        self.factorisations = 0
        self.timings = SolveTimings()

    @property
    def weights(self):
        return self._weights

    def setup(self, A: sp.spmatrix) -> None:
        t0 = time.perf_counter()
        self._lu = spla.splu(sp.csc_matrix(A))
        self.factorisations += 1
        self.timings.setup += time.perf_counter() - t0

    def solve(self, b: np.ndarray, rtol: float = 0.0, atol: float = 0.0):
        t0 = time.perf_counter()
        x = self._lu.solve(b)
        self.timings.krylov += time.perf_counter() - t0
        return x, KrylovStats(iterations=1, converged=True)
