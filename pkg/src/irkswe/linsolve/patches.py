"""Vertex-star additive Schwarz with dense per-patch LU factorisations.

A patch owns, for every stage, the two BDM1 dofs of each spoke edge (edges
touching the vertex) and the DG0 dofs of the star cells. Dofs on the star
boundary are excluded. Patch-local ordering is stage-major, then velocity
dofs (spokes in counterclockwise order), then depth dofs (star cells in
counterclockwise order).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..mesh import MeshLevel

COND_TOL = 1e-14


class SingularPatchError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class Patch:
    vertex: int
    cells: np.ndarray
    dofs: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.dofs)


def _spokes(mesh: MeshLevel, v: int, cells: np.ndarray) -> np.ndarray:
    # spoke edges in the order they are met going round the star
    out = []
    for c in cells:
        for le in range(3):
            e = mesh.cell_edges[c, le]
            if v in mesh.edges[e] and e not in out:
                out.append(e)
    return np.array(out, dtype=np.int64)


def extract_patches(mesh: MeshLevel, n_u: int, n_D: int, stages: int) -> list[Patch]:
    """One patch per mesh vertex over the stage layout [u_1, D_1, ..., u_s, D_s]."""
    n = n_u + n_D
    patches = []
    for v in range(mesh.n_vertices):
        cells = mesh.vertex_star(v)
        spokes = _spokes(mesh, v, cells)
        local = np.concatenate([np.stack([2 * spokes, 2 * spokes + 1], axis=1).ravel(), n_u + cells])
        dofs = np.concatenate([i * n + local for i in range(stages)])
        patches.append(Patch(v, cells, dofs))
    return patches


def patch_multiplicity(patches: list[Patch], n: int) -> np.ndarray:
    m = np.zeros(n, dtype=np.int64)
    for p in patches:
        np.add.at(m, p.dofs, 1)
    return m


class _BlockLookup:
    """Map (row, col) pairs to positions in a CSR data array."""

    def __init__(self, A: sp.csr_matrix):
        self.indptr = A.indptr.copy()
        self.indices = A.indices.copy()
        n = A.shape[1]
        rows = np.repeat(np.arange(A.shape[0], dtype=np.int64), np.diff(A.indptr))
        self.keys = rows * n + A.indices
        self.n = n
        if np.any(np.diff(self.keys) <= 0):
            raise ValueError("CSR indices must be sorted and unique")

    def matches(self, A: sp.csr_matrix) -> bool:
        return np.array_equal(A.indptr, self.indptr) and np.array_equal(A.indices, self.indices)

    def positions(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        want = rows.astype(np.int64) * self.n + cols
        pos = np.searchsorted(self.keys, want)
        pos = np.minimum(pos, len(self.keys) - 1)
        found = self.keys[pos] == want
        return np.where(found, pos, -1)


def patch_inverses(blocks: np.ndarray) -> np.ndarray:
    """Inverses of a stack of patch matrices.

    LAPACK factorises each matrix of the stack on its own, so a patch's inverse
    does not depend on which other patches share the batch.
    """
    try:
        inv = np.linalg.inv(blocks)
    except np.linalg.LinAlgError as exc:
        raise SingularPatchError(f"singular patch matrix: {exc}") from exc
    # max|A| * max|A^-1| is a cheap condition estimate
    n = len(blocks)
    cond = np.abs(blocks).reshape(n, -1).max(axis=1) * np.abs(inv).reshape(n, -1).max(axis=1)
    bad = ~np.isfinite(cond) | (cond > 1.0 / COND_TOL)
    if np.any(bad):
        raise SingularPatchError(f"singular patch matrix in batch entries {np.flatnonzero(bad)[:5].tolist()}")
    return inv


class AdditiveSchwarz:
    """Patch layout for one level; ``factor`` binds it to an operator."""

    def __init__(self, patches: list[Patch], n: int, threads: int = 1):
        self.patches = patches
        self.n = n
        self.threads = max(1, int(threads))
        sizes = sorted({p.dim for p in patches})
        self.groups = []  # (patch ids, dof array (np, m))
        for m in sizes:
            ids = np.array([i for i, p in enumerate(patches) if p.dim == m])
            dofs = np.stack([patches[i].dofs for i in ids])
            self.groups.append((ids, dofs))
        # scatter matrix: global <- concatenated patch vectors, in patch order
        order = np.concatenate([g[1].ravel() for g in self.groups])
        self.scatter = sp.csr_matrix(
            (np.ones(len(order)), (order, np.arange(len(order)))), shape=(n, len(order))
        )
        self._lookup = None
        self._pos = None
        self.factors = None
        self.factorisations = 0

    def _positions(self, A: sp.csr_matrix):
        if self._lookup is None or not self._lookup.matches(A):
            self._lookup = _BlockLookup(A)
            self._pos = [self._lookup.positions(d[:, :, None], d[:, None, :]) for _, d in self.groups]
        return self._pos

    def submatrices(self, A: sp.csr_matrix) -> list[np.ndarray]:
        A = A.tocsr()
        if not A.has_sorted_indices:
            A = A.sorted_indices()
        data = np.append(A.data, 0.0)
        return [data[pos] for pos in self._positions(A)]  # pos -1 picks the appended zero

    def factor(self, A: sp.csr_matrix) -> None:
        blocks = self.submatrices(A)
        factors = []
        for blk in blocks:
            chunks = np.array_split(np.arange(len(blk)), self.threads)
            work = lambda ids: patch_inverses(blk[ids])
            if self.threads > 1:
                with ThreadPoolExecutor(self.threads) as ex:
                    parts = list(ex.map(work, chunks))
            else:
                parts = [work(c) for c in chunks]
            factors.append(np.concatenate(parts))
        self.factors = factors
        self.factorisations += 1

    def apply(self, r: np.ndarray) -> np.ndarray:
        """z = sum_l R_l^T A_l^{-1} R_l r."""
        if self.factors is None:
            raise RuntimeError("additive Schwarz used before factor()")
        parts = []
        for (ids, dofs), inv in zip(self.groups, self.factors):
            parts.append(np.einsum("pij,pj->pi", inv, r[dofs]).ravel())
        return self.scatter @ np.concatenate(parts)
