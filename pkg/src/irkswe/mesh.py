"""Icosahedral sphere meshes built by recursive midpoint refinement.

Cells are flat triangles whose vertices lie on the sphere. Every level keeps
the same conventions:

* ``cells[c] = (v0, v1, v2)`` is counterclockwise seen from outside.
* Local edge ``i`` of a cell is the edge opposite local vertex ``i``, i.e.
  ``(v[i+1], v[i+2])`` traversed in the counterclockwise direction.
* Edges are globally oriented from the lower to the higher vertex index.
  ``cell_edge_signs[c, i]`` is +1 when the counterclockwise traversal of the
  edge in cell ``c`` agrees with the global orientation.
* ``edge_cells[e] = (c0, c1)`` with ``c0`` the cell in which the sign is +1.
  The global edge normal therefore points out of ``c0`` and into ``c1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path

import numpy as np

EARTH_RADIUS = 6.37122e6


@dataclass(frozen=True, eq=False)
class MeshLevel:
    level: int
    radius: float
    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray = field(init=False)
    cell_edges: np.ndarray = field(init=False)
    cell_edge_signs: np.ndarray = field(init=False)
    edge_cells: np.ndarray = field(init=False)

    def __post_init__(self):
        cells = self.cells
        nc = len(cells)
        # local edge i joins vertices i+1 and i+2
        a = cells[:, [1, 2, 0]]
        b = cells[:, [2, 0, 1]]
        lo = np.minimum(a, b).ravel()
        hi = np.maximum(a, b).ravel()
        keys = lo.astype(np.int64) * len(self.vertices) + hi
        uniq, inverse = np.unique(keys, return_inverse=True)
        edges = np.stack([uniq // len(self.vertices), uniq % len(self.vertices)], axis=1)
        cell_edges = inverse.reshape(nc, 3)
        signs = np.where(a < b, 1, -1).astype(np.int8)

        edge_cells = np.full((len(edges), 2), -1, dtype=np.int64)
        slot = np.where(signs.ravel() > 0, 0, 1)
        edge_cells[cell_edges.ravel(), slot] = np.repeat(np.arange(nc), 3)
        if np.any(edge_cells < 0):
            raise ValueError("mesh is not a closed consistently oriented surface")

        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "cell_edges", cell_edges)
        object.__setattr__(self, "cell_edge_signs", signs)
        object.__setattr__(self, "edge_cells", edge_cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def vertex_cells(self) -> tuple[np.ndarray, ...]:
        """Cells around each vertex, ordered counterclockwise about the outward direction."""
        buckets: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for c, tri in enumerate(self.cells):
            for v in tri:
                buckets[v].append(c)
        centroids = self.vertices[self.cells].mean(axis=1)
        out = []
        for v, cs in enumerate(buckets):
            cs = np.asarray(cs)
            x = self.vertices[v]
            n = x / np.linalg.norm(x)
            ref = centroids[cs[0]] - x
            t1 = ref - n * (ref @ n)
            t1 /= np.linalg.norm(t1)
            t2 = np.cross(n, t1)
            d = centroids[cs] - x
            ang = np.mod(np.arctan2(d @ t2, d @ t1), 2 * np.pi)
            out.append(cs[np.argsort(ang, kind="stable")])
        return tuple(out)

    def vertex_star(self, vertex: int) -> np.ndarray:
        if not 0 <= vertex < self.n_vertices:
            raise IndexError(f"vertex {vertex} out of range")
        return self.vertex_cells[vertex]

    @cached_property
    def geometry(self) -> "CellGeometry":
        return CellGeometry.from_mesh(self)

    def dump(self, path: str | Path) -> None:
        """Write a plain-text debug dump with vertices, cells and edges sections."""
        with open(path, "w") as fh:
            fh.write(f"vertices {self.n_vertices}\n")
            for x in self.vertices:
                fh.write(f"{x[0]!r} {x[1]!r} {x[2]!r}\n")
            fh.write(f"cells {self.n_cells}\n")
            for c in self.cells:
                fh.write(f"{c[0]} {c[1]} {c[2]}\n")
            fh.write(f"edges {self.n_edges}\n")
            for e in self.edges:
                fh.write(f"{e[0]} {e[1]}\n")


@dataclass(frozen=True, eq=False)
class CellGeometry:
    """Affine flat-triangle geometry.

    ``jacobian[c]`` is the 3x2 matrix ``[x1 - x0, x2 - x0]``; ``detj`` is the
    area scale ``|J[:,0] x J[:,1]|`` (twice the cell area) and ``pinv`` the
    2x3 left inverse. ``edge_normals[e, s]`` is the unit in-plane normal of
    edge ``e`` pointing out of ``edge_cells[e, s]``.
    """

    origin: np.ndarray
    jacobian: np.ndarray
    detj: np.ndarray
    pinv: np.ndarray
    normal: np.ndarray
    area: np.ndarray
    edge_length: np.ndarray
    edge_normals: np.ndarray
    edge_tangent: np.ndarray

    @classmethod
    def from_mesh(cls, mesh: MeshLevel) -> "CellGeometry":
        x = mesh.vertices[mesh.cells]
        jac = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)
        cr = np.cross(jac[:, :, 0], jac[:, :, 1])
        detj = np.linalg.norm(cr, axis=1)
        k = cr / detj[:, None]
        jtj = np.einsum("cki,ckj->cij", jac, jac)
        pinv = np.linalg.solve(jtj, np.transpose(jac, (0, 2, 1)))

        ev = mesh.vertices[mesh.edges]
        tvec = ev[:, 1] - ev[:, 0]
        length = np.linalg.norm(tvec, axis=1)
        t = tvec / length[:, None]
        normals = np.empty((mesh.n_edges, 2, 3))
        for s, sign in ((0, 1.0), (1, -1.0)):
            kc = k[mesh.edge_cells[:, s]]
            # t x k is outward for the cell traversing the edge along t
            normals[:, s] = sign * np.cross(t, kc)
        return cls(
            origin=x[:, 0].copy(),
            jacobian=jac,
            detj=detj,
            pinv=pinv,
            normal=k,
            area=0.5 * detj,
            edge_length=length,
            edge_normals=normals,
            edge_tangent=t,
        )

    def to_physical(self, cell: np.ndarray | int, xhat: np.ndarray) -> np.ndarray:
        """Map reference points ``xhat[..., 2]`` into cells."""
        return self.origin[cell] + np.einsum("...ij,...j->...i", self.jacobian[cell], xhat)


@dataclass(frozen=True, eq=False)
class RefinementMap:
    """Parent information linking a fine level to the coarse level below it.

    ``cell_parent[f]`` is the coarse cell containing fine cell ``f``.
    ``vertex_parent[v]`` is a coarse vertex index when ``vertex_on_edge[v]``
    is False, otherwise the coarse edge bisected by ``v``.
    """

    cell_parent: np.ndarray
    vertex_parent: np.ndarray
    vertex_on_edge: np.ndarray


@dataclass(frozen=True, eq=False)
class MeshHierarchy:
    levels: tuple[MeshLevel, ...]
    maps: tuple[RefinementMap, ...]  # maps[i] links levels[i] -> levels[i + 1]

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, i: int) -> MeshLevel:
        return self.levels[i]

    @property
    def finest(self) -> MeshLevel:
        return self.levels[-1]

    def flattened_vertices(self, fine_index: int) -> np.ndarray:
        """Fine vertex positions with bisecting vertices moved back onto coarse edges."""
        fine = self.levels[fine_index]
        coarse = self.levels[fine_index - 1]
        rmap = self.maps[fine_index - 1]
        out = fine.vertices.copy()
        mid = rmap.vertex_on_edge
        ce = coarse.edges[rmap.vertex_parent[mid]]
        out[mid] = 0.5 * (coarse.vertices[ce[:, 0]] + coarse.vertices[ce[:, 1]])
        return out


def _golden_icosahedron() -> tuple[np.ndarray, np.ndarray]:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = []
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            verts.append((0.0, s1, s2 * phi))
            verts.append((s1, s2 * phi, 0.0))
            verts.append((s2 * phi, 0.0, s1))
    verts = np.array(verts)
    edge_len = 2.0
    close = lambda i, j: abs(np.linalg.norm(verts[i] - verts[j]) - edge_len) < 1e-9
    cells = []
    for i, j, k in combinations(range(12), 3):
        if close(i, j) and close(j, k) and close(i, k):
            tri = [i, j, k]
            n = np.cross(verts[j] - verts[i], verts[k] - verts[i])
            if n @ (verts[i] + verts[j] + verts[k]) < 0:
                tri = [i, k, j]
            cells.append(tri)
    return verts, np.array(cells, dtype=np.int64)


def build_icosahedron(radius: float = EARTH_RADIUS) -> MeshLevel:
    if radius <= 0:
        raise ValueError("radius must be positive")
    verts, cells = _golden_icosahedron()
    verts = radius * verts / np.linalg.norm(verts, axis=1, keepdims=True)
    return MeshLevel(level=0, radius=float(radius), vertices=verts, cells=cells)


def refine(coarse: MeshLevel) -> tuple[MeshLevel, RefinementMap]:
    """Split every cell into four and push the new vertices radially onto the sphere."""
    nv = coarse.n_vertices
    mids = 0.5 * (coarse.vertices[coarse.edges[:, 0]] + coarse.vertices[coarse.edges[:, 1]])
    mids *= coarse.radius / np.linalg.norm(mids, axis=1, keepdims=True)
    verts = np.concatenate([coarse.vertices, mids])

    v = coarse.cells
    m = nv + coarse.cell_edges  # m[:, i] is the midpoint opposite local vertex i
    children = np.stack(
        [
            np.stack([v[:, 0], m[:, 2], m[:, 1]], axis=1),
            np.stack([m[:, 2], v[:, 1], m[:, 0]], axis=1),
            np.stack([m[:, 1], m[:, 0], v[:, 2]], axis=1),
            np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)

    fine = MeshLevel(level=coarse.level + 1, radius=coarse.radius, vertices=verts, cells=children)
    n_new = coarse.n_edges
    rmap = RefinementMap(
        cell_parent=np.repeat(np.arange(coarse.n_cells), 4),
        vertex_parent=np.concatenate([np.arange(nv), np.arange(n_new)]),
        vertex_on_edge=np.concatenate([np.zeros(nv, bool), np.ones(n_new, bool)]),
    )
    return fine, rmap


def build_hierarchy(n_levels: int, radius: float = EARTH_RADIUS) -> MeshHierarchy:
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    levels = [build_icosahedron(radius)]
    maps = []
    for _ in range(n_levels - 1):
        fine, rmap = refine(levels[-1])
        levels.append(fine)
        maps.append(rmap)
    return MeshHierarchy(levels=tuple(levels), maps=tuple(maps))
