"""Lowest-order compatible pair on flat triangles: BDM1 velocity, DG0 depth.

BDM1 degrees of freedom are the Legendre coefficients of the normal velocity
along each edge: with ``t in [-1, 1]`` running along the global edge
direction and ``n`` the global edge normal,

    u . n = c0 + c1 * t        on every edge,

so ``c0`` (dof ``2e``) is the mean normal velocity and ``c1`` (dof ``2e+1``)
the linear moment. Coefficients therefore carry units of velocity.
Basis functions are mapped from the reference triangle with the
contravariant Piola transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import MeshHierarchy, MeshLevel

HDIV = "BDM1"
DG0 = "DG0"

# ---------------------------------------------------------------------------
# quadrature

# Dunavant degree-4 rule (6 points); weights sum to one
_A1 = 0.445948490915964886318329253883
_W1 = 0.223381589678011465944180883576
_A2 = 0.091576213509770743459571463402
_W2 = 0.109951743655321867389152449757


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # reference-triangle points, shape (nq, 2)
    weights: np.ndarray  # sum to 1/2, the reference area
    edge_points: np.ndarray  # in [0, 1]
    edge_weights: np.ndarray  # sum to 1


def default_quadrature() -> QuadratureRule:
    bary = []
    wts = []
    for a, w in ((_A1, _W1), (_A2, _W2)):
        b = 1.0 - 2.0 * a
        for lam in ((b, a, a), (a, b, a), (a, a, b)):
            bary.append(lam)
            wts.append(w)
    bary = np.array(bary)
    gp, gw = np.polynomial.legendre.leggauss(3)
    return QuadratureRule(
        points=bary[:, 1:].copy(),
        weights=0.5 * np.array(wts),
        edge_points=0.5 * (gp + 1.0),
        edge_weights=0.5 * gw,
    )


QUAD = default_quadrature()

# ---------------------------------------------------------------------------
# reference BDM1 element

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# local edge i is opposite vertex i, traversed counterclockwise
_REF_EDGE_START = _REF_VERTS[[1, 2, 0]]
_REF_EDGE_END = _REF_VERTS[[2, 0, 1]]
_REF_EDGE_LEN = np.linalg.norm(_REF_EDGE_END - _REF_EDGE_START, axis=1)


def _ref_normals() -> np.ndarray:
    t = (_REF_EDGE_END - _REF_EDGE_START) / _REF_EDGE_LEN[:, None]
    return np.stack([t[:, 1], -t[:, 0]], axis=1)


_REF_NORMALS = _ref_normals()


def _legendre_weight(m: int, t: np.ndarray) -> np.ndarray:
    return np.ones_like(t) if m == 0 else 3.0 * t


def _reference_basis() -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of the six reference basis fields ``v(x) = c + B x``.

    Returns ``const`` of shape (6, 2) and ``grad`` of shape (6, 2, 2), dual
    to the reference functionals ``(1/len) int_e v.n q_m ds``.
    """
    # parameters p = (c0, c1, B00, B01, B10, B11)
    def field(p, x):
        c = p[:2]
        B = p[2:].reshape(2, 2)
        return c + x @ B.T

    gp = QUAD.edge_points
    gw = QUAD.edge_weights
    dofmat = np.zeros((6, 6))
    for j in range(6):
        p = np.zeros(6)
        p[j] = 1.0
        for i in range(3):
            x = _REF_EDGE_START[i] + gp[:, None] * (_REF_EDGE_END[i] - _REF_EDGE_START[i])
            vn = field(p, x) @ _REF_NORMALS[i]
            t = 2.0 * gp - 1.0
            for m in range(2):
                dofmat[2 * i + m, j] = np.sum(gw * vn * _legendre_weight(m, t))
    coeffs = np.linalg.inv(dofmat)  # column k holds parameters of basis k
    const = coeffs[:2].T.copy()
    grad = coeffs[2:].T.reshape(6, 2, 2).copy()
    return const, grad


REF_CONST, REF_GRAD = _reference_basis()


def reference_values(xhat: np.ndarray) -> np.ndarray:
    """Reference basis values at points ``xhat[..., 2]`` -> ``[..., 6, 2]``."""
    return REF_CONST + np.einsum("kij,...j->...ki", REF_GRAD, xhat)


# ---------------------------------------------------------------------------
# spaces


class FunctionSpace:
    """Global dof layout for one family on one mesh level."""

    def __init__(self, mesh: MeshLevel, family: str):
        if family not in (HDIV, DG0):
            raise ValueError(f"unknown family {family!r}")
        self.mesh = mesh
        self.family = family
        if family == HDIV:
            ce = mesh.cell_edges
            self.dim = 2 * mesh.n_edges
            self.cell_dofs = np.stack([2 * ce, 2 * ce + 1], axis=2).reshape(-1, 6)
            sig = mesh.cell_edge_signs.astype(float)
            self.cell_signs = np.stack([sig, np.ones_like(sig)], axis=2).reshape(-1, 6)
        else:
            self.dim = mesh.n_cells
            self.cell_dofs = np.arange(mesh.n_cells)[:, None]
            self.cell_signs = np.ones((mesh.n_cells, 1))

    def __repr__(self):
        return f"FunctionSpace({self.family}, level={self.mesh.level}, dim={self.dim})"

    @property
    def is_hdiv(self) -> bool:
        return self.family == HDIV

    # -- tabulation -------------------------------------------------------

    @cached_property
    def basis_scale(self) -> np.ndarray:
        """Per-cell factor turning Piola-mapped reference fields into global basis fields."""
        if not self.is_hdiv:
            return np.ones((self.mesh.n_cells, 1))
        geo = self.mesh.geometry
        length = geo.edge_length[self.mesh.cell_edges]  # (nc, 3)
        scale = (length / _REF_EDGE_LEN)[:, :, None] * np.ones((1, 1, 2))
        return self.cell_signs * scale.reshape(-1, 6)

    @cached_property
    def cell_flux(self) -> np.ndarray:
        """Net outward flux of each local BDM1 basis field, (nc, 6).

        Exactly +-edge length for the mean dofs and zero for the linear
        moments, so fluxes through a shared edge cancel bitwise.
        """
        length = self.mesh.geometry.edge_length[self.mesh.cell_edges]
        flux = np.stack([length, np.zeros_like(length)], axis=2).reshape(-1, 6)
        return self.cell_signs * flux

    def tabulate(self, cells: np.ndarray, xhat: np.ndarray) -> np.ndarray:
        """Physical basis values of ``cells[...]`` at reference points ``xhat[..., 2]``.

        Returns shape ``[..., 6, 3]`` for BDM1 and ``[..., 1]`` for DG0.
        """
        if not self.is_hdiv:
            return np.ones(xhat.shape[:-1] + (1,))
        geo = self.mesh.geometry
        ref = reference_values(xhat)  # [..., 6, 2]
        jac = geo.jacobian[cells]
        fac = (self.basis_scale[cells] / geo.detj[cells][..., None])
        return fac[..., None] * np.einsum("...ij,...kj->...ki", jac, ref)

    @cached_property
    def cell_quadrature(self) -> "CellTabulation":
        return CellTabulation.build(self)

    # -- evaluation -------------------------------------------------------

    def evaluate(self, coeffs: np.ndarray, cell: int, bary: np.ndarray):
        """Field value at a barycentric point of ``cell``."""
        if not 0 <= cell < self.mesh.n_cells:
            raise IndexError(f"cell {cell} out of range")
        bary = np.asarray(bary, dtype=float)
        if not self.is_hdiv:
            return float(coeffs[cell])
        xhat = bary[1:]
        phi = self.tabulate(np.asarray(cell), xhat)
        return coeffs[self.cell_dofs[cell]] @ phi

    def mass(self) -> sp.csr_matrix:
        return assemble_mass(self)


@dataclass(frozen=True, eq=False)
class CellTabulation:
    """Basis data at cell quadrature points for every cell of a BDM1 space."""

    x: np.ndarray  # (nc, nq, 3) physical points
    weights: np.ndarray  # (nc, nq) physical weights
    phi: np.ndarray  # (nc, nq, 6, 3)
    div: np.ndarray  # (nc, 6)
    curl: np.ndarray  # (nc, 6) scalar vorticity about the cell normal

    @classmethod
    def build(cls, space: FunctionSpace) -> "CellTabulation":
        geo = space.mesh.geometry
        nc = space.mesh.n_cells
        cells = np.arange(nc)
        xq = geo.origin[:, None, :] + np.einsum("cij,qj->cqi", geo.jacobian, QUAD.points)
        wq = geo.detj[:, None] * QUAD.weights[None, :]
        phi = space.tabulate(cells[:, None], np.broadcast_to(QUAD.points, (nc,) + QUAD.points.shape))
        fac = space.basis_scale / geo.detj[:, None]
        div = space.cell_flux / geo.area[:, None]  # divergence is constant on a flat cell
        # physical gradient of each basis field: fac * J Bhat J^+
        grad = fac[:, :, None, None] * np.einsum("cij,kjl,clm->ckim", geo.jacobian, REF_GRAD, geo.pinv)
        t1 = geo.jacobian[:, :, 0] / np.linalg.norm(geo.jacobian[:, :, 0], axis=1, keepdims=True)
        t2 = np.cross(geo.normal, t1)
        curl = np.einsum("ci,ckij,cj->ck", t2, grad, t1) - np.einsum("ci,ckij,cj->ck", t1, grad, t2)
        return cls(x=xq, weights=wq, phi=phi, div=div, curl=curl)


@dataclass
class FieldVector:
    space: FunctionSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.dim,):
            raise ValueError(f"expected {self.space.dim} coefficients, got {self.coeffs.shape}")

    def copy(self) -> "FieldVector":
        return FieldVector(self.space, self.coeffs.copy())

    def evaluate(self, cell: int, bary):
        return self.space.evaluate(self.coeffs, cell, bary)


def build_space(mesh: MeshLevel, family: str) -> FunctionSpace:
    return FunctionSpace(mesh, family)


def assemble_mass(space: FunctionSpace) -> sp.csr_matrix:
    if not space.is_hdiv:
        return sp.diags(space.mesh.geometry.area).tocsr()
    tab = space.cell_quadrature
    local = np.einsum("cq,cqia,cqja->cij", tab.weights, tab.phi, tab.phi)
    return assemble_cell_matrix(space.cell_dofs, space.cell_dofs, local, (space.dim, space.dim))


def assemble_cell_matrix(rows, cols, local, shape) -> sp.csr_matrix:
    """Sum cellwise dense blocks ``local[c]`` into a sparse matrix."""
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


def project(field: Callable[[np.ndarray], np.ndarray], space: FunctionSpace) -> FieldVector:
    """L2 projection of an analytic field evaluated at physical points ``x[..., 3]``.

    Vector fields return ``[..., 3]`` arrays (only the in-plane part matters).
    """
    mesh = space.mesh
    geo = mesh.geometry
    xq = geo.origin[:, None, :] + np.einsum("cij,qj->cqi", geo.jacobian, QUAD.points)
    wq = geo.detj[:, None] * QUAD.weights[None, :]
    vals = np.asarray(field(xq), dtype=float)
    if not space.is_hdiv:
        if vals.ndim == 0:
            vals = np.full(wq.shape, float(vals))
        return FieldVector(space, np.sum(wq * vals, axis=1) / geo.area)
    tab = space.cell_quadrature
    local = np.einsum("cq,cqia,cqa->ci", wq, tab.phi, vals)
    rhs = np.zeros(space.dim)
    np.add.at(rhs, space.cell_dofs.ravel(), local.ravel())
    x = spla.splu(space.mass().tocsc()).solve(rhs)
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("mass solve failed during projection")
    return FieldVector(space, x)


def centroid_samples(f: FieldVector) -> np.ndarray:
    """Rows of (lon, lat, value) at cell centroids; vector fields give |u|."""
    mesh = f.space.mesh
    cen = mesh.vertices[mesh.cells].mean(axis=1)
    lon = np.degrees(np.arctan2(cen[:, 1], cen[:, 0]))
    lat = np.degrees(np.arcsin(cen[:, 2] / np.linalg.norm(cen, axis=1)))
    if f.space.is_hdiv:
        phi = f.space.tabulate(np.arange(mesh.n_cells), np.full((mesh.n_cells, 2), 1.0 / 3.0))
        vec = np.einsum("ck,cka->ca", f.coeffs[f.space.cell_dofs], phi)
        val = np.linalg.norm(vec, axis=1)
    else:
        val = f.coeffs
    return np.column_stack([lon, lat, val])


def write_field_csv(f: FieldVector, path, centroids: bool = False) -> None:
    if centroids:
        np.savetxt(path, centroid_samples(f), delimiter=",", header="lon,lat,value", comments="")
    else:
        rows = np.column_stack([np.arange(f.space.dim), f.coeffs])
        np.savetxt(path, rows, delimiter=",", header="dof,coefficient", comments="", fmt=["%d", "%.17g"])


# ---------------------------------------------------------------------------
# intergrid transfer


def prolongation(coarse: FunctionSpace, fine: FunctionSpace, hierarchy: MeshHierarchy) -> sp.csr_matrix:
    """Inclusion of the coarse space into the fine one, in the flattened nested geometry."""
    if coarse.family != fine.family:
        raise ValueError("prolongation needs matching families")
    lc, lf = coarse.mesh.level, fine.mesh.level
    if lf != lc + 1 or hierarchy[lc] is not coarse.mesh or hierarchy[lf] is not fine.mesh:
        raise ValueError("spaces must sit on consecutive levels of the hierarchy")
    rmap = hierarchy.maps[lc]
    fmesh = fine.mesh
    if not coarse.is_hdiv:
        n = fmesh.n_cells
        return sp.csr_matrix((np.ones(n), (np.arange(n), rmap.cell_parent)), shape=(n, coarse.dim))

    cgeo = coarse.mesh.geometry
    flat = hierarchy.flattened_vertices(lf)
    parent = rmap.cell_parent[fmesh.edge_cells[:, 0]]  # coarse cell containing each fine edge
    xa = flat[fmesh.edges[:, 0]]
    xb = flat[fmesh.edges[:, 1]]
    seg = xb - xa
    flat_len = np.linalg.norm(seg, axis=1)
    t = seg / flat_len[:, None]
    n = np.cross(t, cgeo.normal[parent])
    gp, gw = QUAD.edge_points, QUAD.edge_weights
    pts = xa[:, None, :] + gp[None, :, None] * seg[:, None, :]  # (ne, nqe, 3)
    xhat = np.einsum("eij,eqj->eqi", cgeo.pinv[parent], pts - cgeo.origin[parent][:, None, :])
    phi = coarse.tabulate(parent[:, None], xhat)  # (ne, nqe, 6, 3)
    vn = np.einsum("eqka,ea->eqk", phi, n)
    tq = 2.0 * gp - 1.0
    real_len = fmesh.geometry.edge_length
    rows, cols, vals = [], [], []
    for m in range(2):
        mom = np.einsum("q,eqk->ek", gw * _legendre_weight(m, tq), vn) * (flat_len / real_len)[:, None]
        rows.append(np.repeat(2 * np.arange(fmesh.n_edges) + m, 6))
        cols.append(coarse.cell_dofs[parent].ravel())
        vals.append(mom.ravel())
    P = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(fine.dim, coarse.dim)
    ).tocsr()
    P.data[np.abs(P.data) < 1e-13] = 0.0
    P.eliminate_zeros()
    return P
