import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from irkswe.forms import SWEParams, ShallowWater, State
from irkswe.fespace import FieldVector
from irkswe.testcases import tc6_init, tc6_params

from conftest import hierarchy, perturbed_velocity, shallow_water, switch_safe

GAUSS2 = np.polynomial.legendre.leggauss(2)
# upwinding is decided per facet quadrature point, so the facet loops must share its points
GAUSS3 = np.polynomial.legendre.leggauss(3)
MIDPOINTS = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])


def _random_state(sw, seed, du=5.0, dD=50.0):
    rng = np.random.default_rng(seed)
    init = tc6_init(sw)
    u = init.u.coeffs + du * rng.standard_normal(sw.nu)
    D = init.D.coeffs + dD * rng.standard_normal(sw.nD)
    return u, D


# ---- slow reference evaluation of the momentum and mass residuals ----------


class LoopResidual:
    """Cell-by-cell evaluation of the weak forms, without integration by parts.

    Momentum test function w_i:
        - <grad^perp(w . u^perp), u>_K + sum_facets <(w . u^perp) n^perp . u_upw>
        - <div w, 1/2 |u|^2 + g D>
    (no rotation). Depth: sum of upwinded fluxes out of each cell.
    """

    def __init__(self, sw):
        self.sw = sw
        self.mesh = sw.mesh
        self.geo = sw.mesh.geometry
        self.V = sw.V

    def xhat(self, c, x):
        return self.geo.pinv[c] @ (x - self.geo.origin[c])

    def basis(self, c, xhat):
        return self.V.tabulate(np.asarray(c), np.asarray(xhat, float))  # (6, 3)

    def velocity(self, u, c, xhat):
        return u[self.V.cell_dofs[c]] @ self.basis(c, xhat)

    def div_basis(self, c):
        # divergence theorem: flux of each basis field out of the flat cell, over its area
        x = self.mesh.vertices[self.mesh.cells[c]]
        k = self.geo.normal[c]
        t, w = GAUSS2
        total = np.zeros(6)
        for i in range(3):
            a, b = x[(i + 1) % 3], x[(i + 2) % 3]
            n = np.cross(b - a, k)
            n /= np.linalg.norm(n)
            for tq, wq in zip(t, w):
                p = a + 0.5 * (1 + tq) * (b - a)
                total += 0.5 * wq * np.linalg.norm(b - a) * (self.basis(c, self.xhat(c, p)) @ n)
        return total / self.geo.area[c]

    def psi(self, u, c, xhat):
        k = self.geo.normal[c]
        return self.basis(c, xhat) @ np.cross(k, self.velocity(u, c, xhat))  # (6,)

    def grad_psi(self, u, c, xhat, h=1e-3):
        # psi is quadratic in xhat, so central differences are exact up to roundoff
        g_ref = np.empty((6, 2))
        for d in range(2):
            e = np.zeros(2)
            e[d] = h
            g_ref[:, d] = (self.psi(u, c, xhat + e) - self.psi(u, c, xhat - e)) / (2 * h)
        return g_ref @ self.geo.pinv[c]  # (6, 3), physical gradient in the cell plane

    def momentum(self, u, D):
        sw, mesh = self.sw, self.mesh
        g = sw.params.g
        out = np.zeros(sw.nu)
        for c in range(mesh.n_cells):
            k = self.geo.normal[c]
            A = self.geo.area[c]
            div_w = self.div_basis(c)
            local = np.zeros(6)
            for p in MIDPOINTS:
                uq = self.velocity(u, c, p)
                gp = self.grad_psi(u, c, p)
                local -= A / 3 * np.cross(k, gp) @ uq
                local -= A / 3 * div_w * (0.5 * uq @ uq)
            local -= div_w * g * D[c] * A
            np.add.at(out, self.V.cell_dofs[c], local)
        t, w = GAUSS3
        for e in range(mesh.n_edges):
            xa, xb = mesh.vertices[mesh.edges[e]]
            L = np.linalg.norm(xb - xa)
            for tq, wq in zip(t, w):
                p = xa + 0.5 * (1 + tq) * (xb - xa)
                traces = []
                for s in (0, 1):
                    c = mesh.edge_cells[e, s]
                    traces.append(self.velocity(u, c, self.xhat(c, p)))
                for s in (0, 1):
                    c = mesh.edge_cells[e, s]
                    n = self.geo.edge_normals[e, s]
                    upwind = traces[s] if traces[s] @ n > 0 else traces[1 - s]
                    nperp = np.cross(self.geo.normal[c], n)
                    val = 0.5 * wq * L * self.psi(u, c, self.xhat(c, p)) * (nperp @ upwind)
                    np.add.at(out, self.V.cell_dofs[c], val)
        return out

    def depth(self, u, D):
        mesh = self.mesh
        out = np.zeros(self.sw.nD)
        t, w = GAUSS3
        for e in range(mesh.n_edges):
            xa, xb = mesh.vertices[mesh.edges[e]]
            L = np.linalg.norm(xb - xa)
            c0, c1 = mesh.edge_cells[e]
            n0 = self.geo.edge_normals[e, 0]
            for tq, wq in zip(t, w):
                p = xa + 0.5 * (1 + tq) * (xb - xa)
                un = self.velocity(u, c0, self.xhat(c0, p)) @ n0
                flux = 0.5 * wq * L * un * (D[c0] if un > 0 else D[c1])
                out[c0] += flux
                out[c1] -= flux
        return out


@pytest.fixture(scope="module")
def sw_norot():
    return ShallowWater(hierarchy(2)[1], tc6_params().with_(omega=0.0))


def test_momentum_residual_matches_loop_oracle(sw_norot):
    sw = sw_norot
    u, D = _random_state(sw, 3)
    ref = LoopResidual(sw).momentum(u, D)
    got = sw.residual_a(u, D)
    assert np.abs(got - ref).max() < 1e-7 * np.abs(ref).max()


def test_depth_residual_matches_loop_oracle(sw_norot):
    sw = sw_norot
    u, D = _random_state(sw, 4)
    ref = LoopResidual(sw).depth(u, D)
    np.testing.assert_allclose(sw.residual_c(u, D), ref, atol=1e-10 * np.abs(ref).max())


def test_coriolis_is_antisymmetric():
    C = shallow_water(2).coriolis
    assert abs(C + C.T).max() < 1e-12 * abs(C).max()
    assert abs(C).max() > 0


def test_gradient_matrix_entries():
    sw = shallow_water(2)
    mesh = sw.mesh
    G = sw.grad.toarray()
    rows = mesh.cell_edges * 2
    L = mesh.geometry.edge_length[mesh.cell_edges]
    cells = np.arange(mesh.n_cells)[:, None]
    np.testing.assert_allclose(G[rows, cells], mesh.cell_edge_signs * L, rtol=1e-12)
    assert np.abs(G[1::2]).max() < 1e-9 * L.max()
    # each mean dof couples to exactly its two cells, with opposite signs
    np.testing.assert_allclose(G[0::2].sum(axis=1), 0.0, atol=1e-9 * L.max())


def test_rest_state_is_steady():
    sw = shallow_water(2)
    x = sw.state().vector()
    r = sw.residual(x)
    scale = sw.params.g * sw.params.H * sw.mesh.geometry.edge_length.max()
    assert np.abs(r).max() < 1e-12 * scale


@given(st.integers(0, 2**31 - 1))
def test_depth_residual_conserves_mass(seed):
    sw = shallow_water(2)
    u, D = _random_state(sw, seed)
    c = sw.residual_c(u, D)
    assert abs(c.sum()) < 1e-12 * np.abs(c).sum()


@given(st.integers(0, 2**31 - 1))
def test_split_residuals_sum_to_full(seed):
    sw = shallow_water(2)
    u, D = _random_state(sw, seed)
    aL, aN, cL, cN = sw.split_residuals(u, D)
    a, c = sw.residual_a(u, D), sw.residual_c(u, D)
    np.testing.assert_allclose(aL + aN, a, atol=1e-10 * np.abs(a).max())
    np.testing.assert_allclose(cL + cN, c, atol=1e-10 * np.abs(c).max())


@given(st.integers(0, 2**31 - 1))
def test_linear_operator_conserves_energy(seed):
    sw = shallow_water(2, linear=True)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(sw.nu)
    eta = rng.standard_normal(sw.nD)
    D = sw.params.H + eta
    a, c = sw.residual_a(u, D), sw.residual_c(u, D)
    H, g = sw.params.H, sw.params.g
    work = H * u @ a + g * eta @ c
    scale = H * np.abs(u) @ np.abs(a) + g * np.abs(eta) @ np.abs(c)
    assert abs(work) < 1e-12 * scale


def test_linear_residual_is_linear_operator():
    sw = shallow_water(2, linear=True)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(sw.nu)
    D = sw.params.H + rng.standard_normal(sw.nD)
    J = sw.jacobian(u, D).block()
    np.testing.assert_allclose(sw.residual(np.concatenate([u, D])), J @ np.concatenate([u, D]),
                               atol=1e-10 * np.abs(J).max())
    L = sw.linear_blocks().block()
    assert abs(J - L).max() == 0


def test_nonlinear_jacobian_at_rest_is_linear_operator():
    sw = shallow_water(2)
    rest = sw.state()
    J = sw.jacobian(rest.u.coeffs, rest.D.coeffs).block()
    L = sw.linear_blocks().block()
    assert abs(J - L).max() < 1e-12 * abs(L).max()


def test_linear_operator_blocks():
    sw = shallow_water(2)
    tau = 37.0
    A = sw.linear_operator(tau)
    L = sw.linear_blocks().block()
    M = sp.block_diag([sw.Mu, sw.MD])
    assert abs(A - (M + tau * L)).max() < 1e-12 * abs(A).max()


@pytest.mark.parametrize("seed", [0, 1])
def test_jacobian_matches_finite_differences(seed):
    sw = shallow_water(2)
    rng = np.random.default_rng(seed)
    u = perturbed_velocity(sw, rng)
    D = tc6_init(sw).D.coeffs + 20 * rng.standard_normal(sw.nD)
    x = np.concatenate([u, D])
    J = sw.jacobian(u, D).block()
    for _ in range(5):
        h = 1e-4
        d = np.concatenate([rng.standard_normal(sw.nu), 10 * rng.standard_normal(sw.nD)])
        safe = switch_safe(sw, [u, u + h * d[: sw.nu], u - h * d[: sw.nu]])
        d[: sw.nu] *= safe
        fd = (sw.residual(x + h * d) - sw.residual(x - h * d)) / (2 * h)
        Jd = J @ d
        assert np.linalg.norm(fd - Jd) < 1e-7 * np.linalg.norm(Jd)


def test_upwind_weights_ties_and_sides():
    sw = shallow_water(2)
    w = sw.upwind_weights(np.zeros(sw.nu))
    assert np.all(w == 0.5)
    u = tc6_init(sw).u.coeffs
    un = sw._edge_fields(u)[1]
    w = sw.upwind_weights(u)
    assert np.all(w[un > sw.upwind_tol] == 1.0)
    assert np.all(w[un < -sw.upwind_tol] == 0.0)


def test_energy_and_mass_integrals():
    sw = shallow_water(2)
    rest = sw.state()
    assert sw.energy(rest.u.coeffs, rest.D.coeffs) == 0.0
    D = rest.D.coeffs + 1.0
    assert sw.total_mass(D) == pytest.approx((sw.params.H + 1) * sw.area.sum(), rel=1e-14)
    assert sw.energy(rest.u.coeffs, D) == pytest.approx(0.5 * sw.params.g * sw.area.sum(), rel=1e-12)


def test_parameter_validation():
    with pytest.raises(ValueError):
        SWEParams(g=-1.0)
    with pytest.raises(ValueError):
        ShallowWater(hierarchy(1)[0], SWEParams(radius=1.0))
    with pytest.raises(ValueError):
        ShallowWater(hierarchy(1)[0], tc6_params(b=np.zeros(3)))
    a, b = shallow_water(1), shallow_water(2)
    with pytest.raises(ValueError):
        State(a.state().u, b.state().D)


def test_topography_enters_bernoulli_only():
    sw = shallow_water(1)
    b = np.linspace(0.0, 100.0, sw.nD)
    swb = ShallowWater(sw.mesh, sw.params.with_(b=b))
    u, D = _random_state(sw, 9)
    da = swb.residual_a(u, D) - sw.residual_a(u, D)
    np.testing.assert_allclose(da, -sw.params.g * (sw.grad @ b), atol=1e-8 * np.abs(da).max())
    np.testing.assert_array_equal(swb.residual_c(u, D), sw.residual_c(u, D))


def test_field_vector_state_helpers():
    sw = shallow_water(1)
    s = sw.state()
    t = s.copy()
    t.u.coeffs[0] = 1.0
    assert s.u.coeffs[0] == 0.0
    assert s.vector().shape == (sw.n,)
    assert isinstance(s.D, FieldVector)


def test_linear_problem_has_no_explicit_part():
    sw = shallow_water(1, linear=True)
    u, D = _random_state(sw, 2)
    aL, aN, cL, cN = sw.split_residuals(u, D)
    assert not aN.any() and not cN.any()
    np.testing.assert_array_equal(aL, sw.residual_a(u, D))
    np.testing.assert_array_equal(cL, sw.residual_c(u, D))
