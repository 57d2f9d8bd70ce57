"""Butcher tableaux for collocation IRKs (Gauss-Legendre, Radau IIA) and ARK2."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, sqrt

import numpy as np

MAX_STAGES = 5


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int

    @property
    def s(self) -> int:
        return len(self.b)


@dataclass(frozen=True, eq=False)
class DoubleButcherTableau:
    name: str
    explicit: ButcherTableau
    implicit: ButcherTableau
    gamma: float
    alpha: float
    delta: float

    @property
    def s(self) -> int:
        return self.explicit.s

    @property
    def c(self) -> np.ndarray:
        return self.explicit.c


def _shifted_legendre(n: int) -> np.polynomial.Polynomial:
    # P_n(2x - 1) = sum_k (-1)^{n+k} C(n,k) C(n+k,k) x^k
    coeffs = [(-1) ** (n + k) * comb(n, k) * comb(n + k, k) for k in range(n + 1)]
    return np.polynomial.Polynomial(np.array(coeffs, dtype=float))


def _bisect(p, lo: float, hi: float, tol: float = 1e-10) -> float:
    flo = p(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = p(mid)
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _polish(p, x: float, iters: int = 8) -> float:
    dp = p.deriv()
    for _ in range(iters):
        step = p(x) / dp(x)
        x -= step
        if abs(step) < 1e-17:
            break
    return x


def _roots_in_unit_interval(p, n: int) -> np.ndarray:
    """Isolate the n simple roots of p in [0, 1] by sign changes on a fine grid."""
    grid = np.linspace(0.0, 1.0, 200 * n + 1)
    vals = p(grid)
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            roots.append(grid[i])
        elif vals[i] * vals[i + 1] < 0:
            roots.append(_polish(p, _bisect(p, grid[i], grid[i + 1])))
    if vals[-1] == 0.0:
        roots.append(1.0)
    if len(roots) != n:
        raise RuntimeError(f"expected {n} roots, found {len(roots)}")
    return np.array(roots)


def collocation_matrix(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """A and b from the collocation conditions at nodes c.

    Row i of A holds int_0^{c_i} l_j(t) dt, b_j = int_0^1 l_j(t) dt, solved as
    Vandermonde systems sum_j A_ij c_j^{k-1} = c_i^k / k.
    """
    s = len(c)
    k = np.arange(1, s + 1)
    V = c[None, :] ** (k[:, None] - 1)  # V[k, j] = c_j^{k-1}
    rhs_A = (c[None, :] ** k[:, None]) / k[:, None]  # [k, i]
    A = np.linalg.solve(V, rhs_A).T
    b = np.linalg.solve(V, 1.0 / k)
    return A, b


def _check_stages(s: int):
    if not 1 <= s <= MAX_STAGES:
        raise ValueError(f"stage count must be in 1..{MAX_STAGES}, got {s}")


def gauss_legendre(s: int) -> ButcherTableau:
    _check_stages(s)
    c = _roots_in_unit_interval(_shifted_legendre(s), s)
    A, b = collocation_matrix(c)
    return ButcherTableau(f"gl{s}", A, b, c, order=2 * s)


def radau_iia(s: int) -> ButcherTableau:
    _check_stages(s)
    # right Radau nodes: roots of P_s(2x-1) - P_{s-1}(2x-1), which include x = 1
    p = _shifted_legendre(s) - _shifted_legendre(s - 1) if s > 1 else np.polynomial.Polynomial([-1.0, 1.0])
    c = _roots_in_unit_interval(p, s)
    c[-1] = 1.0
    A, b = collocation_matrix(c)
    b = A[-1].copy()
    return ButcherTableau(f"radau{s}", A, b, c, order=2 * s - 1)


def ark2() -> DoubleButcherTableau:
    gamma = 1.0 - 1.0 / sqrt(2.0)
    alpha = (3.0 + 2.0 * sqrt(2.0)) / 6.0
    delta = 1.0 / (2.0 * sqrt(2.0))
    c = np.array([0.0, 2.0 * gamma, 1.0])
    b = np.array([delta, delta, gamma])
    Ae = np.array([[0.0, 0.0, 0.0], [2.0 * gamma, 0.0, 0.0], [1.0 - alpha, alpha, 0.0]])
    Ai = np.array([[0.0, 0.0, 0.0], [gamma, gamma, 0.0], [delta, delta, gamma]])
    return DoubleButcherTableau(
        "ark2",
        explicit=ButcherTableau("ark2-explicit", Ae, b.copy(), c.copy(), order=2),
        implicit=ButcherTableau("ark2-implicit", Ai, b.copy(), c.copy(), order=2),
        gamma=gamma,
        alpha=alpha,
        delta=delta,
    )


SCHEMES = ("gl1", "gl2", "gl3", "radau1", "radau2", "radau3", "ark2")


def get_tableau(scheme: str):
    if scheme == "ark2":
        return ark2()
    if scheme.startswith("gl"):
        return gauss_legendre(int(scheme[2:]))
    if scheme.startswith("radau"):
        return radau_iia(int(scheme[5:]))
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class OrderReport:
    order: int
    quadrature_violation: float  # max_k |b . c^{k-1} - 1/k|, k = 1..order
    simplifying_violation: float  # max over C(s) rows
    row_sum_violation: float
    tol: float = 1e-12

    @property
    def max_violation(self) -> float:
        return max(self.quadrature_violation, self.simplifying_violation, self.row_sum_violation)

    @property
    def passed(self) -> bool:
        return self.max_violation < self.tol


def verify_order_conditions(t: ButcherTableau, order: int, tol: float = 1e-12) -> OrderReport:
    """Check quadrature conditions up to ``order`` and the simplifying conditions C(q).

    Explicit and diagonally implicit tableaux only satisfy C(1) (row sums),
    collocation tableaux satisfy C(s).
    """
    if order > 6:
        raise ValueError("order conditions are only checked up to 6")
    A, b, c = t.A, t.b, t.c
    quad = max(abs(b @ c ** (k - 1) - 1.0 / k) for k in range(1, order + 1))
    rows = abs(A.sum(axis=1) - c).max()
    # C(q): A c^{k-1} = c^k / k; q is the largest level the method is built for
    q = t.s if t.name.startswith(("gl", "radau")) else 1
    simp = max(np.abs(A @ c ** (k - 1) - c**k / k).max() for k in range(1, q + 1))
    if order >= 3 and q == 1:
        # second-level tree conditions for non-collocation methods
        simp = max(simp, abs(b @ (A @ c) - 1.0 / 6.0))
    return OrderReport(order, float(quad), float(simp), float(rows), tol)


def format_tableau(tab, digits: int = 17) -> str:
    fmt = lambda v: " ".join(f"{x: .{digits}g}" for x in np.atleast_1d(v))
    parts = []
    tabs = [("", tab)] if isinstance(tab, ButcherTableau) else [("explicit ", tab.explicit), ("implicit ", tab.implicit)]
    for label, t in tabs:
        parts.append(f"{label}A =")
        parts.extend("  " + fmt(row) for row in t.A)
        parts.append(f"{label}b = " + fmt(t.b))
        parts.append(f"{label}c = " + fmt(t.c))
    return "\n".join(parts)
