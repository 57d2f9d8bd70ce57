"""Right-preconditioned (F)GMRES with modified Gram-Schmidt.

Residual norms may be weighted: with ``weights`` given, the method minimises
``||weights * (b - A x)||_2``. The preconditioner always receives an
unweighted residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Operator = Callable[[np.ndarray], np.ndarray]


class KrylovBreakdown(RuntimeError):
    pass


@dataclass
class KrylovStats:
    iterations: int = 0
    residuals: list[float] = field(default_factory=list)
    converged: bool = False
    breakdown: bool = False


def _as_operator(A) -> Operator:
    if callable(A):
        return A
    return lambda x: A @ x


def _identity(r):
    return r.copy()


def _givens(a: float, b: float) -> tuple[float, float]:
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def _cycle(op, prec, r0, weights, m, target, stats, x, record=True):
    """One restart cycle from residual r0; updates x in place, returns new residual norm."""
    rw = r0 * weights
    beta = np.linalg.norm(rw)
    n = len(r0)
    V = np.zeros((m + 1, n))
    Z = np.zeros((m, n))
    Hm = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    V[0] = rw / beta
    j_done = 0
    res = beta
    for j in range(m):
        Z[j] = prec(V[j] / weights)
        w = op(Z[j]) * weights
        for i in range(j + 1):
            Hm[i, j] = w @ V[i]
            w -= Hm[i, j] * V[i]
        Hm[j + 1, j] = np.linalg.norm(w)
        for i in range(j):
            t = cs[i] * Hm[i, j] + sn[i] * Hm[i + 1, j]
            Hm[i + 1, j] = -sn[i] * Hm[i, j] + cs[i] * Hm[i + 1, j]
            Hm[i, j] = t
        cs[j], sn[j] = _givens(Hm[j, j], Hm[j + 1, j])
        Hm[j, j] = cs[j] * Hm[j, j] + sn[j] * Hm[j + 1, j]
        Hm[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        res = abs(g[j + 1])
        j_done = j + 1
        stats.iterations += 1
        if record:
            stats.residuals.append(float(res))
        if Hm[j, j] == 0.0:
            stats.breakdown = True
            j_done = j
            break
        h_next = np.linalg.norm(w) if j + 1 < m else 0.0
        if res <= target:
            break
        if j + 1 < m:
            if h_next <= 1e-14 * beta:
                # happy breakdown: the Krylov space is invariant
                break
            V[j + 1] = w / h_next
    if j_done:
        y = np.zeros(j_done)
        for i in range(j_done - 1, -1, -1):
            y[i] = (g[i] - Hm[i, i + 1 : j_done] @ y[i + 1 :]) / Hm[i, i]
        x += y @ Z[:j_done]
    return res


def fgmres(A, precond, b, rtol=1e-8, maxit=200, restart=100, x0=None, weights=None, atol=0.0):
    """Flexible GMRES; the preconditioner may change from one iteration to the next.

    Returns ``(x, stats)``. ``stats.converged`` is False when maxit is hit.
    Raises KrylovBreakdown if the Hessenberg diagonal vanishes before convergence.
    """
    op = _as_operator(A)
    prec = _identity if precond is None else precond
    weights = np.ones(len(b)) if weights is None else weights
    x = np.zeros_like(b, dtype=float) if x0 is None else np.array(x0, dtype=float)
    stats = KrylovStats()
    r = b - op(x) if x0 is not None else b.astype(float).copy()
    res0 = np.linalg.norm(r * weights)
    stats.residuals.append(float(res0))
    bnorm = np.linalg.norm(b * weights)
    target = max(rtol * bnorm, atol)
    if res0 <= target or res0 == 0.0:
        stats.converged = True
        return x, stats
    res = res0
    while stats.iterations < maxit:
        m = min(restart, maxit - stats.iterations)
        _cycle(op, prec, r, weights, m, target, stats, x)
        r = b - op(x)
        res = np.linalg.norm(r * weights)
        stats.residuals[-1] = float(res)
        if res <= target:
            stats.converged = True
            break
        if stats.breakdown:
            raise KrylovBreakdown(f"FGMRES breakdown after {stats.iterations} iterations, residual {res:.3e}")
    return x, stats


def gmres_fixed(A, precond, b, iterations=2, weights=None) -> np.ndarray:
    """A fixed number of right-preconditioned GMRES iterations from a zero guess."""
    op = _as_operator(A)
    prec = _identity if precond is None else precond
    weights = np.ones(len(b)) if weights is None else weights
    x = np.zeros_like(b, dtype=float)
    if not np.any(b):
        return x
    stats = KrylovStats()
    _cycle(op, prec, b.astype(float), weights, iterations, 0.0, stats, x, record=False)
    return x
