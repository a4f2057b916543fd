"""Quadrature rules and polynomial bases on the reference interval [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg


@dataclass(frozen=True)
class QuadratureRule:
    """Points and nonnegative weights; ``sum(weights)`` is the interval length."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if np.any(self.weights < 0):
            raise ValueError("quadrature weights must be nonnegative")
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights differ in length")

    def __len__(self):
        return len(self.points)

    def integrate(self, f):
        return float(np.dot(self.weights, f(self.points)))

    def scaled(self, length, offset=0.0):
        return QuadratureRule(offset + length * self.points, length * self.weights)


def trapezoid(n_cells: int) -> QuadratureRule:
    """Composite trapezoidal rule with ``n_cells`` uniform cells on [0, 1]."""
    if n_cells < 1:
        raise ValueError("need at least one cell")
    h = 1.0 / n_cells
    w = np.full(n_cells + 1, h)
    w[0] = w[-1] = h / 2
    return QuadratureRule(np.linspace(0.0, 1.0, n_cells + 1), w)


def gauss_lobatto(order: int) -> QuadratureRule:
    """``order + 1`` point Gauss-Lobatto rule on [0, 1], exact for degree ``2*order - 1``.

    Interior nodes are the roots of ``P_order'``; weights are
    ``2 / (order (order+1) P_order(x)^2)`` on [-1, 1], halved for [0, 1].
    """
    if order < 1:
        raise ValueError("Gauss-Lobatto order must be >= 1")
    cn = np.zeros(order + 1)
    cn[-1] = 1.0
    interior = np.sort(npleg.legroots(npleg.legder(cn))) if order > 1 else np.array([])
    x = np.concatenate(([-1.0], interior, [1.0]))
    # polish interior roots of P_n' with Newton on the three-term recurrence
    for _ in range(3):
        if order > 1:
            d1 = npleg.legval(x[1:-1], npleg.legder(cn))
            d2 = npleg.legval(x[1:-1], npleg.legder(cn, 2))
            x[1:-1] -= d1 / d2
    pn = npleg.legval(x, cn)
    w = 2.0 / (order * (order + 1) * pn**2)
    return QuadratureRule((x + 1.0) / 2.0, w / 2.0)


def gauss_legendre(n: int) -> QuadratureRule:
    """``n`` point Gauss rule on [0, 1], exact for degree ``2n - 1``."""
    x, w = npleg.leggauss(n)
    return QuadratureRule((x + 1.0) / 2.0, w / 2.0)


def shifted_legendre(k_max: int, s, derivative=False):
    """Matrix ``[P_k(2s - 1)]`` for ``k = 0..k_max-1`` (columns); d/ds if ``derivative``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty((s.size, k_max))
    for k in range(k_max):
        c = np.zeros(k + 1)
        c[k] = 1.0
        if derivative:
            out[:, k] = 2.0 * npleg.legval(2 * s - 1, npleg.legder(c)) if k else 0.0
        else:
            out[:, k] = npleg.legval(2 * s - 1, c)
    return out


class LagrangeBasis:
    """Lagrange polynomials on given nodes in [0, 1], evaluated through a Legendre expansion."""

    def __init__(self, nodes):
        self.nodes = np.asarray(nodes, dtype=float)
        n = self.nodes.size
        self._coef = np.linalg.inv(shifted_legendre(n, self.nodes))

    def __len__(self):
        return self.nodes.size

    def values(self, s):
        return shifted_legendre(len(self), s) @ self._coef

    def derivatives(self, s):
        return shifted_legendre(len(self), s, derivative=True) @ self._coef
