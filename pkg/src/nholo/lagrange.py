"""Geometry induced by a regular Lagrangian L(x, y) on an n+n chart.

Pipeline: Hessian metric g_ij = 1/2 d^2L/dy^i dy^j, semispray
G^i = 1/4 g^il B_l with B_l = (d^2L/dy^l dx^k) y^k - dL/dx^l, canonical
N-connection N^i_j = dG^i/dy^j, Sasaki metric g (+) g, almost complex
structure F and the 2-form theta(X, Y) = g(FX, Y).

The N-connection is a jet pipeline over exact symbolic derivatives of L; the
inverse Hessian enters only through jet matrix inversion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dconn import DMetric
from .expr import Chart, ScalarField
from .nconn import DVector, as_batch
from .numerics import Jet, SingularMatrixError, jet_einsum, jet_field_array, jet_matrix_inverse, ode_step_rk4

__all__ = [
    "Lagrangian",
    "LagrangeNConnection",
    "hessian_metric",
    "semispray",
    "canonical_nconnection",
    "sasaki_metric",
    "almost_complex_apply",
    "symplectic_form",
    "euler_lagrange_check",
    "homogeneity_residual",
    "REGULARITY_COND",
]

REGULARITY_COND = 1e10
BLOWUP = 1e12


class Lagrangian:
    """A fundamental function L on a chart with m = n (tangent-bundle model)."""

    def __init__(self, chart: Chart, L: ScalarField):
        if chart.n != chart.m:
            raise ValueError("a Lagrangian chart needs as many fiber as base coordinates")
        if L.chart != chart:
            raise ValueError("L lives on another chart")
        self.chart = chart
        self.L = L
        n = chart.n
        self.n = n
        self._x = list(range(n))
        self._y = list(range(n, 2 * n))
        # symbolic ingredients, built once
        self.g = [[L.partial(self._y[i], self._y[j]) * 0.5 for j in range(n)] for i in range(n)]
        self.dyg = [[[self.g[p][q].partial(self._y[j]) for q in range(n)] for p in range(n)] for j in range(n)]
        yk = [ScalarField.coord(chart, self._y[k]) for k in range(n)]
        B = []
        for l in range(n):
            b = ScalarField.const(chart, 0.0)
            for k in range(n):
                b = b + L.partial(self._y[l], self._x[k]) * yk[k]
            B.append(b - L.partial(self._x[l]))
        self.B = B
        self.dyB = [[B[l].partial(self._y[j]) for l in range(n)] for j in range(n)]

    def hessian_jets(self, pts, order: int = 2, cond_limit: float = REGULARITY_COND):
        g = jet_field_array(self.g, pts, order)
        try:
            ginv = jet_matrix_inverse(g, cond_limit)
        except SingularMatrixError as err:
            raise SingularMatrixError("singular Hessian", err.cond) from None
        return g, ginv

    def semispray_jets(self, pts, order: int = 2) -> Jet:
        _, ginv = self.hessian_jets(pts, order)
        B = jet_field_array(self.B, pts, order)
        return jet_einsum("pil,pl->pi", ginv, B) * 0.25

    def nconnection_jets(self, pts, order: int = 2) -> Jet:
        """``Nia[j, i] = N_j^i = dG^i/dy^j`` with shape (P, n, n)."""
        _, ginv = self.hessian_jets(pts, order)
        B = jet_field_array(self.B, pts, order)
        dyg = jet_field_array(self.dyg, pts, order)  # dyg[j, p, q]
        dyB = jet_field_array(self.dyB, pts, order)  # dyB[j, l]
        # dG^i/dy^j = 1/4 (-g^ip dyg[j,p,q] g^ql B_l + g^il dyB[j,l])
        gB = jet_einsum("pql,pl->pq", ginv, B)
        t1 = jet_einsum("pia,pjab,pb->pji", ginv, dyg, gB)
        t2 = jet_einsum("pil,pjl->pji", ginv, dyB)
        return (t2 - t1) * 0.25


class LagrangeNConnection:
    """The canonical N-connection of a Lagrangian as a jet source."""

    def __init__(self, lag: Lagrangian):
        self.lag = lag
        self.chart = lag.chart

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def m(self) -> int:
        return self.chart.m

    def jets(self, pts, order: int = 2) -> Jet:
        return self.lag.nconnection_jets(pts, order)

    def values(self, p) -> np.ndarray:
        """N_j^i at a point (n, n) or batch, indexed [j, i]."""
        pts, single = as_batch(p)
        v = self.jets(pts, 0).val
        return v[0] if single else v


def hessian_metric(lag: Lagrangian, p):
    """(g_ij, g^ij) at a point or batch; raises on a singular Hessian."""
    pts, single = as_batch(p)
    g, ginv = lag.hessian_jets(pts, 0)
    return (g.val[0], ginv.val[0]) if single else (g.val, ginv.val)


def semispray(lag: Lagrangian, p) -> np.ndarray:
    pts, single = as_batch(p)
    G = lag.semispray_jets(pts, 0).val
    return G[0] if single else G


def canonical_nconnection(lag: Lagrangian) -> LagrangeNConnection:
    return LagrangeNConnection(lag)


def sasaki_metric(lag: Lagrangian) -> DMetric:
    """The lift g (+) g with the canonical N-connection."""
    return DMetric(lag.chart, lag.g, lag.g, LagrangeNConnection(lag))


def almost_complex_apply(X: DVector) -> DVector:
    """F(h, w) = (-w, h)."""
    if len(X.hcomp) != len(X.vcomp):
        raise ValueError("almost complex structure needs n = m")
    return DVector(tuple(-w for w in X.vcomp), X.hcomp)


def sasaki_inner(g: np.ndarray, X: DVector, Y: DVector) -> float:
    x, y = X.array(), Y.array()
    n = g.shape[0]
    return float(x[:n] @ g @ y[:n] + x[n:] @ g @ y[n:])


def symplectic_form(lag: Lagrangian, X: DVector, Y: DVector, p) -> float:
    """theta(X, Y) = g(FX, Y) for the Sasaki metric at a single point."""
    g, _ = hessian_metric(lag, p)
    return sasaki_inner(g, almost_complex_apply(X), Y)


def homogeneity_residual(lag: Lagrangian, p):
    """y^i dL/dy^i - 2L (zero for L = F^2 with F positively 1-homogeneous)."""
    pts, single = as_batch(p)
    n = lag.n
    out = -2.0 * np.asarray(lag.L(pts))
    for i in range(n):
        out = out + pts[:, n + i] * lag.L.partial(n + i)(pts)
    return float(out[0]) if single else out


@dataclass
class PathComparison:
    max_deviation: float
    steps: int
    final_spray: np.ndarray
    final_euler_lagrange: np.ndarray


def euler_lagrange_check(lag: Lagrangian, x0, y0, steps: int = 1000, h: float = 1e-3) -> PathComparison:
    """Integrate x'' = -2G(x, x') and the Euler-Lagrange system side by side with RK4.

    The second system solves (d^2L/dy dy) x'' = dL/dx - (d^2L/dy dx) x' directly
    through the Hessian; both start from (x0, y0).
    """
    n = lag.n
    L = lag.L
    hess = [[L.partial(n + i, n + j) for j in range(n)] for i in range(n)]
    mixed = [[L.partial(n + i, k) for k in range(n)] for i in range(n)]
    dLdx = [L.partial(k) for k in range(n)]

    def spray_rhs(t, s):
        G = semispray(lag, s)
        return np.concatenate([s[n:], -2.0 * G])

    def el_rhs(t, s):
        H = np.array([[f(s) for f in row] for row in hess])
        M = np.array([[f(s) for f in row] for row in mixed])
        rhs = np.array([f(s) for f in dLdx]) - M @ s[n:]
        cond = np.linalg.cond(H, 1)
        if not np.isfinite(cond) or cond >= REGULARITY_COND:
            raise SingularMatrixError("singular Hessian on path", float(cond))
        return np.concatenate([s[n:], np.linalg.solve(H, rhs)])

    a = np.concatenate([np.asarray(x0, float), np.asarray(y0, float)])
    b = a.copy()
    dev = 0.0
    for k in range(steps):
        a = ode_step_rk4(a, spray_rhs, h, k * h)
        b = ode_step_rk4(b, el_rhs, h, k * h)
        if np.max(np.abs(a)) > BLOWUP or np.max(np.abs(b)) > BLOWUP:
            raise ArithmeticError(f"trajectory blew up at step {k + 1}")
        dev = max(dev, float(np.max(np.abs(a[:n] - b[:n]))))
    return PathComparison(dev, steps, a, b)
