"""Nonlinear connections: adapted frames, N-curvature and anholonomy.

Frame indices run over ``0..n+m-1``: the first ``n`` are horizontal
(``e_i = d/dx^i - N_i^a d/dy^a``), the last ``m`` vertical (``e_a = d/dy^a``).
:func:`h` and :func:`v` build typed indices so that block-relative positions
cannot be confused with absolute ones.

Array conventions (leading point-batch axis omitted):

* ``Nia[i, a] = N_i^a``
* ``E[alpha, mu]``: coordinate components of frame vector ``e_alpha``
* ``theta[gamma, mu]``: coframe, ``theta @ E.T = I``
* ``Omega[a, i, j]`` (N-curvature), antisymmetric in ``i, j``
* ``W[gamma, alpha, beta]`` with ``[e_alpha, e_beta] = W[gamma, alpha, beta] e_gamma``
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import Chart, ScalarField
from .numerics import Jet, jet_block, jet_einsum, jet_field_array

__all__ = [
    "FrameIndex",
    "h",
    "v",
    "NConnection",
    "DVector",
    "adapted_derivative",
    "apply_frame",
    "n_curvature",
    "anholonomy",
    "bracket_oracle",
    "almost_product",
    "frame_matrix_jet",
    "coframe_jet",
    "n_curvature_jet",
    "anholonomy_jet",
    "as_batch",
]


@dataclass(frozen=True)
class FrameIndex:
    kind: str  # "h" or "v"
    index: int

    def __post_init__(self):
        if self.kind not in ("h", "v"):
            raise ValueError("frame index kind is 'h' or 'v'")
        if self.index < 0:
            raise ValueError("frame index must be non-negative")

    def absolute(self, n: int, m: int) -> int:
        bound = n if self.kind == "h" else m
        if self.index >= bound:
            raise IndexError(f"{self.kind}-index {self.index} out of range {bound}")
        return self.index if self.kind == "h" else n + self.index


def h(i: int) -> FrameIndex:
    return FrameIndex("h", i)


def v(a: int) -> FrameIndex:
    return FrameIndex("v", a)


def as_batch(p) -> tuple[np.ndarray, bool]:
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        return p[None, :], True
    if p.ndim != 2:
        raise ValueError("points must have shape (D,) or (P, D)")
    return p, False


def _unbatch(x: np.ndarray, single: bool) -> np.ndarray:
    return x[0] if single else x


class NConnection:
    """Coefficients ``N_i^a(u)`` stored as ``N[a][i]`` (an m-by-n table of fields)."""

    def __init__(self, chart: Chart, N: Sequence[Sequence[ScalarField]]):
        if len(N) != chart.m or any(len(row) != chart.n for row in N):
            raise ValueError(f"N must be {chart.m}x{chart.n}")
        for row in N:
            for f in row:
                if not isinstance(f, ScalarField) or f.chart != chart:
                    raise TypeError("N entries must be fields on the chart")
        self.chart = chart
        self.N = tuple(tuple(row) for row in N)

    @classmethod
    def zero(cls, chart: Chart) -> "NConnection":
        z = ScalarField.const(chart, 0.0)
        return cls(chart, [[z] * chart.n for _ in range(chart.m)])

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def m(self) -> int:
        return self.chart.m

    def entry(self, i: int, a: int) -> ScalarField:
        return self.N[a][i]

    def index(self, alpha) -> int:
        if isinstance(alpha, FrameIndex):
            return alpha.absolute(self.n, self.m)
        alpha = int(alpha)
        if not 0 <= alpha < self.chart.dim:
            raise IndexError(f"frame index {alpha} out of range")
        return alpha

    def jets(self, p, order: int = 2) -> Jet:
        """Jet of ``Nia`` with shape (P, n, m)."""
        table = [[self.N[a][i] for a in range(self.m)] for i in range(self.n)]
        return jet_field_array(table, p, order)


@dataclass(frozen=True)
class DVector:
    """Components with respect to the adapted frame (e_i, e_a)."""

    hcomp: tuple
    vcomp: tuple

    def __post_init__(self):
        object.__setattr__(self, "hcomp", tuple(float(x) for x in self.hcomp))
        object.__setattr__(self, "vcomp", tuple(float(x) for x in self.vcomp))

    @classmethod
    def from_array(cls, x, n: int) -> "DVector":
        x = np.asarray(x, dtype=float)
        return cls(tuple(x[:n]), tuple(x[n:]))

    def array(self) -> np.ndarray:
        return np.array(self.hcomp + self.vcomp)

    def __neg__(self):
        return DVector(tuple(-x for x in self.hcomp), tuple(-x for x in self.vcomp))


# ---------------------------------------------------------------------------
# symbolic frame application
# ---------------------------------------------------------------------------


def apply_frame(Ncon: NConnection, alpha, f: ScalarField) -> ScalarField:
    """The field ``e_alpha f`` built symbolically."""
    k = Ncon.index(alpha)
    n = Ncon.n
    if k >= n:
        return f.partial(k)
    out = f.partial(k)
    for a in range(Ncon.m):
        out = out - Ncon.entry(k, a) * f.partial(n + a)
    return out


def adapted_derivative(Ncon: NConnection, f: ScalarField, alpha, p):
    """``e_alpha f`` at a point or batch of points."""
    k = Ncon.index(alpha)
    pts, single = as_batch(p)
    out = np.asarray(f.partial(k)(pts), dtype=float)
    if k < Ncon.n:
        for a in range(Ncon.m):
            df = f.partial(Ncon.n + a)
            if df.is_const and df(pts[0]) == 0.0:
                continue
            out = out - Ncon.entry(k, a)(pts) * df(pts)
    return float(out[0]) if single else out


def bracket_oracle(Ncon: NConnection, alpha, beta, f: ScalarField, p):
    """``e_alpha(e_beta f) - e_beta(e_alpha f)`` by nested symbolic application."""
    ef = apply_frame(Ncon, alpha, apply_frame(Ncon, beta, f))
    fe = apply_frame(Ncon, beta, apply_frame(Ncon, alpha, f))
    pts, single = as_batch(p)
    out = ef(pts) - fe(pts)
    return float(out[0]) if single else out


def almost_product(Ncon: NConnection | None, X: DVector) -> DVector:
    """+1 on horizontal components, -1 on vertical ones."""
    return DVector(X.hcomp, tuple(-x for x in X.vcomp))


# ---------------------------------------------------------------------------
# jet-level geometry of the frame
# ---------------------------------------------------------------------------


def frame_matrix_jet(Nia: Jet) -> Jet:
    """``E[alpha, mu]``: rows are coordinate components of e_i and e_a."""
    P, n, m = Nia.shape
    D = n + m
    eye = np.broadcast_to(np.eye(D), (P, D, D)).copy()
    E = Jet.const(eye, Nia.dim, Nia.order)
    minusN = jet_block((P, D, D), Nia.dim, Nia.order, [((slice(None), slice(0, n), slice(n, D)), -Nia)])
    return E + minusN


def coframe_jet(Nia: Jet) -> Jet:
    """``theta[gamma, mu]``: theta^i = dx^i, theta^a = dy^a + N_i^a dx^i."""
    P, n, m = Nia.shape
    D = n + m
    eye = np.broadcast_to(np.eye(D), (P, D, D)).copy()
    off = jet_block((P, D, D), Nia.dim, Nia.order, [((slice(None), slice(n, D), slice(0, n)), Nia.transpose(0, 2, 1))])
    return Jet.const(eye, Nia.dim, Nia.order) + off


def n_curvature_jet(Nia: Jet) -> Jet:
    """Omega[a, i, j] as a jet one order below ``Nia`` (shape (P, m, n, n))."""
    P, n, m = Nia.shape
    dN = Nia.grad()  # (P, n, m, D)
    dx = dN.transpose(0, 2, 1, 3)  # dx[a, i, mu] = d_mu N_i^a
    dxh = jet_einsum("paim,jm->paij", dx, np.eye(n + m)[:n])  # d_j N_i^a for h-directions
    dy = jet_einsum("paim,bm->paib", dx, np.eye(n + m)[n:])  # d_b N_i^a
    Nl = Nia.truncate(dN.order)
    quad = jet_einsum("pib,pajb->paij", Nl, dy)
    return dxh - dxh.transpose(0, 1, 3, 2) + quad - quad.transpose(0, 1, 3, 2)


def anholonomy_jet(Nia: Jet) -> Jet:
    """W[gamma, alpha, beta] from the closed formulas (shape (P, D, D, D))."""
    P, n, m = Nia.shape
    D = n + m
    Om = n_curvature_jet(Nia)
    dN = Nia.grad()
    Y = jet_einsum("pibz,az->pbia", dN, np.eye(D)[n:])  # Y[b, i, a] = d_a N_i^b
    items = [
        ((slice(None), slice(n, D), slice(0, n), slice(0, n)), Om),
        ((slice(None), slice(n, D), slice(0, n), slice(n, D)), Y),
        ((slice(None), slice(n, D), slice(n, D), slice(0, n)), -Y.transpose(0, 1, 3, 2)),
    ]
    return jet_block((P, D, D, D), Nia.dim, Om.order, items)


def n_curvature(Ncon: NConnection, p) -> np.ndarray:
    """Omega^a_ij at a point (m, n, n) or batch (P, m, n, n)."""
    pts, single = as_batch(p)
    return _unbatch(n_curvature_jet(Ncon.jets(pts, 1)).val, single)


def anholonomy(Ncon: NConnection, p) -> np.ndarray:
    """W^gamma_{alpha beta} at a point (D, D, D) or batch."""
    pts, single = as_batch(p)
    return _unbatch(anholonomy_jet(Ncon.jets(pts, 1)).val, single)


def coordinate_bracket_jet(E: Jet, theta: Jet) -> Jet:
    """Adapted-frame components of [e_alpha, e_beta] from coordinate derivatives of E.

    Independent of the closed anholonomy formulas; used as an oracle.
    """
    dE = E.grad()  # (P, D, D, D): dE[alpha, mu, nu] = d_nu E[alpha, mu]
    El = E.truncate(dE.order)
    t = theta.truncate(dE.order)
    comp = jet_einsum("pan,pbmn->pabm", El, dE)  # e_alpha(E[beta, m])
    br = comp - comp.transpose(0, 2, 1, 3)
    return jet_einsum("pgm,pabm->pgab", t, br)
