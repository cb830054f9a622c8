"""Metric d-connections: canonical connection, torsion, curvature, Ricci.

Index conventions (point-batch axis omitted, all frame indices absolute,
``0..n-1`` horizontal and ``n..n+m-1`` vertical):

* ``Gam[gamma, beta, alpha]`` is the ``e_gamma`` component of ``D_{e_alpha} e_beta``;
  the last index is the direction. Blocks: ``Gam[i,j,k] = L^i_jk``,
  ``Gam[a,b,k] = L^a_bk``, ``Gam[i,j,c] = C^i_jc``, ``Gam[a,b,c] = C^a_bc``.
* ``Tor[gamma, beta, alpha]`` is the ``e_gamma`` component of ``T(e_alpha, e_beta)``,
  so ``Tor[i,j,k] = L^i_jk - L^i_kj`` and ``Tor[a,j,i] = Omega^a_ji``.
* ``R[alpha, beta, gamma, delta]`` is the ``e_alpha`` component of
  ``R(e_delta, e_gamma) e_beta`` with
  ``R(X, Y) = D_X D_Y - D_Y D_X - D_[X,Y]``.
* ``Ric[beta, gamma] = R[tau, beta, gamma, tau]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expr import Chart, ScalarField
from .nconn import (
    anholonomy_jet,
    as_batch,
    coframe_jet,
    coordinate_bracket_jet,
    frame_matrix_jet,
    n_curvature_jet,
)
from .numerics import (
    COND_LIMIT,
    Jet,
    SingularMatrixError,
    jet_block,
    jet_einsum,
    jet_field_array,
    jet_matrix_inverse,
)

__all__ = [
    "DMetric",
    "DConnection",
    "DTensor",
    "Geometry",
    "geometry",
    "assemble_coordinate_metric",
    "extract_blocks",
    "canonical_dconnection",
    "d_torsion",
    "d_curvature",
    "curvature_blocks",
    "connection_curvature",
    "ricci_scalar_einstein",
    "levi_civita_and_deformation",
    "symmetrize_reconstruct",
    "compat_residuals",
    "curvature_deformation_check",
    "commutator_curvature",
    "frame_torsion",
    "symplectic_components",
]

SAMPLE_COND_LIMIT = 1e10


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


def _symmetric_table(rows, k: int, name: str):
    if len(rows) != k or any(len(r) != k for r in rows):
        raise ValueError(f"{name} block must be {k}x{k}")
    for i in range(k):
        for j in range(i + 1, k):
            if rows[i][j] != rows[j][i]:
                raise ValueError(f"{name} block is not symmetric at ({i + 1}, {j + 1})")
    return tuple(tuple(r) for r in rows)


class DMetric:
    """Block metric g_ij (+) h_ab in the adapted coframe, together with an N-connection.

    ``Ncon`` may be an :class:`NConnection` or any object with ``n``, ``m``,
    ``chart`` and ``jets(points, order)`` (e.g. the canonical N-connection of a
    Lagrangian, which is only available as a jet pipeline).
    """

    def __init__(self, chart: Chart, gblock, hblock, Ncon):
        self.chart = chart
        self.g = _symmetric_table(gblock, chart.n, "g")
        self.h = _symmetric_table(hblock, chart.m, "h")
        if Ncon.chart != chart:
            raise ValueError("N-connection lives on another chart")
        self.Ncon = Ncon

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def m(self) -> int:
        return self.chart.m

    def jets(self, pts, order: int = 2):
        g = jet_field_array(self.g, pts, order)
        h = jet_field_array(self.h, pts, order)
        N = self.Ncon.jets(pts, order)
        return g, h, N


@dataclass
class DTensor:
    """Component array with one descriptor per index, e.g. ("h^", "h_", "h_")."""

    components: np.ndarray
    indices: tuple

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        lead = self.components.ndim - len(self.indices)
        if lead not in (0, 1):
            raise ValueError("descriptor count does not match component rank")


def _block_tensor(arr: np.ndarray, n: int, spec: str) -> DTensor:
    """Cut a block out of a full-index array; ``spec`` like 'h^ h_ v_'."""
    parts = spec.split()
    idx = [slice(None)] * (arr.ndim - len(parts))
    for p in parts:
        idx.append(slice(0, n) if p[0] == "h" else slice(n, None))
    return DTensor(arr[tuple(idx)], tuple(parts))


class DConnection:
    """A d-connection given by an evaluator returning the four coefficient blocks.

    ``evaluator(points, order)`` returns ``(Lh, Lv, Ch, Cv)`` jets with shapes
    (P,n,n,n), (P,m,m,n), (P,n,n,m), (P,m,m,m); ``order`` is the requested
    jet order of the coefficients.
    """

    def __init__(self, n: int, m: int, evaluator: Callable, name: str = "d-connection"):
        self.n = n
        self.m = m
        self._evaluator = evaluator
        self.name = name

    def blocks(self, pts, order: int = 1):
        return self._evaluator(pts, order)

    def full(self, pts, order: int = 1) -> Jet:
        Lh, Lv, Ch, Cv = self.blocks(pts, order)
        return assemble_gamma(Lh, Lv, Ch, Cv)

    @classmethod
    def from_fields(cls, chart: Chart, Lh, Lv, Ch, Cv, name: str = "d-connection") -> "DConnection":
        """Connection with symbolically given coefficient blocks (nested lists of fields)."""

        def ev(pts, order):
            return tuple(jet_field_array(t, pts, order) for t in (Lh, Lv, Ch, Cv))

        return cls(chart.n, chart.m, ev, name)


def assemble_gamma(Lh: Jet, Lv: Jet, Ch: Jet, Cv: Jet) -> Jet:
    P, n = Lh.shape[0], Lh.shape[1]
    m = Cv.shape[1]
    D = n + m
    order = min(x.order for x in (Lh, Lv, Ch, Cv))
    H, V, A = slice(0, n), slice(n, D), slice(None)
    return jet_block(
        (P, D, D, D),
        Lh.dim,
        order,
        [((A, H, H, H), Lh), ((A, V, V, H), Lv), ((A, H, H, V), Ch), ((A, V, V, V), Cv)],
    )


# ---------------------------------------------------------------------------
# metric assembly
# ---------------------------------------------------------------------------


def _block_diag(g: Jet, h: Jet) -> Jet:
    P, n, m = g.shape[0], g.shape[1], h.shape[1]
    D = n + m
    order = min(g.order, h.order)
    return jet_block((P, D, D), g.dim, order, [((slice(None), slice(0, n), slice(0, n)), g), ((slice(None), slice(n, D), slice(n, D)), h)])


def coordinate_metric_jet(g: Jet, h: Jet, Nia: Jet) -> Jet:
    """Coordinate-frame metric: theta^T (g (+) h) theta."""
    th = coframe_jet(Nia)
    G = _block_diag(g, h)
    return jet_einsum("pam,pab,pbn->pmn", th, G, th)


def assemble_coordinate_metric(dm: DMetric, p) -> np.ndarray:
    """The (n+m)x(n+m) coordinate metric at a point or batch."""
    pts, single = as_batch(p)
    g, h, N = dm.jets(pts, 0)
    Gc = coordinate_metric_jet(g, h, N).val
    return Gc[0] if single else Gc


def extract_blocks(G, n: int, cond_limit: float = COND_LIMIT):
    """Inverse of the assembly: (g, h, N) with ``N[i, a] = N_i^a``."""
    G = np.asarray(G, dtype=float)
    h = G[..., n:, n:]
    cond = np.atleast_1d(np.linalg.cond(h, 1))
    if not np.all(np.isfinite(cond)) or np.any(cond >= cond_limit):
        raise SingularMatrixError("singular h-block", float(np.max(cond)))
    hinv = np.linalg.inv(h)
    N = np.einsum("...ib,...ba->...ia", G[..., :n, n:], hinv)
    g = G[..., :n, :n] - np.einsum("...ia,...ab,...jb->...ij", N, h, N)
    return g, h, N


# ---------------------------------------------------------------------------
# geometry bundle
# ---------------------------------------------------------------------------


@dataclass
class Geometry:
    """Everything derived from (g, h, N) at a batch of points.

    Input jets have order ``order``; the connection has order ``order - 1``.
    """

    n: int
    m: int
    pts: np.ndarray
    order: int
    g: Jet
    h: Jet
    N: Jet
    ginv: Jet
    hinv: Jet
    E: Jet
    theta: Jet
    W: Jet
    Omega: Jet
    cache: dict = field(default_factory=dict)

    @property
    def D(self) -> int:
        return self.n + self.m

    @property
    def G(self) -> Jet:
        if "G" not in self.cache:
            self.cache["G"] = _block_diag(self.g, self.h)
        return self.cache["G"]

    @property
    def Ginv(self) -> Jet:
        if "Ginv" not in self.cache:
            self.cache["Ginv"] = _block_diag(self.ginv, self.hinv)
        return self.cache["Ginv"]

    def adapted_grad(self, F: Jet) -> Jet:
        """Append an axis kappa holding e_kappa F (one order lower)."""
        dF = F.grad()
        E = self.E.truncate(dF.order)
        k = F.ndim
        letters = "abcdefghijklmno"[: k - 1]
        return jet_einsum(f"p{letters}z,pyz->p{letters}y", dF, E)


def geometry(dm: DMetric, p, order: int = 2, cond_limit: float = COND_LIMIT) -> Geometry:
    pts, _ = as_batch(p)
    g, h, N = dm.jets(pts, order)
    ginv = jet_matrix_inverse(g, cond_limit)
    hinv = jet_matrix_inverse(h, cond_limit)
    if order >= 1:
        W = anholonomy_jet(N)
        Om = n_curvature_jet(N)
    else:
        W = Om = None
    return Geometry(dm.n, dm.m, pts, order, g, h, N, ginv, hinv, frame_matrix_jet(N), coframe_jet(N), W, Om)


def canonical_blocks(geo: Geometry):
    """(L^i_jk, L^a_bk, C^i_jc, C^a_bc) of the canonical d-connection as jets."""
    if "canonical" in geo.cache:
        return geo.cache["canonical"]
    n, D = geo.n, geo.D
    Ih, Iv = np.eye(D)[:n], np.eye(D)[n:]
    eg = geo.adapted_grad(geo.g)  # eg[j, r, kappa] = e_kappa g_jr
    eh = geo.adapted_grad(geo.h)
    dg = geo.g.grad()
    dh = geo.h.grad()
    dN = geo.N.grad()
    o = dg.order
    h = geo.h.truncate(o)
    ginv, hinv = geo.ginv.truncate(o), geo.hinv.truncate(o)

    egh = jet_einsum("pjrz,kz->pjrk", eg, Ih)  # horizontal adapted derivatives
    christ = egh + egh.transpose(0, 3, 2, 1) - egh.transpose(0, 1, 3, 2)
    # christ[j, r, k] = e_k g_jr + e_j g_kr - e_r g_jk
    Lh = jet_einsum("pir,pjrk->pijk", ginv, christ) * 0.5

    Y = jet_einsum("pkdz,bz->pdkb", dN, Iv)  # Y[d, k, b] = dN_k^d / dy^b
    ehk = jet_einsum("pbcz,kz->pbck", eh, Ih)  # e_k h_bc
    inner = ehk - jet_einsum("pdkb,pdc->pbck", Y, h) - jet_einsum("pdkc,pdb->pbck", Y, h)
    Lv = Y.transpose(0, 1, 3, 2) + jet_einsum("pac,pbck->pabk", hinv, inner) * 0.5

    dgv = jet_einsum("pjkz,cz->pjkc", dg, Iv)
    Ch = jet_einsum("pik,pjkc->pijc", ginv, dgv) * 0.5

    dhv = jet_einsum("pbdz,cz->pbdc", dh, Iv)  # dhv[b, d, c] = dh_bd / dy^c
    vchrist = dhv + dhv.transpose(0, 3, 2, 1) - dhv.transpose(0, 1, 3, 2)
    Cv = jet_einsum("pad,pbdc->pabc", hinv, vchrist) * 0.5
    out = (Lh, Lv, Ch, Cv)
    geo.cache["canonical"] = out
    return out


def canonical_dconnection(dm: DMetric) -> DConnection:
    def ev(pts, order):
        return canonical_blocks(geometry(dm, pts, order + 1))

    return DConnection(dm.n, dm.m, ev, "canonical d-connection")


def _geo_and_gamma(dc: DConnection, dm_or_ncon, pts, order: int):
    """Geometry for the frame and the full connection jet of the requested order."""
    if isinstance(dm_or_ncon, Geometry):
        geo = dm_or_ncon
    elif isinstance(dm_or_ncon, DMetric):
        geo = geometry(dm_or_ncon, pts, order + 1)
    else:
        geo = _frame_only(dm_or_ncon, pts, order + 1)
    return geo, dc.full(pts, order)


def _frame_only(Ncon, pts, order: int) -> Geometry:
    N = Ncon.jets(pts, order)
    P, n, m = N.shape
    eye_n = Jet.const(np.broadcast_to(np.eye(n), (P, n, n)), N.dim, order)
    eye_m = Jet.const(np.broadcast_to(np.eye(m), (P, m, m)), N.dim, order)
    return Geometry(n, m, pts, order, eye_n, eye_m, N, eye_n, eye_m, frame_matrix_jet(N), coframe_jet(N), anholonomy_jet(N), n_curvature_jet(N))


# ---------------------------------------------------------------------------
# torsion
# ---------------------------------------------------------------------------


def torsion_full(Gam: Jet, W: Jet) -> Jet:
    o = min(Gam.order, W.order)
    Gam, W = Gam.truncate(o), W.truncate(o)
    return Gam - Gam.transpose(0, 1, 3, 2) - W.transpose(0, 1, 3, 2)


def d_torsion(dc: DConnection, Ncon, p) -> dict:
    """Torsion blocks. Keys name the index blocks:

    ``T^i_jk``, ``T^i_ja`` (= C^i_ja), ``T^a_ji`` (= Omega^a_ji),
    ``T^a_ib`` (= dN_i^a/dy^b - L^a_bi), ``T^a_bc``; plus ``full``.
    """
    pts, single = as_batch(p)
    geo, Gam = _geo_and_gamma(dc, Ncon, pts, 0)
    Tor = torsion_full(Gam, geo.W.truncate(0)).val
    n = dc.n
    H, V = slice(0, n), slice(n, None)
    out = {
        "T^i_jk": Tor[:, H, H, H],
        "T^i_ja": Tor[:, H, H, V],
        "T^a_ji": Tor[:, V, H, H],
        "T^a_ib": Tor[:, V, H, V],
        "T^a_bc": Tor[:, V, V, V],
        "full": Tor,
    }
    return {k: (v[0] if single else v) for k, v in out.items()}


def frame_torsion(dc: DConnection, Ncon, p) -> np.ndarray:
    """Torsion from the structure equations T^a = d theta^a + Gamma^a_b ^ theta^b.

    Evaluated on frame pairs using coordinate derivatives of the coframe only,
    independent of the closed anholonomy formulas. Same layout as ``d_torsion``'s
    ``full``.
    """
    pts, single = as_batch(p)
    geo, Gam = _geo_and_gamma(dc, Ncon, pts, 0)
    th = geo.theta
    dth = th.grad()  # dth[g, mu, nu] = d_nu theta[g, mu]
    E = geo.E.truncate(0)
    # d theta^g (e_alpha, e_beta) = e_alpha(theta^g(e_beta)) - e_beta(...) - theta^g([e_a, e_b])
    #                             = E[a,nu] E[b,mu] (d_nu th[g,mu] - d_mu th[g,nu])
    curl = dth.val - np.swapaxes(dth.val, -1, -2)
    dtheta = np.einsum("pan,pbm,pgmn->pgab", E.val, E.val, curl)
    # (Gamma^g_b ^ theta^b)(e_alpha, e_beta) = Gam[g, beta, alpha] - Gam[g, alpha, beta]
    Tab = dtheta + np.swapaxes(Gam.val, -1, -2) - Gam.val
    # Tab[g, alpha, beta] = T(e_alpha, e_beta)^g; reorder to Tor[g, beta, alpha]
    Tor = np.swapaxes(Tab, -1, -2)
    return Tor[0] if single else Tor


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------


def connection_curvature(Gam: Jet, E: Jet, W: Jet) -> np.ndarray:
    """Full curvature array of an arbitrary frame connection (order-1 Gam)."""
    if Gam.order < 1:
        raise ValueError("curvature needs first derivatives of the connection")
    dG = Gam.grad().val  # (P, D, D, D, D): d_nu Gam[a,b,c]
    Ev = E.val
    eG = np.einsum("pabcn,pdn->pabcd", dG, Ev)  # e_d Gam[a,b,c]
    Gv = Gam.val
    Wv = W.val
    R = (
        eG
        - np.swapaxes(eG, -1, -2)
        + np.einsum("pmbc,pamd->pabcd", Gv, Gv)
        - np.einsum("pmbd,pamc->pabcd", Gv, Gv)
        - np.einsum("pmdc,pabm->pabcd", Wv, Gv)
    )
    return R


def curvature_blocks(Lh: Jet, Lv: Jet, Ch: Jet, Cv: Jet, geo: Geometry) -> dict:
    """The six d-curvature blocks transcribed component by component.

    Keys: ``R^i_hjk``, ``R^a_bjk``, ``R^i_jka``, ``R^c_bka``, ``R^i_jbc``, ``R^a_bcd``.
    Index order of each array follows its key.
    """
    n, D = geo.n, geo.D
    E = geo.E.val
    Eh, Ev = E[:, :n, :], E[:, n:, :]

    def e_h(J):  # append horizontal adapted derivative axis
        return np.einsum("p...z,pkz->p...k", J.grad().val, Eh)

    def e_v(J):
        return np.einsum("p...z,pkz->p...k", J.grad().val, Ev)

    L, Lb, C, Cb = Lh.val, Lv.val, Ch.val, Cv.val
    Om = geo.Omega.truncate(0).val  # Om[a, k, j]
    dN = geo.N.grad().val  # dN[k, a, z]
    Y = np.einsum("pkdz,bz->pdkb", dN, np.eye(D)[n:])  # Y[d, k, a] = dN_k^d/dy^a
    # torsion T^b_ka = dN_k^b/dy^a - L^b_ak (the mixed v-torsion)
    Tv = Y - np.swapaxes(Lb, -1, -2)  # Tv[b, k, a]

    eL, eLb, eC, eCb = e_h(Lh), e_h(Lv), e_h(Ch), e_h(Cv)
    vL, vLb, vC, vCb = e_v(Lh), e_v(Lv), e_v(Ch), e_v(Cv)

    out = {}
    # R^i_hjk = e_k L^i_hj - e_j L^i_hk + L^m_hj L^i_mk - L^m_hk L^i_mj - C^i_ha Omega^a_kj
    out["R^i_hjk"] = (
        eL
        - np.swapaxes(eL, -1, -2)
        + np.einsum("pmhj,pimk->pihjk", L, L)
        - np.einsum("pmhk,pimj->pihjk", L, L)
        - np.einsum("piha,pakj->pihjk", C, Om)
    )
    # R^a_bjk = e_k L^a_bj - e_j L^a_bk + L^c_bj L^a_ck - L^c_bk L^a_cj - C^a_bc Omega^c_kj
    out["R^a_bjk"] = (
        eLb
        - np.swapaxes(eLb, -1, -2)
        + np.einsum("pcbj,pack->pabjk", Lb, Lb)
        - np.einsum("pcbk,pacj->pabjk", Lb, Lb)
        - np.einsum("pabc,pckj->pabjk", Cb, Om)
    )
    # R^i_jka = e_a L^i_jk - D_k C^i_ja + C^i_jb T^b_ka, with
    # D_k C^i_ja = e_k C^i_ja + L^i_mk C^m_ja - L^m_jk C^i_ma - L^b_ak C^i_jb
    DkC = (
        np.einsum("pijak->pijka", eC)
        + np.einsum("pimk,pmja->pijka", L, C)
        - np.einsum("pmjk,pima->pijka", L, C)
        - np.einsum("pbak,pijb->pijka", Lb, C)
    )
    out["R^i_jka"] = vL - DkC + np.einsum("pijb,pbka->pijka", C, Tv)
    # R^c_bka = e_a L^c_bk - D_k C^c_ba + C^c_bd T^d_ka, with
    # D_k C^c_ba = e_k C^c_ba + L^c_dk C^d_ba - L^d_bk C^c_da - L^d_ak C^c_bd
    DkCb = (
        np.einsum("pcbak->pcbka", eCb)
        + np.einsum("pcdk,pdba->pcbka", Lb, Cb)
        - np.einsum("pdbk,pcda->pcbka", Lb, Cb)
        - np.einsum("pdak,pcbd->pcbka", Lb, Cb)
    )
    out["R^c_bka"] = vLb - DkCb + np.einsum("pcbd,pdka->pcbka", Cb, Tv)
    # R^i_jbc = e_c C^i_jb - e_b C^i_jc + C^h_jb C^i_hc - C^h_jc C^i_hb
    out["R^i_jbc"] = (
        vC - np.swapaxes(vC, -1, -2) + np.einsum("phjb,pihc->pijbc", C, C) - np.einsum("phjc,pihb->pijbc", C, C)
    )
    # R^a_bcd = e_d C^a_bc - e_c C^a_bd + C^e_bc C^a_ed - C^e_bd C^a_ec
    out["R^a_bcd"] = (
        vCb - np.swapaxes(vCb, -1, -2) + np.einsum("pebc,paed->pabcd", Cb, Cb) - np.einsum("pebd,paec->pabcd", Cb, Cb)
    )
    return out


def blocks_to_full(blocks: dict, n: int, m: int) -> np.ndarray:
    """Scatter the six d-curvature blocks into the full R[alpha, beta, gamma, delta] array.

    Mixed-type entries are filled by antisymmetry in the last pair; blocks that a
    d-connection forces to vanish stay zero.
    """
    P = next(iter(blocks.values())).shape[0]
    D = n + m
    R = np.zeros((P, D, D, D, D))
    H, V = slice(0, n), slice(n, D)
    R[:, H, H, H, H] = blocks["R^i_hjk"]
    R[:, V, V, H, H] = blocks["R^a_bjk"]
    R[:, H, H, H, V] = blocks["R^i_jka"]
    R[:, H, H, V, H] = -np.swapaxes(blocks["R^i_jka"], -1, -2)
    R[:, V, V, H, V] = blocks["R^c_bka"]
    R[:, V, V, V, H] = -np.swapaxes(blocks["R^c_bka"], -1, -2)
    R[:, H, H, V, V] = blocks["R^i_jbc"]
    R[:, V, V, V, V] = blocks["R^a_bcd"]
    return R


def d_curvature(dc: DConnection, Ncon, p) -> dict:
    """The six d-curvature blocks at a point or batch, plus ``full``."""
    pts, single = as_batch(p)
    geo = Ncon if isinstance(Ncon, Geometry) else (
        geometry(Ncon, pts, 2) if isinstance(Ncon, DMetric) else _frame_only(Ncon, pts, 2)
    )
    Lh, Lv, Ch, Cv = dc.blocks(pts, 1)
    blocks = curvature_blocks(Lh, Lv, Ch, Cv, geo)
    blocks["full"] = blocks_to_full(blocks, dc.n, dc.m)
    return {k: (v[0] if single else v) for k, v in blocks.items()}


def ricci_from_full(R: np.ndarray) -> np.ndarray:
    return np.einsum("ptbgt->pbg", R)


def ricci_scalar_einstein(dc: DConnection, dm: DMetric, p):
    """(Ricci blocks dict, scalar, Einstein full array).

    Ricci keys: ``R_ij``, ``R_ia``, ``R_ai``, ``R_ab`` and ``full``.
    """
    pts, single = as_batch(p)
    geo = geometry(dm, pts, 2)
    curv = d_curvature(dc, geo, pts)
    return ricci_from_curvature(curv["full"], geo, single)


def ricci_from_curvature(R: np.ndarray, geo: Geometry, single: bool = False):
    n = geo.n
    Ric = ricci_from_full(R)
    Ginv = geo.Ginv.val
    scalar = np.einsum("pab,pab->p", Ginv, Ric)
    Ein = Ric - 0.5 * geo.G.val * scalar[:, None, None]
    H, V = slice(0, n), slice(n, None)
    ric = {"R_ij": Ric[:, H, H], "R_ia": Ric[:, H, V], "R_ai": Ric[:, V, H], "R_ab": Ric[:, V, V], "full": Ric}
    if single:
        return {k: v[0] for k, v in ric.items()}, float(scalar[0]), Ein[0]
    return ric, scalar, Ein


# ---------------------------------------------------------------------------
# curvature oracle
# ---------------------------------------------------------------------------


def commutator_curvature(dc: DConnection, dm_or_ncon, Z: Sequence[ScalarField], p) -> np.ndarray:
    """``R(e_eps, e_delta) Z`` from nested covariant derivatives of a d-vector field.

    ``Z`` gives adapted-frame components as fields. The bracket term uses frame
    brackets recomputed from coordinate derivatives of the frame. Returns an
    array ``out[gamma, delta, eps]``.
    """
    pts, single = as_batch(p)
    geo, Gam = _geo_and_gamma(dc, dm_or_ncon, pts, 1)
    Zj = jet_field_array(list(Z), pts, 2)
    E1 = geo.E.truncate(1)
    dZ = Zj.grad()  # order 1
    eZ = jet_einsum("pgz,pdz->pgd", dZ, E1)  # e_delta Z^gamma
    V = eZ + jet_einsum("pgbd,pb->pgd", Gam, Zj.truncate(1))  # (D_delta Z)^gamma
    eV = np.einsum("pgdz,pez->pgde", V.grad().val, geo.E.val)  # e_eps V[gamma, delta]
    Gv, Vv = Gam.val, V.val
    DD = eV + np.einsum("pgme,pmd->pgde", Gv, Vv)  # D_eps (D_delta Z)
    Wb = coordinate_bracket_jet(geo.E, geo.theta).val  # Wb[mu, alpha, beta]
    out = DD - np.swapaxes(DD, -1, -2) - np.einsum("pmed,pgm->pgde", Wb, Vv)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# compatibility and the symplectic form
# ---------------------------------------------------------------------------


def almost_complex_matrix(n: int) -> np.ndarray:
    """F[mu, alpha]: F e_alpha = F[mu, alpha] e_mu, with F e_i = e_(n+i), F e_(n+i) = -e_i."""
    F = np.zeros((2 * n, 2 * n))
    F[n:, :n] = np.eye(n)
    F[:n, n:] = -np.eye(n)
    return F


def symplectic_components(G: Jet) -> Jet:
    """theta[alpha, beta] = g(F e_alpha, e_beta) for a metric on an n+n split."""
    D = G.shape[-1]
    if D % 2:
        raise ValueError("almost complex structure needs n = m")
    F = almost_complex_matrix(D // 2)
    return jet_einsum("ma,pmb->pab", F, G)


def covariant_two_form(T2: Jet, Gam: Jet, geo: Geometry) -> np.ndarray:
    """(D T)[gamma, alpha, beta] = e_gamma T_ab - Gam[mu,a,gamma] T_mb - Gam[mu,b,gamma] T_am."""
    eT = geo.adapted_grad(T2).val  # eT[a, b, gamma]
    Tv, Gv = T2.val, Gam.val
    out = (
        np.einsum("pabg->pgab", eT)
        - np.einsum("pmag,pmb->pgab", Gv, Tv)
        - np.einsum("pmbg,pam->pgab", Gv, Tv)
    )
    return out


def compat_residuals(dc: DConnection, dm: DMetric, p, theta: Jet | None = None):
    """(max |Dg|, max |D theta|, max |cyclic e theta|) over the given points.

    ``theta`` defaults to g(F., .) when n = m; otherwise the theta entries are NaN.
    Also returns the per-point arrays in a dict as a fourth element.
    """
    pts, _ = as_batch(p)
    geo = geometry(dm, pts, 2)
    Gam = dc.full(pts, 0)
    G1 = geo.G.truncate(1)
    Dg = covariant_two_form(G1, Gam, geo)
    per = {"Dg": np.abs(Dg).reshape(len(pts), -1).max(axis=1)}
    if theta is None and geo.n == geo.m:
        theta = symplectic_components(geo.G)
    if theta is not None:
        th1 = theta.truncate(1)
        Dth = covariant_two_form(th1, Gam, geo)
        eth = np.einsum("pabg->pgab", geo.adapted_grad(th1).val)  # eth[g, a, b] = e_g theta_ab
        cyc = eth + np.einsum("pgab->pagb", eth) + np.einsum("pgab->pbag", eth)
        per["Dtheta"] = np.abs(Dth).reshape(len(pts), -1).max(axis=1)
        per["cyclic"] = np.abs(cyc).reshape(len(pts), -1).max(axis=1)
    else:
        per["Dtheta"] = per["cyclic"] = np.full(len(pts), np.nan)
    return float(per["Dg"].max()), float(per["Dtheta"].max()), float(per["cyclic"].max()), per


def symmetrize_reconstruct(dc: DConnection, dm: DMetric, p, theta: Jet | None = None, verbatim: bool = False):
    """Symmetric part S of the connection and the connection rebuilt from (theta, S).

    With ``Lam[a, g, b] = theta[a, t] Gam[t, b, g]`` (direction ``g``) and
    ``c[g, a, b] = e_g theta_ab``, the rebuild is

        Lam[a,g,b] = 1/2 (c[a,g,b] + c[g,a,b] - c[b,a,g]) + S[a,g,b] - S[g,b,a] + S[b,g,a]

    and, when the cyclic sum of ``c`` vanishes, ``-c[b,a,g] + (same S terms)``.
    ``verbatim=True`` uses ``-c[g,a,b]`` in the first bracket instead.
    Returns a dict with S, the rebuilt and original lowered arrays, residuals.
    """
    pts, _ = as_batch(p)
    geo = geometry(dm, pts, 2)
    Gam = dc.full(pts, 0).val
    if theta is None:
        theta = symplectic_components(geo.G)
    th1 = theta.truncate(1)
    thv = th1.val
    c = np.einsum("pabg->pgab", geo.adapted_grad(th1).val)
    S = 0.5 * (Gam + np.swapaxes(Gam, -1, -2))  # S[t, b, g] symmetric in the last two
    Sl = np.einsum("pat,ptbg->pagb", thv, S)  # lowered, Sl[a, g, b]
    Lam = np.einsum("pat,ptbg->pagb", thv, Gam)
    s_terms = Sl - np.einsum("pgba->pagb", Sl) + np.einsum("pbga->pagb", Sl)
    sign = -1.0 if verbatim else 1.0
    e_terms = 0.5 * (np.einsum("pagb->pagb", c) + sign * np.einsum("pgab->pagb", c) - np.einsum("pbag->pagb", c))
    rebuilt = e_terms + s_terms
    simple = -np.einsum("pbag->pagb", c) + s_terms
    cyc = c + np.einsum("pgab->pagb", c) + np.einsum("pgab->pbag", c)
    sym_err = np.abs(S - np.swapaxes(S, -1, -2)).max()
    return {
        "S": S,
        "rebuilt": rebuilt,
        "lowered": Lam,
        "residual": float(np.abs(rebuilt - Lam).max()),
        "simplified_residual": float(np.abs(simple - Lam).max()),
        "cyclic": float(np.abs(cyc).max()),
        "symmetry": float(sym_err),
    }


# ---------------------------------------------------------------------------
# Levi-Civita connection and deformation
# ---------------------------------------------------------------------------


def levi_civita_frame(geo: Geometry) -> Jet:
    """Levi-Civita coefficients in the adapted frame from the frame Koszul formula."""
    G = geo.G
    eG = geo.adapted_grad(G)  # eG[a, b, k] = e_k G_ab
    o = eG.order
    W = geo.W.truncate(o)
    Gl = G.truncate(o)
    Wl = jet_einsum("pmn,pnab->pmab", Gl, W)  # Wl[m, a, b] = g([e_a, e_b], e_m)
    # K[g, b, a] = 1/2 (e_a G_bg + e_b G_ag - e_g G_ab + Wl[g,a,b] - Wl[b,a,g] - Wl[a,b,g])
    K = (
        eG.transpose(0, 2, 1, 3)  # [g, b, a] <- eG[b, g, a]
        + eG.transpose(0, 2, 3, 1)  # eG[a, g, b] -> [g, b, a]
        - eG.transpose(0, 3, 2, 1)  # eG[a, b, g] -> [g, b, a]
        + Wl.transpose(0, 1, 3, 2)  # Wl[g, a, b] -> [g, b, a]
        - Wl.transpose(0, 3, 1, 2)  # Wl[b, a, g] -> [g, b, a]
        - Wl.transpose(0, 3, 2, 1)  # Wl[a, b, g] -> [g, b, a]
    ) * 0.5
    return jet_einsum("plg,pgba->plba", geo.Ginv.truncate(o), K)


def levi_civita_coordinate(geo: Geometry):
    """Levi-Civita coefficients from coordinate Christoffel symbols moved to the adapted frame.

    Returns (adapted-frame coefficients Jet of order ``geo.order - 1``,
    coordinate Christoffels Jet, coordinate metric Jet).
    """
    Gc = coordinate_metric_jet(geo.g, geo.h, geo.N)
    Gci = jet_matrix_inverse(Gc)
    dGc = Gc.grad()  # dGc[s, mu, nu] = d_nu G_s mu
    o = dGc.order
    Gi = Gci.truncate(o)
    # Chr[l, mu, nu] = 1/2 G^ls (d_mu G_s nu + d_nu G_s mu - d_s G_mu nu)
    low = dGc.transpose(0, 1, 3, 2) + dGc - dGc.transpose(0, 3, 1, 2)
    Chr = jet_einsum("pls,psmn->plmn", Gi, low) * 0.5
    E = geo.E.truncate(o)
    dE = geo.E.grad()  # dE[b, l, mu] = d_mu E[b, l]
    th = geo.theta.truncate(o)
    vec = jet_einsum("pam,pblm->plba", E, dE) + jet_einsum("pam,pbn,plmn->plba", E, E, Chr)
    return jet_einsum("pgl,plba->pgba", th, vec), Chr, Gc


def deformation_blocks(geo: Geometry) -> Jet:
    """Closed-form deformation P = canonical - Levi-Civita in the adapted frame (full array).

    Lowered by the block metric, ``Pl[g, b, a] = g(e_g, P(e_a) e_b)``, the blocks are

    * hhh, vvv: 0
    * [c, b, k]: 0
    * [i, j, c]: 1/2 h_ca Omega^a_ji
    * [a, j, k]: 1/2 (d_a g_kj - h_ad Omega^d_kj)
    * [i, b, k]: -1/2 (d_b g_ki - h_bd Omega^d_ki)
    * [a, j, c]: -1/2 (e_j h_ca - h_ad dN_j^d/dy^c - h_cd dN_j^d/dy^a)
    * [i, b, c]: 1/2 (e_i h_cb - h_bd dN_i^d/dy^c - h_cd dN_i^d/dy^b)
    """
    n, D = geo.n, geo.D
    Ih, Iv = np.eye(D)[:n], np.eye(D)[n:]
    dg = geo.g.grad()
    o = dg.order
    h = geo.h.truncate(o)
    Om = geo.Omega.truncate(o)  # Om[a, i, j]
    dN = geo.N.grad()
    Y = jet_einsum("pkdz,bz->pdkb", dN, Iv)  # Y[d, k, b] = dN_k^d/dy^b
    eh = geo.adapted_grad(geo.h)  # eh[c, a, kappa]
    dgv = jet_einsum("pkjz,az->pakj", dg, Iv)  # d_a g_kj
    hOm = jet_einsum("pad,pdkj->pakj", h, Om)  # h_ad Omega^d_kj

    P_ijc = hOm.transpose(0, 3, 2, 1) * 0.5  # [c, j, i] -> want [i, j, c]: 1/2 h_ca Om^a_ji
    P_ajk = (dgv - hOm) * 0.5  # [a, k, j]; swap to [a, j, k] below (symmetric pieces aside)
    P_ajk = P_ajk.transpose(0, 1, 3, 2)
    P_ibk = (dgv - hOm).transpose(0, 3, 1, 2) * -0.5  # [a,k,i] -> [i, a, k] i.e. [i, b, k]
    ehj = jet_einsum("pcaz,jz->pajc", eh, Ih)  # e_j h_ca at [a, j, c]
    hYc = jet_einsum("pad,pdjc->pajc", h, Y)  # h_ad dN_j^d/dy^c
    P_ajc = (ehj - hYc - hYc.transpose(0, 3, 2, 1)) * -0.5
    # [i, b, c]: 1/2 (e_i h_cb - h_bd Y[d,i,c] - h_cd Y[d,i,b])
    ehi = jet_einsum("pcbz,iz->pibc", eh, Ih)
    hY = jet_einsum("pbd,pdic->pibc", h, Y)
    P_ibc = (ehi - hY - hY.transpose(0, 1, 3, 2)) * 0.5
    H, V, A = slice(0, n), slice(n, D), slice(None)
    Pl = jet_block(
        (len(geo.pts), D, D, D),
        geo.g.dim,
        o,
        [
            ((A, H, H, V), P_ijc),
            ((A, V, H, H), P_ajk),
            ((A, H, V, H), P_ibk),
            ((A, V, H, V), P_ajc),
            ((A, H, V, V), P_ibc),
        ],
    )
    return jet_einsum("plg,pgba->plba", geo.Ginv.truncate(o), Pl)


def printed_deformation(geo: Geometry) -> np.ndarray:
    """The four-block deformation (0, dN/dy, -1/2 g^ik Omega^a_kj h_ca, 0) with zero mixed blocks."""
    n, D = geo.n, geo.D
    dN = geo.N.grad().val
    Y = np.einsum("pkdz,bz->pdkb", dN, np.eye(D)[n:])
    Om = geo.Omega.truncate(0).val
    P = np.zeros((len(geo.pts), D, D, D))
    P[:, n:, n:, :n] = np.swapaxes(Y, -1, -2)  # P^a_bk = dN_k^a/dy^b
    P[:, :n, :n, n:] = -0.5 * np.einsum("pik,pakj,pca->pijc", geo.ginv.val, Om, geo.h.val)
    return P


def levi_civita_and_deformation(dm: DMetric, p) -> dict:
    """Compare the canonical connection with Levi-Civita + deformation.

    Keys: ``lc`` (adapted-frame coefficients from coordinate Christoffels),
    ``P`` (closed-form deformation), ``residual`` = max |canonical - lc - P|,
    ``koszul_residual`` (frame Koszul vs coordinate route),
    ``printed_residual`` (max |canonical - lc - printed four-block deformation|).
    """
    pts, _ = as_batch(p)
    geo = geometry(dm, pts, 2)
    Gam = assemble_gamma(*canonical_blocks(geo)).val
    lc, _, _ = levi_civita_coordinate(geo)
    lcv = lc.val
    P = deformation_blocks(geo).val
    lck = levi_civita_frame(geo).val
    return {
        "lc": lcv,
        "P": P,
        "residual": float(np.abs(Gam - lcv - P).max()),
        "koszul_residual": float(np.abs(lck - lcv).max()),
        "printed_residual": float(np.abs(Gam - lcv - printed_deformation(geo)).max()),
        "per_point": np.abs(Gam - lcv - P).reshape(len(pts), -1).max(axis=1),
    }


def levi_civita_ricci(dm: DMetric, p) -> np.ndarray:
    """Coordinate Ricci tensor of the assembled metric (per point)."""
    pts, _ = as_batch(p)
    geo = geometry(dm, pts, 2)
    _, Chr, _ = levi_civita_coordinate(geo)
    dC = Chr.grad().val  # dC[l, m, n, s] = d_s Chr[l, m, n]
    C = Chr.val
    # Ric_mn = d_l C^l_mn - d_n C^l_ml + C^l_ls C^s_mn - C^l_ns C^s_ml
    return (
        np.einsum("plmnl->pmn", dC)
        - np.einsum("plmln->pmn", dC)
        + np.einsum("plls,psmn->pmn", C, C)
        - np.einsum("plns,psml->pmn", C, C)
    )


def curvature_deformation_check(dc: DConnection, dm_or_ncon, Pfields, p) -> dict:
    """Curvature of (connection + P) against the expanded deformation identity.

    ``Pfields[g][b][a]`` are fields for the components of P with the same layout
    as the connection array. The identity used is

        R'(X,Y)Z = R(X,Y)Z + (D_X P)(Y,Z) - (D_Y P)(X,Z) + P(T(X,Y), Z)
                   + P(X, P(Y,Z)) - P(Y, P(X,Z))
    """
    pts, _ = as_batch(p)
    geo, Gam = _geo_and_gamma(dc, dm_or_ncon, pts, 1)
    Pj = jet_field_array(Pfields, pts, 1)
    W1 = geo.W.truncate(0)
    R0 = connection_curvature(Gam, geo.E.truncate(0), W1)
    R1 = connection_curvature(Gam + Pj, geo.E.truncate(0), W1)
    Gv, Pv = Gam.val, Pj.val
    eP = np.einsum("pabcz,pdz->pabcd", Pj.grad().val, geo.E.val)
    DP = (
        eP
        + np.einsum("pamd,pmbc->pabcd", Gv, Pv)
        - np.einsum("pabm,pmcd->pabcd", Pv, Gv)
        - np.einsum("pamc,pmbd->pabcd", Pv, Gv)
    )  # DP[a, b, c, d] = (D_{e_d} P)[a, b, c]
    Tor = torsion_full(Gam.truncate(0), W1).val  # Tor[m, c, d] = T(e_d, e_c)^m
    expanded = (
        R0
        + DP
        - np.swapaxes(DP, -1, -2)
        + np.einsum("pabm,pmcd->pabcd", Pv, Tor)
        + np.einsum("pmbc,pamd->pabcd", Pv, Pv)
        - np.einsum("pmbd,pamc->pabcd", Pv, Pv)
    )
    return {"residual": float(np.abs(R1 - expanded).max()), "scale": float(np.abs(R1).max())}
