"""Per-point check suites shared by the CLI and the experiment scripts.

A suite is a list of :class:`Check` descriptors plus a function mapping a
batch of points to ``{check name: per-point residual array}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dconn as dc_mod
from .dconn import (
    DMetric,
    canonical_dconnection,
    commutator_curvature,
    compat_residuals,
    connection_curvature,
    d_curvature,
    d_torsion,
    frame_torsion,
    geometry,
    levi_civita_and_deformation,
    ricci_scalar_einstein,
    symplectic_components,
)
from .expr import Chart, parse
from .lagrange import Lagrangian, almost_complex_apply, sasaki_inner, sasaki_metric
from .nconn import DVector, coordinate_bracket_jet
from .solutions import AnsatzData, residual_fields, RESIDUAL_ORDER

__all__ = ["Check", "lagrangian_checks", "metric_checks", "solution_checks", "oracle_fields"]


@dataclass(frozen=True)
class Check:
    name: str
    equation: str


def _per_point(x: np.ndarray) -> np.ndarray:
    x = np.abs(np.asarray(x, dtype=float))
    return x.reshape(x.shape[0], -1).max(axis=1)


def oracle_fields(chart: Chart) -> list:
    """Smooth vector-field components used by the commutator oracle."""
    names = chart.names
    D = chart.dim
    out = []
    for b in range(D):
        a, c = names[b], names[(b + 1) % D]
        out.append(parse(f"sin({a} + {0.3 * (b + 1)}) + 0.5*cos({c})*{c}", chart))
    return out


def _relative(diff: np.ndarray, ref: np.ndarray) -> np.ndarray:
    return _per_point(diff) / np.maximum(1.0, _per_point(ref))


# ---------------------------------------------------------------------------
# d-metric suites
# ---------------------------------------------------------------------------

METRIC_CHECKS = [
    Check("metric_compatibility", "covariant derivative of the d-metric vanishes"),
    Check("torsion_horizontal", "pure horizontal torsion T^i_jk vanishes"),
    Check("torsion_vertical", "pure vertical torsion T^a_bc vanishes"),
    Check("torsion_structure_oracle", "torsion blocks agree with the frame structure equation"),
    Check("anholonomy_oracle", "closed anholonomy coefficients agree with frame brackets"),
    Check("deformation_identity", "canonical connection equals Levi-Civita plus deformation"),
]
CURVATURE_CHECKS = [
    Check("curvature_blocks", "curvature blocks agree with the full connection curvature"),
    Check("curvature_commutator_oracle", "curvature blocks agree with the covariant commutator on a test field"),
]
SYMPLECTIC_CHECKS = [
    Check("almost_complex_square", "F squared equals minus identity"),
    Check("theta_antisymmetry", "theta is antisymmetric"),
    Check("theta_from_metric", "theta(X, Y) equals g(FX, Y) on frame vectors"),
    Check("theta_parallel", "covariant derivative of theta vanishes"),
]


def _metric_values(dm: DMetric, pts: np.ndarray, jet_order: int, symplectic: bool) -> dict:
    dc = canonical_dconnection(dm)
    out = {}
    _, _, _, per = compat_residuals(dc, dm, pts)
    out["metric_compatibility"] = per["Dg"]
    if symplectic:
        out["theta_parallel"] = per["Dtheta"]
    tor = d_torsion(dc, dm.Ncon, pts)
    out["torsion_horizontal"] = _per_point(tor["T^i_jk"])
    out["torsion_vertical"] = _per_point(tor["T^a_bc"])
    out["torsion_structure_oracle"] = _per_point(frame_torsion(dc, dm.Ncon, pts) - tor["full"])
    geo = geometry(dm, pts, 2)
    Wb = coordinate_bracket_jet(geo.E, geo.theta).val
    out["anholonomy_oracle"] = _per_point(Wb - geo.W.val)
    out["deformation_identity"] = levi_civita_and_deformation(dm, pts)["per_point"]
    if jet_order >= 2:
        R = d_curvature(dc, dm, pts)["full"]
        Gam = dc.full(pts, 1)
        Rc = connection_curvature(Gam, geo.E.truncate(0), geo.W.truncate(0))
        out["curvature_blocks"] = _relative(R - Rc, Rc)
        Z = oracle_fields(dm.chart)
        comm = commutator_curvature(dc, dm, Z, pts)
        Zv = np.stack([np.asarray(z(pts)) * np.ones(len(pts)) for z in Z], axis=-1)
        RZ = np.einsum("pgbde,pb->pgde", R, Zv)
        out["curvature_commutator_oracle"] = _relative(RZ - comm, comm)
    return out


def metric_checks(dm: DMetric, jet_order: int = 2, symplectic: bool = False):
    checks = list(METRIC_CHECKS)
    if jet_order >= 2:
        checks += CURVATURE_CHECKS
    if symplectic:
        checks.append(SYMPLECTIC_CHECKS[3])

    def run(pts):
        return _metric_values(dm, pts, jet_order, symplectic)

    return checks, run


# ---------------------------------------------------------------------------
# Lagrangian suite
# ---------------------------------------------------------------------------

LAGRANGE_CHECKS = [
    Check("spray_connection", "N-connection equals the fiber derivative of the semispray"),
]


def _symplectic_values(lag: Lagrangian, pts: np.ndarray) -> dict:
    n = lag.n
    D = 2 * n
    F = dc_mod.almost_complex_matrix(n)
    geo = geometry(sasaki_metric(lag), pts, 0)
    theta = symplectic_components(geo.G).val
    sq = np.abs(F @ F + np.eye(D)).max() * np.ones(len(pts))
    anti = _per_point(theta + np.swapaxes(theta, 1, 2))
    g = geo.g.val
    basis = [DVector.from_array(np.eye(D)[k], n) for k in range(D)]
    direct = np.empty_like(theta)
    for p in range(len(pts)):
        for a in range(D):
            FX = almost_complex_apply(basis[a])
            for b in range(D):
                direct[p, a, b] = sasaki_inner(g[p], FX, basis[b])
    return {
        "almost_complex_square": sq,
        "theta_antisymmetry": anti,
        "theta_from_metric": _per_point(theta - direct),
    }


def lagrangian_checks(lag: Lagrangian, jet_order: int = 2):
    dm = sasaki_metric(lag)
    mchecks, mrun = metric_checks(dm, jet_order, symplectic=True)
    checks = SYMPLECTIC_CHECKS[:3] + LAGRANGE_CHECKS + mchecks

    def run(pts):
        out = _symplectic_values(lag, pts)
        G = lag.semispray_jets(pts, 1)
        N = lag.nconnection_jets(pts, 0).val
        dGdy = np.swapaxes(G.d1[:, :, lag.n :], 1, 2)  # [j, i] = dG^i/dy^j
        out["spray_connection"] = _per_point(dGdy - N)
        out.update(mrun(pts))
        return out

    return checks, run


# ---------------------------------------------------------------------------
# solution suite
# ---------------------------------------------------------------------------

RESIDUAL_NAMES = {
    "r1": "horizontal 2D block equation",
    "r2": "h4-h5 relation (beta)",
    "r3_1": "w_1 beta + alpha_1",
    "r3_2": "w_2 beta + alpha_2",
    "r3_3": "w_3 beta + alpha_3",
    "r4_1": "n_1** + gamma_n n_1*",
    "r4_2": "n_2** + gamma_n n_2*",
    "r4_3": "n_3** + gamma_n n_3*",
    "c_h4_1": "adapted derivative delta_1 of h4",
    "c_varpi_1": "adapted derivative delta_1 of varpi",
    "c_h4_2": "adapted derivative delta_2 of h4",
    "c_varpi_2": "adapted derivative delta_2 of varpi",
    "c_h4_3": "adapted derivative delta_3 of h4",
    "c_varpi_3": "adapted derivative delta_3 of varpi",
}
RICCI_CHECKS = [
    Check("ricci_hh", "Ricci d-tensor block R_ij vanishes"),
    Check("ricci_hv", "Ricci d-tensor block R_ia vanishes"),
    Check("ricci_vh", "Ricci d-tensor block R_ai vanishes"),
    Check("ricci_vv", "Ricci d-tensor block R_ab vanishes"),
]


def solution_checks(a: AnsatzData, jet_order: int = 2):
    checks = [Check(f"vacuum_{k}", RESIDUAL_NAMES[k]) for k in RESIDUAL_ORDER]
    if jet_order >= 2:
        checks += RICCI_CHECKS
    fields = residual_fields(a)
    dm = a.dmetric()
    dc = canonical_dconnection(dm)

    def run(pts):
        out = {}
        for k in RESIDUAL_ORDER:
            out[f"vacuum_{k}"] = np.abs(np.asarray(fields[k](pts)) * np.ones(len(pts)))
        if jet_order >= 2:
            ric, _, _ = ricci_scalar_einstein(dc, dm, pts)
            for key, name in zip(("R_ij", "R_ia", "R_ai", "R_ab"), ("ricci_hh", "ricci_hv", "ricci_vh", "ricci_vv")):
                out[name] = _per_point(ric[key])
        return out

    return checks, run
