"""Vacuum solutions of the 5D off-diagonal ansatz and their certification.

Chart ``(x1, x2, x3, v, y5)`` with ``n = 3`` and ``m = 2``. The ansatz is

    g = diag(+-w, w g2, w g3),  h = diag(w h4, w h5),  N_i^4 = w_i,  N_i^5 = n_i

with conformal factor ``w = varpi``. Derivative shorthands: ``a.`` along x2,
``a'`` along x3, ``a*`` along v. The reduced vacuum system is

* r1 = g3.. - g2. g3./(2 g2) - (g3.)^2/(2 g3) + g2'' - g2' g3'/(2 g3) - (g2')^2/(2 g2)
* r2 = beta = h5** - h5* (ln sqrt|h4 h5|)*
* r3_i = w_i beta + alpha_i,  alpha_i = d_i h5* - h5* d_i ln sqrt|h4 h5|
* r4_i = n_i** + gamma_n n_i*,  gamma_n = 3 H5*/(2 H5) - H4*/(2 H4),  H = varpi h
* c_i = (delta_i h4, delta_i varpi),  delta_i = d_i - (w_i + zeta_i) d_v + n_i d_5
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dconn import DMetric
from .expr import Chart, DomainError, ScalarField, DEFAULT_PANELS
from .nconn import NConnection, as_batch

__all__ = [
    "ANSATZ_CHART",
    "AnsatzData",
    "SampleWindow",
    "SolutionError",
    "Recipe",
    "vacuum_residuals",
    "residual_table",
    "g_block_residual",
    "solve_g_block",
    "h5_from_h4",
    "h4_from_h5",
    "abc_coefficients",
    "w_fields",
    "n_coefficient",
    "n_fields",
    "conformal_fields",
    "build_solution",
    "perturbed",
    "KahlerExample",
    "kahler_example",
]

ANSATZ_CHART = Chart(3, 2, ("x1", "x2", "x3", "v", "y5"))
X1, X2, X3, V, Y5 = range(5)


class SolutionError(Exception):
    """A generator stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


def _const(c: float, chart: Chart = ANSATZ_CHART) -> ScalarField:
    return ScalarField.const(chart, float(c))


def _coord(name: str, chart: Chart = ANSATZ_CHART) -> ScalarField:
    return ScalarField.coord(chart, name)


def _vanishes(f: ScalarField) -> bool:
    """Structural zero test (after the simplifying constructors)."""
    return f.is_const and f.body.value == 0.0


@dataclass
class AnsatzData:
    varpi: ScalarField
    g1sign: int
    g2: ScalarField
    g3: ScalarField
    h4: ScalarField
    h5: ScalarField
    w: tuple
    n: tuple
    zeta: tuple
    chart: Chart = ANSATZ_CHART

    def __post_init__(self):
        if self.g1sign not in (1, -1):
            raise ValueError("g1sign must be +1 or -1")
        for name in ("w", "n", "zeta"):
            t = tuple(getattr(self, name))
            if len(t) != 3:
                raise ValueError(f"{name} needs three components")
            setattr(self, name, t)

    @classmethod
    def constant(cls, g2=1.0, g3=1.0, h4=1.0, h5=1.0) -> "AnsatzData":
        z = (_const(0.0),) * 3
        return cls(_const(1.0), 1, _const(g2), _const(g3), _const(h4), _const(h5), z, z, z)

    def dmetric(self) -> DMetric:
        vp = self.varpi
        g = [[vp * self.g1sign, _const(0.0), _const(0.0)], [_const(0.0), vp * self.g2, _const(0.0)], [_const(0.0), _const(0.0), vp * self.g3]]
        h = [[vp * self.h4, _const(0.0)], [_const(0.0), vp * self.h5]]
        N = NConnection(self.chart, [list(self.w), list(self.n)])
        return DMetric(self.chart, g, h, N)

    def fields(self) -> dict:
        out = {"varpi": self.varpi, "g2": self.g2, "g3": self.g3, "h4": self.h4, "h5": self.h5}
        for i in range(3):
            out[f"w{i + 1}"] = self.w[i]
            out[f"n{i + 1}"] = self.n[i]
            out[f"zeta{i + 1}"] = self.zeta[i]
        return out


@dataclass
class SampleWindow:
    """Tensor grid over the chart with exclusion margins around singular loci.

    ``ranges[name] = (lo, hi, count)``; coordinates absent from ``ranges`` are
    held at ``fixed[name]`` (default 0). ``exclusions`` pairs a field with a
    margin: points where ``|field| < margin`` are dropped.
    """

    ranges: dict
    fixed: dict = field(default_factory=dict)
    exclusions: list = field(default_factory=list)
    chart: Chart = ANSATZ_CHART

    def __post_init__(self):
        for name, (lo, hi, count) in self.ranges.items():
            self.chart.index(name)
            if not lo < hi:
                raise ValueError(f"window for {name}: need lo < hi")
            if int(count) < 2:
                raise ValueError(f"window for {name}: need at least 2 samples")

    def lower(self, name: str) -> float:
        if name in self.ranges:
            return float(self.ranges[name][0])
        return float(self.fixed.get(name, 0.0))

    def axes(self) -> list:
        out = []
        for name in self.chart.names:
            if name in self.ranges:
                lo, hi, count = self.ranges[name]
                out.append(np.linspace(float(lo), float(hi), int(count)))
            else:
                out.append(np.array([float(self.fixed.get(name, 0.0))]))
        return out

    def points(self) -> np.ndarray:
        axes = self.axes()
        pts = np.array(list(itertools.product(*axes)), dtype=float)
        keep = np.ones(len(pts), dtype=bool)
        for f, margin in self.exclusions:
            vals = np.abs(np.asarray(f(pts), dtype=float))
            keep &= vals >= margin
        return pts[keep]

    def with_exclusions(self, items) -> "SampleWindow":
        return replace(self, exclusions=list(self.exclusions) + list(items))


def default_window(counts: int = 6, v=(1.0, 3.0)) -> SampleWindow:
    return SampleWindow(
        {"x1": (-1.0, 1.0, counts), "x2": (-1.0, 1.0, counts), "x3": (-1.0, 1.0, counts), "v": (v[0], v[1], counts)},
        fixed={"y5": 0.0},
        exclusions=[(_coord("v"), 0.5)],
    )


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------


def g_block_residual(g2: ScalarField, g3: ScalarField) -> ScalarField:
    t1 = g3.partial(X2, X2) - g2.partial(X2) * g3.partial(X2) / (g2 * 2.0) - g3.partial(X2) * g3.partial(X2) / (g3 * 2.0)
    t2 = g2.partial(X3, X3) - g2.partial(X3) * g3.partial(X3) / (g3 * 2.0) - g2.partial(X3) * g2.partial(X3) / (g2 * 2.0)
    return t1 + t2


def _log_root(h4: ScalarField, h5: ScalarField) -> ScalarField:
    return (h4 * h5).apply("abs").apply("ln") * 0.5


def _symbolic_abc(h4: ScalarField, h5: ScalarField):
    lr = _log_root(h4, h5)
    h5v = h5.partial(V)
    alpha = [h5v.partial(i) - h5v * lr.partial(i) for i in (X1, X2, X3)]
    beta = h5.partial(V, V) - h5v * lr.partial(V)
    gamma = h5v * 1.5 / h5 - h4.partial(V) / h4
    return alpha, beta, gamma


def n_coefficient(h4: ScalarField, h5: ScalarField, verbatim: bool = False) -> ScalarField:
    """Damping coefficient of the n equation.

    The R_ai block of the canonical d-connection vanishes for
    n** + (3 h5*/(2 h5) - h4*/(2 h4)) n* = 0. ``verbatim=True`` returns the
    abc value 3 h5*/(2 h5) - h4*/h4, which agrees only when h4* = 0.
    """
    if verbatim:
        return _symbolic_abc(h4, h5)[2]
    return h5.partial(V) * 1.5 / h5 - h4.partial(V) / h4 * 0.5


def abc_coefficients(h4: ScalarField, h5: ScalarField, p):
    """(alpha_i, beta, gamma) at a point (alpha shape (3,)) or batch ((P, 3), (P,), (P,))."""
    alpha, beta, gamma = _symbolic_abc(h4, h5)
    pts, single = as_batch(p)
    A = np.stack([np.broadcast_to(a(pts), (len(pts),)) for a in alpha], axis=-1)
    B = np.asarray(beta(pts))
    C = np.asarray(gamma(pts))
    return (A[0], float(B[0]), float(C[0])) if single else (A, B, C)


def _delta(a: AnsatzData, i: int, f: ScalarField) -> ScalarField:
    return f.partial(i) - (a.w[i] + a.zeta[i]) * f.partial(V) + a.n[i] * f.partial(Y5)


def residual_fields(a: AnsatzData, verbatim: bool = False) -> dict:
    """Symbolic residual fields keyed by a descriptive name.

    The n equation uses gamma_n of the metric's vertical blocks varpi h4 and
    varpi h5; ``verbatim`` selects the abc gamma of h4, h5 instead (see
    n_coefficient).
    """
    alpha, beta, _ = _symbolic_abc(a.h4, a.h5)
    if verbatim:
        gamma = n_coefficient(a.h4, a.h5, True)
    else:
        gamma = n_coefficient(a.varpi * a.h4, a.varpi * a.h5)
    out = {"r1": g_block_residual(a.g2, a.g3), "r2": beta}
    for i in range(3):
        out[f"r3_{i + 1}"] = a.w[i] * beta + alpha[i]
    for i in range(3):
        out[f"r4_{i + 1}"] = a.n[i].partial(V, V) + gamma * a.n[i].partial(V)
    for i in range(3):
        out[f"c_h4_{i + 1}"] = _delta(a, i, a.h4)
        out[f"c_varpi_{i + 1}"] = _delta(a, i, a.varpi)
    return out


RESIDUAL_ORDER = ["r1", "r2", "r3_1", "r3_2", "r3_3", "r4_1", "r4_2", "r4_3", "c_h4_1", "c_varpi_1", "c_h4_2", "c_varpi_2", "c_h4_3", "c_varpi_3"]


def vacuum_residuals(a: AnsatzData, p, verbatim: bool = False) -> np.ndarray:
    """(r1, r2, r3_1..3, r4_1..3, c_1..3 as (h4, varpi) pairs) at a point (14,) or batch (P, 14)."""
    pts, single = as_batch(p)
    fields = residual_fields(a, verbatim)
    out = np.stack([np.broadcast_to(fields[k](pts), (len(pts),)) for k in RESIDUAL_ORDER], axis=-1)
    return out[0] if single else out


def residual_table(a: AnsatzData, pts: np.ndarray, verbatim: bool = False) -> dict:
    """Per-residual arrays over the points."""
    r = vacuum_residuals(a, pts, verbatim)
    return {k: r[:, j] for j, k in enumerate(RESIDUAL_ORDER)}


# ---------------------------------------------------------------------------
# generator stages
# ---------------------------------------------------------------------------


def solve_g_block(family: str, **params) -> tuple:
    """(g2, g3) for the horizontal 2D block.

    * ``A``: g2 = g3 = g0 exp(a2 x2 + a3 x3)
    * ``B``: g2 = g2(x2) given, g3 = (c1 + c2 int sqrt|g2| dx2)^2 (exact integral of
      the x3-independent reduction), base point ``lower``
    * ``C``: g2(x3), g3(x2) passed through; the residual is left to the caller
    """
    family = family.upper()
    if family == "A":
        g0, a2, a3 = (float(params.get(k, d)) for k, d in (("g0", 1.0), ("a2", 0.0), ("a3", 0.0)))
        if g0 == 0.0:
            raise SolutionError("g-block", "g0 = 0 makes the block vanish")
        g = (_coord("x2") * a2 + _coord("x3") * a3).apply("exp") * g0
        return g, g
    if family == "B":
        g2 = params["g2"]
        if g2.depends_on("x3") or g2.depends_on("x1") or g2.depends_on("v") or g2.depends_on("y5"):
            raise SolutionError("g-block", "family B needs g2 depending on x2 only")
        c1, c2 = float(params.get("c1", 1.0)), float(params.get("c2", 0.0))
        lower = float(params.get("lower", 0.0))
        panels = int(params.get("panels", DEFAULT_PANELS))
        root = g2.apply("abs").apply("sqrt").integrate("x2", lower, panels)
        u = root * c2 + c1
        return g2, u * u
    if family == "C":
        g2, g3 = params["g2"], params["g3"]
        if any(g2.depends_on(c) for c in ("x1", "x2", "v", "y5")):
            raise SolutionError("g-block", "family C needs g2 depending on x3 only")
        if any(g3.depends_on(c) for c in ("x1", "x3", "v", "y5")):
            raise SolutionError("g-block", "family C needs g3 depending on x2 only")
        return g2, g3
    raise SolutionError("g-block", f"unknown family {family!r}")


def h5_from_h4(h4: ScalarField, s1: ScalarField, s2: ScalarField, window: SampleWindow, panels: int = DEFAULT_PANELS) -> ScalarField:
    """sqrt|h5| = s1 + s2 int sqrt|h4| dv (or s1 + s2 v when h4 does not depend on v)."""
    pts = window.points()
    vals = np.asarray(h4(pts)) * np.ones(len(pts))
    if vals.min() * vals.max() <= 0:
        raise SolutionError("h5 from h4", "h4 changes sign or vanishes on the window")
    if not h4.depends_on("v"):
        root = s1 + s2 * _coord("v")
    else:
        root = s1 + s2 * h4.apply("abs").apply("sqrt").integrate("v", window.lower("v"), panels)
    return root * root


def h4_from_h5(h5: ScalarField, h0: ScalarField, window: SampleWindow | None = None) -> ScalarField:
    """h4 = h0^2 ((sqrt|h5|)*)^2."""
    h5v = h5.partial(V)
    if _vanishes(h5v):
        raise SolutionError("h4 from h5", "h5* = 0")
    if window is not None:
        vals = np.asarray(h5v(window.points()))
        if np.any(vals == 0.0):
            raise SolutionError("h4 from h5", "h5* = 0 on the window")
    root_v = h5.apply("abs").apply("sqrt").partial(V)
    return h0 * h0 * root_v * root_v


def w_fields(h4: ScalarField, h5: ScalarField, mode: str = "free", w=None, window: SampleWindow | None = None, tol: float = 1e-6) -> tuple:
    """w_i for the h-pair.

    ``free``: the supplied fields, after checking alpha = beta = 0 on the window.
    ``algebraic``: w_k = -d_k X / d_v X with X = ln(sqrt|h4 h5| / |h5*|), the
    solution of w beta + alpha = 0 when beta != 0.
    """
    alpha, beta, _ = _symbolic_abc(h4, h5)
    if mode == "free":
        if w is None:
            w = (_const(0.0),) * 3
        if window is not None:
            pts = window.points()
            worst = max(float(np.max(np.abs(f(pts)))) for f in [beta] + alpha)
            if worst > tol:
                raise SolutionError("w", f"free w needs alpha = beta = 0, found {worst:.3e}")
        return tuple(w)
    if mode == "algebraic":
        if _vanishes(beta):
            raise SolutionError("w", "beta = 0: degenerate branch, w is free")
        if window is not None:
            b = np.asarray(beta(window.points()))
            if np.min(np.abs(b)) <= tol:
                raise SolutionError("w", "beta = 0 on the window: degenerate branch, w is free")
        X = _log_root(h4, h5) - h5.partial(V).apply("abs").apply("ln")
        return tuple(-X.partial(i) / X.partial(V) for i in (X1, X2, X3))
    raise SolutionError("w", f"unknown mode {mode!r}")


def n_fields(
    h4: ScalarField,
    h5: ScalarField,
    seeds: Sequence,
    window: SampleWindow,
    panels: int = DEFAULT_PANELS,
    verbatim: bool = False,
) -> tuple:
    """n_k = n_k1 + n_k2 int K dv with K = exp(-int gamma_n dv).

    K = sqrt|h4| / |h5|^(3/2) when h5* != 0 and sqrt|h4| when h5* = 0; with
    h4* = 0 this is |h5|^(-3/2) up to a constant. ``verbatim=True`` uses the
    abc kernels h4 / |h5|^(3/2) and h4, which leave R_ai nonzero when h4* != 0.
    ``seeds`` is three (n_k1, n_k2) pairs of fields.
    """
    if len(seeds) != 3:
        raise SolutionError("n", "three seed pairs needed")
    root = h4 if verbatim else h4.apply("abs").apply("sqrt")
    if _vanishes(h5.partial(V)):
        kernel = root
    else:
        kernel = root / h5.apply("abs") ** 1.5
    lower = window.lower("v")
    out = []
    for s1, s2 in seeds:
        if _vanishes(s2):
            out.append(s1)
        else:
            out.append(s1 + s2 * kernel.integrate("v", lower, panels))
    return tuple(out)


def conformal_fields(varpi: ScalarField, w: Sequence, vacuum: bool = True):
    """zeta_i and the conformal residuals d_i varpi - (w_i + zeta_i) varpi*."""
    vv = varpi.partial(V)
    if _vanishes(vv):
        if any(not _vanishes(varpi.partial(i)) for i in (X1, X2, X3)):
            raise SolutionError("conformal", "varpi* = 0 with varpi depending on x")
        zeta = (_const(0.0),) * 3
    elif vacuum:
        zeta = tuple(varpi.partial(i) / vv for i in (X1, X2, X3))
    else:
        zeta = tuple(-w[i] + varpi.partial(i) / vv for i in range(3))
    res = tuple(varpi.partial(i) - (w[i] + zeta[i]) * vv for i in range(3))
    return zeta, res


# ---------------------------------------------------------------------------
# recipes
# ---------------------------------------------------------------------------


@dataclass
class Recipe:
    """Inputs of the constructive generator (all fields on the ansatz chart)."""

    family: str = "A"
    g_params: dict = field(default_factory=lambda: {"g0": 1.0, "a2": 0.0, "a3": 0.0})
    g1sign: int = 1
    h_branch: str = "p1"
    h5: ScalarField | None = None
    h0: ScalarField | None = None
    h4: ScalarField | None = None
    h5_seeds: tuple | None = None
    w_mode: str = "free"
    w: tuple | None = None
    n_seeds: tuple | None = None
    varpi: ScalarField | None = None
    q: tuple | None = None
    vacuum: bool = True
    perturb: float = 0.0
    tol: float = 1e-6
    panels: int = DEFAULT_PANELS


def _max_abs(f: ScalarField, pts: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(f(pts)) * np.ones(len(pts)))))


def _stage_check(stage: str, fields: dict, pts: np.ndarray, tol: float):
    for name, f in fields.items():
        try:
            r = _max_abs(f, pts)
        except DomainError as err:
            raise SolutionError(stage, f"{name}: {err}") from None
        if not r <= tol:
            raise SolutionError(stage, f"{name} residual {r:.3e} exceeds {tol:.1e}")


def build_solution(recipe: Recipe, window: SampleWindow, check: bool = True) -> AnsatzData:
    """Run the generator stages; each stage's residual is checked on the window."""
    tol = recipe.tol
    pts = window.points()
    if len(pts) == 0:
        raise SolutionError("window", "no sample points left after exclusions")

    g2, g3 = solve_g_block(recipe.family, panels=recipe.panels, **recipe.g_params)
    if check:
        _stage_check("g-block", {"r1": g_block_residual(g2, g3)}, pts, tol)

    if recipe.h_branch == "p1":
        if recipe.h5 is None:
            raise SolutionError("h-pair", "branch p1 needs h5")
        h5 = recipe.h5
        h4 = h4_from_h5(h5, recipe.h0 if recipe.h0 is not None else _const(1.0), window)
    elif recipe.h_branch == "p2":
        if recipe.h4 is None:
            raise SolutionError("h-pair", "branch p2 needs h4")
        h4 = recipe.h4
        s1, s2 = recipe.h5_seeds if recipe.h5_seeds is not None else (_const(1.0), _const(1.0))
        h5 = h5_from_h4(h4, s1, s2, window, recipe.panels)
    else:
        raise SolutionError("h-pair", f"unknown branch {recipe.h_branch!r}")
    for name, f in (("h4", h4), ("h5", h5)):
        vals = np.asarray(f(pts)) * np.ones(len(pts))
        if vals.min() * vals.max() <= 0:
            raise SolutionError("h-pair", f"{name} is not of constant sign on the window")
    if check:
        _, beta, _ = _symbolic_abc(h4, h5)
        _stage_check("h-pair", {"r2": beta}, pts, tol)

    w = w_fields(h4, h5, recipe.w_mode, recipe.w, window if check else None, tol)

    if recipe.q is not None:
        q1, q2 = recipe.q
        if q1 == 0 or q2 == 0:
            raise SolutionError("conformal", "q1, q2 must be nonzero integers")
        varpi = h4 ** (float(q2) / float(q1))
    else:
        varpi = recipe.varpi if recipe.varpi is not None else _const(1.0)
    zeta, _ = conformal_fields(varpi, w, recipe.vacuum)
    # the n equation sees the vertical blocks of the metric, varpi h4 and varpi h5
    seeds = recipe.n_seeds if recipe.n_seeds is not None else ((_const(0.0), _const(0.0)),) * 3
    n = n_fields(varpi * h4, varpi * h5, seeds, window, recipe.panels)
    data = AnsatzData(varpi, recipe.g1sign, g2, g3, h4, h5, w, n, zeta)
    if check:
        f = residual_fields(data)
        _stage_check("w", {k: f[k] for k in ("r3_1", "r3_2", "r3_3")}, pts, tol)
        _stage_check("n", {k: f[k] for k in ("r4_1", "r4_2", "r4_3")}, pts, tol)
        _stage_check("conformal", {k: f[k] for k in f if k.startswith("c_")}, pts, tol)
    if recipe.perturb:
        data = perturbed(data, recipe.perturb)
    return data


def perturbed(a: AnsatzData, eps: float = 0.1) -> AnsatzData:
    """Replace h5 by h5 (1 + eps v); used to show the checks are not vacuous."""
    return replace(a, h5=a.h5 * (_coord("v") * eps + 1.0))


# ---------------------------------------------------------------------------
# the 4D almost Kahler example
# ---------------------------------------------------------------------------

KAHLER_CHART = Chart(2, 2, ("x2", "x3", "v", "y5"))


@dataclass
class KahlerExample:
    """Fields of the 4D example on (x2, x3, v, y5).

    The horizontal block is diag(varpi g, 0), so the metric is degenerate and
    only the algebraic checks (F^2 = -I, theta antisymmetry) apply.
    """

    a: float
    g: ScalarField
    h4: ScalarField
    varpi: ScalarField
    theta_coeff: ScalarField
    scale: ScalarField  # s = sqrt|g v^2| / a
    chart: Chart = KAHLER_CHART

    def ode_residual(self, p) -> np.ndarray:
        g = self.g
        r = g * g.partial(1, 1) * 2.0 - g.partial(1) * g.partial(1)
        return r(p)

    def F_matrix(self, p) -> np.ndarray:
        """F[mu, alpha] in the frame (e2, e3, e4, e5): F e2 = s e4, F e3 = s e5, F e4 = -e2/s, F e5 = -e3/s."""
        pts, single = as_batch(p)
        s = np.asarray(self.scale(pts)) * np.ones(len(pts))
        F = np.zeros((len(pts), 4, 4))
        F[:, 2, 0] = s
        F[:, 3, 1] = s
        F[:, 0, 2] = -1.0 / s
        F[:, 1, 3] = -1.0 / s
        return F[0] if single else F

    def theta_matrix(self, p) -> np.ndarray:
        """theta[alpha, beta] of c dy4 ^ dx2 in the frame (e2, e3, e4, e5)."""
        pts, single = as_batch(p)
        c = np.asarray(self.theta_coeff(pts)) * np.ones(len(pts))
        T = np.zeros((len(pts), 4, 4))
        T[:, 2, 0] = c
        T[:, 0, 2] = -c
        return T[0] if single else T

    def checks(self, p) -> dict:
        pts, _ = as_batch(p)
        F = self.F_matrix(pts)
        T = self.theta_matrix(pts)
        FF = np.einsum("pab,pbc->pac", F, F) + np.eye(4)
        return {
            "ode": np.abs(np.asarray(self.ode_residual(pts)) * np.ones(len(pts))),
            "F_squared": np.abs(FF).reshape(len(pts), -1).max(axis=1),
            "theta_antisymmetry": np.abs(T + np.swapaxes(T, 1, 2)).reshape(len(pts), -1).max(axis=1),
        }


def kahler_example(a: float = 1.0, g: ScalarField | None = None, q=(1, 1), h4_mode: str = "final") -> KahlerExample:
    """Build the example with h4 = a^2 g / |g v^2| ("final") or a^2 g / |g v| ("text")."""
    ch = KAHLER_CHART
    if a == 0:
        raise ValueError("a must be nonzero")
    if g is None:
        g = ScalarField.coord(ch, "x3") ** 2
    if any(g.depends_on(c) for c in ("x2", "v", "y5")):
        raise ValueError("g must depend on x3 only")
    v = ScalarField.coord(ch, "v")
    if h4_mode == "final":
        den = (g * v * v).apply("abs")
    elif h4_mode == "text":
        den = (g * v).apply("abs")
    else:
        raise ValueError("h4_mode is 'final' or 'text'")
    h4 = g * (a * a) / den
    q1, q2 = q
    varpi = h4 ** (float(q2) / float(q1))
    root = (g * v * v).apply("abs").apply("sqrt")
    theta_coeff = varpi * g * a / root
    return KahlerExample(float(a), g, h4, varpi, theta_coeff, root / a)
