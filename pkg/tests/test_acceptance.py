"""The eight acceptance criteria, each at its stated tolerance and runtime limit.

Every test prints one PASS/FAIL line (collected again in the pytest terminal
summary) and then asserts.
"""

import io
import time
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np

from nholo.cli import main
from nholo.dconn import (
    DMetric,
    almost_complex_matrix,
    canonical_dconnection,
    commutator_curvature,
    compat_residuals,
    d_curvature,
    d_torsion,
    geometry,
    levi_civita_and_deformation,
    ricci_scalar_einstein,
    symplectic_components,
)
from nholo.lagrange import almost_complex_apply, sasaki_inner, sasaki_metric
from nholo.nconn import DVector, NConnection
from nholo.numerics import jet_eval
from nholo.sampling import SplitMix64, random_expression, random_expression_text
from nholo.scene import load_scene
from nholo.solutions import build_solution, kahler_example, perturbed, residual_table
from nholo.expr import parse

from conftest import CHART22, LAGRANGIANS, generic_metric, make_lagrangian, sample

SCENES = Path(__file__).resolve().parent.parent / "scenes"
GOLDEN = sorted(SCENES.glob("*.scene"))


def _pmax(x):
    x = np.abs(np.asarray(x))
    return x.reshape(x.shape[0], -1).max(axis=1)


def test_almost_kahler_suite(record):
    t0 = time.perf_counter()
    worst = {"F2": 0.0, "anti": 0.0, "gFXY": 0.0, "Dtheta": 0.0, "Dg": 0.0}
    F = almost_complex_matrix(2)
    worst["F2"] = float(np.abs(F @ F + np.eye(4)).max())
    basis = [DVector.from_array(np.eye(4)[k], 2) for k in range(4)]
    for k, name in enumerate(sorted(LAGRANGIANS)):
        lag = make_lagrangian(name)
        dm = sasaki_metric(lag)
        pts = sample(100, seed=100 + k)
        geo = geometry(dm, pts, 0)
        theta = symplectic_components(geo.G).val
        g = geo.g.val
        direct = np.array(
            [[[sasaki_inner(g[p], almost_complex_apply(basis[a]), basis[b]) for b in range(4)] for a in range(4)] for p in range(100)]
        )
        scale = np.maximum(1.0, _pmax(theta))
        worst["anti"] = max(worst["anti"], float((_pmax(theta + np.swapaxes(theta, 1, 2)) / scale).max()))
        worst["gFXY"] = max(worst["gFXY"], float((_pmax(theta - direct) / scale).max()))
        Dg, Dth, _, _ = compat_residuals(canonical_dconnection(dm), dm, pts)
        worst["Dg"] = max(worst["Dg"], Dg)
        worst["Dtheta"] = max(worst["Dtheta"], Dth)
    dt = time.perf_counter() - t0
    ok = (
        worst["F2"] == 0.0
        and worst["anti"] <= 1e-9
        and worst["gFXY"] <= 1e-9
        and worst["Dtheta"] <= 1e-8
        and worst["Dg"] <= 1e-8
        and dt < 10
    )
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", {dt:.2f}s"
    record(1, "almost Kaehler suite", ok, detail)
    assert ok


def _fixtures():
    out = {name: sasaki_metric(make_lagrangian(name)) for name in LAGRANGIANS}
    out["generic"] = generic_metric()
    return out


def test_canonical_contract(record):
    t0 = time.perf_counter()
    worst = 0.0
    for k, (name, dm) in enumerate(sorted(_fixtures().items())):
        pts = sample(100, seed=200 + k)
        dc = canonical_dconnection(dm)
        Dg, _, _, _ = compat_residuals(dc, dm, pts)
        tor = d_torsion(dc, dm.Ncon, pts)
        worst = max(worst, Dg, float(np.abs(tor["T^i_jk"]).max()), float(np.abs(tor["T^a_bc"]).max()))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 10
    record(2, "canonical d-connection contract", ok, f"max residual {worst:.1e}, {dt:.2f}s")
    assert ok


def _random_metric(rng: SplitMix64) -> DMetric:
    """Positive definite blocks and a y-dependent N-connection built from random smooth terms."""
    def term(scale):
        return parse(f"{scale}*({random_expression_text(rng, CHART22, 2)})", CHART22).apply("sin")

    def block():
        a, b, c = term(0.4), term(0.3), term(0.4)
        return [[a + 2.0, b], [b, c + 2.0]]

    N = NConnection(CHART22, [[term(0.5) for _ in range(2)] for _ in range(2)])
    return DMetric(CHART22, block(), block(), N)


def test_curvature_oracle(record):
    t0 = time.perf_counter()
    rng = SplitMix64(300)
    worst = 0.0
    draws = 20
    for _ in range(draws):
        dm = _random_metric(rng)
        Z = [random_expression(rng, CHART22, 2) for _ in range(4)]
        pts = np.array([[rng.uniform(-1, 1) for _ in range(4)] for _ in range(3)])
        dc = canonical_dconnection(dm)
        R = d_curvature(dc, dm, pts)["full"]
        comm = commutator_curvature(dc, dm, Z, pts)
        Zv = np.stack([np.asarray(z(pts)) * np.ones(len(pts)) for z in Z], axis=-1)
        RZ = np.einsum("pgbde,pb->pgde", R, Zv)
        rel = _pmax(RZ - comm) / np.maximum(1.0, _pmax(comm))
        worst = max(worst, float(rel.max()))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-7 and dt < 30
    record(3, "curvature oracle equivalence", ok, f"{draws} draws x 3 points, max relative {worst:.1e}, {dt:.2f}s")
    assert ok


def test_deformation_identity(record):
    t0 = time.perf_counter()
    worst = 0.0
    for k, name in enumerate(sorted(LAGRANGIANS)):
        out = levi_civita_and_deformation(sasaki_metric(make_lagrangian(name)), sample(100, seed=400 + k))
        worst = max(worst, out["residual"])
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and dt < 30
    record(4, "deformation identity", ok, f"max residual {worst:.1e}, {dt:.2f}s")
    assert ok


def test_solution_generator(record):
    t0 = time.perf_counter()
    scene = load_scene(SCENES / "vacuum_family_a.scene")
    window = scene.window.sample_window(scene.chart)
    pts = window.points()
    data = build_solution(scene.recipe, window)
    res = max(float(np.abs(v).max()) for v in residual_table(data, pts).values())
    dm = data.dmetric()
    ric, _, _ = ricci_scalar_einstein(canonical_dconnection(dm), dm, pts)
    ricci = float(np.abs(ric["full"]).max())
    bad = perturbed(data, 0.1)
    bad_res = max(float(np.abs(v).max()) for v in residual_table(bad, pts).values())
    dt = time.perf_counter() - t0
    ok = len(pts) == 6**4 and res <= 1e-6 and ricci <= 1e-6 and bad_res >= 1e-3 and dt < 60
    detail = f"{len(pts)} points, residual {res:.1e}, Ricci {ricci:.1e}, perturbed residual {bad_res:.2e}, {dt:.2f}s"
    record(5, "solution generator end to end", ok, detail)
    assert ok


def test_kahler_example(record):
    t0 = time.perf_counter()
    ex = kahler_example()
    rng = SplitMix64(600)
    lows, highs = [-1.0, 0.5, 1.0, -1.0], [1.0, 2.0, 3.0, 1.0]
    pts = np.array([[rng.uniform(lo, hi) for lo, hi in zip(lows, highs)] for _ in range(100)])
    c = ex.checks(pts)
    ode, f2, anti = (float(c[k].max()) for k in ("ode", "F_squared", "theta_antisymmetry"))
    dt = time.perf_counter() - t0
    ok = ode <= 1e-12 and f2 <= 1e-10 and anti <= 1e-12 and dt < 5
    record(6, "almost Kaehler example", ok, f"ode {ode:.1e}, F^2+I {f2:.1e}, theta antisymmetry {anti:.1e}, {dt:.2f}s")
    assert ok


def test_derivative_infrastructure(record):
    t0 = time.perf_counter()
    rng = SplitMix64(700)
    fd_worst = 0.0
    for _ in range(1000):
        f = random_expression(rng, CHART22, 3)
        p = np.array([rng.uniform(-1, 1) for _ in range(4)])
        k = rng.below(4)
        e = np.zeros(4)
        e[k] = 1e-5
        fd = (f(p + e) - f(p - e)) / 2e-5
        d = f.partial(k)(p)
        fd_worst = max(fd_worst, abs(d - fd) / max(1.0, abs(d)))
    jet_worst = 0.0
    for _ in range(200):
        a = random_expression_text(rng, CHART22, 2)
        b = random_expression_text(rng, CHART22, 2)
        p = np.array([rng.uniform(-1, 1) for _ in range(4)])
        A, B = jet_eval(parse(a, CHART22), p), jet_eval(parse(b, CHART22), p)
        pairs = [
            (A * B, f"({a})*({b})"),
            ((A * 0.5).sin() * B, f"sin(0.5*({a}))*({b})"),
            ((A * 0.3).exp(), f"exp(0.3*({a}))"),
        ]
        for J, src in pairs:
            ref = jet_eval(parse(src, CHART22), p)
            for x, y in ((J.val, ref.val), (J.grad_array(), ref.grad_array()), (J.hess_array(), ref.hess_array())):
                jet_worst = max(jet_worst, float(np.abs(x - y).max() / max(1.0, np.abs(y).max())))
    dt = time.perf_counter() - t0
    ok = fd_worst <= 1e-5 and jet_worst <= 1e-10 and dt < 10
    record(7, "derivative infrastructure", ok, f"central difference {fd_worst:.1e}, jet rules {jet_worst:.1e}, {dt:.2f}s")
    assert ok


def _verify(path, threads):
    buf = io.StringIO()
    with redirect_stdout(buf):
        main(["verify", str(path), "--threads", str(threads)])
    return buf.getvalue().encode()


def test_determinism(record):
    t0 = time.perf_counter()
    same = []
    for path in GOLDEN:
        a = _verify(path, 1)
        b = _verify(path, 1)
        c = _verify(path, 4)
        same.append(a == b == c and len(a) > 0)
    dt = time.perf_counter() - t0
    ok = all(same) and len(GOLDEN) >= 4
    record(8, "determinism", ok, f"{sum(same)}/{len(GOLDEN)} golden scenes byte-identical across runs and 1 vs 4 threads, {dt:.2f}s")
    assert ok
