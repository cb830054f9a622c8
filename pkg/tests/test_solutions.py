import numpy as np
import pytest
from dataclasses import replace

from nholo.dconn import canonical_dconnection, ricci_scalar_einstein
from nholo.expr import parse
from nholo.solutions import (
    ANSATZ_CHART,
    RESIDUAL_ORDER,
    AnsatzData,
    Recipe,
    SampleWindow,
    SolutionError,
    abc_coefficients,
    build_solution,
    conformal_fields,
    default_window,
    g_block_residual,
    h4_from_h5,
    h5_from_h4,
    kahler_example,
    n_coefficient,
    n_fields,
    perturbed,
    residual_table,
    solve_g_block,
    vacuum_residuals,
    w_fields,
)


def f(src):
    return parse(src, ANSATZ_CHART)


def window(counts=5, **ranges):
    base = {"x1": (-1.0, 1.0, counts), "x2": (-1.0, 1.0, counts), "x3": (-1.0, 1.0, counts), "v": (1.0, 3.0, counts)}
    base.update({k: (lo, hi, counts) for k, (lo, hi) in ranges.items()})
    return SampleWindow(base, fixed={"y5": 0.3})


W = window()
PTS = W.points()


def max_abs(field, pts=PTS):
    return float(np.max(np.abs(np.asarray(field(pts)) * np.ones(len(pts)))))


def vacuum_recipe(**kw):
    base = dict(
        family="A",
        g_params={"g0": 1.0, "a2": 1.0, "a3": 1.0},
        h_branch="p1",
        h5=f("v^2"),
        h0=f("1"),
        w=(f("0.3"), f("sin(x2)"), f("x3*v")),
        n_seeds=((f("0.1"), f("0.2")), (f("x1"), f("0.5*cos(x2)")), (f("0"), f("0"))),
    )
    base.update(kw)
    return Recipe(**base)


def test_window_validation_and_exclusions():
    with pytest.raises(ValueError):
        SampleWindow({"v": (1.0, 0.0, 3)})
    with pytest.raises(ValueError):
        SampleWindow({"v": (0.0, 1.0, 1)})
    wdw = SampleWindow({"v": (-1.0, 1.0, 5)}).with_exclusions([(f("v"), 0.5)])
    # |v| < 0.5 is dropped, the margin itself is kept
    assert wdw.points()[:, 3].tolist() == [-1.0, -0.5, 0.5, 1.0]
    assert len(default_window().points()) == 6**4


def test_constant_data_has_zero_residuals():
    a = AnsatzData.constant(2.0, 3.0, 0.5, -1.5)
    assert np.abs(vacuum_residuals(a, PTS)).max() == 0.0
    assert vacuum_residuals(a, PTS[0]).shape == (14,)
    assert list(residual_table(a, PTS)) == RESIDUAL_ORDER


def test_exponential_g_block_solves_first_equation():
    g = f("exp(1*x2 + 2*x3)")
    assert max_abs(g_block_residual(g, g)) <= 1e-10
    g2, g3 = solve_g_block("A", g0=1.0, a2=1.0, a3=2.0)
    assert max_abs(g_block_residual(g2, g3)) <= 1e-10
    g2, g3 = solve_g_block("A")
    assert max_abs(g_block_residual(g2, g3)) == 0.0


def test_family_b_integrates_the_reduced_equation():
    g2, g3 = solve_g_block("B", g2=f("1 + x2^2"), c1=1.0, c2=0.5, lower=-1.0, panels=512)
    assert max_abs(g_block_residual(g2, g3)) <= 1e-6
    with pytest.raises(SolutionError):
        solve_g_block("B", g2=f("1 + x3^2"))


def test_family_c_needs_each_function_to_solve_its_own_ode():
    # 2 g g'' - (g')^2 = 0 for g2 = x3^2, g3 = x2^2, away from the zeros
    pts = window(x2=(0.5, 1.5), x3=(0.5, 1.5)).points()
    g2, g3 = solve_g_block("C", g2=f("x3^2"), g3=f("x2^2"))
    assert max_abs(g_block_residual(g2, g3), pts) <= 1e-12
    g2, g3 = solve_g_block("C", g2=f("1 + x3^2"), g3=f("exp(x2)"))
    r = g_block_residual(g2, g3)(PTS)
    x2, x3 = PTS[:, 1], PTS[:, 2]
    assert np.abs(r - (np.exp(x2) / 2 + 2 / (1 + x3**2))).max() < 1e-12
    with pytest.raises(SolutionError):
        solve_g_block("C", g2=f("x2"), g3=f("x2"))


def test_second_equation_examples():
    alpha, beta, gamma = abc_coefficients(f("1"), f("v^2"), PTS)
    assert np.abs(beta).max() < 1e-14
    assert np.abs(alpha).max() == 0.0
    _, _, gamma = abc_coefficients(f("1"), f("v^2"), np.array([0, 0, 0, 2.0, 0]))
    assert gamma == 1.5


def test_beta_equals_second_residual():
    a = AnsatzData.constant()
    from dataclasses import replace

    a = replace(a, h4=f("1 + x1^2*v"), h5=f("exp(v)*(2 + x2)"))
    _, beta, _ = abc_coefficients(a.h4, a.h5, PTS)
    assert np.array_equal(beta, residual_table(a, PTS)["r2"])


def test_h4_from_h5():
    assert max_abs(h4_from_h5(f("v^2"), f("1")) - f("1")) < 1e-15
    h5 = f("exp(2*v)")
    h4 = h4_from_h5(h5, f("1"))
    assert max_abs(h4 - f("exp(2*v)")) <= 1e-12 * max_abs(h4)
    _, beta, _ = abc_coefficients(h4, h5, PTS)
    assert np.abs(beta).max() <= 1e-8 * max_abs(h5.partial(3, 3))
    with pytest.raises(SolutionError):
        h4_from_h5(f("2 + x1"), f("1"))


def test_h5_from_h4_branches():
    h5 = h5_from_h4(f("1"), f("0.5"), f("2"), W)
    assert max_abs(h5 - f("(0.5 + 2*v)^2")) < 1e-13
    assert np.abs(abc_coefficients(f("1"), h5, PTS)[1]).max() <= 1e-8
    h5 = h5_from_h4(f("v^2"), f("1"), f("0.5"), W)
    v = PTS[:, 3]
    assert np.abs(h5(PTS) - (1 + 0.5 * (v**2 / 2 - 0.5)) ** 2).max() < 1e-10
    _, beta, _ = abc_coefficients(f("v^2"), h5, PTS)
    assert np.abs(beta).max() <= 1e-6
    flat = h5_from_h4(f("1"), f("2"), f("0"), W)
    assert not flat.partial(3)(PTS).any()
    with pytest.raises(SolutionError):
        h5_from_h4(f("v - 2"), f("1"), f("1"), W)


def test_w_modes():
    h4, h5 = f("1"), f("v^2")
    w = (f("0.3"), f("sin(x2)"), f("x3*v"))
    assert w_fields(h4, h5, "free", w, W) == w
    with pytest.raises(SolutionError):
        w_fields(h4, h5, "algebraic", window=W)
    # x-independent pair with beta != 0: numerators vanish
    wa = w_fields(f("1"), f("v^3"), "algebraic", window=W)
    assert all(max_abs(x) == 0.0 for x in wa)
    with pytest.raises(SolutionError):
        w_fields(f("1"), f("v^3"), "free", w, W)


def test_algebraic_w_solves_third_equation():
    h4, h5 = f("1"), f("v^3*exp(x1)")
    w = w_fields(h4, h5, "algebraic", window=W)
    # hand solution: alpha_1 = 1.5 v^2 e^x1, beta = 1.5 v e^x1, so w_1 = -v
    assert max_abs(w[0] + f("v")) < 1e-12
    a = AnsatzData.constant()
    from dataclasses import replace

    a = replace(a, h4=h4, h5=h5, w=w)
    r = residual_table(a, PTS)
    assert max(np.abs(r[k]).max() for k in ("r3_1", "r3_2", "r3_3")) < 1e-12


def test_n_fields_branches():
    seeds = ((f("0.1"), f("0.2")), (f("1"), f("0")), (f("x1"), f("cos(x2)")))
    n = n_fields(f("1"), f("v^2"), seeds, W)
    v = PTS[:, 3]
    assert np.abs(n[0](PTS) - (0.1 + 0.2 * 0.5 * (1 - 1 / v**2))).max() < 1e-12
    assert max_abs(n[1] - f("1")) == 0.0
    gamma = 1.5 * 2 / v
    for k in range(3):
        r = n[k].partial(3, 3)(PTS) + gamma * n[k].partial(3)(PTS)
        assert np.abs(r).max() <= 1e-6
    affine = n_fields(f("1"), f("2 + x1"), seeds, W)
    assert np.abs(affine[0](PTS) - (0.1 + 0.2 * (v - 1.0))).max() < 1e-12
    with pytest.raises(SolutionError):
        n_fields(f("1"), f("v^2"), seeds[:2], W)


def test_conformal_examples():
    w = (f("0.1"), f("0.3"), f("0"))
    zeta, res = conformal_fields(f("1"), w)
    assert all(max_abs(z) == 0.0 for z in zeta) and all(max_abs(r) == 0.0 for r in res)
    zeta, res = conformal_fields(f("x2*v"), w)
    pts = window(x2=(0.5, 1.5)).points()
    x2, v = pts[:, 1], pts[:, 3]
    assert np.abs(zeta[1](pts) - v / x2).max() < 1e-14
    assert np.abs(res[1](pts) + 0.3 * x2).max() < 1e-14
    _, res = conformal_fields(f("x2*v"), w, vacuum=False)
    assert max(max_abs(r, pts) for r in res) < 1e-14
    with pytest.raises(SolutionError):
        conformal_fields(f("x1"), w)


def test_build_solution_end_to_end():
    a = build_solution(vacuum_recipe(), W)
    assert np.abs(vacuum_residuals(a, PTS)).max() <= 1e-6
    dm = a.dmetric()
    pts = PTS[::7]
    ric, _, _ = ricci_scalar_einstein(canonical_dconnection(dm), dm, pts)
    assert np.abs(ric["full"]).max() <= 1e-6


def test_constant_recipe_is_flat():
    a = build_solution(Recipe(h_branch="p2", h4=f("1"), h5_seeds=(f("1"), f("0"))), W)
    dm = a.dmetric()
    ric, scalar, _ = ricci_scalar_einstein(canonical_dconnection(dm), dm, PTS[:20])
    assert np.abs(ric["full"]).max() == 0.0


def test_conformal_recipe():
    a = build_solution(vacuum_recipe(h5=f("exp(v)*(2 + x2)"), w=None, q=(1, 1)), W)
    assert np.abs(vacuum_residuals(a, PTS)).max() <= 1e-6


def test_stage_errors_name_the_stage():
    with pytest.raises(SolutionError) as err:
        build_solution(vacuum_recipe(family="C", g_params={"g2": f("1 + x3^2"), "g3": f("exp(x2)")}), W)
    assert err.value.stage == "g-block"
    with pytest.raises(SolutionError) as err:
        build_solution(vacuum_recipe(h0=f("1 + x1^2")), W)
    assert err.value.stage == "w"


def test_perturbation_breaks_the_solution():
    a = perturbed(build_solution(vacuum_recipe(), W), 0.1)
    r = residual_table(a, PTS)
    assert np.abs(r["r2"]).max() >= 1e-2
    dm = a.dmetric()
    ric, _, _ = ricci_scalar_einstein(canonical_dconnection(dm), dm, PTS[::7])
    assert np.abs(ric["full"]).max() >= 1e-3


def test_kahler_example():
    ex = kahler_example()
    rng = np.random.default_rng(3)
    pts = np.column_stack([rng.uniform(-1, 1, 50), rng.uniform(0.5, 2, 50), rng.uniform(1, 3, 50), rng.uniform(-1, 1, 50)])
    c = ex.checks(pts)
    assert c["ode"].max() == 0.0
    assert c["F_squared"].max() <= 1e-10
    assert c["theta_antisymmetry"].max() == 0.0
    v = pts[:, 2]
    assert np.abs(ex.h4(pts) - 1 / v**2).max() < 1e-14
    text = kahler_example(h4_mode="text")
    assert np.abs(text.h4(pts) - 1 / v).max() < 1e-14
    with pytest.raises(ValueError):
        kahler_example(g=parse("x2", ex.chart))


@pytest.mark.parametrize(
    "h5, block, at_least",
    [("v^3 + v", "R_ab", 0.05), ("exp(v)*(2 + x2^2)", "R_ij", 0.5)],
)
def test_nonconstant_conformal_factor_is_not_sufficient_for_vacuum(h5, block, at_least):
    # all residuals vanish, yet the Ricci d-tensor of the assembled metric does not
    wdw = default_window(3)
    pts = wdw.points()
    a = build_solution(Recipe(family="A", h5=f(h5), h0=f("1"), q=(1, 1)), wdw)
    assert np.abs(vacuum_residuals(a, pts)).max() <= 1e-12
    dm = a.dmetric()
    ric, _, _ = ricci_scalar_einstein(canonical_dconnection(dm), dm, pts)
    assert np.abs(ric[block]).max() >= at_least


def test_exponential_conformal_factor_stays_ricci_flat():
    wdw = default_window(3)
    pts = wdw.points()
    a = build_solution(Recipe(family="A", h5=f("exp(2*v)"), h0=f("1"), q=(1, 1)), wdw)
    dm = a.dmetric()
    ric, _, _ = ricci_scalar_einstein(canonical_dconnection(dm), dm, pts)
    assert np.abs(ric["full"]).max() <= 1e-12


N_SEEDS = ((f("0.1"), f("0.3")), (f("x1"), f("0.5*cos(x2)")), (f("0"), f("0.2")))


@pytest.mark.parametrize("h5", ["exp(2*v)", "v^3 + v"])
def test_n_fields_keep_ricci_flat_when_h4_depends_on_v(h5):
    wdw = default_window(3)
    pts = wdw.points()
    a = build_solution(Recipe(family="A", h5=f(h5), h0=f("1"), w=None, n_seeds=N_SEEDS), wdw)
    assert max_abs(a.h4.partial(3)) > 0.1
    assert np.abs(vacuum_residuals(a, pts)).max() <= 1e-6
    dm = a.dmetric()
    ric, _, _ = ricci_scalar_einstein(canonical_dconnection(dm), dm, pts)
    assert np.abs(ric["full"]).max() <= 1e-9


def test_abc_gamma_in_the_n_equation_leaves_mixed_ricci():
    wdw = default_window(3)
    pts = wdw.points()
    h4, h5 = f("exp(2*v)"), f("exp(2*v)")
    n = n_fields(h4, h5, N_SEEDS, wdw, verbatim=True)
    a = replace(AnsatzData.constant(), h4=h4, h5=h5, n=n)
    assert np.abs(residual_table(a, pts, verbatim=True)["r4_1"]).max() <= 1e-6
    assert np.abs(residual_table(a, pts)["r4_1"]).max() >= 1e-2
    dm = a.dmetric()
    ric, _, _ = ricci_scalar_einstein(canonical_dconnection(dm), dm, pts)
    assert np.abs(ric["R_ai"]).max() >= 1e-2
    assert np.abs(ric["R_ij"]).max() <= 1e-12
    assert np.abs(ric["R_ab"]).max() <= 1e-12


def test_n_coefficient_matches_abc_gamma_when_h4_is_constant():
    h5 = f("v^3 + x1^2 + 1")
    pts = default_window(3).points()
    corrected = n_coefficient(f("2"), h5)(pts)
    assert np.abs(corrected - abc_coefficients(f("2"), h5, pts)[2]).max() == 0.0


def test_n_fields_follow_the_conformal_vertical_blocks():
    wdw = default_window(3)
    pts = wdw.points()
    a = build_solution(Recipe(family="A", h5=f("exp(2*v)"), h0=f("1"), q=(1, 1), n_seeds=N_SEEDS), wdw)
    assert max_abs(a.varpi.partial(3)) > 0.1
    assert np.abs(vacuum_residuals(a, pts)).max() <= 1e-6
    dm = a.dmetric()
    ric, _, _ = ricci_scalar_einstein(canonical_dconnection(dm), dm, pts)
    assert np.abs(ric["full"]).max() <= 1e-9
