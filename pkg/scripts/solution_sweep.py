"""Sweep the vacuum generator over recipe parameters and perturbation sizes.

For each family-A exponent pair and h5 seed, build the solution on a grid
window, then report the largest vacuum residual and Ricci d-tensor component,
before and after replacing h5 by h5 (1 + eps v).
"""

import argparse
import time

import numpy as np

from nholo.dconn import canonical_dconnection, ricci_scalar_einstein
from nholo.expr import parse
from nholo.solutions import ANSATZ_CHART, Recipe, build_solution, default_window, perturbed, residual_table

# (h5, conformal exponents). With varpi = const the adapted derivatives of h4
# force w = 0 unless h4* = 0; varpi = h4 rows show that a non-constant
# conformal factor can satisfy every residual and still leave Ricci nonzero
H5_SEEDS = [("v^2", None), ("v^3 + v", None), ("exp(2*v)", None), ("exp(2*v)", (1, 1)), ("v^3 + v", (1, 1)), ("exp(v)*(2 + x2^2)", (1, 1))]
FREE_W = ("0.1", "0.3*sin(x2)", "0.1*x3*v")


def f(src):
    return parse(src, ANSATZ_CHART)


def measure(data, pts):
    res = max(float(np.abs(r).max()) for r in residual_table(data, pts).values())
    dm = data.dmetric()
    ric, _, _ = ricci_scalar_einstein(canonical_dconnection(dm), dm, pts)
    return res, float(np.abs(ric["full"]).max())


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--counts", type=int, default=4, help="grid points per coordinate")
    ap.add_argument("--eps", type=float, nargs="*", default=[0.0, 1e-3, 1e-2, 0.1])
    args = ap.parse_args()

    window = default_window(args.counts)
    pts = window.points()
    print(f"{len(pts)} window points")
    print(f"{'a2':>5s} {'a3':>5s} {'h5':<20s} {'varpi':<6s} {'eps':>7s} {'residual':>10s} {'ricci':>10s}")
    t0 = time.perf_counter()
    for a2, a3 in ((0.0, 0.0), (1.0, 1.0), (0.5, -2.0)):
        for h5, q in H5_SEEDS:
            recipe = Recipe(
                family="A",
                g_params={"g0": 1.0, "a2": a2, "a3": a3},
                h5=f(h5),
                h0=f("1"),
                q=q,
                w=tuple(f(x) for x in FREE_W) if h5 == "v^2" else None,
                n_seeds=((f("0.1"), f("0.5")), (f("x1"), f("0.2")), (f("0"), f("0"))),
            )
            base = build_solution(recipe, window)
            for eps in args.eps:
                data = perturbed(base, eps) if eps else base
                res, ric = measure(data, pts)
                print(f"{a2:5.1f} {a3:5.1f} {h5:<20s} {'h4' if q else '1':<6s} {eps:7.0e} {res:10.2e} {ric:10.2e}")
    print(f"({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
