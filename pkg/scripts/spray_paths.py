"""Spray paths against Euler-Lagrange paths for the fixture Lagrangians.

Integrates both systems with RK4 to unit time for a range of step sizes and
prints the largest trajectory deviation; the two systems agree to round-off
at every step size because they are the same equation.
"""

import argparse

from nholo.expr import Chart, parse
from nholo.lagrange import Lagrangian, euler_lagrange_check

LAGRANGIANS = {
    "flat": "y1^2 + y2^2",
    "conformal": "exp(2*x1)*(y1^2 + y2^2)",
    "offdiagonal": "(2 + x2^2)*y1^2 + 0.6*sin(x1)*y1*y2 + (1 + x1^2)*y2^2",
    "quartic": "y1^2 + y2^2 + 0.1*(y1^2 + y2^2)^2*(1 + x1^2)",
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--x0", type=float, nargs=2, default=[0.1, 0.2])
    ap.add_argument("--y0", type=float, nargs=2, default=[0.3, -0.2])
    ap.add_argument("--steps", type=int, nargs="*", default=[10, 100, 1000])
    args = ap.parse_args()

    chart = Chart.standard(2, 2)
    print(f"{'lagrangian':<12s} {'steps':>6s} {'max deviation':>14s}")
    for name, src in LAGRANGIANS.items():
        lag = Lagrangian(chart, parse(src, chart))
        for steps in args.steps:
            out = euler_lagrange_check(lag, args.x0, args.y0, steps=steps, h=1.0 / steps)
            print(f"{name:<12s} {steps:6d} {out.max_deviation:14.3e}")


if __name__ == "__main__":
    main()
