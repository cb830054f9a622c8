"""Compare the block curvature formulas with two oracles on random d-metrics.

For each draw: random positive-definite blocks and a y-dependent N-connection on
n = m = 2, then the deviation of the curvature blocks from (a) the curvature of
the assembled frame connection and (b) the covariant commutator on a random
vector field. Prints quantiles of the per-draw maxima.
"""

import argparse
import time

import numpy as np

from nholo.dconn import DMetric, canonical_dconnection, commutator_curvature, connection_curvature, d_curvature, geometry
from nholo.expr import Chart, parse
from nholo.nconn import NConnection
from nholo.sampling import SplitMix64, random_expression, random_expression_text, random_points


def random_metric(rng, chart, amp):
    def term(scale):
        return parse(f"{scale}*({random_expression_text(rng, chart, 2)})", chart).apply("sin")

    def block(k):
        rows = [[None] * k for _ in range(k)]
        for i in range(k):
            rows[i][i] = term(amp) + 2.0
            for j in range(i + 1, k):
                rows[i][j] = rows[j][i] = term(0.3 * amp)
        return rows

    N = NConnection(chart, [[term(amp) for _ in range(chart.n)] for _ in range(chart.m)])
    return DMetric(chart, block(chart.n), block(chart.m), N)


def per_point(x):
    x = np.abs(x)
    return x.reshape(len(x), -1).max(axis=1)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--draws", type=int, default=50)
    ap.add_argument("--points", type=int, default=4)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--amp", type=float, default=0.5, help="amplitude of the random terms")
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--m", type=int, default=2)
    args = ap.parse_args()

    chart = Chart.standard(args.n, args.m)
    rng = SplitMix64(args.seed)
    full_dev, comm_dev = [], []
    t0 = time.perf_counter()
    for _ in range(args.draws):
        dm = random_metric(rng, chart, args.amp)
        pts = random_points(rng, [-1.0] * chart.dim, [1.0] * chart.dim, args.points)
        dc = canonical_dconnection(dm)
        R = d_curvature(dc, dm, pts)["full"]
        geo = geometry(dm, pts, 2)
        Rc = connection_curvature(dc.full(pts, 1), geo.E.truncate(0), geo.W.truncate(0))
        full_dev.append(float((per_point(R - Rc) / np.maximum(1.0, per_point(Rc))).max()))
        Z = [random_expression(rng, chart, 2) for _ in range(chart.dim)]
        comm = commutator_curvature(dc, dm, Z, pts)
        Zv = np.stack([np.asarray(z(pts)) * np.ones(len(pts)) for z in Z], axis=-1)
        RZ = np.einsum("pgbde,pb->pgde", R, Zv)
        comm_dev.append(float((per_point(RZ - comm) / np.maximum(1.0, per_point(comm))).max()))
    dt = time.perf_counter() - t0

    print(f"n={args.n} m={args.m} draws={args.draws} points/draw={args.points} amp={args.amp} ({dt:.2f}s)")
    print(f"{'oracle':<24s} {'median':>10s} {'p90':>10s} {'max':>10s}")
    for name, dev in (("frame connection", full_dev), ("covariant commutator", comm_dev)):
        q = np.quantile(dev, [0.5, 0.9, 1.0])
        print(f"{name:<24s} {q[0]:10.2e} {q[1]:10.2e} {q[2]:10.2e}")


if __name__ == "__main__":
    main()
