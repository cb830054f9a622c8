"""Command-line front end: ``nholo geometrize|curvature|solve|verify <scene>``.

Exit codes: 0 all checks pass, 1 a check failed (or a point could not be
evaluated, or a generator stage aborted), 2 the scene could not be loaded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .checks import lagrangian_checks, metric_checks, solution_checks
from .dconn import canonical_dconnection, d_curvature, d_torsion, ricci_scalar_einstein
from .expr import ExprError
from .lagrange import sasaki_metric
from .numerics import SingularMatrixError
from .scene import Scene, SceneError, load_scene
from .solutions import SolutionError, build_solution

CHUNK = 64
POINT_ERRORS = (ExprError, SingularMatrixError, ArithmeticError, ValueError, np.linalg.LinAlgError)


# ---------------------------------------------------------------------------
# evaluation engine
# ---------------------------------------------------------------------------


def _run_chunk(run, names, pts):
    """Evaluate a chunk; on failure isolate the offending points one by one."""
    try:
        with np.errstate(all="ignore"):
            vals = run(pts)
        return {k: np.asarray(vals[k], dtype=float) for k in names}, []
    except POINT_ERRORS:
        pass
    out = {k: np.full(len(pts), np.nan) for k in names}
    errors = []
    for i, q in enumerate(pts):
        try:
            with np.errstate(all="ignore"):
                vals = run(q[None, :])
            for k in names:
                out[k][i] = float(np.asarray(vals[k])[0])
        except POINT_ERRORS as err:
            errors.append({"point": [float(x) for x in q], "message": str(err)})
    return out, errors


def evaluate(checks, run, pts: np.ndarray, threads: int = 1):
    names = [c.name for c in checks]
    chunks = [pts[i : i + CHUNK] for i in range(0, len(pts), CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _run_chunk(run, names, c), chunks))
    else:
        parts = [_run_chunk(run, names, c) for c in chunks]
    values = {k: np.concatenate([p[0][k] for p in parts]) if parts else np.zeros(0) for k in names}
    errors = [e for p in parts for e in p[1]]
    return values, errors


def _num(x: float):
    return None if not math.isfinite(x) else float(x)


def make_rows(checks, values: dict, pts: np.ndarray, tol: float) -> list:
    rows = []
    for c in checks:
        v = values[c.name]
        ok = np.isfinite(v)
        if ok.any():
            vv = v[ok]
            k = int(np.flatnonzero(ok)[int(np.argmax(vv))])
            mx = float(vv.max())
            mean = math.fsum(float(x) for x in vv) / len(vv)
            worst = [float(x) for x in pts[k]]
        else:
            mx, mean, worst = float("nan"), float("nan"), None
        rows.append(
            {
                "check": c.name,
                "equation": c.equation,
                "max": _num(mx),
                "mean": _num(mean),
                "worst_point": worst,
                "tol": tol,
                "pass": bool(ok.all() and len(v) > 0 and mx <= tol),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# tables and field dumps
# ---------------------------------------------------------------------------


def _table(pts: np.ndarray, arr: np.ndarray) -> dict:
    return {"points": np.asarray(pts).tolist(), "values": np.asarray(arr).tolist()}


def _lagrangian_fields(scene: Scene) -> dict:
    lag = scene.lagrangian
    n = lag.n
    out = {"L": lag.L.text()}
    for i in range(n):
        for j in range(i, n):
            out[f"g_{i + 1}_{j + 1}"] = lag.g[i][j].text()
        out[f"B_{i + 1}"] = lag.B[i].text()
    return out


def _lagrangian_tables(scene: Scene, pts: np.ndarray) -> dict:
    lag = scene.lagrangian
    if len(pts) == 0:
        return {}
    g, _ = lag.hessian_jets(pts, 0)
    return {
        "hessian_metric": _table(pts, g.val),
        "semispray": _table(pts, lag.semispray_jets(pts, 0).val),
        "n_connection": _table(pts, lag.nconnection_jets(pts, 0).val),
        "sasaki_h_block": _table(pts, g.val),
    }


def _curvature_tables(dm, pts: np.ndarray, jet_order: int) -> dict:
    if len(pts) == 0:
        return {}
    dc = canonical_dconnection(dm)
    out = {"connection": _table(pts, dc.full(pts, 0).val), "torsion": _table(pts, d_torsion(dc, dm.Ncon, pts)["full"])}
    if jet_order >= 2:
        out["curvature"] = _table(pts, d_curvature(dc, dm, pts)["full"])
        ric, scal, ein = ricci_scalar_einstein(dc, dm, pts)
        out["ricci"] = _table(pts, ric["full"])
        out["scalar"] = _table(pts, scal)
        out["einstein"] = _table(pts, ein)
    return out


def _table_points(pts: np.ndarray, errors_free, k: int) -> np.ndarray:
    return pts[errors_free][:k]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _options(scene: Scene, args) -> dict:
    o = dict(scene.options)
    for key in ("tol", "panels", "seed", "jet_order", "threads"):
        val = getattr(args, key, None)
        if val is not None:
            o[key] = val
    o.setdefault("tol", 1e-6)
    o.setdefault("seed", 0)
    o.setdefault("jet_order", 2)
    o.setdefault("threads", 1)
    o.setdefault("table_points", 4)
    if o["jet_order"] not in (1, 2):
        raise SceneError("jet order must be 1 or 2")
    if o["tol"] < 0:
        raise SceneError("tol must be non-negative")
    return o


def _suites(scene: Scene, command: str, opts: dict, report: dict):
    """(checks, run) pairs for the command; may record a stage error."""
    jo = opts["jet_order"]
    kind = scene.kind
    if command == "geometrize":
        if kind != "lagrangian":
            raise SceneError("geometrize needs a [lagrangian] section")
        return [lagrangian_checks(scene.lagrangian, jo)]
    if command == "curvature":
        if kind == "lagrangian":
            return [metric_checks(sasaki_metric(scene.lagrangian), jo, symplectic=True)]
        if kind == "metric":
            return [metric_checks(scene.metric, jo)]
        raise SceneError("curvature needs a [metric] or [lagrangian] section")
    if command in ("solve", "verify") and kind == "recipe":
        try:
            data = build_solution(scene.recipe, scene.window.sample_window(scene.chart))
        except SolutionError as err:
            report["stage_error"] = {"stage": err.stage, "message": str(err)}
            return []
        except POINT_ERRORS as err:
            report["stage_error"] = {"stage": "evaluation", "message": str(err)}
            return []
        report["fields"] = {k: f.text() for k, f in data.fields().items()}
        return [solution_checks(data, jo)]
    if command == "solve":
        raise SceneError("solve needs a [recipe] section")
    if kind == "lagrangian":
        return [lagrangian_checks(scene.lagrangian, jo)]
    if kind == "metric":
        return [metric_checks(scene.metric, jo)]
    raise SceneError("scene has no [lagrangian], [metric] or [recipe] section")


def run_command(command: str, scene: Scene, args) -> tuple[dict, int]:
    opts = _options(scene, args)
    report = {
        "command": command,
        "scene": scene.name,
        "kind": scene.kind,
        "options": {"tol": opts["tol"], "seed": opts["seed"], "jet_order": opts["jet_order"], "panels": opts.get("panels", 4096)},
    }
    pts = scene.window.points(scene.chart, opts["seed"])
    report["points"] = int(len(pts))
    suites = _suites(scene, command, opts, report)
    rows, errors = [], []
    for checks, run in suites:
        values, errs = evaluate(checks, run, pts, opts["threads"])
        rows += make_rows(checks, values, pts, opts["tol"])
        errors += errs
    report["rows"] = rows
    report["errors"] = errors
    bad = {tuple(e["point"]) for e in errors}
    good = np.array([tuple(q) not in bad for q in pts], dtype=bool) if len(pts) else np.zeros(0, bool)
    tp = _table_points(pts, good, opts["table_points"])
    try:
        if command == "geometrize":
            report["fields"] = _lagrangian_fields(scene)
            report["tables"] = _lagrangian_tables(scene, tp)
        elif command == "curvature":
            dm = scene.metric if scene.metric is not None else sasaki_metric(scene.lagrangian)
            report["tables"] = _curvature_tables(dm, tp, opts["jet_order"])
    except POINT_ERRORS as err:
        errors.append({"point": None, "message": f"table evaluation failed: {err}"})
    passed = bool(rows) and all(r["pass"] for r in rows) and not errors and "stage_error" not in report
    if len(pts) == 0:
        passed = False
        report["errors"].append({"point": None, "message": "window has no sample points"})
    report["pass"] = passed
    return report, 0 if passed else 1


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

CSV_FIELDS = ["check", "equation", "max", "mean", "worst_point", "tol", "pass"]


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in report.get("rows", []):
            wp = "" if r["worst_point"] is None else " ".join(repr(x) for x in r["worst_point"])
            w.writerow([r["check"], r["equation"], repr(r["max"]), repr(r["mean"]), wp, repr(r["tol"]), "pass" if r["pass"] else "fail"])
        return buf.getvalue()
    lines = [f"{report['command']} {report['scene']} ({report['kind']}, {report['points']} points)"]
    if "stage_error" in report:
        lines.append(f"stage error: {report['stage_error']['message']}")
    for r in report.get("rows", []):
        mx = "nan" if r["max"] is None else f"{r['max']:.3e}"
        lines.append(f"{'PASS' if r['pass'] else 'FAIL'}  {r['check']:<30s} max {mx}  tol {r['tol']:.1e}  {r['equation']}")
    for e in report.get("errors", []):
        lines.append(f"error at {e['point']}: {e['message']}")
    lines.append("overall: " + ("PASS" if report["pass"] else "FAIL"))
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nholo", description="Geometry of N-anholonomic manifolds and vacuum solution checks.")
    ap.add_argument("command", choices=["geometrize", "curvature", "solve", "verify"])
    ap.add_argument("scene", help="scene file")
    ap.add_argument("--tol", type=float, default=None, help="pass threshold (default 1e-6)")
    ap.add_argument("--panels", type=int, default=None, help="Simpson panels for running integrals (default 4096)")
    ap.add_argument("--seed", type=int, default=None, help="seed for random sample points (default 0)")
    ap.add_argument("--jet-order", dest="jet_order", type=int, choices=[1, 2], default=None, help="2 enables curvature checks")
    ap.add_argument("--out", default=None, help="write the report here instead of stdout")
    ap.add_argument("--format", choices=["json", "csv", "text"], default="json")
    ap.add_argument("--threads", type=int, default=None, help="worker threads for point chunks")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.panels is not None and (args.panels < 2 or args.panels % 2):
            raise SceneError("panels must be even and >= 2")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise SceneError("seed must be an unsigned 64-bit integer")
        if args.threads is not None and args.threads < 1:
            raise SceneError("threads must be >= 1")
        scene = load_scene(args.scene, panels=args.panels)
        report, code = run_command(args.command, scene, args)
    except SceneError as err:
        print(f"nholo: scene error: {err}", file=sys.stderr)
        return 2
    text = render(report, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
