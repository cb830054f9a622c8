"""Scene files: line-oriented ``[section]`` blocks of ``key = value`` entries.

Sections: chart, constants, lagrangian, metric, recipe, window, options.
Comments start with ``#``. See README for the full grammar.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

from .dconn import DMetric
from .expr import Chart, ExprError, Num, ScalarField, parse, simplify, DEFAULT_PANELS
from .lagrange import Lagrangian
from .nconn import NConnection
from .sampling import SplitMix64, random_points
from .solutions import ANSATZ_CHART, Recipe, SampleWindow

__all__ = ["SceneError", "Scene", "WindowSpec", "parse_scene", "load_scene"]

SECTIONS = ("chart", "constants", "lagrangian", "metric", "recipe", "window", "options")
_KEY = re.compile(r"[A-Za-z][A-Za-z0-9_]*$")


class SceneError(Exception):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass
class WindowSpec:
    """Sample points: a grid (``lo, hi, count``) or ``samples`` random draws."""

    ranges: dict = field(default_factory=dict)  # name -> (lo, hi, count or None)
    fixed: dict = field(default_factory=dict)
    exclusions: list = field(default_factory=list)  # (field, margin, label)
    samples: int = 0

    def sample_window(self, chart: Chart) -> SampleWindow:
        ranges = {k: (lo, hi, c if c is not None else 2) for k, (lo, hi, c) in self.ranges.items()}
        return SampleWindow(ranges, dict(self.fixed), [(f, m) for f, m, _ in self.exclusions], chart)

    def points(self, chart: Chart, seed: int) -> np.ndarray:
        if self.samples > 0:
            lows, highs = [], []
            for name in chart.names:
                if name in self.ranges:
                    lo, hi, _ = self.ranges[name]
                else:
                    lo = hi = float(self.fixed.get(name, 0.0))
                lows.append(lo)
                highs.append(hi)
            pts = random_points(SplitMix64(seed), lows, highs, self.samples)
            keep = np.ones(len(pts), dtype=bool)
            for f, margin, _ in self.exclusions:
                keep &= np.abs(np.asarray(f(pts)) * np.ones(len(pts))) >= margin
            return pts[keep]
        return self.sample_window(chart).points()


@dataclass
class Scene:
    name: str
    chart: Chart
    constants: dict
    lagrangian: Lagrangian | None = None
    metric: DMetric | None = None
    recipe: Recipe | None = None
    window: WindowSpec = field(default_factory=WindowSpec)
    options: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        if self.recipe is not None:
            return "recipe"
        if self.metric is not None:
            return "metric"
        if self.lagrangian is not None:
            return "lagrangian"
        return "none"


def _sections(text: str):
    out: dict[str, list] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise SceneError("malformed section header", lineno)
            current = line[1:-1].strip().lower()
            if current not in SECTIONS:
                raise SceneError(f"unknown section [{current}]", lineno)
            if current in out:
                raise SceneError(f"duplicate section [{current}]", lineno)
            out[current] = []
            continue
        if current is None:
            raise SceneError("entry outside a section", lineno)
        if "=" not in line:
            raise SceneError("expected 'key = value'", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY.match(key):
            raise SceneError(f"bad key {key!r}", lineno)
        if any(k == key for k, _, _ in out[current]):
            raise SceneError(f"duplicate key {key!r}", lineno)
        out[current].append((key, value, lineno))
    return out


_CONST_CHART = Chart(1, 1, ("qconst", "qconsty"))


class _Ctx:
    def __init__(self, chart: Chart, constants: dict, panels: int):
        self.chart, self.constants, self.panels = chart, constants, panels

    def field(self, text: str, line: int) -> ScalarField:
        try:
            return parse(text, self.chart, self.constants, self.panels)
        except ExprError as err:
            raise SceneError(str(err), line) from None

    def number(self, text: str, line: int) -> float:
        return _constant(self.field(text, line), line)


def _constant(f: ScalarField, line: int) -> float:
    body = simplify(f.body)
    if not isinstance(body, Num):
        raise SceneError("expected a constant", line)
    return float(body.value)


def _number_noctx(text: str, line: int, constants: dict) -> float:
    try:
        f = parse(text, _CONST_CHART, constants)
    except ExprError as err:
        raise SceneError(str(err), line) from None
    return _constant(f, line)


def _split_last_comma(text: str, line: int):
    if "," not in text:
        raise SceneError("expected 'expression, margin'", line)
    a, b = text.rsplit(",", 1)
    return a.strip(), b.strip()


def _chart(entries, recipe_present: bool) -> Chart:
    d = {k: (v, ln) for k, v, ln in entries}
    if not d:
        if recipe_present:
            return ANSATZ_CHART
        raise SceneError("missing [chart] section")
    try:
        n = int(d["n"][0])
        m = int(d["m"][0])
    except KeyError as err:
        raise SceneError(f"[chart] needs {err.args[0]}") from None
    except ValueError:
        raise SceneError("chart dimensions must be integers") from None
    if "names" in d:
        names = tuple(s.strip() for s in d["names"][0].split(","))
    else:
        names = tuple(f"x{i + 1}" for i in range(n)) + tuple(f"y{a + 1}" for a in range(m))
    try:
        return Chart(n, m, names)
    except ValueError as err:
        raise SceneError(str(err)) from None


def _metric(entries, ctx: _Ctx) -> DMetric:
    ch = ctx.chart
    zero = ScalarField.const(ch, 0.0)
    g = [[None] * ch.n for _ in range(ch.n)]
    h = [[None] * ch.m for _ in range(ch.m)]
    N = [[zero] * ch.n for _ in range(ch.m)]
    pat = re.compile(r"([ghN])_(\d+)_(\d+)$")
    for key, value, line in entries:
        mt = pat.match(key)
        if not mt:
            raise SceneError(f"unknown metric entry {key!r}", line)
        kind, i, j = mt.group(1), int(mt.group(2)) - 1, int(mt.group(3)) - 1
        f = ctx.field(value, line)
        if kind == "N":
            if not (0 <= i < ch.n and 0 <= j < ch.m):
                raise SceneError(f"{key} out of range", line)
            N[j][i] = f
            continue
        table, size = (g, ch.n) if kind == "g" else (h, ch.m)
        if not (0 <= i < size and 0 <= j < size):
            raise SceneError(f"{key} out of range", line)
        for a, b in ((i, j), (j, i)):
            if table[a][b] is not None and table[a][b] != f:
                raise SceneError(f"{key} conflicts with its mirror entry", line)
            table[a][b] = f
    g = [[x if x is not None else zero for x in row] for row in g]
    h = [[x if x is not None else zero for x in row] for row in h]
    return DMetric(ch, g, h, NConnection(ch, N))


def _recipe(entries, ctx: _Ctx) -> Recipe:
    d = {k: (v, ln) for k, v, ln in entries}
    known = {"family", "g0", "a2", "a3", "c1", "c2", "lower", "g2", "g3", "g1sign", "h_branch", "h5", "h0", "h4", "h5_1", "h5_2", "w_mode", "w1", "w2", "w3", "varpi", "q1", "q2", "vacuum", "perturb", "tol"}
    known |= {f"n{k}_{s}" for k in (1, 2, 3) for s in (1, 2)}
    for k, (_, ln) in d.items():
        if k not in known:
            raise SceneError(f"unknown recipe entry {k!r}", ln)

    def num(k, default):
        return ctx.number(*d[k]) if k in d else default

    def fld(k, default=None):
        return ctx.field(*d[k]) if k in d else default

    family = d.get("family", ("A", 0))[0].strip().upper()
    if family == "A":
        gp = {"g0": num("g0", 1.0), "a2": num("a2", 0.0), "a3": num("a3", 0.0)}
    elif family == "B":
        if "g2" not in d:
            raise SceneError("family B needs g2")
        gp = {"g2": fld("g2"), "c1": num("c1", 1.0), "c2": num("c2", 0.0), "lower": num("lower", 0.0)}
    elif family == "C":
        if "g2" not in d or "g3" not in d:
            raise SceneError("family C needs g2 and g3")
        gp = {"g2": fld("g2"), "g3": fld("g3")}
    else:
        raise SceneError(f"unknown family {family!r}", d["family"][1])
    one, zero = ScalarField.const(ctx.chart, 1.0), ScalarField.const(ctx.chart, 0.0)
    w = tuple(fld(f"w{i}", zero) for i in (1, 2, 3))
    seeds = tuple((fld(f"n{k}_1", zero), fld(f"n{k}_2", zero)) for k in (1, 2, 3))
    q = None
    if "q1" in d or "q2" in d:
        q = (int(num("q1", 1.0)), int(num("q2", 1.0)))
    sign = int(num("g1sign", 1.0))
    if sign not in (1, -1):
        raise SceneError("g1sign must be 1 or -1", d["g1sign"][1])
    vac = d.get("vacuum", ("true", 0))[0].strip().lower()
    if vac not in ("true", "false", "1", "0"):
        raise SceneError("vacuum must be true or false", d["vacuum"][1])
    return Recipe(
        family=family,
        g_params=gp,
        g1sign=sign,
        h_branch=d.get("h_branch", ("p1", 0))[0].strip().lower(),
        h5=fld("h5"),
        h0=fld("h0", one),
        h4=fld("h4"),
        h5_seeds=(fld("h5_1", one), fld("h5_2", one)),
        w_mode=d.get("w_mode", ("free", 0))[0].strip().lower(),
        w=w,
        n_seeds=seeds,
        varpi=fld("varpi"),
        q=q,
        vacuum=vac in ("true", "1"),
        perturb=num("perturb", 0.0),
        tol=num("tol", 1e-6),
        panels=ctx.panels,
    )


def _window(entries, ctx: _Ctx) -> WindowSpec:
    spec = WindowSpec()
    for key, value, line in entries:
        if key == "samples":
            spec.samples = int(ctx.number(value, line))
            continue
        if key.startswith("exclude_"):
            expr, margin = _split_last_comma(value, line)
            spec.exclusions.append((ctx.field(expr, line), ctx.number(margin, line), key[len("exclude_"):]))
            continue
        try:
            ctx.chart.index(key)
        except (KeyError, ValueError):
            raise SceneError(f"window entry {key!r} is not a coordinate", line) from None
        parts = [s.strip() for s in value.split(",")]
        nums = [ctx.number(s, line) for s in parts]
        if len(nums) == 1:
            spec.fixed[key] = nums[0]
        elif len(nums) in (2, 3):
            lo, hi = nums[0], nums[1]
            if not lo < hi:
                raise SceneError(f"window for {key}: need lo < hi", line)
            count = None
            if len(nums) == 3:
                count = int(nums[2])
                if count < 2 or count != nums[2]:
                    raise SceneError(f"window for {key}: count must be an integer >= 2", line)
            spec.ranges[key] = (lo, hi, count)
        else:
            raise SceneError(f"window for {key}: expected value or lo, hi[, count]", line)
    for name in ctx.chart.names:
        if name not in spec.ranges and name not in spec.fixed:
            spec.fixed[name] = 0.0
    if spec.samples == 0 and any(c is None for _, _, c in spec.ranges.values()):
        raise SceneError("ranges without a count need 'samples' in [window]")
    return spec


OPTION_KEYS = {"tol": float, "panels": int, "seed": int, "jet_order": int, "threads": int, "table_points": int}


def parse_scene(text: str, name: str = "scene", panels: int | None = None) -> Scene:
    """Parse scene text; ``panels`` overrides the [options] value."""
    secs = _sections(text)
    constants = {}
    for key, value, line in secs.get("constants", []):
        constants[key] = _number_noctx(value, line, constants)
    options = {}
    for key, value, line in secs.get("options", []):
        if key not in OPTION_KEYS:
            raise SceneError(f"unknown option {key!r}", line)
        try:
            options[key] = OPTION_KEYS[key](_number_noctx(value, line, constants))
        except (ValueError, OverflowError):
            raise SceneError(f"bad value for {key}", line) from None
    if panels is not None:
        options["panels"] = int(panels)
    if options.get("panels", 2) < 2 or options.get("panels", 2) % 2:
        raise SceneError("panels must be even and >= 2")
    chart = _chart(secs.get("chart", []), "recipe" in secs)
    for c in constants:
        if c in chart.names:
            raise SceneError(f"constant {c!r} shadows a coordinate")
    ctx = _Ctx(chart, constants, int(options.get("panels", DEFAULT_PANELS)))
    scene = Scene(name, chart, constants, options=options)
    drivers = [s for s in ("lagrangian", "metric", "recipe") if s in secs]
    if len(drivers) > 1:
        raise SceneError("exactly one of [lagrangian], [metric], [recipe] may appear")
    if "lagrangian" in secs:
        d = {k: (v, ln) for k, v, ln in secs["lagrangian"]}
        if "L" not in d:
            raise SceneError("[lagrangian] needs L")
        try:
            scene.lagrangian = Lagrangian(chart, ctx.field(*d["L"]))
        except ValueError as err:
            raise SceneError(str(err), d["L"][1]) from None
    if "metric" in secs:
        try:
            scene.metric = _metric(secs["metric"], ctx)
        except ValueError as err:
            raise SceneError(str(err)) from None
    if "recipe" in secs:
        if chart != ANSATZ_CHART:
            raise SceneError("a [recipe] scene uses the chart x1, x2, x3, v, y5")
        scene.recipe = _recipe(secs["recipe"], ctx)
    if "window" not in secs:
        raise SceneError("missing [window] section")
    scene.window = _window(secs["window"], ctx)
    return scene


def load_scene(path: str, panels: int | None = None) -> Scene:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise SceneError(f"cannot read scene: {err.strerror}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise SceneError("scene is not valid UTF-8") from None
    base = os.path.basename(path)
    return parse_scene(text, os.path.splitext(base)[0], panels)
