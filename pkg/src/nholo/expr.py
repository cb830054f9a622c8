"""Scalar expressions over named chart coordinates.

Grammar (whitespace is insignificant)::

    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;
    unary    = "-" unary | power ;
    power    = primary [ "^" unary ] ;
    primary  = number | ident | ident "(" args ")" | "(" expr ")" ;
    args     = expr { "," expr } ;
    number   = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
             | "." digits [ ("e" | "E") [ "+" | "-" ] digits ] ;
    ident    = letter { letter | digit | "_" } ;

``^`` binds tighter than unary minus (``-x^2`` is ``-(x^2)``) and is
right-associative; the other binary operators associate to the left.
Functions: sin cos tan sinh cosh tanh exp ln sqrt abs sign (one argument) and
``integral(body, var, lower)``, the running integral of ``body`` in ``var``
from the number ``lower`` up to the current value of ``var``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "Chart",
    "Expr",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Integral",
    "ScalarField",
    "ExprError",
    "ParseError",
    "UnknownIdentifier",
    "ArityError",
    "DomainError",
    "FUNCTIONS",
    "DEFAULT_PANELS",
    "parse",
    "parse_expr",
    "differentiate",
    "simplify",
    "evaluate",
    "to_text",
]

DEFAULT_PANELS = 4096

FUNCTIONS = ("sin", "cos", "tan", "sinh", "cosh", "tanh", "exp", "ln", "sqrt", "abs", "sign")

_IDENT = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")


class ExprError(Exception):
    pass


class ParseError(ExprError):
    """Syntax error; ``offset`` is the byte offset into the UTF-8 source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class UnknownIdentifier(ParseError):
    pass


class ArityError(ParseError):
    pass


class DomainError(ExprError, ArithmeticError):
    """Evaluation outside the domain of some node."""

    def __init__(self, message: str, node: "Expr | None" = None, point=None):
        self.node = node
        self.point = None if point is None else tuple(float(c) for c in np.ravel(point))
        text = message
        if node is not None:
            text += f" in `{to_text(node)}`"
        if self.point is not None:
            text += f" at point {self.point}"
        super().__init__(text)
        self.message = message

    def at(self, point) -> "DomainError":
        return DomainError(self.message, self.node, point)


@dataclass(frozen=True)
class Chart:
    """Coordinates u = (x^1..x^n, y^1..y^m), names in that order."""

    n: int
    m: int
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if self.n < 1 or self.m < 1:
            raise ValueError("chart needs n >= 1 and m >= 1")
        if len(self.names) != self.n + self.m:
            raise ValueError(f"expected {self.n + self.m} coordinate names, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise ValueError("coordinate names must be unique")
        for name in self.names:
            if not _IDENT.match(name) or name in FUNCTIONS or name == "integral":
                raise ValueError(f"bad coordinate name {name!r}")

    @classmethod
    def standard(cls, n: int, m: int) -> "Chart":
        return cls(n, m, tuple(f"x{i + 1}" for i in range(n)) + tuple(f"y{a + 1}" for a in range(m)))

    @property
    def dim(self) -> int:
        return self.n + self.m

    def index(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.dim:
                raise KeyError(f"coordinate index {name} out of range")
            return int(name)
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown coordinate {name!r}") from None


# ---------------------------------------------------------------------------
# nodes
# ---------------------------------------------------------------------------


class Expr:
    """Immutable expression node. ``mask`` is the bitmask of free coordinates."""

    __slots__ = ("_hash", "mask", "_fn")

    def _key(self) -> tuple:
        raise NotImplementedError

    def _init(self, mask: int) -> None:
        self.mask = mask
        self._hash = hash(self._key())
        self._fn = None

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return self._key() == other._key()

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {to_text(self)}>"

    @property
    def is_const(self) -> bool:
        return self.mask == 0


class Num(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError("numeric literal must be finite")
        self.value = value
        self._init(0)

    def _key(self):
        # -0.0 and 0.0 compare equal; keep them structurally equal too
        return ("num", self.value + 0.0)


class Var(Expr):
    __slots__ = ("index", "name")

    def __init__(self, index: int, name: str):
        self.index = index
        self.name = name
        self._init(1 << index)

    def _key(self):
        return ("var", self.index)


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        self.arg = arg
        self._init(arg.mask)

    def _key(self):
        return ("neg", self.arg)


class BinOp(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        if op not in "+-*/^" or len(op) != 1:
            raise ValueError(op)
        self.op = op
        self.left = left
        self.right = right
        self._init(left.mask | right.mask)

    def _key(self):
        return (self.op, self.left, self.right)


class Call(Expr):
    __slots__ = ("fn", "arg")

    def __init__(self, fn: str, arg: Expr):
        if fn not in FUNCTIONS:
            raise ValueError(fn)
        self.fn = fn
        self.arg = arg
        self._init(arg.mask)

    def _key(self):
        return ("call", self.fn, self.arg)


class Integral(Expr):
    """Running integral of ``body`` over ``var`` from ``lower`` to the value of ``var``.

    Evaluated by composite Simpson with ``panels`` panels; derivatives are exact
    (d/dvar gives the body, other derivatives pass under the integral sign).
    """

    __slots__ = ("body", "var", "name", "lower", "panels")

    def __init__(self, body: Expr, var: int, name: str, lower: float, panels: int = DEFAULT_PANELS):
        if panels < 2 or panels % 2:
            raise ValueError("panels must be even and >= 2")
        self.body = body
        self.var = var
        self.name = name
        self.lower = float(lower)
        self.panels = int(panels)
        self._init(body.mask | (1 << var))

    def _key(self):
        return ("int", self.body, self.var, self.lower, self.panels)


ZERO = Num(0.0)
ONE = Num(1.0)

# ---------------------------------------------------------------------------
# simplifying constructors
# ---------------------------------------------------------------------------


def _num(e: Expr) -> float | None:
    return e.value if isinstance(e, Num) else None


def _fold(fn: Callable[[], float]) -> Num | None:
    try:
        with np.errstate(all="raise"):
            v = fn()
    except (ArithmeticError, ValueError, FloatingPointError, OverflowError):
        return None
    v = float(v)
    return Num(v) if math.isfinite(v) else None


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        return _fold(lambda: va + vb) or BinOp("+", a, b)
    if va == 0.0:
        return b
    if vb == 0.0:
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        return _fold(lambda: va - vb) or BinOp("-", a, b)
    if vb == 0.0:
        return a
    if va == 0.0:
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        return _fold(lambda: va * vb) or BinOp("*", a, b)
    if va == 0.0 or vb == 0.0:
        return ZERO
    if va == 1.0:
        return b
    if vb == 1.0:
        return a
    if va == -1.0:
        return neg(b)
    if vb == -1.0:
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None and vb != 0.0:
        return _fold(lambda: va / vb) or BinOp("/", a, b)
    if vb == 1.0:
        return a
    if va == 0.0 and vb != 0.0:
        return ZERO
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        folded = _fold(lambda: _pow_scalar(va, vb))
        if folded is not None:
            return folded
    if vb == 1.0:
        return a
    if vb == 0.0:
        return ONE
    return BinOp("^", a, b)


def call(fn: str, a: Expr) -> Expr:
    va = _num(a)
    if va is not None:
        try:
            v = _FUNC_IMPL[fn](np.asarray(va), None, None)
        except DomainError:
            return Call(fn, a)
        folded = _fold(lambda: float(v))
        if folded is not None:
            return folded
    return Call(fn, a)


def integral(body: Expr, var: int, name: str, lower: float, panels: int = DEFAULT_PANELS) -> Expr:
    if isinstance(body, Num) and body.value == 0.0:
        return ZERO
    return Integral(body, var, name, lower, panels)


def _pow_scalar(a: float, b: float) -> float:
    if a < 0 and b != int(b):
        raise ValueError("negative base")
    if a == 0 and b < 0:
        raise ZeroDivisionError
    return a**b


_BUILD = {"+": add, "-": sub, "*": mul, "/": div, "^": power}


def simplify(e):
    """Constant folding plus the identities 0+e, e+0, e-0, 1*e, 0*e, e^1, e^0, e/1, --e.

    Accepts an :class:`Expr` or a :class:`ScalarField`.
    """
    if isinstance(e, ScalarField):
        return ScalarField(e.chart, simplify(e.body))
    memo: dict[Expr, Expr] = {}

    def go(x: Expr) -> Expr:
        hit = memo.get(x)
        if hit is not None:
            return hit
        if isinstance(x, (Num, Var)):
            out = x
        elif isinstance(x, Neg):
            out = neg(go(x.arg))
        elif isinstance(x, BinOp):
            out = _BUILD[x.op](go(x.left), go(x.right))
        elif isinstance(x, Call):
            out = call(x.fn, go(x.arg))
        elif isinstance(x, Integral):
            out = integral(go(x.body), x.var, x.name, x.lower, x.panels)
        else:  # pragma: no cover
            raise TypeError(type(x))
        memo[x] = out
        return out

    return go(e)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def _d(e: Expr, k: int, memo: dict) -> Expr:
    if not (e.mask >> k) & 1:
        return ZERO
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, Var):
        out = ONE
    elif isinstance(e, Neg):
        out = neg(_d(e.arg, k, memo))
    elif isinstance(e, BinOp):
        a, b = e.left, e.right
        if e.op in "+-":
            out = _BUILD[e.op](_d(a, k, memo), _d(b, k, memo))
        elif e.op == "*":
            out = add(mul(_d(a, k, memo), b), mul(a, _d(b, k, memo)))
        elif e.op == "/":
            da, db = _d(a, k, memo), _d(b, k, memo)
            if db == ZERO:
                out = div(da, b)
            else:
                out = div(sub(mul(da, b), mul(a, db)), power(b, Num(2)))
        else:  # ^
            da = _d(a, k, memo)
            if b.is_const:
                out = mul(mul(b, power(a, sub(b, ONE))), da)
            else:
                db = _d(b, k, memo)
                inner = add(mul(db, call("ln", a)), div(mul(b, da), a))
                out = mul(e, inner)
    elif isinstance(e, Call):
        u = e.arg
        du = _d(u, k, memo)
        fn = e.fn
        if fn == "sin":
            out = mul(call("cos", u), du)
        elif fn == "cos":
            out = neg(mul(call("sin", u), du))
        elif fn == "tan":
            out = div(du, power(call("cos", u), Num(2)))
        elif fn == "sinh":
            out = mul(call("cosh", u), du)
        elif fn == "cosh":
            out = mul(call("sinh", u), du)
        elif fn == "tanh":
            out = mul(sub(ONE, power(e, Num(2))), du)
        elif fn == "exp":
            out = mul(e, du)
        elif fn == "ln":
            out = div(du, u)
        elif fn == "sqrt":
            out = div(du, mul(Num(2), e))
        elif fn == "abs":
            out = mul(call("sign", u), du)
        else:  # sign: zero away from the kink
            out = ZERO
    elif isinstance(e, Integral):
        if k == e.var:
            # the integration variable is a dummy inside the body
            out = e.body
        else:
            out = integral(_d(e.body, k, {}), e.var, e.name, e.lower, e.panels)
    else:  # pragma: no cover
        raise TypeError(type(e))
    memo[e] = out
    return out


def differentiate(f, coord, order: int = 1):
    """Exact symbolic derivative of a :class:`ScalarField` (or ``Expr`` with ``coord`` an index)."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if isinstance(f, ScalarField):
        k = f.chart.index(coord)
        return f.partial(*([k] * order))
    if not isinstance(coord, (int, np.integer)):
        raise TypeError("bare expressions are differentiated by coordinate index")
    out = f
    for _ in range(order):
        out = _d(out, int(coord), {})
    return out


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _bad(mask) -> bool:
    return bool(np.any(mask))


def _f_ln(a, node, _):
    if _bad(a <= 0):
        raise DomainError("ln of non-positive value", node)
    return np.log(a)


def _f_sqrt(a, node, _):
    if _bad(a < 0):
        raise DomainError("sqrt of negative value", node)
    return np.sqrt(a)


def _f_sign(a, node, _):
    if _bad(a == 0):
        raise DomainError("sign evaluated at its kink", node)
    return np.sign(a)


def _f_tan(a, node, _):
    c = np.cos(a)
    if _bad(c == 0):
        raise DomainError("tan at a pole", node)
    return np.tan(a)


_FUNC_IMPL: dict[str, Callable] = {
    "sin": lambda a, n, _: np.sin(a),
    "cos": lambda a, n, _: np.cos(a),
    "tan": _f_tan,
    "sinh": lambda a, n, _: np.sinh(a),
    "cosh": lambda a, n, _: np.cosh(a),
    "tanh": lambda a, n, _: np.tanh(a),
    "exp": lambda a, n, _: np.exp(a),
    "ln": _f_ln,
    "sqrt": _f_sqrt,
    "abs": lambda a, n, _: np.abs(a),
    "sign": _f_sign,
}


def simpson_weights(panels: int) -> np.ndarray:
    """Composite Simpson weights on ``panels + 1`` nodes (without the h/3 factor)."""
    if panels < 2 or panels % 2:
        raise ValueError("panels must be even and >= 2")
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w


def _compile(e: Expr) -> Callable:
    if e._fn is not None:
        return e._fn
    if isinstance(e, Num):
        v = e.value

        def fn(c):
            return np.float64(v)

    elif isinstance(e, Var):
        k = e.index

        def fn(c):
            return c[k]

    elif isinstance(e, Neg):
        a = _compile(e.arg)

        def fn(c):
            return -a(c)

    elif isinstance(e, BinOp):
        lf, rf = _compile(e.left), _compile(e.right)
        op = e.op
        node = e
        if op == "+":

            def fn(c):
                return lf(c) + rf(c)

        elif op == "-":

            def fn(c):
                return lf(c) - rf(c)

        elif op == "*":

            def fn(c):
                return lf(c) * rf(c)

        elif op == "/":

            def fn(c):
                den = rf(c)
                if _bad(den == 0):
                    raise DomainError("division by zero", node)
                return lf(c) / den

        else:
            const_exp = _num(e.right)
            integral_exp = const_exp is not None and const_exp == int(const_exp)

            def fn(c):
                base = lf(c)
                ex = rf(c)
                if integral_exp:
                    if const_exp < 0 and _bad(base == 0):
                        raise DomainError("zero to a negative power", node)
                    return np.power(base, const_exp)
                if _bad(base < 0):
                    raise DomainError("negative base to a non-integer power", node)
                if _bad((base == 0) & (np.asarray(ex) < 0)):
                    raise DomainError("zero to a negative power", node)
                return np.power(base, ex)

    elif isinstance(e, Call):
        a = _compile(e.arg)
        impl = _FUNC_IMPL[e.fn]
        node = e

        def fn(c):
            return impl(a(c), node, None)

    elif isinstance(e, Integral):
        body = _compile(e.body)
        k, lo, panels = e.var, e.lower, e.panels
        w = simpson_weights(panels)
        t = np.linspace(0.0, 1.0, panels + 1)

        def fn(c):
            cs = np.broadcast_arrays(*[np.asarray(x, dtype=float) for x in c])
            upper = cs[k]
            span = upper - lo
            grid = [x[..., None] for x in cs]
            grid[k] = lo + span[..., None] * t
            vals = np.broadcast_to(body(grid), grid[k].shape)
            return span / (3.0 * panels) * (vals @ w)

    else:  # pragma: no cover
        raise TypeError(type(e))
    e._fn = fn
    return fn


def _eval_coords(e: Expr, coords: Sequence) -> np.ndarray:
    with np.errstate(all="ignore"):
        out = _compile(e)(coords)
    return out


def evaluate(f, p):
    """Evaluate a :class:`ScalarField` at a point ``(D,)`` or a batch ``(P, D)``.

    Raises :class:`DomainError` naming the offending node and point.
    """
    if not isinstance(f, ScalarField):
        raise TypeError("evaluate expects a ScalarField")
    return f(p)


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    return s


def _prec(e: Expr) -> int:
    if isinstance(e, Num):
        return 3 if e.value < 0 or str(_fmt(e.value)).startswith("-") else 5
    if isinstance(e, Neg):
        return 3
    if isinstance(e, BinOp):
        return {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}[e.op]
    return 5


def to_text(e) -> str:
    if isinstance(e, ScalarField):
        e = e.body
    if isinstance(e, Num):
        return _fmt(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        if _prec(e.arg) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Call):
        return f"{e.fn}({to_text(e.arg)})"
    if isinstance(e, Integral):
        return f"integral({to_text(e.body)}, {e.name}, {_fmt(e.lower)})"
    op = e.op
    p = _prec(e)
    lt, rt = to_text(e.left), to_text(e.right)
    lp, rp = _prec(e.left), _prec(e.right)
    if op == "^":
        if lp <= 4:
            lt = f"({lt})"
        if rp < 3:
            rt = f"({rt})"
        return f"{lt}^{rt}"
    if lp < p:
        lt = f"({lt})"
    if rp <= p:
        rt = f"({rt})"
    sep = f" {op} " if op in "+-" else op
    return f"{lt}{sep}{rt}"


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)


class _Parser:
    def __init__(self, src: str, chart: Chart, constants: Mapping[str, float], panels: int):
        self.src = src
        self.chart = chart
        self.constants = dict(constants)
        self.panels = panels
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(src):
            if src[pos:].strip() == "":
                break
            m = _TOKEN.match(src, pos)
            if not m or m.end() == pos:
                raise ParseError(f"unexpected character {src[pos:].lstrip()[:1]!r}", self._byte(len(src) - len(src[pos:].lstrip())))
            kind = m.lastgroup
            start = m.start(kind)
            self.toks.append((kind, m.group(kind), start))
            pos = m.end()
        self.toks.append(("end", "", len(src)))
        self.i = 0

    def _byte(self, char_offset: int) -> int:
        return len(self.src[:char_offset].encode("utf-8"))

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str):
        kind, val, off = self.take()
        if val != text or kind != "op":
            raise ParseError(f"expected {text!r}, found {val or 'end of input'!r}", self._byte(off))

    def error(self, msg: str, off: int, cls=ParseError):
        raise cls(msg, self._byte(off))

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            self.error(f"unexpected {val!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def args(self, name: str, off: int) -> list:
        self.expect("(")
        out = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            out.append(self.expr())
        self.expect(")")
        return out

    def primary(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "id":
            called = self.peek()[1] == "("
            if val == "integral":
                if not called:
                    self.error("integral needs arguments", off, ArityError)
                return self.integral(off)
            if val in FUNCTIONS:
                if not called:
                    self.error(f"function {val} needs an argument", off, ArityError)
                args = self.args(val, off)
                if len(args) != 1:
                    self.error(f"{val} takes 1 argument, got {len(args)}", off, ArityError)
                return Call(val, args[0])
            if called:
                self.error(f"{val!r} is not a function", off, ArityError)
            if val in self.chart.names:
                return Var(self.chart.names.index(val), val)
            if val in self.constants:
                return Num(self.constants[val])
            self.error(f"unknown identifier {val!r}", off, UnknownIdentifier)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        self.error(f"unexpected {val or 'end of input'!r}", off)

    def integral(self, off: int) -> Expr:
        self.expect("(")
        body = self.expr()
        self.expect(",")
        kind, name, noff = self.take()
        if kind != "id" or name not in self.chart.names:
            self.error(f"integral variable must be a coordinate, got {name!r}", noff, UnknownIdentifier)
        self.expect(",")
        sign = 1.0
        if self.peek()[1] == "-":
            self.take()
            sign = -1.0
        kind, lo, loff = self.take()
        if kind != "num":
            self.error("integral lower bound must be a number", loff)
        if self.peek()[1] == ",":
            self.error("integral takes 3 arguments", self.peek()[2], ArityError)
        self.expect(")")
        return Integral(body, self.chart.names.index(name), name, sign * float(lo), self.panels)


def parse_expr(source: str, chart: Chart, constants: Mapping[str, float] | None = None, panels: int = DEFAULT_PANELS) -> Expr:
    if not source or not source.strip():
        raise ParseError("empty expression", 0)
    return _Parser(source, chart, constants or {}, panels).parse()


def parse(source: str, chart: Chart, constants: Mapping[str, float] | None = None, panels: int = DEFAULT_PANELS) -> "ScalarField":
    """Parse ``source`` into a field on ``chart``; named ``constants`` are substituted as numbers."""
    return ScalarField(chart, parse_expr(source, chart, constants, panels))


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


def _lift(chart: Chart, x) -> Expr:
    if isinstance(x, ScalarField):
        if x.chart != chart:
            raise ValueError("fields live on different charts")
        return x.body
    if isinstance(x, Expr):
        return x
    return Num(float(x))


class ScalarField:
    """An expression bound to a chart, with memoized partial derivatives."""

    __slots__ = ("chart", "body", "_partials")

    def __init__(self, chart: Chart, body: Expr):
        if body.mask >> chart.dim:
            raise ValueError("expression references coordinates outside the chart")
        self.chart = chart
        self.body = body
        self._partials: dict[tuple[int, ...], ScalarField] = {}

    @classmethod
    def const(cls, chart: Chart, value: float) -> "ScalarField":
        return cls(chart, Num(value))

    @classmethod
    def coord(cls, chart: Chart, name: str | int) -> "ScalarField":
        k = chart.index(name)
        return cls(chart, Var(k, chart.names[k]))

    def __eq__(self, other):
        return isinstance(other, ScalarField) and self.chart == other.chart and self.body == other.body

    def __hash__(self):
        return hash((self.chart, self.body))

    def __repr__(self):
        return f"ScalarField({to_text(self.body)!r})"

    def __str__(self):
        return to_text(self.body)

    @property
    def is_const(self) -> bool:
        return self.body.is_const

    def depends_on(self, coord) -> bool:
        return bool((self.body.mask >> self.chart.index(coord)) & 1)

    def partial(self, *idx: int) -> "ScalarField":
        """Mixed partial along coordinate indices; cached by the sorted index tuple."""
        if not idx:
            return self
        key = tuple(sorted(idx))
        hit = self._partials.get(key)
        if hit is not None:
            return hit
        lower = self.partial(*key[:-1])
        out = ScalarField(self.chart, _d(lower.body, key[-1], {}))
        self._partials[key] = out
        return out

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        pts = p[None, :] if single else p
        if pts.shape[-1] != self.chart.dim:
            raise ValueError(f"point has {pts.shape[-1]} coordinates, chart has {self.chart.dim}")
        coords = [pts[:, k] for k in range(self.chart.dim)]
        try:
            out = np.broadcast_to(_eval_coords(self.body, coords), (pts.shape[0],)).astype(float)
        except DomainError as err:
            raise err.at(self._first_bad(pts)) from None
        bad = ~np.isfinite(out)
        if bad.any():
            raise DomainError("non-finite value", self.body, pts[int(np.argmax(bad))])
        return float(out[0]) if single else out

    def _first_bad(self, pts: np.ndarray):
        if pts.shape[0] == 1:
            return pts[0]
        for q in pts:
            try:
                _eval_coords(self.body, [q[k : k + 1] for k in range(self.chart.dim)])
            except DomainError:
                return q
        return None  # pragma: no cover

    def text(self) -> str:
        return to_text(self.body)

    # arithmetic builds simplified trees
    def _bin(self, other, fn, swap=False):
        o = _lift(self.chart, other)
        return ScalarField(self.chart, fn(o, self.body) if swap else fn(self.body, o))

    def __add__(self, o):
        return self._bin(o, add)

    def __radd__(self, o):
        return self._bin(o, add, True)

    def __sub__(self, o):
        return self._bin(o, sub)

    def __rsub__(self, o):
        return self._bin(o, sub, True)

    def __mul__(self, o):
        return self._bin(o, mul)

    def __rmul__(self, o):
        return self._bin(o, mul, True)

    def __truediv__(self, o):
        return self._bin(o, div)

    def __rtruediv__(self, o):
        return self._bin(o, div, True)

    def __pow__(self, o):
        return self._bin(o, power)

    def __neg__(self):
        return ScalarField(self.chart, neg(self.body))

    def apply(self, fn: str) -> "ScalarField":
        return ScalarField(self.chart, call(fn, self.body))

    def integrate(self, coord, lower: float, panels: int = DEFAULT_PANELS) -> "ScalarField":
        k = self.chart.index(coord)
        return ScalarField(self.chart, integral(self.body, k, self.chart.names[k], lower, panels))
