"""Truncated jets, jet matrix inversion, Simpson quadrature and RK4.

A :class:`Jet` carries an array of values together with first and second
partial derivatives with respect to the ``dim`` chart coordinates. Arrays are
shape-agnostic: ``val`` has shape ``S``, ``d1`` has ``S + (dim,)`` and ``d2``
has ``S + (dim, dim)``. A batch of points is just a leading axis of ``S``.
Zero derivative parts are stored as ``None``.

The Hessian part is kept in full storage; every rule below produces it as a
sum of a term and its transpose (or from sorted-index symbolic partials), so
it is symmetric to the last bit without a separate symmetrization pass.
"""

from __future__ import annotations

import string
from typing import Callable, Iterable, Sequence

import numpy as np

from .expr import DomainError, ScalarField, simpson_weights

__all__ = [
    "Jet",
    "SingularMatrixError",
    "jet_eval",
    "jet_field_array",
    "jet_einsum",
    "jet_matrix_inverse",
    "jet_stack",
    "jet_block",
    "integrate_v",
    "ode_step_rk4",
    "COND_LIMIT",
]

COND_LIMIT = 1e12


class SingularMatrixError(ArithmeticError):
    def __init__(self, message: str, cond: float):
        super().__init__(f"{message} (condition estimate {cond:.3e})")
        self.cond = cond


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _neg(a):
    return None if a is None else -a


def _scale(a, s, k: int):
    """Multiply a derivative array with ``k`` trailing derivative axes by values ``s``."""
    if a is None:
        return None
    s = np.asarray(s)
    return a * s.reshape(s.shape + (1,) * k)


class Jet:
    __slots__ = ("val", "d1", "d2", "order", "dim")

    def __init__(self, val, d1=None, d2=None, order: int = 2, dim: int | None = None):
        self.val = np.asarray(val, dtype=float)
        if order not in (0, 1, 2):
            raise ValueError("jet order must be 0, 1 or 2")
        if dim is None:
            if d1 is not None:
                dim = np.shape(d1)[-1]
            elif d2 is not None:
                dim = np.shape(d2)[-1]
            else:
                raise ValueError("dim required for a jet without derivatives")
        self.dim = int(dim)
        self.order = order
        self.d1 = None if order < 1 or d1 is None else np.asarray(d1, dtype=float)
        self.d2 = None if order < 2 or d2 is None else np.asarray(d2, dtype=float)

    # construction -----------------------------------------------------------
    @classmethod
    def const(cls, val, dim: int, order: int = 2) -> "Jet":
        return cls(val, None, None, order, dim)

    @classmethod
    def variable(cls, val: Sequence[float], dim: int | None = None, order: int = 2) -> "Jet":
        """Seed jets for the coordinates themselves: shape (dim,) with identity gradient."""
        val = np.asarray(val, dtype=float)
        dim = val.shape[-1] if dim is None else dim
        eye = np.broadcast_to(np.eye(dim), val.shape + (dim,)).copy()
        return cls(val, eye, None, order, dim)

    # basic attributes -------------------------------------------------------
    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    def grad_array(self) -> np.ndarray:
        if self.order < 1:
            raise ValueError("order-0 jet has no gradient")
        return self.d1 if self.d1 is not None else np.zeros(self.shape + (self.dim,))

    def hess_array(self) -> np.ndarray:
        if self.order < 2:
            raise ValueError("jet order below 2 has no Hessian")
        return self.d2 if self.d2 is not None else np.zeros(self.shape + (self.dim, self.dim))

    def __repr__(self):
        return f"Jet(order={self.order}, shape={self.shape}, dim={self.dim})"

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        return Jet(self.val, self.d1, self.d2, order, self.dim)

    def grad(self) -> "Jet":
        """The gradient as a jet one order lower, with a new trailing axis of length dim."""
        if self.order < 1:
            raise ValueError("order-0 jet has no gradient")
        return Jet(self.grad_array(), self.d2, None, self.order - 1, self.dim)

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise ValueError("jets over different dimensions")
            return other
        return Jet.const(other, self.dim, 2)

    # arithmetic -------------------------------------------------------------
    def __add__(self, other):
        o = self._coerce(other)
        order = min(self.order, o.order)
        return Jet(self.val + o.val, _add(self.d1, o.d1), _add(self.d2, o.d2), order, self.dim)._fit()

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, _neg(self.d1), _neg(self.d2), self.order, self.dim)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        order = min(self.order, o.order)
        a, b = self, o
        d1 = _add(_scale(a.d1, b.val, 1), _scale(b.d1, a.val, 1)) if order >= 1 else None
        d2 = None
        if order >= 2:
            d2 = _add(_scale(a.d2, b.val, 2), _scale(b.d2, a.val, 2))
            if a.d1 is not None and b.d1 is not None:
                cross = a.d1[..., :, None] * b.d1[..., None, :]
                d2 = _add(d2, cross + np.swapaxes(cross, -1, -2))
        return Jet(a.val * b.val, d1, d2, order, self.dim)._fit()

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        v = self.val
        if np.any(v == 0):
            raise ZeroDivisionError("jet division by zero value")
        r = 1.0 / v
        return self._chain(r, -r * r, 2.0 * r * r * r)

    def __truediv__(self, other):
        o = self._coerce(other)
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.reciprocal()

    def __pow__(self, p):
        if isinstance(p, Jet):
            raise TypeError("jet exponents must be constants")
        p = float(p)
        v = self.val
        if p != int(p) and np.any(v < 0):
            raise DomainError("negative base to a non-integer power")
        if p < 0 and np.any(v == 0):
            raise ZeroDivisionError("zero to a negative power")
        if p == 0:
            return Jet.const(np.ones_like(v), self.dim, self.order)
        f0 = v**p
        f1 = p * v ** (p - 1) if p != 1 else np.ones_like(v)
        f2 = p * (p - 1) * v ** (p - 2) if p not in (1.0, 2.0) else np.full_like(v, p * (p - 1))
        return self._chain(f0, f1, f2)

    def _chain(self, f0, f1, f2) -> "Jet":
        """Compose an elementwise function with value/first/second derivative arrays."""
        d1 = _scale(self.d1, f1, 1) if self.order >= 1 else None
        d2 = None
        if self.order >= 2:
            d2 = _scale(self.d2, f1, 2)
            if self.d1 is not None:
                d2 = _add(d2, _scale(self.d1[..., :, None] * self.d1[..., None, :], f2, 2))
        return Jet(f0, d1, d2, self.order, self.dim)

    def _fit(self) -> "Jet":
        # broadcasting between val and derivative parts (e.g. const * jet)
        s = self.val.shape
        if self.d1 is not None and self.d1.shape[:-1] != s:
            s = np.broadcast_shapes(s, self.d1.shape[:-1])
        if self.d2 is not None and self.d2.shape[:-2] != s:
            s = np.broadcast_shapes(s, self.d2.shape[:-2])
        if s == self.val.shape and (self.d1 is None or self.d1.shape[:-1] == s) and (
            self.d2 is None or self.d2.shape[:-2] == s
        ):
            return self
        val = np.broadcast_to(self.val, s)
        d1 = None if self.d1 is None else np.broadcast_to(self.d1, s + (self.dim,))
        d2 = None if self.d2 is None else np.broadcast_to(self.d2, s + (self.dim, self.dim))
        return Jet(val, d1, d2, self.order, self.dim)

    # elementary functions ---------------------------------------------------
    def exp(self):
        e = np.exp(self.val)
        return self._chain(e, e, e)

    def log(self):
        v = self.val
        if np.any(v <= 0):
            raise DomainError("ln of non-positive value")
        r = 1.0 / v
        return self._chain(np.log(v), r, -r * r)

    def sqrt(self):
        v = self.val
        if np.any(v <= 0):
            raise DomainError("sqrt at or below zero")
        s = np.sqrt(v)
        return self._chain(s, 0.5 / s, -0.25 / (s * v))

    def sin(self):
        s, c = np.sin(self.val), np.cos(self.val)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = np.sin(self.val), np.cos(self.val)
        return self._chain(c, -s, -c)

    def tan(self):
        t = np.tan(self.val)
        sec2 = 1.0 + t * t
        return self._chain(t, sec2, 2.0 * t * sec2)

    def sinh(self):
        s, c = np.sinh(self.val), np.cosh(self.val)
        return self._chain(s, c, s)

    def cosh(self):
        s, c = np.sinh(self.val), np.cosh(self.val)
        return self._chain(c, s, c)

    def tanh(self):
        t = np.tanh(self.val)
        s2 = 1.0 - t * t
        return self._chain(t, s2, -2.0 * t * s2)

    def abs(self):
        s = np.sign(self.val)
        if np.any(s == 0):
            raise DomainError("abs differentiated at its kink")
        return self._chain(np.abs(self.val), s, np.zeros_like(s))

    # shape manipulation -----------------------------------------------------
    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            raise IndexError("jets are indexed on leading axes only")
        if len(key) > self.ndim:
            raise IndexError("too many indices for jet")
        return Jet(
            self.val[key],
            None if self.d1 is None else self.d1[key],
            None if self.d2 is None else self.d2[key],
            self.order,
            self.dim,
        )

    def transpose(self, *axes) -> "Jet":
        k = self.ndim
        axes = tuple(axes) if axes else tuple(reversed(range(k)))
        return Jet(
            self.val.transpose(axes),
            None if self.d1 is None else self.d1.transpose(axes + (k,)),
            None if self.d2 is None else self.d2.transpose(axes + (k, k + 1)),
            self.order,
            self.dim,
        )

    def swapaxes(self, a: int, b: int) -> "Jet":
        axes = list(range(self.ndim))
        a, b = a % self.ndim, b % self.ndim
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(*axes)

    def sum(self, axis: int) -> "Jet":
        axis = axis % self.ndim
        return Jet(
            self.val.sum(axis),
            None if self.d1 is None else self.d1.sum(axis),
            None if self.d2 is None else self.d2.sum(axis),
            self.order,
            self.dim,
        )

    def expand(self, axis: int) -> "Jet":
        axis = axis % (self.ndim + 1)
        return Jet(
            np.expand_dims(self.val, axis),
            None if self.d1 is None else np.expand_dims(self.d1, axis),
            None if self.d2 is None else np.expand_dims(self.d2, axis),
            self.order,
            self.dim,
        )

    def values(self) -> np.ndarray:
        return self.val


# ---------------------------------------------------------------------------
# contraction
# ---------------------------------------------------------------------------


def _split_spec(spec: str):
    ins, out = spec.replace(" ", "").split("->")
    return ins.split(","), out


def jet_einsum(spec: str, *ops) -> Jet:
    """Einstein summation over jets and constant arrays, with exact product rule.

    ``spec`` uses explicit subscripts (an ellipsis is allowed as a leading batch
    part). Derivative axes are appended internally.
    """
    terms, out = _split_spec(spec)
    if len(terms) != len(ops):
        raise ValueError("operand count does not match subscripts")
    used = set(spec)
    free = [c for c in string.ascii_letters if c not in used]
    z, w = free[0], free[1]
    jets = [o for o in ops if isinstance(o, Jet)]
    if not jets:
        raise TypeError("jet_einsum needs at least one jet operand")
    dim = jets[0].dim
    order = min(j.order for j in jets)
    vals = [o.val if isinstance(o, Jet) else np.asarray(o, dtype=float) for o in ops]

    def ein(sub_terms, sub_out, arrays):
        return np.einsum(",".join(sub_terms) + "->" + sub_out, *arrays)

    val = ein(terms, out, vals)
    d1 = d2 = None
    if order >= 1:
        for i, o in enumerate(ops):
            if isinstance(o, Jet) and o.d1 is not None:
                t = list(terms)
                t[i] = t[i] + z
                arrs = list(vals)
                arrs[i] = o.d1
                d1 = _add(d1, ein(t, out + z, arrs))
    if order >= 2:
        for i, o in enumerate(ops):
            if isinstance(o, Jet) and o.d2 is not None:
                t = list(terms)
                t[i] = t[i] + z + w
                arrs = list(vals)
                arrs[i] = o.d2
                d2 = _add(d2, ein(t, out + z + w, arrs))
        for i, oi in enumerate(ops):
            for j, oj in enumerate(ops):
                if i >= j or not isinstance(oi, Jet) or not isinstance(oj, Jet):
                    continue
                if oi.d1 is None or oj.d1 is None:
                    continue
                t = list(terms)
                t[i] = t[i] + z
                t[j] = t[j] + w
                arrs = list(vals)
                arrs[i], arrs[j] = oi.d1, oj.d1
                cross = ein(t, out + z + w, arrs)
                d2 = _add(d2, cross + np.swapaxes(cross, -1, -2))
    return Jet(val, d1, d2, order, dim)


def jet_stack(jets: Sequence[Jet], axis: int = 0) -> Jet:
    dim = jets[0].dim
    order = min(j.order for j in jets)
    shape = jets[0].shape
    axis = axis % (len(shape) + 1)

    def part(getter, extra):
        arrs = [getter(j) for j in jets]
        if all(a is None for a in arrs):
            return None
        full = [np.zeros(shape + extra) if a is None else np.broadcast_to(a, shape + extra) for a in arrs]
        return np.stack(full, axis=axis)

    val = np.stack([np.broadcast_to(j.val, shape) for j in jets], axis=axis)
    d1 = part(lambda j: j.d1, (dim,)) if order >= 1 else None
    d2 = part(lambda j: j.d2, (dim, dim)) if order >= 2 else None
    return Jet(val, d1, d2, order, dim)


def jet_block(shape: tuple, dim: int, order: int, items: Iterable[tuple]) -> Jet:
    """Assemble a jet of ``shape`` from ``(index, jet)`` pieces written into zeros."""
    val = np.zeros(shape)
    d1 = np.zeros(shape + (dim,)) if order >= 1 else None
    d2 = np.zeros(shape + (dim, dim)) if order >= 2 else None
    for idx, j in items:
        j = j.truncate(order)
        if j.order < order:
            raise ValueError("block piece has lower order than requested")
        val[idx] = j.val
        if d1 is not None and j.d1 is not None:
            d1[idx] = j.d1
        if d2 is not None and j.d2 is not None:
            d2[idx] = j.d2
    return Jet(val, d1, d2, order, dim)


# ---------------------------------------------------------------------------
# fields to jets
# ---------------------------------------------------------------------------


def jet_eval(f: ScalarField, p, order: int = 2) -> Jet:
    """Jet of a field at a point ``(D,)`` or batch ``(P, D)`` from exact symbolic partials."""
    p = np.asarray(p, dtype=float)
    dim = f.chart.dim
    val = np.asarray(f(p), dtype=float)
    if f.is_const:
        return Jet.const(val, dim, order)
    d1 = d2 = None
    deps = [k for k in range(dim) if f.depends_on(k)]
    if order >= 1:
        d1 = np.zeros(val.shape + (dim,))
        for k in deps:
            d1[..., k] = f.partial(k)(p)
    if order >= 2:
        d2 = np.zeros(val.shape + (dim, dim))
        for a, k in enumerate(deps):
            for l in deps[a:]:
                part = f.partial(k, l)
                if part.is_const and part.body == ScalarField.const(f.chart, 0.0).body:
                    continue
                v = part(p)
                d2[..., k, l] = v
                d2[..., l, k] = v
    return Jet(val, d1, d2, order, dim)


def jet_field_array(fields, p, order: int = 2) -> Jet:
    """Jet of a nested list (any rank) of fields; the point batch axis comes first."""
    arr = np.empty(_nested_shape(fields), dtype=object)
    _fill(arr, fields)
    flat = [jet_eval(f, p, order) for f in arr.ravel()]
    p = np.asarray(p, dtype=float)
    lead = () if p.ndim == 1 else (p.shape[0],)
    dim = flat[0].dim
    val = np.zeros(lead + (len(flat),))
    d1 = np.zeros(lead + (len(flat), dim)) if order >= 1 else None
    d2 = np.zeros(lead + (len(flat), dim, dim)) if order >= 2 else None
    for i, j in enumerate(flat):
        val[..., i] = j.val
        if d1 is not None and j.d1 is not None:
            d1[..., i, :] = j.d1
        if d2 is not None and j.d2 is not None:
            d2[..., i, :, :] = j.d2
    s = lead + arr.shape
    return Jet(
        val.reshape(s),
        None if d1 is None else d1.reshape(s + (dim,)),
        None if d2 is None else d2.reshape(s + (dim, dim)),
        order,
        dim,
    )


def _nested_shape(x) -> tuple:
    if isinstance(x, (list, tuple)):
        return (len(x),) + _nested_shape(x[0])
    return ()


def _fill(arr, x, idx=()):
    if isinstance(x, (list, tuple)):
        for i, e in enumerate(x):
            _fill(arr, e, idx + (i,))
    else:
        arr[idx] = x


# ---------------------------------------------------------------------------
# matrix inverse
# ---------------------------------------------------------------------------


def jet_matrix_inverse(A: Jet, cond_limit: float = COND_LIMIT) -> Jet:
    """Inverse of a batch of square jet matrices (last two axes).

    The value part goes through LAPACK (LU with partial pivoting); derivative
    parts follow d(A^-1) = -A^-1 dA A^-1 and its second-order expansion.
    """
    Av = A.val
    if Av.shape[-1] != Av.shape[-2]:
        raise ValueError("matrix must be square")
    if Av.shape[-1] > 5:
        raise ValueError("jet matrices are limited to dimension 5")
    cond = np.atleast_1d(np.linalg.cond(Av, 1))
    bad = ~np.isfinite(cond) | (cond >= cond_limit)
    if bad.any():
        worst = float(np.max(np.where(np.isfinite(cond), cond, np.inf)))
        raise SingularMatrixError("singular matrix", worst)
    X = np.linalg.inv(Av)
    d1 = d2 = None
    if A.order >= 1 and A.d1 is not None:
        d1 = -np.einsum("...ij,...jkz,...kl->...ilz", X, A.d1, X)
    if A.order >= 2 and A.d1 is not None:
        M = np.einsum("...ijz,...jk,...klw->...ilzw", A.d1, X, A.d1)
        inner = M + np.swapaxes(M, -1, -2)
        if A.d2 is not None:
            inner = inner - A.d2
        d2 = np.einsum("...ij,...jkzw,...kl->...ilzw", X, inner, X)
    elif A.order >= 2 and A.d2 is not None:
        d2 = -np.einsum("...ij,...jkzw,...kl->...ilzw", X, A.d2, X)
    return Jet(X, d1, d2, A.order, A.dim)


def matrix_condition(A: np.ndarray) -> np.ndarray:
    return np.linalg.cond(np.asarray(A, dtype=float), 1)


# ---------------------------------------------------------------------------
# quadrature and ODE
# ---------------------------------------------------------------------------


def integrate_v(f: Callable, a: float, b: float, panels: int = 4096) -> float:
    """Composite Simpson estimate of the integral of ``f`` over [a, b].

    ``f`` is called once with the array of nodes.
    """
    w = simpson_weights(panels)
    x = np.linspace(a, b, panels + 1)
    y = np.asarray(f(x), dtype=float)
    y = np.broadcast_to(y, x.shape)
    if not np.all(np.isfinite(y)):
        raise DomainError("non-finite integrand sample", None, x[int(np.argmax(~np.isfinite(y)))])
    return float((b - a) / (3.0 * panels) * (y @ w))


def ode_step_rk4(state, rhs: Callable, h: float, t: float = 0.0) -> np.ndarray:
    """One classical Runge-Kutta step for ``y' = rhs(t, y)``."""
    y = np.asarray(state, dtype=float)

    def call(tt, yy):
        k = np.asarray(rhs(tt, yy), dtype=float)
        if not np.all(np.isfinite(k)):
            raise ArithmeticError("non-finite right-hand side")
        return k

    k1 = call(t, y)
    k2 = call(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = call(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = call(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
