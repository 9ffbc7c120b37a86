"""Continuum objects and finite matrix families.

A :class:`FunctionRep` is a scalar/vector/matrix valued function on one of a
handful of fixed domains. Three primary forms exist (analytic expressions,
piecewise-constant cell data, piecewise-linear node data); a few derived
forms (tan-warped, restricted, grid-sampled, zero-padded) are produced by the
transforms and serialize the same way.

The second half of the module deals with families of finite networks indexed
by width n: truncation projections, the consistency relations between family
members and the bounded-variation partial sums.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import numerics
from .errors import DomainError, PreconditionError, StructuralError

__all__ = [
    "DOMAINS",
    "Activation",
    "RELU",
    "TANH",
    "IDENTITY",
    "ZERO",
    "LayerActivation",
    "ActivationField",
    "FunctionRep",
    "Analytic",
    "PiecewiseConstant",
    "PiecewiseLinear",
    "Warped",
    "Restricted",
    "GridSampled",
    "ZeroPadded",
    "constant",
    "function_from_json",
    "expr_bounds",
    "projection",
    "FamilyMember",
    "MatrixFamily",
    "ConsistencyReport",
    "VariationReport",
    "check_consistency",
    "sequence_variation",
    "interpolant_depth",
    "interpolant_activation",
]

# domain tag -> (number of axes, index of the time axis or None)
DOMAINS: dict[str, tuple[int, int | None]] = {
    "unit": (1, None),
    "halfline": (1, None),
    "time": (1, 0),
    "square": (2, None),
    "quadrant": (2, None),
    "strip": (2, 1),
    "box": (3, 2),
}
_UNBOUNDED = {"halfline", "quadrant"}

# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

_BASE_KINDS = {
    "relu": lambda v: np.maximum(v, 0.0),
    "tanh": np.tanh,
    "identity": lambda v: v,
    "zero": np.zeros_like,
}


@dataclass(frozen=True)
class Activation:
    """Componentwise scalar activation: relu, tanh, identity, zero or ``scaled``.

    ``Activation("scaled", factor, of)`` is ``factor * of(v)``. Scaled
    activations are kept as a wrapper rather than folded into one factor,
    because network layers apply the factors outside the neuron sum in a
    fixed order (this is what makes Euler steps and residual layers agree
    bit for bit).
    """

    kind: str
    factor: float = 1.0
    of: Activation | None = None

    def __post_init__(self):
        if self.kind == "scaled":
            if self.of is None:
                raise PreconditionError("scaled activation needs an inner activation")
        elif self.kind not in _BASE_KINDS:
            raise PreconditionError(f"unknown activation kind {self.kind!r}")

    def __call__(self, v: ArrayLike) -> NDArray[np.float64]:
        v = np.asarray(v, dtype=np.float64)
        if self.kind == "scaled":
            return self.factor * self.of(v)
        return _BASE_KINDS[self.kind](v)

    def scaled(self, factor: float) -> Activation:
        return Activation("scaled", float(factor), self)

    def unwrap(self) -> tuple[float, Activation]:
        """Product of all scale factors and the innermost base activation."""
        f, act = 1.0, self
        while act.kind == "scaled":
            f *= act.factor
            act = act.of
        return f, act

    @property
    def is_zero(self) -> bool:
        f, base = self.unwrap()
        return base.kind == "zero" or f == 0.0

    def to_json(self) -> dict:
        if self.kind == "scaled":
            return {"kind": "scaled", "factor": self.factor, "of": self.of.to_json()}
        return {"kind": self.kind}

    @classmethod
    def from_json(cls, d: dict | str) -> Activation:
        if isinstance(d, str):
            return cls(d)
        if d.get("kind") == "scaled":
            return cls("scaled", float(d["factor"]), cls.from_json(d["of"]))
        return cls(d["kind"])


RELU = Activation("relu")
TANH = Activation("tanh")
IDENTITY = Activation("identity")
ZERO = Activation("zero")


@dataclass(frozen=True, eq=False)
class LayerActivation:
    """Per-layer activation of a finite net: neuron j computes ``gains[j] * activation(v)``."""

    activation: Activation
    gains: NDArray[np.float64] | None = None

    def __post_init__(self):
        if self.gains is not None:
            g = np.asarray(self.gains, dtype=np.float64)
            if g.ndim != 1:
                raise StructuralError("neuron gains must be a 1-D array")
            object.__setattr__(self, "gains", g)

    def __call__(self, v: ArrayLike) -> NDArray[np.float64]:
        out = self.activation(v)
        if self.gains is None:
            return out
        return self.gains.reshape((-1,) + (1,) * (out.ndim - 1)) * out

    def truncate(self, n: int) -> LayerActivation:
        return LayerActivation(self.activation, None if self.gains is None else self.gains[:n])

    def to_json(self) -> dict:
        d = {"activation": self.activation.to_json()}
        if self.gains is not None:
            d["gains"] = self.gains.tolist()
        return d

    @classmethod
    def from_json(cls, d: dict | str) -> LayerActivation:
        if isinstance(d, str) or "activation" not in d:
            return cls(Activation.from_json(d))
        gains = d.get("gains")
        return cls(Activation.from_json(d["activation"]), None if gains is None else np.asarray(gains, float))


@dataclass(frozen=True, eq=False)
class ActivationField:
    """Label-dependent activation ``gain(labels) * activation(v)``; no gain means gain 1."""

    activation: Activation
    gain: FunctionRep | None = None

    def gains(self, *labels) -> NDArray[np.float64] | None:
        if self.gain is None:
            return None
        return self.gain(*labels)

    def to_json(self) -> dict:
        d = {"activation": self.activation.to_json()}
        if self.gain is not None:
            d["gain"] = self.gain.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict | str) -> ActivationField:
        if isinstance(d, str) or "activation" not in d:
            return cls(Activation.from_json(d))
        gain = d.get("gain")
        return cls(Activation.from_json(d["activation"]), None if gain is None else function_from_json(gain))


# ---------------------------------------------------------------------------
# analytic expressions
# ---------------------------------------------------------------------------
#
# Grammar (JSON):
#   number                                   constant
#   {"var": k}                               k-th coordinate
#   {"poly": [c0, c1, ...], "var": k}        c0 + c1 x_k + c2 x_k^2 + ...
#   {"sin": e} | {"cos": e} | {"exp": e}
#   {"gauss": k, "center": c, "width": w}    exp(-(x_k - c)^2 / (2 w^2))
#   {"add": [e, ...]} | {"mul": [e, ...]}


def _eval_expr(e: Any, x: Sequence[NDArray[np.float64]]):
    if isinstance(e, (int, float)):
        return float(e)
    if "add" in e:
        out = 0.0
        for t in e["add"]:
            out = out + _eval_expr(t, x)
        return out
    if "mul" in e:
        out = 1.0
        for t in e["mul"]:
            out = out * _eval_expr(t, x)
        return out
    if "poly" in e:
        xv = x[e.get("var", 0)]
        out = 0.0
        for c in reversed(e["poly"]):
            out = out * xv + c
        return out
    if "var" in e:
        return x[e["var"]]
    if "sin" in e:
        return np.sin(_eval_expr(e["sin"], x))
    if "cos" in e:
        return np.cos(_eval_expr(e["cos"], x))
    if "exp" in e:
        return np.exp(_eval_expr(e["exp"], x))
    if "gauss" in e:
        d = x[e["gauss"]] - e["center"]
        return np.exp(-(d * d) / (2.0 * e["width"] ** 2))
    raise PreconditionError(f"unknown expression node {e!r}")


def _expr_vars(e: Any) -> set[int]:
    if isinstance(e, (int, float)):
        return set()
    if "add" in e or "mul" in e:
        return set().union(*(_expr_vars(t) for t in e.get("add", e.get("mul"))))
    if "poly" in e:
        return {e.get("var", 0)} if len(e["poly"]) > 1 else set()
    if "var" in e:
        return {e["var"]}
    if "gauss" in e:
        return {e["gauss"]}
    for key in ("sin", "cos", "exp"):
        if key in e:
            return _expr_vars(e[key])
    raise PreconditionError(f"unknown expression node {e!r}")


def _imul(a, b):
    p = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    p = [0.0 if math.isnan(v) else v for v in p]
    return min(p), max(p)


def expr_bounds(e: Any, extents: Sequence[float]) -> tuple[float, float, float]:
    """Interval bounds (lo, hi) and a Lipschitz constant of an expression.

    The Lipschitz constant is with respect to the Euclidean norm on the
    coordinates, each coordinate ranging over [0, extent]. Infinite values
    signal that no finite bound is available.
    """
    if isinstance(e, (int, float)):
        return float(e), float(e), 0.0
    if "add" in e:
        lo = hi = lip = 0.0
        for t in e["add"]:
            a, b, c = expr_bounds(t, extents)
            lo, hi, lip = lo + a, hi + b, lip + c
        return lo, hi, lip
    if "mul" in e:
        lo, hi, lip = 1.0, 1.0, 0.0
        for t in e["mul"]:
            a, b, c = expr_bounds(t, extents)
            m_prev = max(abs(lo), abs(hi))
            m_new = max(abs(a), abs(b))
            lip = (0.0 if c == 0 else c * m_prev) + (0.0 if lip == 0 else lip * m_new)
            lo, hi = _imul((lo, hi), (a, b))
        return lo, hi, lip
    if "poly" in e:
        c = e["poly"]
        r = extents[e.get("var", 0)]
        spread = sum(abs(ck) * r**k for k, ck in enumerate(c) if k > 0)
        lip = sum(k * abs(ck) * r ** (k - 1) for k, ck in enumerate(c) if k > 0)
        return c[0] - spread, c[0] + spread, lip
    if "var" in e:
        return 0.0, extents[e["var"]], 1.0
    if "sin" in e or "cos" in e:
        _, _, lip = expr_bounds(e.get("sin", e.get("cos")), extents)
        return -1.0, 1.0, lip
    if "exp" in e:
        a, b, c = expr_bounds(e["exp"], extents)
        top = math.exp(b) if b < 700 else math.inf
        return math.exp(a) if a > -745 else 0.0, top, top * c if c else 0.0
    if "gauss" in e:
        return 0.0, 1.0, 1.0 / (abs(e["width"]) * math.sqrt(math.e))
    raise PreconditionError(f"unknown expression node {e!r}")


# ---------------------------------------------------------------------------
# function representations
# ---------------------------------------------------------------------------


class FunctionRep:
    """Function on a declared domain with a fixed codomain shape.

    Call with one array per domain axis (broadcastable); the result has
    shape ``broadcast_shape + self.shape``.
    """

    form: str = ""

    def __init__(self, domain: str, shape: Sequence[int], horizon: float = 1.0, lipschitz: float | None = None):
        if domain not in DOMAINS:
            raise PreconditionError(f"unknown domain {domain!r}")
        if not horizon > 0:
            raise PreconditionError("time horizon must be positive")
        self.domain = domain
        self.shape = tuple(int(s) for s in shape)
        self.horizon = float(horizon)
        self.lipschitz = None if lipschitz is None or not math.isfinite(lipschitz) else float(lipschitz)

    @property
    def ndim(self) -> int:
        return DOMAINS[self.domain][0]

    @property
    def extents(self) -> tuple[float, ...]:
        n, t_axis = DOMAINS[self.domain]
        unb = math.inf if self.domain in _UNBOUNDED else 1.0
        return tuple(self.horizon if k == t_axis else unb for k in range(n))

    def __call__(self, *coords: ArrayLike) -> NDArray[np.float64]:
        if len(coords) != self.ndim:
            raise StructuralError(f"{self.domain} functions take {self.ndim} coordinates, got {len(coords)}")
        xs = np.broadcast_arrays(*[np.asarray(c, dtype=np.float64) for c in coords])
        return self._eval(xs)

    def _eval(self, xs: list[NDArray[np.float64]]) -> NDArray[np.float64]:
        raise NotImplementedError

    def _payload(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> dict:
        d = {"domain": self.domain, "shape": list(self.shape), "form": self.form, "payload": self._payload()}
        if DOMAINS[self.domain][1] is not None:
            d["horizon"] = self.horizon
        if self.lipschitz is not None:
            d["lipschitz"] = self.lipschitz
        return d

    def __repr__(self):
        return f"{type(self).__name__}(domain={self.domain!r}, shape={self.shape})"


def _out(val, base_shape, shape):
    return np.broadcast_to(np.asarray(val, dtype=np.float64), base_shape).astype(np.float64, copy=False)


class Analytic(FunctionRep):
    """Expression from the builtin family; ``exprs`` is nested like ``shape``."""

    form = "analytic"

    def __init__(self, domain, shape, exprs, horizon=1.0, lipschitz=None, *, auto_lipschitz=True):
        super().__init__(domain, shape, horizon, lipschitz)
        arr = np.empty(self.shape, dtype=object)
        if self.shape == ():
            arr[()] = exprs
        else:
            arr[...] = _nested_to_objarray(exprs, self.shape)
        self.exprs = arr
        if lipschitz is None and auto_lipschitz:
            lips = [expr_bounds(e, self.extents)[2] for e in arr.flat]
            lip = math.sqrt(sum(v * v for v in lips))
            self.lipschitz = lip if math.isfinite(lip) else None

    def _eval(self, xs):
        base = xs[0].shape
        out = np.empty(base + self.shape)
        for idx in np.ndindex(*self.shape):
            out[(Ellipsis,) + idx] = _out(_eval_expr(self.exprs[idx], xs), base, self.shape)
        return out

    def depends_on(self, axis: int) -> bool:
        return any(axis in _expr_vars(e) for e in self.exprs.flat)

    def _payload(self):
        return {"exprs": self.exprs.tolist() if self.shape else self.exprs[()]}


def _nested_to_objarray(nested, shape):
    arr = np.empty(shape, dtype=object)
    for idx in np.ndindex(*shape):
        v = nested
        for i in idx:
            v = v[i]
        arr[idx] = v
    return arr


def constant(value: ArrayLike, domain: str = "unit", horizon: float = 1.0) -> Analytic:
    """Constant function with the shape of ``value``."""
    v = np.asarray(value, dtype=np.float64)
    return Analytic(domain, v.shape, v.tolist() if v.shape else float(v), horizon)


def _cell_index(x: NDArray[np.float64], n: int, ext: float) -> NDArray[np.intp]:
    # right-continuous: the cell starting at a node owns that node
    k = np.clip(np.floor(x * n / ext).astype(np.intp), 0, n - 1)
    k = np.where((k > 0) & (x < k * ext / n), k - 1, k)
    k = np.where((k < n - 1) & (x >= (k + 1) * ext / n), k + 1, k)
    return k


class PiecewiseConstant(FunctionRep):
    """Cell values on a uniform grid over every domain axis (right-continuous)."""

    form = "piecewise_constant"

    def __init__(self, domain, cells: ArrayLike, horizon=1.0, lipschitz=None):
        cells = np.asarray(cells, dtype=np.float64)
        nd = DOMAINS[domain][0]
        if domain in _UNBOUNDED:
            raise PreconditionError("uniform cells need a bounded domain")
        if cells.ndim < nd:
            raise StructuralError("cell array has fewer axes than the domain")
        flat = cells.reshape(cells.shape[:nd] + (-1,))
        if lipschitz is None and np.all(flat == flat.reshape(-1, flat.shape[-1])[0]):
            lipschitz = 0.0
        super().__init__(domain, cells.shape[nd:], horizon, lipschitz)
        self.cells = cells

    @property
    def grid_sizes(self) -> tuple[int, ...]:
        return self.cells.shape[: self.ndim]

    def _eval(self, xs):
        idx = tuple(_cell_index(x, n, e) for x, n, e in zip(xs, self.grid_sizes, self.extents))
        return self.cells[idx]

    def _payload(self):
        return {"cells": self.cells.tolist()}


class PiecewiseLinear(FunctionRep):
    """Multilinear interpolation along ``axes`` through node data, constant outside.

    Node data is either a numeric array (``values`` with one leading axis per
    interpolated axis) or, for a single interpolated axis, a list of
    function-valued nodes ``coefs[k] * nodes[k](other coordinates)`` where a
    ``None`` node stands for the constant 1.
    """

    form = "piecewise_linear"

    def __init__(self, domain, shape, axes, breakpoints, values=None, nodes=None, coefs=None,
                 horizon=1.0, lipschitz=None):
        super().__init__(domain, shape, horizon, lipschitz)
        self.axes = tuple(int(a) for a in axes)
        self.breakpoints = tuple(np.asarray(b, dtype=np.float64) for b in breakpoints)
        if len(self.axes) != len(self.breakpoints) or not self.axes:
            raise StructuralError("need one breakpoint array per interpolated axis")
        for b in self.breakpoints:
            if b.ndim != 1 or b.size == 0 or np.any(np.diff(b) <= 0):
                raise PreconditionError("breakpoints must be nonempty and strictly increasing")
        if (values is None) == (nodes is None):
            raise StructuralError("give exactly one of numeric values or function nodes")
        if values is not None:
            self.values = np.asarray(values, dtype=np.float64)
            expect = tuple(b.size for b in self.breakpoints) + self.shape
            if self.values.shape != expect:
                raise StructuralError(f"values have shape {self.values.shape}, expected {expect}")
            self.nodes = None
            if lipschitz is None:
                self.lipschitz = self._numeric_lipschitz()
        else:
            if len(self.axes) != 1:
                raise StructuralError("function-valued nodes support one interpolated axis")
            self.values = None
            self.nodes = tuple(nodes)
            self.coefs = np.ones(len(nodes)) if coefs is None else np.asarray(coefs, dtype=np.float64)
            if len(self.nodes) != self.breakpoints[0].size or self.coefs.size != len(self.nodes):
                raise StructuralError("need one node and coefficient per breakpoint")

    def _numeric_lipschitz(self):
        lip2 = 0.0
        for k, b in enumerate(self.breakpoints):
            if b.size < 2:
                continue
            d = np.diff(self.values, axis=k)
            d = d.reshape(d.shape[: len(self.axes)] + (-1,))
            norms = np.sqrt(np.sum(d * d, axis=-1))
            steps = np.diff(b).reshape((1,) * k + (-1,) + (1,) * (len(self.axes) - k - 1))
            lip2 += float(np.max(norms / steps)) ** 2
        return math.sqrt(lip2)

    def _eval(self, xs):
        base = xs[0].shape
        if self.values is not None:
            return self._eval_numeric(xs, base)
        return self._eval_nodes(xs, base)

    def _eval_numeric(self, xs, base):
        located = [numerics.interp_linear(b, xs[a]) for a, b in zip(self.axes, self.breakpoints)]
        out = np.zeros(base + self.shape)
        pad = (1,) * len(self.shape)
        choices = [(0,) if b.size == 1 else (0, 1) for b in self.breakpoints]
        for corner in itertools.product(*choices):
            weight = 1.0
            index = []
            for c, (idx, w) in zip(corner, located):
                weight = weight * (w if c else 1.0 - w)
                index.append(idx + c)
            out = out + np.reshape(weight, base + pad) * self.values[tuple(index)]
        return out

    def _eval_nodes(self, xs, base):
        axis = self.axes[0]
        b = self.breakpoints[0]
        idx, w = numerics.interp_linear(b, xs[axis])
        rest = [x for k, x in enumerate(xs) if k != axis]
        out = np.zeros(base + self.shape)
        pad = (1,) * len(self.shape)
        corners = [(idx, 1.0 - w)] if b.size == 1 else [(idx, 1.0 - w), (idx + 1, w)]
        for k_arr, wc in corners:
            active = wc != 0
            for k in np.unique(k_arr[active]):
                mask = active & (k_arr == k)
                node = self.nodes[k]
                if node is None:
                    val = np.ones((np.count_nonzero(mask),) + self.shape)
                else:
                    val = node(*[r[mask] for r in rest])
                out[mask] += self.coefs[k] * np.reshape(wc[mask], (-1,) + pad) * val
        return out

    def _payload(self):
        d = {"axes": list(self.axes), "breakpoints": [b.tolist() for b in self.breakpoints]}
        if self.values is not None:
            d["values"] = self.values.tolist()
        else:
            d["nodes"] = [None if n is None else n.to_json() for n in self.nodes]
            d["coefs"] = self.coefs.tolist()
        return d


_WARP_DOMAIN = {"halfline": "unit", "quadrant": "square"}


class Warped(FunctionRep):
    """Pull-back of a [0, inf) function to [0, 1) through x = tan(pi*tau/2).

    Axes in ``jacobian_axes`` also pick up the factor (pi/2)(1 + x^2), so
    integrals over those axes are preserved.
    """

    form = "warped"

    def __init__(self, base: FunctionRep, jacobian_axes: Sequence[int] = ()):
        if base.domain not in _WARP_DOMAIN:
            raise PreconditionError("only functions on [0, inf) or [0, inf)^2 can be warped")
        super().__init__(_WARP_DOMAIN[base.domain], base.shape)
        self.base = base
        self.jacobian_axes = tuple(int(a) for a in jacobian_axes)

    def _eval(self, xs):
        for x in xs:
            if np.any(x < 0.0) or np.any(x >= 1.0):
                raise DomainError("compressed functions are defined on [0, 1) only")
        us = [np.tan(0.5 * np.pi * x) for x in xs]
        val = self.base(*us)
        pad = (1,) * len(self.shape)
        for a in self.jacobian_axes:
            val = val * np.reshape(0.5 * np.pi * (1.0 + us[a] * us[a]), us[a].shape + pad)
        return val

    def _payload(self):
        return {"base": self.base.to_json(), "jacobian_axes": list(self.jacobian_axes)}


_DROP_AXIS = {("box", 2): "square", ("strip", 1): "unit", ("strip", 0): "time", ("square", 0): "unit",
              ("square", 1): "unit", ("box", 0): "strip", ("box", 1): "strip"}


class Restricted(FunctionRep):
    """``base`` with one coordinate frozen at ``value``."""

    form = "restricted"

    def __init__(self, base: FunctionRep, axis: int, value: float):
        key = (base.domain, int(axis))
        if key not in _DROP_AXIS:
            raise PreconditionError(f"cannot restrict a {base.domain} function along axis {axis}")
        super().__init__(_DROP_AXIS[key], base.shape, base.horizon)
        self.base, self.axis, self.value = base, int(axis), float(value)

    def _eval(self, xs):
        full = list(xs)
        full.insert(self.axis, np.full(xs[0].shape, self.value))
        return self.base(*full)

    def _payload(self):
        return {"base": self.base.to_json(), "axis": self.axis, "value": self.value}


class GridSampled(FunctionRep):
    """Time-dependent array obtained by sampling the label axes of ``base`` on the n-grid.

    ``base`` lives on ``strip`` (labels tau, time t) or ``box`` (labels tau,
    s, time t); the result is a function of t with shape ``(n,)`` or
    ``(n, n)`` (times the base shape).
    """

    form = "grid_sampled"

    def __init__(self, base: FunctionRep, n: int):
        if base.domain not in ("strip", "box"):
            raise PreconditionError("grid sampling needs a strip or box function")
        self.n_labels = DOMAINS[base.domain][0] - 1
        super().__init__("time", (n,) * self.n_labels + base.shape, base.horizon)
        self.base, self.n = base, int(n)
        nodes = numerics.GridSpec(self.n).nodes
        self._labels = np.meshgrid(*([nodes] * self.n_labels), indexing="ij")
        self._cache: dict[float, NDArray[np.float64]] = {}
        self._cached_bytes = 0

    # samples are reused across inputs integrated on the same time grid
    CACHE_BYTES = 2**28

    def at(self, t: float) -> NDArray[np.float64]:
        t = float(t)
        val = self._cache.get(t)
        if val is not None:
            return val
        val = self.base(*self._labels, np.full(self._labels[0].shape, t))
        val.flags.writeable = False
        if self._cached_bytes + val.nbytes <= self.CACHE_BYTES:
            self._cache[t] = val
            self._cached_bytes += val.nbytes
        return val

    def _eval(self, xs):
        t = xs[0]
        out = np.empty(t.shape + self.shape)
        for idx in np.ndindex(*t.shape):
            out[idx] = self.at(t[idx])
        return out

    def _payload(self):
        return {"base": self.base.to_json(), "n": self.n}


class ZeroPadded(FunctionRep):
    """Append a zero column: shape (q,) becomes (q, 2) with ``[base, 0]``."""

    form = "zero_padded"

    def __init__(self, base: FunctionRep):
        super().__init__(base.domain, base.shape + (2,), base.horizon, base.lipschitz)
        self.base = base

    def _eval(self, xs):
        val = self.base(*xs)
        return np.stack([val, np.zeros_like(val)], axis=-1)

    def _payload(self):
        return {"base": self.base.to_json()}


def function_from_json(d: dict) -> FunctionRep:
    """Inverse of :meth:`FunctionRep.to_json`."""
    unknown = set(d) - {"domain", "shape", "form", "payload", "lipschitz", "horizon"}
    if unknown:
        raise PreconditionError(f"unknown function keys {sorted(unknown)}")
    form, p = d["form"], d["payload"]
    domain, horizon, lip = d.get("domain"), d.get("horizon", 1.0), d.get("lipschitz")
    shape = tuple(d.get("shape", ()))
    if form == "analytic":
        return Analytic(domain, shape, p["exprs"], horizon, lip)
    if form == "piecewise_constant":
        return PiecewiseConstant(domain, p["cells"], horizon, lip)
    if form == "piecewise_linear":
        if "values" in p:
            return PiecewiseLinear(domain, shape, p["axes"], p["breakpoints"], values=p["values"],
                                   horizon=horizon, lipschitz=lip)
        nodes = [None if n is None else function_from_json(n) for n in p["nodes"]]
        return PiecewiseLinear(domain, shape, p["axes"], p["breakpoints"], nodes=nodes, coefs=p.get("coefs"),
                               horizon=horizon, lipschitz=lip)
    if form == "warped":
        return Warped(function_from_json(p["base"]), p.get("jacobian_axes", ()))
    if form == "restricted":
        return Restricted(function_from_json(p["base"]), p["axis"], p["value"])
    if form == "grid_sampled":
        return GridSampled(function_from_json(p["base"]), p["n"])
    if form == "zero_padded":
        return ZeroPadded(function_from_json(p["base"]))
    raise PreconditionError(f"unknown function form {form!r}")


# ---------------------------------------------------------------------------
# finite families
# ---------------------------------------------------------------------------


def projection(n: int, n_prime: int) -> NDArray[np.float64]:
    """Truncation matrix [I_n 0] from R^{n'} to R^n."""
    if not 0 < n <= n_prime:
        raise PreconditionError(f"projection needs 0 < n <= n', got n={n}, n'={n_prime}")
    return np.eye(n, n_prime)


@dataclass(frozen=True, eq=False)
class FamilyMember:
    L: NDArray[np.float64]
    W: tuple[NDArray[np.float64], ...]
    P: NDArray[np.float64]
    activations: tuple[LayerActivation, ...]


class MatrixFamily:
    """Width-indexed family of finite nets, given by a generator ``n -> FamilyMember``."""

    def __init__(self, generator: Callable[[int], FamilyMember]):
        self._generator = generator

    def __call__(self, n: int) -> FamilyMember:
        m = self._generator(n)
        L, P = np.asarray(m.L, float), np.asarray(m.P, float)
        W = tuple(np.asarray(w, float) for w in m.W)
        acts = tuple(a if isinstance(a, LayerActivation) else LayerActivation(a) for a in m.activations)
        if L.ndim != 2 or L.shape[0] != n:
            raise StructuralError(f"L^{n} has shape {L.shape}, expected ({n}, p)")
        if P.ndim != 2 or P.shape[1] != n:
            raise StructuralError(f"P^{n} has shape {P.shape}, expected (q, {n})")
        if len(acts) != len(W):
            raise StructuralError("need one activation per layer")
        for i, w in enumerate(W):
            if w.shape != (n, n):
                raise StructuralError(f"W_{i + 1}^{n} has shape {w.shape}, expected ({n}, {n})")
        for i, a in enumerate(acts):
            if a.gains is not None and a.gains.shape != (n,):
                raise StructuralError(f"activation gains of layer {i + 1} have length {a.gains.size}, expected {n}")
        return FamilyMember(L, W, P, acts)

    @property
    def layers(self) -> int:
        return len(self(1).W)

    @classmethod
    def from_arrays(cls, L, W, P, activations, gains=None) -> MatrixFamily:
        """Consistent family grown from full-size arrays.

        L grows by rows, P by columns, and each W by a bordered block; the
        upper-right coupling is forced to zero (W is made lower triangular),
        which is exactly what the truncation relation for W requires.
        """
        L = np.asarray(L, float)
        P = np.asarray(P, float)
        W = [np.tril(np.asarray(w, float)) for w in W]
        acts = [a if isinstance(a, Activation) else Activation.from_json(a) for a in activations]
        gains = [None] * len(W) if gains is None else [None if g is None else np.asarray(g, float) for g in gains]
        n_full = L.shape[0]
        if P.shape[1] != n_full or any(w.shape != (n_full, n_full) for w in W):
            raise StructuralError("full arrays must share the same width")

        def member(n):
            if n > n_full:
                raise PreconditionError(f"family only defined up to n = {n_full}")
            return FamilyMember(L[:n], tuple(w[:n, :n] for w in W), P[:, :n],
                                tuple(LayerActivation(a, None if g is None else g[:n]) for a, g in zip(acts, gains)))

        fam = cls(member)
        fam.max_size = n_full
        fam.source = {"L": L, "W": W, "P": P, "activations": acts, "gains": gains}
        return fam


@dataclass(frozen=True)
class ConsistencyReport:
    passed: bool
    relation: str | None
    max_residual: float
    pair: tuple[int, int] | None = None


def check_consistency(family: MatrixFamily, sizes: Sequence[int], samples: int = 100, seed: int = 0,
                      tol: float = 1e-12, box: float = 10.0) -> ConsistencyReport:
    """Check the four truncation relations for every ordered pair of sizes.

    Relations, for n <= n': L^n = Pi L^{n'}; P^n = P^{n'} Pi^T (columns
    truncate); W^n Pi = Pi W^{n'}; sigma^n(Pi Z) = Pi sigma^{n'}(Z) on
    ``samples`` seeded vectors from [-box, box]^{n'}. Residuals are
    Frobenius norms (max over samples for activations).
    """
    sizes = list(sizes)
    if not sizes or sorted(sizes) != sizes:
        raise PreconditionError("sizes must be nonempty and ascending")
    members = {n: family(n) for n in sizes}
    rng = np.random.default_rng(seed)
    first, worst, first_pair = None, 0.0, None
    for a, n in enumerate(sizes):
        for n2 in sizes[a:]:
            m, m2 = members[n], members[n2]
            if len(m.W) != len(m2.W) or m.L.shape[1] != m2.L.shape[1] or m.P.shape[0] != m2.P.shape[0]:
                raise StructuralError(f"members {n} and {n2} have incompatible shapes")
            Pi = projection(n, n2)
            checks = [("L", np.linalg.norm(m.L - Pi @ m2.L))]
            checks += [(f"W{i + 1}", np.linalg.norm(w @ Pi - Pi @ w2)) for i, (w, w2) in enumerate(zip(m.W, m2.W))]
            checks.append(("P", np.linalg.norm(m.P - m2.P @ Pi.T)))
            Z = rng.uniform(-box, box, size=(n2, samples))
            for i, (s, s2) in enumerate(zip(m.activations, m2.activations)):
                diff = s(Pi @ Z) - Pi @ s2(Z)
                checks.append((f"sigma{i + 1}", float(np.max(np.sqrt(np.sum(diff * diff, axis=0))))))
            for name, r in checks:
                r = float(r)
                worst = max(worst, r)
                if first is None and r > tol:
                    first, first_pair = name, (n, n2)
    return ConsistencyReport(first is None, first, worst, first_pair)


@dataclass(frozen=True)
class VariationReport:
    L_var: float
    W_var: tuple[float, ...]
    P_var: float
    sigma_var: tuple[float, ...]
    diverged: bool


def sequence_variation(family: MatrixFamily, n_max: int, cap: float = 1e6, samples: int = 1000,
                       box: float = 10.0, seed: int = 0) -> VariationReport:
    """Partial sums n = 1..n_max of the bounded-variation increments.

    The W term is taken literally: for every column m it sums
    |W^{n+1}(n+1, m) - W^n(n, m)| + |W^n(n, m) - W^n(n, m-1)| over n >= m,
    dropping the second part when m = 1; the reported value is the largest
    of these sums over m. The activation supremum is a maximum over
    ``samples`` seeded points of [-box, box]^{n+1} (an under-approximation).
    """
    if n_max < 2:
        raise PreconditionError("n_max must be at least 2")
    rng = np.random.default_rng(seed)
    members = [None] + [family(n) for n in range(1, n_max + 2)]
    ell = len(members[1].W)
    L_var = P_var = 0.0
    W_cols = np.zeros((ell, n_max + 1))
    sig = np.zeros(ell)
    diverged = False
    for n in range(1, n_max + 1):
        a, b = members[n], members[n + 1]
        L_var += float(np.linalg.norm(b.L[n] - a.L[n - 1]))
        P_var += float(np.linalg.norm(b.P[:, n] - a.P[:, n - 1]))
        Pi = projection(n, n + 1)
        Z = rng.uniform(-box, box, size=(n + 1, samples))
        for i in range(ell):
            for m in range(1, n + 1):
                term = abs(b.W[i][n, m - 1] - a.W[i][n - 1, m - 1])
                if m > 1:
                    term += abs(a.W[i][n - 1, m - 1] - a.W[i][n - 1, m - 2])
                W_cols[i, m] += term
            d = Pi @ b.activations[i](Z) - a.activations[i](Pi @ Z)
            sig[i] += float(np.max(np.sqrt(np.sum(d * d, axis=0))))
        if max(L_var, P_var, W_cols.max(), sig.max(initial=0.0)) > cap:
            diverged = True
            break
    return VariationReport(L_var, tuple(float(v) for v in W_cols.max(axis=1)), P_var,
                           tuple(float(v) for v in sig), diverged)


def interpolant_depth(values: Sequence[ArrayLike], T: float = 1.0) -> PiecewiseLinear:
    """Piecewise-linear function of t through value k at node k*T/l, constant on the last interval."""
    vals = np.asarray(values, dtype=np.float64)
    ell = vals.shape[0]
    if ell < 1:
        raise PreconditionError("need at least one value")
    nodes = np.arange(ell, dtype=np.float64) * T / ell
    return PiecewiseLinear("time", vals.shape[1:], (0,), (nodes,), values=vals, horizon=T)


def interpolant_activation(acts: Sequence[LayerActivation], T: float = 1.0, rescale: bool = True) -> ActivationField:
    """Interpolate per-layer activations over t; with ``rescale`` node k carries (l/T) * sigma_k.

    All layers must share one base activation kind; the scale factors and
    neuron gains become a piecewise-linear gain in t.
    """
    ell = len(acts)
    if ell < 1:
        raise PreconditionError("need at least one activation")
    unwrapped = [a.activation.unwrap() for a in acts]
    kinds = {base.kind for _, base in unwrapped}
    if len(kinds) != 1:
        raise StructuralError(f"layers mix activation kinds {sorted(kinds)}")
    base = unwrapped[0][1]
    scale = ell / T if rescale else 1.0
    has_gains = any(a.gains is not None for a in acts)
    if has_gains:
        n = next(a.gains.size for a in acts if a.gains is not None)
        vals = [scale * f * (np.ones(n) if a.gains is None else a.gains) for (f, _), a in zip(unwrapped, acts)]
    else:
        vals = [scale * f for f, _ in unwrapped]
    return ActivationField(base, interpolant_depth(vals, T))
