"""Grids, quadrature, fixed-step ODE solvers and bounded-variation helpers.

Everything here is a pure function of its inputs. Higher layers (function
representations, network evaluators, transforms) are built on these
primitives so that every integral in the library goes through the same
left-rectangle rule and every time integration through the same steppers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DivergenceError, DomainError, OverlapError, PreconditionError

__all__ = [
    "GridSpec",
    "TimeGrid",
    "Trajectory",
    "StepFunction",
    "PiecewiseLinearCurve",
    "quad_left",
    "quad_midpoint",
    "euler_solve",
    "rk4_solve",
    "total_variation",
    "linear_smooth",
    "smooth_to_tolerance",
    "interp_linear",
    "tan_compress",
    "sample_uniform",
    "sphere_inputs",
]

Field = Callable[[float, NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True)
class GridSpec:
    """Uniform left-endpoint grid on [0, 1): nodes j/n for j = 0..n-1."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise PreconditionError(f"grid size must be a positive integer, got {self.n!r}")

    @property
    def delta(self) -> float:
        return 1.0 / self.n

    @property
    def nodes(self) -> NDArray[np.float64]:
        return np.arange(self.n, dtype=np.float64) / self.n


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition t_i = i*T/steps of [0, T], endpoints included."""

    steps: int
    T: float = 1.0

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise PreconditionError(f"step count must be a positive integer, got {self.steps!r}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise PreconditionError(f"horizon must be positive and finite, got {self.T!r}")

    @property
    def h(self) -> float:
        return self.T / self.steps

    @property
    def nodes(self) -> NDArray[np.float64]:
        t = np.arange(self.steps + 1, dtype=np.float64) * self.T / self.steps
        t[-1] = self.T  # i*T/steps can miss T by an ulp
        return t


@dataclass(frozen=True)
class Trajectory:
    """States z(t_i) on a time grid plus the per-step slopes that produced them.

    ``rates[i]`` is the effective slope used on step i, so that
    ``states[i + 1] == states[i] + h * rates[i]`` up to rounding.
    """

    grid: TimeGrid
    states: NDArray[np.float64]
    rates: NDArray[np.float64]

    @property
    def final(self) -> NDArray[np.float64]:
        return self.states[-1]

    def integral_form(self) -> NDArray[np.float64]:
        """Reconstruct z(T) as z(0) plus the rectangle-rule integral of the slopes."""
        return self.states[0] + quad_left(self.rates, self.grid.h)


def quad_left(samples: ArrayLike, delta: float, axis: int = 0) -> NDArray[np.float64] | float:
    """Composite left-rectangle rule: ``delta * sum(samples)`` along ``axis``.

    Args:
        samples: Integrand values at the left endpoints of equal cells.
        delta: Cell width.
        axis: Axis holding the sample index.

    Raises:
        PreconditionError: If there are no samples or ``delta <= 0``.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[axis] == 0:
        raise PreconditionError("quad_left needs at least one sample")
    if not delta > 0:
        raise PreconditionError(f"cell width must be positive, got {delta!r}")
    return delta * np.sum(arr, axis=axis)


def quad_midpoint(f: Callable[[NDArray[np.float64]], ArrayLike], a: float, b: float, n: int):
    """Composite midpoint rule for ``f`` on [a, b] with ``n`` cells (never a default)."""
    if n < 1 or not b > a:
        raise PreconditionError("midpoint rule needs n >= 1 and b > a")
    h = (b - a) / n
    x = a + (np.arange(n) + 0.5) * h
    return h * np.sum(np.asarray(f(x), dtype=np.float64), axis=0)


def _check_finite(z: NDArray[np.float64], step: int, where: str = "state"):
    if not np.all(np.isfinite(z)):
        raise DivergenceError(step, where)


def euler_solve(field: Field, z0: ArrayLike, grid: TimeGrid) -> Trajectory:
    """Explicit Euler: z_{i+1} = z_i + h * field(t_i, z_i).

    Raises:
        DivergenceError: On the first step producing a non-finite state.
    """
    z = np.array(z0, dtype=np.float64)
    _check_finite(z, 0)
    h = grid.h
    t = grid.nodes
    states = np.empty((grid.steps + 1,) + z.shape)
    rates = np.empty((grid.steps,) + z.shape)
    states[0] = z
    for i in range(grid.steps):
        rate = np.asarray(field(t[i], z), dtype=np.float64)
        z = z + h * rate
        _check_finite(z, i + 1)
        rates[i] = rate
        states[i + 1] = z
    return Trajectory(grid, states, rates)


def rk4_solve(field: Field, z0: ArrayLike, steps: int, T: float = 1.0) -> Trajectory:
    """Classical fourth-order Runge-Kutta with ``steps`` equal steps on [0, T]."""
    grid = TimeGrid(steps, T)
    z = np.array(z0, dtype=np.float64)
    _check_finite(z, 0)
    h = grid.h
    t = grid.nodes
    states = np.empty((steps + 1,) + z.shape)
    rates = np.empty((steps,) + z.shape)
    states[0] = z
    for i in range(steps):
        ti = t[i]
        k1 = np.asarray(field(ti, z), dtype=np.float64)
        k2 = np.asarray(field(ti + 0.5 * h, z + 0.5 * h * k1), dtype=np.float64)
        k3 = np.asarray(field(ti + 0.5 * h, z + 0.5 * h * k2), dtype=np.float64)
        k4 = np.asarray(field(t[i + 1], z + h * k3), dtype=np.float64)
        rate = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        z = z + h * rate
        _check_finite(z, i + 1)
        rates[i] = rate
        states[i + 1] = z
    return Trajectory(grid, states, rates)


def total_variation(values: Sequence[ArrayLike]) -> float:
    """Sum of Euclidean jumps between consecutive values.

    For a piecewise-constant function this is exactly the supremum over
    partitions, because refining inside a constant piece adds zero terms.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape[0] == 0:
        raise PreconditionError("total_variation needs at least one value")
    if arr.shape[0] == 1:
        return 0.0
    diffs = np.diff(arr.reshape(arr.shape[0], -1), axis=0)
    return float(np.sum(np.sqrt(np.sum(diffs * diffs, axis=1))))


def interp_linear(breakpoints: NDArray[np.float64], x: ArrayLike):
    """Locate ``x`` among ``breakpoints``: returns (index, weight) for linear blending.

    Values are ``(1 - w) * v[i] + w * v[i + 1]``; outside the breakpoint range
    the weights clamp to the end values (constant extension). A single
    breakpoint gives a constant function.
    """
    b = np.asarray(breakpoints, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if b.size == 1:
        return np.zeros(x.shape, dtype=np.intp), np.zeros(x.shape)
    idx = np.clip(np.searchsorted(b, x, side="right") - 1, 0, b.size - 2)
    lo = b[idx]
    w = np.clip((x - lo) / (b[idx + 1] - lo), 0.0, 1.0)
    return idx, w


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function on [0, inf): value ``levels[k]`` on [x_k, x_{k+1})."""

    breakpoints: NDArray[np.float64]
    levels: NDArray[np.float64]

    def __post_init__(self):
        x = np.asarray(self.breakpoints, dtype=np.float64)
        c = np.asarray(self.levels, dtype=np.float64)
        if x.ndim != 1 or x.size == 0 or x[0] != 0.0:
            raise PreconditionError("breakpoints must be a nonempty 1-D array starting at 0")
        if np.any(np.diff(x) <= 0):
            raise PreconditionError("breakpoints must be strictly increasing")
        if c.shape[0] != x.size:
            raise PreconditionError("need exactly one level per breakpoint")
        object.__setattr__(self, "breakpoints", x)
        object.__setattr__(self, "levels", c)

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=np.float64)
        k = np.searchsorted(self.breakpoints, x, side="right") - 1
        return self.levels[np.clip(k, 0, None)]

    @property
    def variation(self) -> float:
        return total_variation(self.levels)


@dataclass(frozen=True, eq=False)
class PiecewiseLinearCurve:
    """Continuous piecewise-linear function through (breakpoints, values), constant outside."""

    breakpoints: NDArray[np.float64]
    values: NDArray[np.float64]

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        idx, w = interp_linear(self.breakpoints, x)
        v = self.values
        if v.shape[0] == 1:
            return np.broadcast_to(v[0], np.shape(x) + v.shape[1:]).copy()
        w = w.reshape(w.shape + (1,) * (v.ndim - 1))
        # increment form: exact on flat pieces and at the left node of every piece
        return v[idx] + w * (v[idx + 1] - v[idx])


def linear_smooth(pwc: StepFunction, delta: float) -> PiecewiseLinearCurve:
    """Replace every jump of ``pwc`` by a linear ramp across [x_k - delta, x_k + delta].

    The result equals ``pwc`` outside the windows, is continuous, and
    satisfies ``int |pwc - smoothed| = delta * V(pwc) / 2``.

    Raises:
        OverlapError: If ``delta`` is at least half the smallest breakpoint gap.
    """
    if not delta > 0:
        raise PreconditionError(f"half-width must be positive, got {delta!r}")
    x, c = pwc.breakpoints, pwc.levels
    if x.size > 1:
        gap = float(np.min(np.diff(x)))
        if delta >= 0.5 * gap:
            raise OverlapError(f"half-width {delta} >= half the minimum gap {gap}")
    nodes = [0.0]
    vals = [c[0]]
    for k in range(1, x.size):
        nodes += [x[k] - delta, x[k] + delta]
        vals += [c[k - 1], c[k]]
    return PiecewiseLinearCurve(np.asarray(nodes), np.asarray(vals, dtype=np.float64))


def smooth_to_tolerance(pwc: StepFunction, eps: float) -> PiecewiseLinearCurve:
    """Smooth with delta = eps / V so that the L1 change is at most eps.

    A function without jumps is returned unchanged (as a curve).
    """
    v = pwc.variation
    if v == 0.0:
        return PiecewiseLinearCurve(np.array([0.0]), pwc.levels[:1].copy())
    return linear_smooth(pwc, eps / v)


def tan_compress(g: Callable[[NDArray[np.float64]], ArrayLike], weighted: bool = True):
    """Pull a function on [0, inf) back to [0, 1) through x = tan(pi*tau/2).

    With ``weighted=True`` the result carries the Jacobian
    (pi/2)(1 + tan^2(pi*tau/2)), so its integral over [0, 1) equals the
    integral of ``g`` over [0, inf) (integrability is the caller's
    responsibility). With ``weighted=False`` it is a pure relabeling.

    The returned callable raises DomainError for tau outside [0, 1).
    """

    def compressed(tau: ArrayLike) -> NDArray[np.float64]:
        tau = np.asarray(tau, dtype=np.float64)
        if np.any(tau < 0.0) or np.any(tau >= 1.0):
            raise DomainError("compressed functions are defined on [0, 1) only")
        x = np.tan(0.5 * np.pi * tau)
        val = np.asarray(g(x), dtype=np.float64)
        if not weighted:
            return val
        jac = 0.5 * np.pi * (1.0 + x * x)
        return val * jac.reshape(jac.shape + (1,) * (val.ndim - jac.ndim))

    return compressed


def sample_uniform(F: Callable[[NDArray[np.float64]], ArrayLike], nu: float, lipschitz: float | None = None):
    """Sample ``F`` on a grid fine enough that each row is within ``nu`` of F on its cell.

    The cell width is ``nu / lipschitz`` (capped at 1), and rows are
    ``F(j * dtau)`` for j = 0..n-1 with ``n = ceil(1 / dtau)``, so the cells
    cover [0, 1).

    Args:
        F: Function on [0, 1); may carry a ``lipschitz`` attribute.
        nu: Target oscillation bound.
        lipschitz: Lipschitz constant of F; overrides ``F.lipschitz``.

    Returns:
        Tuple ``(dtau, rows)`` with ``rows.shape[0] == n``.

    Raises:
        PreconditionError: If ``nu <= 0`` or no Lipschitz constant is known.
    """
    if not nu > 0:
        raise PreconditionError(f"tolerance must be positive, got {nu!r}")
    lip = lipschitz if lipschitz is not None else getattr(F, "lipschitz", None)
    if lip is None:
        raise PreconditionError("sample_uniform needs a Lipschitz constant or modulus for F")
    dtau = 1.0 if lip == 0 else min(1.0, nu / lip)
    n = math.ceil(1.0 / dtau)
    if (n - 1) * dtau >= 1.0:
        n -= 1
    rows = np.asarray(F(np.arange(n) * dtau), dtype=np.float64)
    return dtau, rows


def sphere_inputs(p: int, count: int = 20, r: float = 1.0, seed: int = 0) -> NDArray[np.float64]:
    """The origin followed by ``count`` seeded points on the sphere of radius ``r`` in R^p.

    Directions are normalized standard normal draws from PCG64, so the
    sample depends only on (p, count, r, seed).
    """
    if p < 1 or count < 0 or not r >= 0:
        raise PreconditionError("need p >= 1, count >= 0 and r >= 0")
    g = np.random.default_rng(seed).standard_normal((count, p))
    norms = np.sqrt(np.sum(g * g, axis=1, keepdims=True))
    return np.vstack([np.zeros((1, p)), r * g / norms])
