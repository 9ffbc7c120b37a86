"""Convergence sweeps, order fits, two-route checks and seeded problem generation.

Every sweep entry is an independent evaluation, so entries may run on a
thread pool; records are always assembled in resolution order and carry no
wall-clock data unless asked to, which keeps reports bitwise reproducible.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .continuum_nets import (
    ContinuumNetParams,
    DipanetParams,
    OdeNetParams,
    Solver,
    eval_continuum,
    eval_dipanet,
    eval_neuralode,
)
from .errors import DipanetError, PreconditionError
from .finite_nets import FiniteNetParams, eval_finite
from .funcrep import Activation, ActivationField, Analytic, LayerActivation
from .numerics import sphere_inputs
from .transforms import ROUTES, discretize_depth, discretize_width, roundtrip_corollary1

__all__ = [
    "ConvergenceRecord",
    "SweepReport",
    "fit_order",
    "sweep_depth",
    "sweep_width",
    "two_route_check",
    "random_params",
    "default_inputs",
    "ARCHITECTURES",
    "DEGENERATE_ERROR",
]

DEGENERATE_ERROR = 1e-14


@dataclass(frozen=True)
class ConvergenceRecord:
    resolution: int
    error: float
    reference_tag: str
    runtime_s: float = 0.0
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SweepReport:
    """Ordered records plus the fitted order (None when degenerate)."""

    records: tuple[ConvergenceRecord, ...]
    fitted_order: float | None

    @property
    def degenerate(self) -> bool:
        return self.fitted_order is None

    @property
    def errors(self) -> list[float]:
        return [r.error for r in self.records]

    @property
    def resolutions(self) -> list[int]:
        return [r.resolution for r in self.records]

    def to_rows(self) -> list[tuple]:
        return [(r.resolution, r.error, r.runtime_s, r.reference_tag) for r in self.records]

    def to_json(self) -> dict:
        return {
            "records": [{"resolution": r.resolution, "error": r.error, "runtime_s": r.runtime_s,
                         "reference_tag": r.reference_tag, **r.details} for r in self.records],
            "fitted_order": self.fitted_order,
            "degenerate": self.degenerate,
        }


class DivergenceAt(DipanetError):
    """A sweep entry diverged; names the offending resolution."""

    def __init__(self, resolution: int, cause: Exception):
        super().__init__(f"resolution {resolution}: {cause}")
        self.resolution = resolution
        self.cause = cause


def fit_order(records: Sequence[ConvergenceRecord]) -> float | None:
    """Negated least-squares slope of log(error) against log(resolution).

    Records with error <= 1e-14 are ignored; fewer than three usable
    records give None (degenerate).
    """
    pts = [(r.resolution, r.error) for r in records if r.error > DEGENERATE_ERROR]
    if len(pts) < 3:
        return None
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope)


def default_inputs(p: int, r: float = 1.0, seed: int = 0, count: int = 20) -> NDArray[np.float64]:
    """Origin plus ``count`` seeded points on the sphere of radius r."""
    return sphere_inputs(p, count, r, seed)


def _max_gap(Y, Y_ref) -> float:
    Y = np.atleast_2d(Y)
    Y_ref = np.atleast_2d(Y_ref)
    return float(max(np.linalg.norm(a - b) for a, b in zip(Y, Y_ref)))


def _run(resolutions: Sequence[int], job: Callable[[int], tuple[float, dict]], tag: str, threads: int,
         record_runtime: bool) -> SweepReport:
    res = list(resolutions)
    if any(b <= a for a, b in zip(res, res[1:])):
        raise PreconditionError("resolutions must be strictly increasing")

    def timed(k):
        t0 = time.perf_counter()
        try:
            err, details = job(k)
        except DipanetError as exc:
            raise DivergenceAt(k, exc) from exc
        return err, details, time.perf_counter() - t0

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(timed, res))
    else:
        out = [timed(k) for k in res]
    records = tuple(ConvergenceRecord(k, err, tag, rt if record_runtime else 0.0, details)
                    for k, (err, details, rt) in zip(res, out))
    return SweepReport(records, fit_order(records))


def sweep_depth(ode: OdeNetParams, resolutions: Sequence[int], inputs, reference: Solver | None = None,
                threads: int = 1, record_runtime: bool = False) -> SweepReport:
    """Euler (equivalently the discretized DeepResNet) against an rk4 reference.

    The default reference is rk4 with 16 times the largest depth.
    """
    if len(resolutions) < 2:
        raise PreconditionError("need at least two resolutions")
    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if reference is None:
        reference = Solver("rk4", 16 * max(resolutions))
    Y_ref = eval_neuralode(ode, X, reference)

    def job(ell):
        net = discretize_depth(ode, ell)
        return _max_gap([eval_finite(net, x) for x in X], Y_ref), {}

    tag = f"{reference.kind}({reference.steps})"
    return _run(resolutions, job, tag, threads, record_runtime)


def sweep_width(cnn: ContinuumNetParams, resolutions: Sequence[int], inputs, reference_m: int | None = None,
                threads: int = 1, record_runtime: bool = False) -> SweepReport:
    """Width-discretized nets against the continuum net at quadrature resolution ``reference_m``."""
    if len(resolutions) < 2:
        raise PreconditionError("need at least two resolutions")
    reference_m = 4 * max(resolutions) if reference_m is None else reference_m
    if reference_m < 4 * max(resolutions):
        raise PreconditionError("reference resolution must be at least 4x the largest width")
    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    Y_ref = eval_continuum(cnn, X, reference_m)

    def job(n):
        net = discretize_width(cnn, n)
        return _max_gap([eval_finite(net, x) for x in X], Y_ref), {}

    return _run(resolutions, job, f"quad_left(m={reference_m})", threads, record_runtime)


def two_route_check(dip: DipanetParams, sizes: Sequence[tuple[int, int]], inputs, reference_m: int = 1024,
                    reference: Solver = Solver("rk4", 64), threads: int = 1,
                    record_runtime: bool = False) -> SweepReport:
    """Discrepancy between the two discretization routes at each (n, l).

    Each record also stores ``gap_width_then_depth`` and
    ``gap_depth_then_width``, the distances of the two routes to the fine
    DiPaNet evaluation. Records are indexed by n (sizes must increase in n).
    """
    sizes = [(int(n), int(ell)) for n, ell in sizes]
    if not sizes:
        raise PreconditionError("need at least one size")
    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    Y_ref = eval_dipanet(dip, X, reference_m, reference)
    by_n = dict(sizes)
    if len(by_n) != len(sizes):
        raise PreconditionError("sizes must have distinct n")

    def job(n):
        ell = by_n[n]
        outs = {}
        for route in ROUTES:
            net = roundtrip_corollary1(dip, n, ell, route)
            outs[route] = np.stack([eval_finite(net, x) for x in X])
        disc = _max_gap(outs[ROUTES[0]], outs[ROUTES[1]])
        details = {"depth": ell}
        details.update({f"gap_{route}": _max_gap(outs[route], Y_ref) for route in ROUTES})
        return disc, details

    tag = f"dipanet(m={reference_m},{reference.kind}({reference.steps}))"
    return _run([n for n, _ in sizes], job, tag, threads, record_runtime)


# ---------------------------------------------------------------------------
# seeded problems
# ---------------------------------------------------------------------------

ARCHITECTURES = ("deepnet", "deepresnet", "deepcnn", "deeprescnn", "neuralode", "neuralresode", "dipanet",
                 "diparesnet")
TWO_PI = 2.0 * math.pi
_SPEC_KEYS = {"architecture", "dims", "family", "amplitude", "activation", "T"}


def _trig_expr(rng, amp: float, axes: Sequence[int], scales: Sequence[float]):
    # c0 + sum_k (a_k sin(2 pi x_k / s_k) + b_k cos(2 pi x_k / s_k)) + d sin(2 pi sum_k x_k / s_k)
    c = rng.uniform(-amp, amp, size=2 + 2 * len(axes))
    args = [{"poly": [0.0, TWO_PI / s], "var": k} for k, s in zip(axes, scales)]
    terms: list = [float(c[0])]
    for j, a in enumerate(args):
        terms.append({"mul": [float(c[1 + 2 * j]), {"sin": a}]})
        terms.append({"mul": [float(c[2 + 2 * j]), {"cos": a}]})
    terms.append({"mul": [float(c[-1]), {"sin": {"add": args}}]})
    return {"add": terms}


def _poly_expr(rng, amp: float, axes: Sequence[int], scales: Sequence[float]):
    # c0 + sum_k (a_k x_k / s_k + b_k (x_k / s_k)^2)
    c = rng.uniform(-amp, amp, size=1 + 2 * len(axes))
    terms: list = [float(c[0])]
    for j, (k, s) in enumerate(zip(axes, scales)):
        terms.append({"poly": [0.0, float(c[1 + 2 * j]) / s, float(c[2 + 2 * j]) / (s * s)], "var": k})
    return {"add": terms}


def _analytic(rng, family: str, amp: float, domain: str, shape: tuple, T: float = 1.0) -> Analytic:
    axes = {"unit": (0,), "square": (0, 1), "time": (0,), "strip": (0, 1), "box": (0, 1, 2)}[domain]
    t_axis = {"time": 0, "strip": 1, "box": 2}.get(domain)
    scales = [T if k == t_axis else 1.0 for k in axes]
    make = _trig_expr if family == "trig" else _poly_expr
    exprs = np.empty(shape, dtype=object)
    for idx in np.ndindex(*shape):
        exprs[idx] = make(rng, amp, axes, scales)
    payload = exprs.tolist() if shape else exprs[()]
    return Analytic(domain, shape, payload, horizon=T)


def random_params(seed: int, spec: dict):
    """Deterministic random parameters for one architecture.

    Draws come from numpy's PCG64 generator seeded with ``seed`` (a
    platform-independent algorithm). ``spec`` keys: ``architecture`` (one of
    ARCHITECTURES), ``dims`` ({"p", "q", "n", "layers"}), ``family``
    ("trig" or "poly" analytic functions), ``amplitude`` (coefficients are
    uniform in [-amplitude, amplitude]), ``activation`` and ``T``.
    """
    unknown = set(spec) - _SPEC_KEYS
    if unknown:
        raise PreconditionError(f"unknown random_params keys {sorted(unknown)}")
    arch = spec.get("architecture")
    if arch not in ARCHITECTURES:
        raise PreconditionError(f"unsupported architecture {arch!r}")
    amp = float(spec.get("amplitude", 1.0))
    if not amp > 0:
        raise PreconditionError("amplitude must be positive")
    family = spec.get("family", "trig")
    if family not in ("trig", "poly"):
        raise PreconditionError(f"unknown function family {family!r}")
    dims = {"p": 1, "q": 1, "n": 4, "layers": 2, **spec.get("dims", {})}
    p, q, n, ell = (int(dims[k]) for k in ("p", "q", "n", "layers"))
    act = Activation.from_json(spec.get("activation", "tanh"))
    T = float(spec.get("T", 1.0))
    rng = np.random.default_rng(seed)
    U = lambda *shape: rng.uniform(-amp, amp, size=shape)  # noqa: E731

    if arch in ("deepnet", "deepresnet"):
        residual = "none" if arch == "deepnet" else "plain"
        return FiniteNetParams(U(n, p), tuple(U(n, n) for _ in range(ell)), U(q, n),
                               tuple(LayerActivation(act) for _ in range(ell)), None, residual)
    if arch in ("deepcnn", "deeprescnn"):
        residual = arch == "deeprescnn"
        L = _analytic(rng, family, amp, "unit", (p,))
        W = tuple(_analytic(rng, family, amp, "square", ()) for _ in range(ell))
        P = _analytic(rng, family, amp, "unit", (q, 2) if residual else (q,))
        return ContinuumNetParams(L, W, tuple(ActivationField(act) for _ in range(ell)), P, residual)
    if arch in ("neuralode", "neuralresode"):
        residual = arch == "neuralresode"
        W = _analytic(rng, family, amp, "time", (n, n), T)
        return OdeNetParams(U(n, p), W, ActivationField(act), U(q, 2 * n if residual else n), T, None, residual)
    residual = arch == "diparesnet"
    L = _analytic(rng, family, amp, "unit", (p,))
    W = _analytic(rng, family, amp, "box", (), T)
    P = _analytic(rng, family, amp, "unit", (q, 2) if residual else (q,))
    return DipanetParams(L, W, ActivationField(act), P, T, residual)
