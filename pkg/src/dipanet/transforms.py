"""Discretization and homogenization maps between the architectures.

Width discretization samples label functions on the n-grid and emits a
SumOfActivations net (the output quadrature weight 1/n goes into P). Depth
discretization samples time-dependent data at the left endpoints t_i and
scales activations by h = T/l, so a residual layer is literally an Euler
step. The homogenizations build continuum data back from finite nets:
piecewise-linear interpolants in t for depth, and for width the
piecewise-constant / linear-smoothing / tan-compression construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .continuum_nets import (
    ContinuumNetParams,
    DipanetParams,
    OdeNetParams,
    Solver,
    eval_deepcnn,
    eval_deeprescnn,
    eval_dipanet,
    eval_neuralode,
    sample_dipanet,
)
from .errors import InconsistentFamilyError, PreconditionError, StructuralError
from .finite_nets import FiniteNetParams, eval_finite
from .funcrep import (
    ActivationField,
    LayerActivation,
    MatrixFamily,
    PiecewiseLinear,
    Restricted,
    Warped,
    ZeroPadded,
    check_consistency,
    interpolant_activation,
    interpolant_depth,
    sequence_variation,
)
from .numerics import GridSpec, StepFunction, TimeGrid, linear_smooth, sphere_inputs, total_variation

__all__ = [
    "discretize_width",
    "homogenize_width",
    "WidthHomogenization",
    "discretize_depth",
    "homogenize_depth",
    "DepthHomogenization",
    "discretize_dipanet_width",
    "discretize_dipanet_depth",
    "homogenize_rescnn_depth",
    "RescnnHomogenization",
    "roundtrip_corollary1",
    "ROUTES",
    "provenance",
]

ROUTES = ("width_then_depth", "depth_then_width")


def provenance(source: str, transform: str, resolution) -> dict:
    """Provenance block attached to serialized transform results."""
    return {"source_architecture": source, "transform": transform, "resolution": resolution}


def _check_resolution(k: int, what: str):
    if int(k) != k or k < 1:
        raise PreconditionError(f"{what} must be a positive integer, got {k!r}")


# ---------------------------------------------------------------------------
# width
# ---------------------------------------------------------------------------


def discretize_width(params: ContinuumNetParams, n: int) -> FiniteNetParams:
    """Sample a DeepCNN / DeepResCNN on the n-grid.

    L rows are L(tau_j), W^{(j,k)} = W(tau_j, tau_k), neuron j of layer i uses
    sigma_i(tau_j, .), and P columns are P(tau_j) / n. A residual continuum
    net becomes a DeepResNet with the skip read-out.
    """
    _check_resolution(n, "width")
    grid = GridSpec(n)
    tau, dtau = grid.nodes, grid.delta
    S, T = np.meshgrid(tau, tau)
    L = params.L(tau)
    W = tuple(w(T, S) for w in params.W)
    acts = tuple(LayerActivation(a.activation, a.gains(tau)) for a in params.activations)
    Ps = params.P(tau) * dtau
    if params.residual:
        P = np.hstack([Ps[:, :, 0].T, Ps[:, :, 1].T])
    else:
        P = Ps.T
    return FiniteNetParams(L, W, P, acts, dtau, "skip" if params.residual else "none")


@dataclass(frozen=True, eq=False)
class WidthHomogenization:
    """Continuum net built from a family, with its measured certificate.

    ``gaps`` lists (n, max output gap over the inputs) for the tested widths;
    ``n_bar`` is the smallest tested width from which every gap is <= eps,
    or None when even n_max misses the tolerance.
    """

    params: ContinuumNetParams
    n_bar: int | None
    gaps: tuple[tuple[int, float], ...]
    deltas: dict


def _smoothing_nodes(edges: NDArray[np.float64], delta: float):
    # nodes of the smoothed curve and the step index each node takes its value from
    ramp = linear_smooth(StepFunction(edges, np.arange(edges.size, dtype=np.float64)), delta)
    return ramp.breakpoints, np.rint(ramp.values).astype(np.intp)


def _delta(variation: float, eps: float, cap: float) -> float:
    return min(eps / max(variation, eps), cap)


def homogenize_width(family: MatrixFamily, eps: float, n_max: int, *, inputs=None, r: float = 1.0,
                     seed: int = 0, m_eval: int = 2048) -> WidthHomogenization:
    """Continuum DeepCNN from a consistent bounded-variation family of DeepNets.

    The stabilized entries of member ``n_max`` become step functions with
    unit cells on [0, inf); family nets are read in the SumOfActivations
    convention with dtau = 1, and L, W, P are zero beyond n_max (activation
    gains keep their last value). Every step function is smoothed with
    half-width delta = eps / max(V, eps), capped at a quarter cell. The
    result is pulled back to [0, 1) through
    tau -> tan(pi*tau/2): P and the s-variable of every W carry the
    Jacobian, L and activation gains are relabeled only. Putting the
    Jacobian inside W is exact for positively homogeneous activations
    (relu, identity, zero).

    The certificate compares family outputs at n = 1, 2, 4, ..., n_max with
    the continuum net evaluated at quadrature resolution ``m_eval`` on the
    origin plus 20 seeded points of the sphere of radius ``r`` (or on
    ``inputs``).

    Raises:
        InconsistentFamilyError: Naming the first violated truncation relation.
        PreconditionError: If the variation partial sums diverge.
    """
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    if n_max < 3:
        raise PreconditionError("n_max must be at least 3")
    rep = check_consistency(family, list(range(1, n_max + 1)))
    if not rep.passed:
        raise InconsistentFamilyError(rep.relation, rep.max_residual)
    if sequence_variation(family, n_max - 1).diverged:
        raise PreconditionError("family variation partial sums diverge")

    top = family(n_max)
    N = n_max
    edges = np.arange(N + 1, dtype=np.float64)
    cap = 0.25

    def extend(rows, fill_last=False):
        rows = np.asarray(rows, dtype=np.float64)
        tail = rows[-1:] if fill_last else np.zeros_like(rows[:1])
        return np.concatenate([rows, tail])

    deltas = {}

    def curve(name, rows, jacobian: bool):
        d = _delta(total_variation(rows), eps, cap)
        deltas[name] = d
        nodes, idx = _smoothing_nodes(edges, d)
        vals = rows[idx]
        f = PiecewiseLinear("halfline", vals.shape[1:], (0,), (nodes,), values=vals)
        return Warped(f, (0,) if jacobian else ())

    L = curve("L", extend(top.L), jacobian=False)
    P = curve("P", extend(top.P.T), jacobian=True)
    Ws, acts = [], []
    for i, (w, a) in enumerate(zip(top.W, top.activations)):
        block = np.zeros((N + 1, N + 1))
        block[:N, :N] = w
        var = max(total_variation(block), total_variation(block.T))
        d = _delta(var, eps, cap)
        deltas[f"W{i + 1}"] = d
        nodes, idx = _smoothing_nodes(edges, d)
        vals = block[np.ix_(idx, idx)]
        Ws.append(Warped(PiecewiseLinear("quadrant", (), (0, 1), (nodes, nodes), values=vals), (1,)))
        gain = None if a.gains is None else curve(f"gain{i + 1}", extend(a.gains, fill_last=True), jacobian=False)
        acts.append(ActivationField(a.activation, gain))
    params = ContinuumNetParams(L, tuple(Ws), tuple(acts), P, residual=False)

    X = sphere_inputs(top.L.shape[1], 20, r, seed) if inputs is None else np.atleast_2d(np.asarray(inputs, float))
    Y_cont = eval_deepcnn(params, X, m_eval)
    sizes = []
    k = 1
    while k < N:
        sizes.append(k)
        k *= 2
    sizes.append(N)
    gaps = []
    for n in sizes:
        m = family(n)
        net = FiniteNetParams(m.L, m.W, m.P, m.activations, 1.0, "none")
        gap = max(float(np.linalg.norm(eval_finite(net, x) - y)) for x, y in zip(X, Y_cont))
        gaps.append((n, gap))
    n_bar = None
    for j in range(len(gaps) - 1, -1, -1):
        if gaps[j][1] > eps:
            break
        n_bar = gaps[j][0]
    return WidthHomogenization(params, n_bar, tuple(gaps), deltas)


# ---------------------------------------------------------------------------
# depth
# ---------------------------------------------------------------------------


def discretize_depth(params: OdeNetParams, ell: int) -> FiniteNetParams:
    """Explicit Euler as a DeepResNet: W_{i+1} = W(t_i), sigma_{i+1} = (T/l) sigma(t_i, .).

    The emitted residual layers compute exactly the Euler steps of
    ``euler_solve`` (same operations in the same order). A NeuralResODE
    becomes a DeepResNet with the skip read-out.
    """
    _check_resolution(ell, "depth")
    grid = TimeGrid(ell, params.T)
    # same sampling call as the Euler integrator, so both see identical coefficients
    Ws, gains = params.sample_times(grid.nodes[:-1])
    scaled = params.activation.activation.scaled(grid.h)
    W, acts = [], []
    for w, g in zip(Ws, gains):
        W.append(w)
        if g is not None:
            g = np.broadcast_to(g, (params.n,))
        acts.append(LayerActivation(scaled, g))
    return FiniteNetParams(params.L, tuple(W), params.P, tuple(acts), params.dtau,
                           "skip" if params.residual else "plain")


@dataclass(frozen=True, eq=False)
class DepthHomogenization:
    """Recovered continuous-depth net and the per-depth output gaps (l, gap)."""

    params: object
    gaps: tuple[tuple[int, float], ...]


def _inputs(p: int, inputs, r: float, seed: int):
    return sphere_inputs(p, 20, r, seed) if inputs is None else np.atleast_2d(np.asarray(inputs, float))


def homogenize_depth(nets: list[FiniteNetParams], T: float = 1.0, *, inputs=None, r: float = 1.0, seed: int = 0,
                     reference_steps: int | None = None) -> DepthHomogenization:
    """NeuralODE from residual nets of increasing depth sharing L, P and width.

    The deepest net gives W(t) = interpolant of its layer matrices and the
    activation field (l/T) * sigma_i interpolated in t. Gaps are measured
    against the recovered ODE integrated with rk4 (16x the largest depth by
    default).
    """
    if not nets:
        raise PreconditionError("need at least one net")
    ref = nets[0]
    for net in nets:
        if net.residual not in ("plain", "skip"):
            raise StructuralError("depth homogenization needs residual nets")
        if (net.L.shape != ref.L.shape or net.P.shape != ref.P.shape or net.residual != ref.residual
                or net.dtau != ref.dtau):
            raise StructuralError("nets must share width, L, P, read-out and layer convention")
        if not (np.array_equal(net.L, ref.L) and np.array_equal(net.P, ref.P)):
            raise StructuralError("nets must share L and P")
    deepest = max(nets, key=lambda net: net.depth)
    ell = deepest.depth
    W = interpolant_depth(deepest.W, T)
    field = interpolant_activation(deepest.activations, T)
    ode = OdeNetParams(deepest.L, W, field, deepest.P, T, deepest.dtau, deepest.residual == "skip")
    X = _inputs(ref.L.shape[1], inputs, r, seed)
    solver = Solver("rk4", reference_steps or 16 * ell)
    Y_ode = eval_neuralode(ode, X, solver)
    gaps = tuple((net.depth, max(float(np.linalg.norm(eval_finite(net, x) - y)) for x, y in zip(X, Y_ode)))
                 for net in sorted(nets, key=lambda net: net.depth))
    return DepthHomogenization(ode, gaps)


# ---------------------------------------------------------------------------
# DiPaNet
# ---------------------------------------------------------------------------


def discretize_dipanet_width(params: DipanetParams, n: int) -> OdeNetParams:
    """Method-of-lines reduction to an n-neuron SumOfActivations NeuralODE."""
    _check_resolution(n, "width")
    return sample_dipanet(params, n)


def discretize_dipanet_depth(params: DipanetParams, ell: int) -> ContinuumNetParams:
    """Euler in t: DeepResCNN with W_{i+1}(tau, s) = W(tau, s, t_i), sigma_{i+1} = (T/l) sigma(., t_i, .)."""
    _check_resolution(ell, "depth")
    grid = TimeGrid(ell, params.T)
    h, t = grid.h, grid.nodes
    act = params.activation
    Ws, acts = [], []
    for i in range(ell):
        Ws.append(Restricted(params.W, 2, t[i]))
        gain = None if act.gain is None else Restricted(act.gain, 1, t[i])
        acts.append(ActivationField(act.activation.scaled(h), gain))
    P = params.P if params.residual else ZeroPadded(params.P)
    return ContinuumNetParams(params.L, tuple(Ws), tuple(acts), P, residual=True)


@dataclass(frozen=True, eq=False)
class RescnnHomogenization:
    params: DipanetParams
    gaps: tuple[tuple[int, float], ...]


def homogenize_rescnn_depth(nets: list[ContinuumNetParams], T: float = 1.0, *, inputs=None, r: float = 1.0,
                            seed: int = 0, m: int = 64, reference_steps: int | None = None) -> RescnnHomogenization:
    """DiPaNet from DeepResCNNs of increasing depth sharing L and P.

    W(tau, s, t) interpolates the deepest net's layer kernels linearly in t;
    the activation gain interpolates (l/T) times each layer's scale factor and
    gain function. Gaps compare each net (quadrature resolution ``m``) with
    the recovered DiPaNet (same m, rk4 at 16x the largest depth).
    """
    if not nets:
        raise PreconditionError("need at least one net")
    ref = nets[0]
    for net in nets:
        if not net.residual:
            raise StructuralError("depth homogenization needs residual (DeepResCNN) nets")
        if net.L is not ref.L and net.L.to_json() != ref.L.to_json():
            raise StructuralError("nets must share L")
        if net.P is not ref.P and net.P.to_json() != ref.P.to_json():
            raise StructuralError("nets must share P")
    deepest = max(nets, key=lambda net: len(net.W))
    ell = len(deepest.W)
    nodes = np.arange(ell, dtype=np.float64) * T / ell
    W = PiecewiseLinear("box", (), (2,), (nodes,), nodes=list(deepest.W), horizon=T)
    unwrapped = [a.activation.unwrap() for a in deepest.activations]
    kinds = {base.kind for _, base in unwrapped}
    if len(kinds) != 1:
        raise StructuralError(f"layers mix activation kinds {sorted(kinds)}")
    coefs = [ell / T * f for f, _ in unwrapped]
    gain = PiecewiseLinear("strip", (), (1,), (nodes,), nodes=[a.gain for a in deepest.activations],
                           coefs=coefs, horizon=T)
    dip = DipanetParams(deepest.L, W, ActivationField(unwrapped[0][1], gain), deepest.P, T, residual=True)
    X = _inputs(ref.p, inputs, r, seed)
    solver = Solver("rk4", reference_steps or 16 * ell)
    Y_dip = eval_dipanet(dip, X, m, solver)
    Y_nets = {len(net.W): eval_deeprescnn(net, X, m) for net in nets}
    gaps = tuple((k, max(float(np.linalg.norm(y - yd)) for y, yd in zip(Y_nets[k], Y_dip)))
                 for k in sorted(Y_nets))
    return RescnnHomogenization(dip, gaps)


def roundtrip_corollary1(params: DipanetParams, n: int, ell: int, route: str) -> FiniteNetParams:
    """DiPaNet to an n-neuron, l-layer SumOfActivations DeepResNet along either route.

    ``width_then_depth`` samples tau then steps in t; ``depth_then_width``
    steps in t then samples tau.
    """
    if route == "width_then_depth":
        return discretize_depth(discretize_dipanet_width(params, n), ell)
    if route == "depth_then_width":
        return discretize_width(discretize_dipanet_depth(params, ell), n)
    raise PreconditionError(f"unknown route {route!r}; expected one of {ROUTES}")
