"""Continuum architectures: DeepCNN, pointwise CNN, DeepResCNN, NeuralODE, DiPaNet.

Width integrals are evaluated with the left-rectangle rule on the m-grid
tau_j = j/m, so hidden continuum states are held as m-vectors of samples.
Depth is integrated with explicit Euler or classical RK4. A DiPaNet is
solved by the method of lines: sampling tau turns it into an m-neuron
NeuralODE in the SumOfActivations convention, which is then integrated in t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DivergenceError, PreconditionError, ResourceError, StructuralError
from .finite_nets import layer_rate
from .funcrep import Activation, ActivationField, FunctionRep, GridSampled, function_from_json
from .numerics import GridSpec, TimeGrid, Trajectory, euler_solve, quad_left, rk4_solve

__all__ = [
    "Solver",
    "ContinuumNetParams",
    "OdeNetParams",
    "DipanetParams",
    "eval_deepcnn",
    "eval_deeprescnn",
    "eval_continuum",
    "eval_pointwise_cnn",
    "solve_neuralode",
    "eval_neuralode",
    "neuralode_integral_form",
    "sample_dipanet",
    "eval_dipanet",
    "dipanet_integral_form",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 2**22
# time samples of an ODE kernel are precomputed in one call below this many entries
PRESAMPLE_LIMIT = 2**22


@dataclass(frozen=True)
class Solver:
    """Fixed-step solver choice: ``Solver("euler", l)`` or ``Solver("rk4", steps)``."""

    kind: str
    steps: int

    def __post_init__(self):
        if self.kind not in ("euler", "rk4"):
            raise PreconditionError(f"unknown solver {self.kind!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise PreconditionError("solver resolution must be a positive integer")

    def to_json(self) -> dict:
        return {self.kind: self.steps}

    @classmethod
    def from_json(cls, d: dict) -> Solver:
        if not isinstance(d, dict) or len(d) != 1:
            raise PreconditionError(f"solver must look like {{'euler': l}} or {{'rk4': steps}}, got {d!r}")
        (kind, steps), = d.items()
        return cls(kind, int(steps))


def _check_fn(f: FunctionRep, domain: str, shapes, what: str):
    if not isinstance(f, FunctionRep):
        raise StructuralError(f"{what} must be a FunctionRep")
    if f.domain != domain:
        raise StructuralError(f"{what} must live on {domain}, not {f.domain}")
    if f.shape not in shapes:
        raise StructuralError(f"{what} has shape {f.shape}, expected one of {shapes}")


def _field_json(a: ActivationField) -> dict:
    return a.to_json()


# ---------------------------------------------------------------------------
# DeepCNN / DeepResCNN
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ContinuumNetParams:
    """Lift L(tau) in R^{1 x p}, kernels W_i(tau, s), fields sigma_i(tau, .), read-out P(tau).

    ``P`` has shape (q,) or, when ``residual`` is set, (q, 2) acting on
    [Z_l(tau), Z_0(tau)].
    """

    L: FunctionRep
    W: tuple[FunctionRep, ...]
    activations: tuple[ActivationField, ...]
    P: FunctionRep
    residual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "W", tuple(self.W))
        acts = tuple(a if isinstance(a, ActivationField) else ActivationField(a) for a in self.activations)
        object.__setattr__(self, "activations", acts)
        if len(self.W) < 1 or len(acts) != len(self.W):
            raise StructuralError("need at least one layer and one activation field per layer")
        _check_fn(self.L, "unit", [self.L.shape] if len(self.L.shape) == 1 else [], "L")
        for i, w in enumerate(self.W):
            _check_fn(w, "square", [()], f"W_{i + 1}")
        for i, a in enumerate(acts):
            if a.gain is not None:
                _check_fn(a.gain, "unit", [()], f"gain of layer {i + 1}")
        if self.residual:
            if len(self.P.shape) != 2 or self.P.shape[1] != 2:
                raise StructuralError("residual read-out P must have shape (q, 2)")
        elif len(self.P.shape) != 1:
            raise StructuralError("read-out P must have shape (q,)")
        _check_fn(self.P, "unit", [self.P.shape], "P")

    @property
    def p(self) -> int:
        return self.L.shape[0]

    @property
    def q(self) -> int:
        return self.P.shape[0]

    def to_json(self) -> dict:
        return {"L": self.L.to_json(), "W": [w.to_json() for w in self.W],
                "activations": [_field_json(a) for a in self.activations],
                "P": self.P.to_json(), "residual": self.residual}

    @classmethod
    def from_json(cls, d: dict) -> ContinuumNetParams:
        unknown = set(d) - {"L", "W", "activations", "P", "residual"}
        if unknown:
            raise PreconditionError(f"unknown keys {sorted(unknown)}")
        acts = d["activations"]
        if isinstance(acts, (str, dict)):
            acts = [acts] * len(d["W"])
        return cls(function_from_json(d["L"]), tuple(function_from_json(w) for w in d["W"]),
                   tuple(ActivationField.from_json(a) for a in acts), function_from_json(d["P"]),
                   bool(d.get("residual", False)))


def _nodes(m: int) -> NDArray[np.float64]:
    return GridSpec(m).nodes


def _lift(Ls: NDArray[np.float64], X: ArrayLike) -> NDArray[np.float64]:
    X = np.asarray(X, dtype=np.float64).reshape(-1)
    if X.shape[0] != Ls.shape[1]:
        raise StructuralError(f"input has length {X.shape[0]}, expected {Ls.shape[1]}")
    return Ls @ X


def _continuum_outputs(params: ContinuumNetParams, X, m: int) -> NDArray[np.float64]:
    # kernels are sampled once and reused for every row of a 2-D input batch
    if m < 1:
        raise PreconditionError("quadrature resolution must be >= 1")
    tau = _nodes(m)
    dtau = GridSpec(m).delta
    S, T = np.meshgrid(tau, tau)
    Ls = params.L(tau)
    Ws = [w(T, S) for w in params.W]
    gains = [a.gains(tau) for a in params.activations]
    Ps = params.P(tau)
    X = np.asarray(X, dtype=np.float64)
    rows = X.reshape(1, -1) if X.ndim <= 1 else X
    out = []
    for x in rows:
        z0 = _lift(Ls, x)
        z = z0
        for i, (w, act, g) in enumerate(zip(Ws, params.activations, gains)):
            rate = layer_rate(w, z, act.activation, g, dtau)
            z = z + rate if params.residual else rate
            if not np.all(np.isfinite(z)):
                raise DivergenceError(i + 1, "hidden state")
        if params.residual:
            out.append(quad_left(Ps[:, :, 0] * z[:, None] + Ps[:, :, 1] * z0[:, None], dtau))
        else:
            out.append(quad_left(Ps * z[:, None], dtau))
    return out[0] if X.ndim <= 1 else np.stack(out)


def eval_deepcnn(params: ContinuumNetParams, X: ArrayLike, m: int = 256) -> NDArray[np.float64]:
    """DeepCNN with every integral over [0, 1) replaced by the m-point left-rectangle rule.

    ``X`` may be a single input or a 2-D batch with one input per row.
    """
    if params.residual:
        raise StructuralError("eval_deepcnn needs a non-residual net; use eval_deeprescnn")
    return _continuum_outputs(params, X, m)


def eval_deeprescnn(params: ContinuumNetParams, X: ArrayLike, m: int = 256) -> NDArray[np.float64]:
    """DeepResCNN: Z_{i+1} = Z_i + integral of sigma; Y = integral of P(tau) [Z_l(tau), Z_0(tau)]."""
    if not params.residual:
        raise StructuralError("eval_deeprescnn needs a residual net (P of shape (q, 2))")
    return _continuum_outputs(params, X, m)


def eval_continuum(params: ContinuumNetParams, X: ArrayLike, m: int = 256) -> NDArray[np.float64]:
    return _continuum_outputs(params, X, m)


def eval_pointwise_cnn(L: FunctionRep, sigma: Activation, P: FunctionRep, X: ArrayLike, m: int = 256):
    """Single-layer pointwise CNN: Y = integral over tau of P(tau) sigma(L(tau) X)."""
    if m < 1:
        raise PreconditionError("quadrature resolution must be >= 1")
    tau = _nodes(m)
    z = sigma(_lift(L(tau), X))
    Ps = P(tau)
    Y = quad_left(Ps.reshape(m, -1) * z[:, None], 1.0 / m)
    if not np.all(np.isfinite(Y)):
        raise DivergenceError(1, "output")
    return Y


# ---------------------------------------------------------------------------
# NeuralODE
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OdeNetParams:
    """z(0) = L X, z' = sigma(t, W(t) z) on [0, T], Y = P z(T) (or P [z(T); z(0)]).

    With ``dtau`` set the right-hand side uses the SumOfActivations form
    z'_j = dtau * sum_k sigma_j(t, W_jk(t) z_k).
    """

    L: NDArray[np.float64]
    W: FunctionRep
    activation: ActivationField
    P: NDArray[np.float64]
    T: float = 1.0
    dtau: float | None = None
    residual: bool = False

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.L, dtype=np.float64))
        P = np.atleast_2d(np.asarray(self.P, dtype=np.float64))
        act = self.activation if isinstance(self.activation, ActivationField) else ActivationField(self.activation)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "activation", act)
        n = L.shape[0]
        if not self.T > 0:
            raise StructuralError("horizon T must be positive")
        _check_fn(self.W, "time", [(n, n)], "W")
        if act.gain is not None:
            _check_fn(act.gain, "time", [(), (n,)], "activation gain")
        cols = 2 * n if self.residual else n
        if P.shape[1] != cols:
            raise StructuralError(f"P has {P.shape[1]} columns, expected {cols}")
        if self.dtau is not None and not self.dtau > 0:
            raise StructuralError("SumOfActivations needs dtau > 0")

    @property
    def n(self) -> int:
        return self.L.shape[0]

    def rate(self, t: float, z: NDArray[np.float64]) -> NDArray[np.float64]:
        return layer_rate(self.W(t), z, self.activation.activation, self.activation.gains(t), self.dtau)

    def sample_times(self, times: NDArray[np.float64]) -> tuple[list, list]:
        """Kernel and activation gains at each of ``times``.

        Small problems are sampled in one vectorized call; grid-sampled or
        large kernels are evaluated (and cached by the kernel) per time.
        """
        times = np.asarray(times, dtype=np.float64)
        gain = self.activation.gain
        if isinstance(self.W, GridSampled) or times.size * self.n * self.n > PRESAMPLE_LIMIT:
            return [self.W(t) for t in times], [None if gain is None else gain(t) for t in times]
        Ws = list(self.W(times))
        gains = [None] * times.size if gain is None else list(gain(times))
        return Ws, gains

    def readout(self, z_T, z_0) -> NDArray[np.float64]:
        if not self.residual:
            return self.P @ z_T
        n = self.n
        return self.P[:, :n] @ z_T + self.P[:, n:] @ z_0

    def to_json(self) -> dict:
        return {"L": self.L.tolist(), "W": self.W.to_json(), "activation": self.activation.to_json(),
                "P": self.P.tolist(), "T": self.T,
                "convention": "standard" if self.dtau is None else {"sum_of_activations": self.dtau},
                "residual": self.residual}

    @classmethod
    def from_json(cls, d: dict) -> OdeNetParams:
        unknown = set(d) - {"L", "W", "activation", "P", "T", "convention", "residual"}
        if unknown:
            raise PreconditionError(f"unknown keys {sorted(unknown)}")
        conv = d.get("convention", "standard")
        dtau = None if conv == "standard" else float(conv["sum_of_activations"])
        return cls(np.asarray(d["L"], float), function_from_json(d["W"]), ActivationField.from_json(d["activation"]),
                   np.asarray(d["P"], float), float(d.get("T", 1.0)), dtau, bool(d.get("residual", False)))



def _time_table(params: OdeNetParams, times: NDArray[np.float64]) -> dict:
    Ws, gains = params.sample_times(times)
    return {float(t): (w, g) for t, w, g in zip(times, Ws, gains)}


def solve_neuralode(params: OdeNetParams, X: ArrayLike, solver: Solver) -> Trajectory:
    """Trajectory from z(0) = L X; a 2-D ``X`` integrates the batch as one (n, B) state."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        if X.shape[1] != params.L.shape[1]:
            raise StructuralError(f"inputs have length {X.shape[1]}, expected {params.L.shape[1]}")
        z0 = params.L @ X.T
    else:
        z0 = _lift(params.L, X)
    grid = TimeGrid(solver.steps, params.T)
    t = grid.nodes
    times = t[:-1] if solver.kind == "euler" else np.concatenate([t, t[:-1] + 0.5 * grid.h])
    table = _time_table(params, times)
    act, dtau = params.activation.activation, params.dtau

    def field(ti, z):
        hit = table.get(float(ti))
        if hit is None:
            return params.rate(ti, z)
        return layer_rate(hit[0], z, act, hit[1], dtau)

    if solver.kind == "euler":
        return euler_solve(field, z0, grid)
    return rk4_solve(field, z0, solver.steps, params.T)


def eval_neuralode(params: OdeNetParams, X: ArrayLike, solver: Solver = Solver("euler", 256), trajectory: bool = False):
    """Integrate the ODE from L X to T and apply the read-out.

    A 2-D ``X`` is a batch (one input per row) integrated as one matrix
    ODE; it gives one output row per input. ``trajectory=True`` needs a
    single input.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2 and trajectory:
        raise PreconditionError("trajectories are returned for single inputs only")
    traj = solve_neuralode(params, X, solver)
    Y = params.readout(traj.final, traj.states[0])
    if X.ndim == 2:
        return Y.T
    return (Y, traj) if trajectory else Y


def neuralode_integral_form(params: OdeNetParams, X: ArrayLike, solver: Solver = Solver("euler", 256)):
    """Integral form: z(T) rebuilt as z(0) + quadrature of the stored slopes, then read out."""
    X = np.asarray(X, dtype=np.float64)
    traj = solve_neuralode(params, X, solver)
    Y = params.readout(traj.integral_form(), traj.states[0])
    return Y.T if X.ndim == 2 else Y


# ---------------------------------------------------------------------------
# DiPaNet
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DipanetParams:
    """Distributed-parameter net: Z(tau, 0) = L(tau) X,
    dZ/dt(tau, t) = integral over s of sigma(tau, t, W(tau, s, t) Z(s, t)),
    Y = integral over tau of P(tau) Z(tau, T) (residual: P(tau) [Z(tau, T), Z(tau, 0)]).
    """

    L: FunctionRep
    W: FunctionRep
    activation: ActivationField
    P: FunctionRep
    T: float = 1.0
    residual: bool = False

    def __post_init__(self):
        act = self.activation if isinstance(self.activation, ActivationField) else ActivationField(self.activation)
        object.__setattr__(self, "activation", act)
        if not self.T > 0:
            raise StructuralError("horizon T must be positive")
        _check_fn(self.L, "unit", [self.L.shape] if len(self.L.shape) == 1 else [], "L")
        _check_fn(self.W, "box", [()], "W")
        if act.gain is not None:
            _check_fn(act.gain, "strip", [()], "activation gain")
        want = 2 if self.residual else 1
        if len(self.P.shape) != want or (self.residual and self.P.shape[1] != 2):
            raise StructuralError("P must have shape (q,) or (q, 2) for a residual net")
        _check_fn(self.P, "unit", [self.P.shape], "P")

    def to_json(self) -> dict:
        return {"L": self.L.to_json(), "W": self.W.to_json(), "activation": self.activation.to_json(),
                "P": self.P.to_json(), "T": self.T, "residual": self.residual}

    @classmethod
    def from_json(cls, d: dict) -> DipanetParams:
        unknown = set(d) - {"L", "W", "activation", "P", "T", "residual"}
        if unknown:
            raise PreconditionError(f"unknown keys {sorted(unknown)}")
        return cls(function_from_json(d["L"]), function_from_json(d["W"]), ActivationField.from_json(d["activation"]),
                   function_from_json(d["P"]), float(d.get("T", 1.0)), bool(d.get("residual", False)))


def sample_dipanet(params: DipanetParams, n: int) -> OdeNetParams:
    """Method-of-lines reduction: the n-neuron SumOfActivations NeuralODE on the tau-grid.

    L rows are L(tau_j), W(t) is the n x n sample of W(tau_j, tau_k, t), the
    activation gain of neuron j is gain(tau_j, t), and P columns are
    P(tau_j) * dtau (the output quadrature weight sits in P).
    """
    grid = GridSpec(n)
    tau, dtau = grid.nodes, grid.delta
    L = params.L(tau)
    Ps = params.P(tau) * dtau
    if params.residual:
        P = np.hstack([Ps[:, :, 0].T, Ps[:, :, 1].T])
    else:
        P = Ps.T
    act = params.activation
    gain = None if act.gain is None else GridSampled(act.gain, n)
    return OdeNetParams(L, GridSampled(params.W, n), ActivationField(act.activation, gain), P, params.T, dtau,
                        params.residual)


def _check_budget(m: int, solver: Solver, budget: int):
    if m * solver.steps > budget:
        raise ResourceError(f"m * steps = {m * solver.steps} exceeds the budget {budget}")


def eval_dipanet(params: DipanetParams, X: ArrayLike, m: int = 256, solver: Solver = Solver("euler", 256),
                 budget: int = DEFAULT_BUDGET, trajectory: bool = False):
    """Method-of-lines evaluation at spatial resolution ``m``."""
    if m < 1:
        raise PreconditionError("spatial resolution must be >= 1")
    _check_budget(m, solver, budget)
    return eval_neuralode(sample_dipanet(params, m), X, solver, trajectory)


def dipanet_integral_form(params: DipanetParams, X: ArrayLike, m: int = 256, solver: Solver = Solver("euler", 256),
                          budget: int = DEFAULT_BUDGET):
    """Double-integral form: Z(tau, T) = Z(tau, 0) + quadrature over t of the stored s-quadratures."""
    _check_budget(m, solver, budget)
    return neuralode_integral_form(sample_dipanet(params, m), X, solver)
