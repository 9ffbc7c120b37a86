"""Finite-width, finite-depth networks: DeepNet and DeepResNet (plain and skip read-out).

Two layer conventions are supported. ``Standard`` applies the activation to
the matrix-vector product, Z' = sigma(W Z). ``SumOfActivations(dtau)``
applies it per connection inside a rectangle-rule sum,
Z'_j = dtau * sum_s sigma_j(W_js Z_s); this is the form produced by
discretizing a continuum layer in width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DivergenceError, PreconditionError, StructuralError
from .funcrep import Activation, LayerActivation
from .numerics import quad_left

__all__ = [
    "FiniteNetParams",
    "layer_rate",
    "eval_deepnet",
    "eval_deepresnet",
    "eval_finite",
    "augment_bias",
]

RESIDUAL_KINDS = ("none", "plain", "skip")


def layer_rate(W: NDArray[np.float64], z: NDArray[np.float64], activation: Activation,
               gains: NDArray[np.float64] | None, dtau: float | None) -> NDArray[np.float64]:
    """Layer map sigma(W z) (``dtau is None``) or its per-connection quadrature form.

    ``z`` is a state vector or an (n, B) matrix holding a batch of states.

    Scale factors of a ``scaled`` activation are applied outside the neuron
    sum, innermost first. Euler steps of a neural ODE and residual layers
    both go through this function, which keeps them bitwise identical.
    """
    if activation.kind == "scaled":
        return activation.factor * layer_rate(W, z, activation.of, gains, dtau)
    if dtau is None:
        out = activation(W @ z)
    elif z.ndim == 1:
        out = quad_left(activation(W * z[None, :]), dtau, axis=1)
    else:
        out = quad_left(activation(W[:, :, None] * z[None, :, :]), dtau, axis=1)
    if gains is not None:
        g = np.asarray(gains)
        out = (g[:, None] if out.ndim == 2 and g.ndim == 1 else g) * out
    return out


@dataclass(frozen=True, eq=False)
class FiniteNetParams:
    """Matrices and activations of a DeepNet / DeepResNet.

    ``dtau=None`` selects the Standard convention, a positive ``dtau`` the
    SumOfActivations convention. ``residual`` is ``"none"`` (DeepNet),
    ``"plain"`` (Y = P Z_l) or ``"skip"`` (Y = P [Z_l; Z_0], P has 2n columns).
    """

    L: NDArray[np.float64]
    W: tuple[NDArray[np.float64], ...]
    P: NDArray[np.float64]
    activations: tuple[LayerActivation, ...]
    dtau: float | None = None
    residual: str = "none"

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.L, dtype=np.float64))
        P = np.atleast_2d(np.asarray(self.P, dtype=np.float64))
        W = tuple(np.asarray(w, dtype=np.float64) for w in self.W)
        acts = tuple(a if isinstance(a, LayerActivation) else LayerActivation(a) for a in self.activations)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "activations", acts)
        n = L.shape[0]
        if self.residual not in RESIDUAL_KINDS:
            raise StructuralError(f"residual must be one of {RESIDUAL_KINDS}, got {self.residual!r}")
        if len(W) < 1 or len(acts) != len(W):
            raise StructuralError("need at least one layer and one activation per layer")
        for i, w in enumerate(W):
            if w.shape != (n, n):
                raise StructuralError(f"W_{i + 1} has shape {w.shape}, expected ({n}, {n})")
        for i, a in enumerate(acts):
            if a.gains is not None and a.gains.shape != (n,):
                raise StructuralError(f"gains of layer {i + 1} must have length {n}")
        cols = 2 * n if self.residual == "skip" else n
        if P.shape[1] != cols:
            raise StructuralError(f"P has {P.shape[1]} columns, expected {cols}")
        if self.dtau is not None and not self.dtau > 0:
            raise StructuralError("SumOfActivations needs dtau > 0")

    @property
    def width(self) -> int:
        return self.L.shape[0]

    @property
    def depth(self) -> int:
        return len(self.W)

    def to_json(self) -> dict:
        return {
            "L": self.L.tolist(),
            "W": [w.tolist() for w in self.W],
            "P": self.P.tolist(),
            "activations": [a.to_json() for a in self.activations],
            "convention": "standard" if self.dtau is None else {"sum_of_activations": self.dtau},
            "residual": self.residual,
        }

    @classmethod
    def from_json(cls, d: dict) -> FiniteNetParams:
        unknown = set(d) - {"L", "W", "P", "activations", "convention", "residual"}
        if unknown:
            raise PreconditionError(f"unknown keys {sorted(unknown)}")
        conv = d.get("convention", "standard")
        if conv == "standard":
            dtau = None
        elif isinstance(conv, dict) and set(conv) == {"sum_of_activations"}:
            dtau = float(conv["sum_of_activations"])
        else:
            raise PreconditionError(f"unknown convention {conv!r}")
        acts = d["activations"]
        if isinstance(acts, (str, dict)):
            acts = [acts] * len(d["W"])
        return cls(np.asarray(d["L"], float), tuple(np.asarray(w, float) for w in d["W"]), np.asarray(d["P"], float),
                   tuple(LayerActivation.from_json(a) for a in acts), dtau, d.get("residual", "none"))


def _input(params: FiniteNetParams, X: ArrayLike) -> NDArray[np.float64]:
    X = np.asarray(X, dtype=np.float64).reshape(-1)
    if X.shape[0] != params.L.shape[1]:
        raise StructuralError(f"input has length {X.shape[0]}, expected {params.L.shape[1]}")
    return X


def _run(params: FiniteNetParams, X, residual: bool):
    z = params.L @ _input(params, X)
    trace = [z]
    for i, (W, act) in enumerate(zip(params.W, params.activations)):
        rate = layer_rate(W, z, act.activation, act.gains, params.dtau)
        z = z + rate if residual else rate
        if not np.all(np.isfinite(z)):
            raise DivergenceError(i + 1, "hidden state")
        trace.append(z)
    return trace


def _readout(P: NDArray[np.float64], z_last, z_first, skip: bool):
    if not skip:
        return P @ z_last
    n = z_last.shape[0]
    # split product: a zero second block adds exact zeros, keeping plain and skip read-outs bitwise equal
    return P[:, :n] @ z_last + P[:, n:] @ z_first


def eval_deepnet(params: FiniteNetParams, X: ArrayLike, trace: bool = False):
    """DeepNet: Z_0 = L X, Z_{i+1} = sigma_{i+1}(W_{i+1} Z_i), Y = P Z_l.

    Returns ``Y``, or ``(Y, hidden_states)`` with ``trace=True``.
    """
    if params.residual != "none":
        raise StructuralError("eval_deepnet needs residual='none'; use eval_deepresnet")
    states = _run(params, X, residual=False)
    Y = _readout(params.P, states[-1], states[0], skip=False)
    return (Y, states) if trace else Y


def eval_deepresnet(params: FiniteNetParams, X: ArrayLike, trace: bool = False):
    """DeepResNet: Z_{i+1} = Z_i + sigma_{i+1}(W_{i+1} Z_i); plain or skip read-out."""
    if params.residual not in ("plain", "skip"):
        raise StructuralError("eval_deepresnet needs residual 'plain' or 'skip'")
    states = _run(params, X, residual=True)
    Y = _readout(params.P, states[-1], states[0], skip=params.residual == "skip")
    return (Y, states) if trace else Y


def eval_finite(params: FiniteNetParams, X: ArrayLike, trace: bool = False):
    """Dispatch on ``params.residual``."""
    if params.residual == "none":
        return eval_deepnet(params, X, trace)
    return eval_deepresnet(params, X, trace)


def augment_bias(params: FiniteNetParams, biases) -> FiniteNetParams:
    """Fold per-layer biases into a bias-free net acting on [X; 1].

    A constant neuron is appended to every hidden state. In a DeepNet it
    feeds itself with weight 1 and gain 1/sigma(1), so it stays at 1 (up to
    rounding); in a residual net its gain is 0 and the skip keeps it at 1.

    Args:
        params: Standard-convention net with residual 'none' or 'plain'.
        biases: One length-n vector per layer.
    """
    if params.dtau is not None or params.residual == "skip":
        raise PreconditionError("bias augmentation supports Standard nets with residual 'none' or 'plain'")
    n, p = params.L.shape
    if len(biases) != params.depth:
        raise StructuralError("need one bias vector per layer")
    L = np.zeros((n + 1, p + 1))
    L[:n, :p] = params.L
    L[n, p] = 1.0
    W, acts = [], []
    residual = params.residual == "plain"
    for w, b, a in zip(params.W, biases, params.activations):
        wa = np.zeros((n + 1, n + 1))
        wa[:n, :n] = w
        wa[:n, n] = np.asarray(b, dtype=np.float64)
        gains = np.ones(n + 1) if a.gains is None else np.append(a.gains, 1.0)
        if residual:
            gains[n] = 0.0
        else:
            wa[n, n] = 1.0
            one = float(a.activation(np.array(1.0)))
            if one == 0.0:
                raise PreconditionError("activation vanishes at 1; cannot carry a constant neuron")
            gains[n] = 1.0 / one
        W.append(wa)
        acts.append(LayerActivation(a.activation, gains))
    P = np.hstack([params.P, np.zeros((params.P.shape[0], 1))])
    return FiniteNetParams(L, tuple(W), P, tuple(acts), None, params.residual)
