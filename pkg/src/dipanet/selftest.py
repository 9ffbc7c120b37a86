"""Small-size run of the library's invariants, used by ``dipanet selftest``.

Each invariant is a named zero-argument check returning True on success.
Checks run in module order and stop at the first failure; output contains
no timings so repeated runs print identical text.
"""

from __future__ import annotations

import math
from typing import Callable, TextIO

import numpy as np

from .continuum_nets import (
    ContinuumNetParams,
    DipanetParams,
    OdeNetParams,
    Solver,
    dipanet_integral_form,
    eval_deepcnn,
    eval_dipanet,
    eval_neuralode,
    neuralode_integral_form,
)
from .finite_nets import FiniteNetParams, augment_bias, eval_deepnet, eval_deepresnet, eval_finite
from .funcrep import (
    IDENTITY,
    RELU,
    TANH,
    ZERO,
    ActivationField,
    Analytic,
    LayerActivation,
    MatrixFamily,
    PiecewiseConstant,
    check_consistency,
    constant,
    function_from_json,
    interpolant_depth,
    projection,
)
from .harness import random_params, sweep_depth, sweep_width
from .numerics import (
    StepFunction,
    TimeGrid,
    euler_solve,
    linear_smooth,
    quad_left,
    quad_midpoint,
    rk4_solve,
    tan_compress,
)
from .transforms import discretize_depth, discretize_dipanet_width, discretize_width, homogenize_depth, roundtrip_corollary1

__all__ = ["INVARIANTS", "run_selftest", "lipschitz_cnn", "mean_field_dipanet", "cell_oracle"]


def _rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


# ---------------------------------------------------------------------------
# shared test problems
# ---------------------------------------------------------------------------


def lipschitz_cnn(layers: int = 1) -> ContinuumNetParams:
    """DeepCNN with W(tau, s) = sin(2 pi (tau + s)), tanh, L = [1 + tau, tau^2], P = 1 + tau."""
    two_pi = 2.0 * math.pi
    W = Analytic("square", (), {"sin": {"add": [{"poly": [0.0, two_pi], "var": 0}, {"poly": [0.0, two_pi], "var": 1}]}})
    L = Analytic("unit", (2,), [{"poly": [1.0, 1.0], "var": 0}, {"poly": [0.0, 0.0, 1.0], "var": 0}])
    P = Analytic("unit", (1,), [{"poly": [1.0, 1.0], "var": 0}])
    return ContinuumNetParams(L, (W,) * layers, (ActivationField(TANH),) * layers, P)


def mean_field_dipanet(T: float = 1.0, activation=IDENTITY) -> DipanetParams:
    """L = W = P = 1: every neuron label follows z' = sigma(z)."""
    return DipanetParams(constant([1.0]), constant(1.0, "box", T), ActivationField(activation), constant([1.0]), T)


def aligned_cnn(n: int, seed: int = 0) -> ContinuumNetParams:
    rng = np.random.default_rng(seed)
    L = PiecewiseConstant("unit", rng.uniform(-1, 1, (n, 2)))
    Ws = tuple(PiecewiseConstant("square", rng.uniform(-1, 1, (n, n))) for _ in range(2))
    gain = PiecewiseConstant("unit", rng.uniform(0.5, 1.5, n))
    P = PiecewiseConstant("unit", rng.uniform(-1, 1, (n, 3)))
    return ContinuumNetParams(L, Ws, (ActivationField(TANH, gain), ActivationField(RELU)), P)


def cell_oracle(params: ContinuumNetParams, X) -> np.ndarray:
    """Exact integrals of an aligned piecewise-constant DeepCNN, computed cell by cell from its arrays."""
    L, P = params.L.cells, params.P.cells
    n = L.shape[0]
    z = [float(L[j] @ X) for j in range(n)]
    for W, act in zip(params.W, params.activations):
        g = act.gain.cells if act.gain is not None else np.ones(n)
        z = [g[j] * sum(float(act.activation(W.cells[j, k] * z[k])) for k in range(n)) / n for j in range(n)]
    return sum(P[j] * z[j] for j in range(n)) / n


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------


def _numerics_quadrature():
    ok = quad_left(np.full(8, 3.0), 1 / 8) == 3.0
    ok &= abs(quad_midpoint(lambda x: x * x, 0.0, 1.0, 64) - 1 / 3) <= 1.0 / (12 * 64**2) + 1e-15
    return bool(ok)


def _numerics_euler_hand():
    traj = euler_solve(lambda t, z: z, [1.0], TimeGrid(4))
    return traj.final[0] == 2.44140625


def _numerics_rk4_order():
    errs = [abs(rk4_solve(lambda t, z: z, [1.0], s).final[0] - math.e) for s in (8, 16)]
    return 12 < errs[0] / errs[1] < 20


def _numerics_smoothing_l1():
    rng = np.random.default_rng(3)
    f = StepFunction(np.arange(6.0), rng.uniform(-1, 1, 6))
    delta = 0.05
    g = linear_smooth(f, delta)
    err = quad_midpoint(lambda x: np.abs(f(x) - g(x)), 0.0, 6.0, 120000)
    target = delta * f.variation / 2
    return err <= delta * f.variation and abs(err - target) <= 0.01 * target


def _numerics_tan():
    g = tan_compress(lambda x: np.exp(-x))
    return abs(quad_left(g(np.arange(4096) / 4096), 1 / 4096) - 1.0) < 1e-3


def _funcrep_consistency():
    rng = np.random.default_rng(4)
    fam = MatrixFamily.from_arrays(rng.normal(size=(8, 2)), [rng.normal(size=(8, 8))], rng.normal(size=(1, 8)), [TANH])
    return check_consistency(fam, list(range(1, 9)), samples=10).passed


def _funcrep_projection():
    for a in range(1, 6):
        for b in range(a, 6):
            for c in range(b, 6):
                if not np.array_equal(projection(a, b) @ projection(b, c), projection(a, c)):
                    return False
    return True


def _funcrep_roundtrip():
    f = random_params(5, {"architecture": "dipanet"}).W
    g = function_from_json(f.to_json())
    x = np.linspace(0, 0.9, 5)
    return np.array_equal(f(x, x[::-1], x), g(x, x[::-1], x))


def _funcrep_interpolant():
    return interpolant_depth([0.0, 2.0], 1.0)(0.25) == 1.0


def _finite_bias():
    rng = np.random.default_rng(6)
    net = FiniteNetParams(rng.normal(size=(3, 2)), (rng.normal(size=(3, 3)),), rng.normal(size=(1, 3)),
                          (LayerActivation(TANH),))
    b = rng.normal(size=3)
    X = rng.normal(size=2)
    direct = net.P @ np.tanh(net.W[0] @ (net.L @ X) + b)
    return _rel(eval_deepnet(augment_bias(net, [b]), np.append(X, 1.0)), direct) <= 1e-12


def _finite_skip_zero_block():
    rng = np.random.default_rng(7)
    L, W, P = rng.normal(size=(3, 2)), (rng.normal(size=(3, 3)),), rng.normal(size=(2, 3))
    acts = (LayerActivation(TANH),)
    plain = FiniteNetParams(L, W, P, acts, residual="plain")
    skip = FiniteNetParams(L, W, np.hstack([P, np.zeros((2, 3))]), acts, residual="skip")
    X = rng.normal(size=2)
    return np.array_equal(eval_deepresnet(plain, X), eval_deepresnet(skip, X))


def _continuum_lemma3():
    for seed in range(3):
        ode = random_params(seed, {"architecture": "neuralode", "dims": {"n": 3, "p": 2}})
        X = np.ones(2)
        for solver in (Solver("euler", 16), Solver("rk4", 8)):
            if _rel(neuralode_integral_form(ode, X, solver), eval_neuralode(ode, X, solver)) > 1e-10:
                return False
    return True


def _continuum_dipanet_forms():
    dip = random_params(1, {"architecture": "dipanet"})
    a = eval_dipanet(dip, [0.5], 16, Solver("rk4", 8))
    return _rel(dipanet_integral_form(dip, [0.5], 16, Solver("rk4", 8)), a) <= 1e-10


def _continuum_method_of_lines():
    dip = random_params(2, {"architecture": "diparesnet"})
    solver = Solver("euler", 8)
    return np.array_equal(eval_dipanet(dip, [0.3], 12, solver),
                          eval_neuralode(discretize_dipanet_width(dip, 12), [0.3], solver))


def _continuum_linearity():
    cnn = random_params(3, {"architecture": "deepcnn", "activation": "identity", "dims": {"p": 2}})
    X1, X2 = np.array([0.3, -1.2]), np.array([2.0, 0.7])
    lhs = eval_deepcnn(cnn, 2.0 * X1 - 3.0 * X2, 32)
    rhs = 2.0 * eval_deepcnn(cnn, X1, 32) - 3.0 * eval_deepcnn(cnn, X2, 32)
    return _rel(lhs, rhs) <= 1e-12


def _continuum_width_monotone():
    cnn = lipschitz_cnn()
    X = np.array([0.6, -0.8])
    ref = eval_deepcnn(cnn, X, 1024)
    errs = [float(np.linalg.norm(eval_deepcnn(cnn, X, m) - ref)) for m in (16, 32, 64, 128)]
    return all(b < a for a, b in zip(errs, errs[1:]))


def _transforms_exact_recovery():
    rng = np.random.default_rng(8)
    for n in (4, 8):
        cnn = aligned_cnn(n, seed=n)
        net = discretize_width(cnn, n)
        for _ in range(5):
            X = rng.uniform(-1, 1, 2)
            oracle = cell_oracle(cnn, X)
            if _rel(eval_deepcnn(cnn, X, n), oracle) > 1e-12 or _rel(eval_finite(net, X), oracle) > 1e-12:
                return False
    return True


def _transforms_euler_identity():
    ode = random_params(4, {"architecture": "neuralresode", "dims": {"n": 3}})
    X = np.array([0.7])
    return np.array_equal(eval_finite(discretize_depth(ode, 10), X), eval_neuralode(ode, X, Solver("euler", 10)))


def _transforms_routes_mean_field():
    for dip in (mean_field_dipanet(), mean_field_dipanet(activation=ZERO)):
        for n, ell in ((3, 5), (8, 8)):
            a = eval_finite(roundtrip_corollary1(dip, n, ell, "width_then_depth"), [1.5])
            b = eval_finite(roundtrip_corollary1(dip, n, ell, "depth_then_width"), [1.5])
            if not np.array_equal(a, b):
                return False
    return True


def _transforms_closure():
    ode = OdeNetParams(np.array([[1.0], [0.5]]), Analytic("time", (2, 2), [[{"sin": {"var": 0}}, 0.5], [-0.5, 0.2]]),
                       ActivationField(TANH), np.array([[1.0, -1.0]]))
    depths = (16, 32)
    res = homogenize_depth([discretize_depth(ode, ell) for ell in depths], 1.0, reference_steps=256)
    X = np.array([[0.5], [-1.0]])
    ref = Solver("rk4", 256)
    recovered = max(float(np.linalg.norm(eval_neuralode(res.params, x, ref) - eval_neuralode(ode, x, ref))) for x in X)
    euler_gap = max(float(np.linalg.norm(eval_neuralode(ode, x, Solver("euler", 32)) - eval_neuralode(ode, x, ref)))
                    for x in X)
    return recovered <= 2 * euler_gap


def _harness_reproducible():
    ode = random_params(9, {"architecture": "neuralode", "dims": {"n": 2}})
    X = np.array([[1.0], [-0.5]])
    a = sweep_depth(ode, [4, 8, 16], X, Solver("rk4", 64))
    b = sweep_depth(ode, [4, 8, 16], X, Solver("rk4", 64), threads=3)
    cnn = lipschitz_cnn()
    c = sweep_width(cnn, [4, 8], np.array([[0.5, 0.5]]), 32)
    d = sweep_width(cnn, [4, 8], np.array([[0.5, 0.5]]), 32, threads=2)
    return a.to_json() == b.to_json() and c.to_json() == d.to_json()


INVARIANTS: list[tuple[str, Callable[[], bool]]] = [
    ("numerics.quadrature_exactness", _numerics_quadrature),
    ("numerics.euler_hand_iteration", _numerics_euler_hand),
    ("numerics.rk4_fourth_order", _numerics_rk4_order),
    ("numerics.smoothing_l1_bound", _numerics_smoothing_l1),
    ("numerics.tan_change_of_variables", _numerics_tan),
    ("funcrep.constructor_family_consistency", _funcrep_consistency),
    ("funcrep.projection_composition", _funcrep_projection),
    ("funcrep.serialization_roundtrip", _funcrep_roundtrip),
    ("funcrep.interpolant_depth_midpoint", _funcrep_interpolant),
    ("finite_nets.bias_augmentation", _finite_bias),
    ("finite_nets.skip_zero_block", _finite_skip_zero_block),
    ("continuum_nets.integral_form_neuralode", _continuum_lemma3),
    ("continuum_nets.integral_form_dipanet", _continuum_dipanet_forms),
    ("continuum_nets.method_of_lines_identity", _continuum_method_of_lines),
    ("continuum_nets.linearity_identity_activation", _continuum_linearity),
    ("continuum_nets.width_refinement_monotone", _continuum_width_monotone),
    ("transforms.exact_recovery", _transforms_exact_recovery),
    ("transforms.euler_identity", _transforms_euler_identity),
    ("transforms.route_commutation_mean_field", _transforms_routes_mean_field),
    ("transforms.homogenize_discretize_closure", _transforms_closure),
    ("harness.sweep_reproducible", _harness_reproducible),
]


def run_selftest(out: TextIO) -> bool:
    """Run every invariant; print one line each and stop at the first failure."""
    for name, check in INVARIANTS:
        try:
            ok = bool(check())
            why = ""
        except Exception as exc:  # a crash counts as a failure of that invariant
            ok, why = False, f" ({type(exc).__name__}: {exc})"
        if not ok:
            print(f"FAIL {name}{why}", file=out)
            return False
        print(f"ok   {name}", file=out)
    print(f"selftest passed: {len(INVARIANTS)} invariants", file=out)
    return True
