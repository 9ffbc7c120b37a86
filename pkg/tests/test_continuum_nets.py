from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import rel_err
from dipanet.continuum_nets import (
    ContinuumNetParams,
    DipanetParams,
    OdeNetParams,
    Solver,
    dipanet_integral_form,
    eval_deepcnn,
    eval_deeprescnn,
    eval_dipanet,
    eval_neuralode,
    eval_pointwise_cnn,
    neuralode_integral_form,
)
from dipanet.errors import DivergenceError, PreconditionError, ResourceError, StructuralError
from dipanet.funcrep import IDENTITY, RELU, TANH, ZERO, ActivationField, Analytic, constant
from dipanet.harness import random_params
from dipanet.selftest import lipschitz_cnn, mean_field_dipanet
from dipanet.transforms import discretize_dipanet_width

ONE_UNIT = constant([1.0])
ONE_SQ = constant(1.0, "square")


def scalar_ode(act=IDENTITY, T=1.0, residual=False):
    P = [[1.0, 0.0]] if residual else [[1.0]]
    return OdeNetParams(np.array([[1.0]]), constant([[1.0]], "time", T), ActivationField(act), np.array(P), T,
                        residual=residual)


class TestSolver:
    def test_json(self):
        s = Solver("rk4", 12)
        assert Solver.from_json(s.to_json()) == s

    @pytest.mark.parametrize("bad", [{"euler": 0}, {"heun": 3}, {"euler": 2, "rk4": 2}, [1]])
    def test_rejects(self, bad):
        with pytest.raises(PreconditionError):
            Solver.from_json(bad)


class TestDeepCNN:
    def test_zero_activation(self):
        p = ContinuumNetParams(ONE_UNIT, (ONE_SQ,), (ActivationField(ZERO),), ONE_UNIT)
        assert eval_deepcnn(p, [2.0], 16)[0] == 0.0

    @pytest.mark.parametrize("m", [1, 3, 64])
    def test_constants_exact(self, m):
        p = ContinuumNetParams(ONE_UNIT, (ONE_SQ,), (ActivationField(IDENTITY),), ONE_UNIT)
        assert eval_deepcnn(p, [0.7], m)[0] == pytest.approx(0.7, rel=1e-15)

    @pytest.mark.parametrize("m", [4, 10, 100])
    def test_linear_readout(self, m):
        P = Analytic("unit", (1,), [{"poly": [0.0, 2.0], "var": 0}])
        p = ContinuumNetParams(ONE_UNIT, (ONE_SQ,), (ActivationField(IDENTITY),), P)
        assert eval_deepcnn(p, [1.5], m)[0] == pytest.approx(1.5 * (m - 1) / m, rel=1e-14)

    def test_batch_matches_rows(self, rng):
        p = lipschitz_cnn(layers=2)
        X = rng.normal(size=(4, 2))
        batch = eval_deepcnn(p, X, 32)
        for x, y in zip(X, batch):
            assert np.array_equal(eval_deepcnn(p, x, 32), y)

    def test_linearity(self):
        p = random_params(3, {"architecture": "deepcnn", "activation": "identity", "dims": {"p": 2, "layers": 3}})
        X1, X2 = np.array([0.3, -1.2]), np.array([2.0, 0.7])
        lhs = eval_deepcnn(p, 2 * X1 - 3 * X2, 48)
        assert rel_err(lhs, 2 * eval_deepcnn(p, X1, 48) - 3 * eval_deepcnn(p, X2, 48)) <= 1e-12

    def test_refinement_monotone(self):
        p = lipschitz_cnn()
        X = np.array([0.6, -0.8])
        ref = eval_deepcnn(p, X, 4096)
        errs = [float(np.linalg.norm(eval_deepcnn(p, X, m) - ref)) for m in (16, 32, 64, 128, 256, 512, 1024)]
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_structural(self):
        with pytest.raises(StructuralError):
            ContinuumNetParams(ONE_UNIT, (ONE_UNIT,), (ActivationField(RELU),), ONE_UNIT)
        with pytest.raises(StructuralError):
            eval_deepcnn(ContinuumNetParams(ONE_UNIT, (ONE_SQ,), (RELU,), constant([[1.0, 0.0]]), True), [1.0])

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_divergence(self):
        big = constant(1e300, "square")
        p = ContinuumNetParams(ONE_UNIT, (big, big), (ActivationField(IDENTITY),) * 2, ONE_UNIT)
        with pytest.raises(DivergenceError):
            eval_deepcnn(p, [1e10], 4)


class TestPointwise:
    def test_zero(self):
        assert eval_pointwise_cnn(ONE_UNIT, ZERO, ONE_UNIT, [1.0], 10)[0] == 0.0

    def test_relu_ramp(self):
        L = Analytic("unit", (1,), [{"poly": [-0.5, 1.0], "var": 0}])
        Y = eval_pointwise_cnn(L, RELU, ONE_UNIT, [1.0], 1000)[0]
        assert abs(Y - 0.125) <= 1e-3

    @pytest.mark.parametrize("m", [1, 7, 50])
    def test_constants(self, m):
        Y = eval_pointwise_cnn(constant([3.0]), IDENTITY, constant([-2.0]), [0.5], m)[0]
        assert Y == pytest.approx(-3.0, rel=1e-15)


class TestDeepResCNN:
    def test_zero_activation(self):
        P = Analytic("unit", (1, 2), [[{"poly": [1.0, 1.0], "var": 0}, {"cos": {"var": 0}}]])
        L = Analytic("unit", (1,), [{"exp": {"var": 0}}])
        p = ContinuumNetParams(L, (ONE_SQ, ONE_SQ), (ActivationField(ZERO),) * 2, P, True)
        m = 32
        tau = np.arange(m) / m
        Ls = np.exp(tau) * 1.3
        expect = np.sum((1 + tau) * Ls + np.cos(tau) * Ls) / m
        assert rel_err(eval_deeprescnn(p, [1.3], m), [expect]) <= 1e-14

    @pytest.mark.parametrize("m", [1, 5, 40])
    def test_reads_last(self, m):
        p = ContinuumNetParams(ONE_UNIT, (ONE_SQ,), (ActivationField(IDENTITY),), constant([[1.0, 0.0]]), True)
        assert eval_deeprescnn(p, [0.4], m)[0] == pytest.approx(0.8, rel=1e-15)

    def test_reads_first(self):
        p = ContinuumNetParams(ONE_UNIT, (ONE_SQ,), (ActivationField(IDENTITY),), constant([[0.0, 1.0]]), True)
        assert eval_deeprescnn(p, [0.4], 8)[0] == pytest.approx(0.4, rel=1e-15)

    def test_linearity(self):
        p = random_params(5, {"architecture": "deeprescnn", "activation": "identity", "dims": {"p": 2, "q": 2}})
        X1, X2 = np.array([1.0, 0.5]), np.array([-0.2, 0.9])
        assert rel_err(eval_deeprescnn(p, X1 + X2, 40),
                       eval_deeprescnn(p, X1, 40) + eval_deeprescnn(p, X2, 40)) <= 1e-12


class TestNeuralODE:
    @pytest.mark.parametrize("solver", [Solver("euler", 5), Solver("rk4", 3)])
    def test_zero_activation(self, rng, solver):
        ode = random_params(2, {"architecture": "neuralode", "activation": "zero", "dims": {"n": 3, "p": 2}})
        X = rng.normal(size=2)
        assert np.array_equal(eval_neuralode(ode, X, solver), ode.P @ (ode.L @ X))

    def test_rk4_exponential(self):
        assert eval_neuralode(scalar_ode(), [2.0], Solver("rk4", 1000))[0] == pytest.approx(2 * math.e, abs=2e-9)

    def test_euler_hand(self):
        assert eval_neuralode(scalar_ode(), [1.0], Solver("euler", 4))[0] == 2.44140625

    def test_residual_readout(self):
        Y = eval_neuralode(scalar_ode(residual=True), [1.0], Solver("euler", 4))
        assert Y[0] == 2.44140625

    def test_horizon(self):
        # z' = z on [0, 2] with 4 Euler steps: 1.5^4
        assert eval_neuralode(scalar_ode(T=2.0), [1.0], Solver("euler", 4))[0] == 1.5**4

    def test_time_dependent_kernel(self):
        # z' = t z: z(1) = exp(1/2)
        W = Analytic("time", (1, 1), [[{"var": 0}]])
        ode = OdeNetParams(np.array([[1.0]]), W, ActivationField(IDENTITY), np.array([[1.0]]))
        assert eval_neuralode(ode, [1.0], Solver("rk4", 200))[0] == pytest.approx(math.exp(0.5), abs=1e-10)

    @pytest.mark.parametrize("arch", ["neuralode", "neuralresode"])
    def test_batch_matches_rows(self, rng, arch):
        ode = random_params(6, {"architecture": arch, "dims": {"n": 3, "p": 2}})
        X = rng.normal(size=(5, 2))
        batch = eval_neuralode(ode, X, Solver("rk4", 20))
        for x, y in zip(X, batch):
            assert rel_err(eval_neuralode(ode, x, Solver("rk4", 20)), y) <= 1e-13

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("solver", [Solver("euler", 32), Solver("rk4", 16)])
    def test_integral_form(self, seed, solver):
        ode = random_params(seed, {"architecture": "neuralode", "dims": {"n": 3, "p": 2}})
        X = np.array([0.6, -0.8])
        assert rel_err(neuralode_integral_form(ode, X, solver), eval_neuralode(ode, X, solver)) <= 1e-10

    def test_integral_form_batch(self, rng):
        ode = random_params(4, {"architecture": "neuralresode", "dims": {"n": 3, "p": 2, "q": 2}})
        X = rng.normal(size=(4, 2))
        got = neuralode_integral_form(ode, X, Solver("rk4", 8))
        assert got.shape == (4, 2) and rel_err(got, eval_neuralode(ode, X, Solver("rk4", 8))) <= 1e-10

    def test_trajectory(self):
        Y, traj = eval_neuralode(scalar_ode(), [1.0], Solver("euler", 4), trajectory=True)
        assert traj.states.shape == (5, 1) and traj.states[0, 0] == 1.0 and Y[0] == traj.final[0]

    def test_linearity(self, rng):
        ode = random_params(8, {"architecture": "neuralresode", "activation": "identity", "dims": {"n": 3, "p": 2}})
        X1, X2 = rng.normal(size=2), rng.normal(size=2)
        s = Solver("rk4", 10)
        assert rel_err(eval_neuralode(ode, X1 - 4 * X2, s),
                       eval_neuralode(ode, X1, s) - 4 * eval_neuralode(ode, X2, s)) <= 1e-12

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_divergence(self):
        ode = OdeNetParams(np.array([[1.0]]), constant([[1e200]], "time"), ActivationField(IDENTITY),
                           np.array([[1.0]]))
        with pytest.raises(DivergenceError):
            eval_neuralode(ode, [1e200], Solver("euler", 4))

    def test_json(self, rng):
        ode = random_params(9, {"architecture": "neuralresode", "dims": {"n": 2}})
        back = OdeNetParams.from_json(ode.to_json())
        X = rng.normal(size=1)
        assert np.array_equal(eval_neuralode(ode, X, Solver("rk4", 8)), eval_neuralode(back, X, Solver("rk4", 8)))


class TestDiPaNet:
    def test_zero_activation(self):
        P = Analytic("unit", (1,), [{"poly": [1.0, 1.0], "var": 0}])
        L = Analytic("unit", (1,), [{"sin": {"var": 0}}])
        dip = DipanetParams(L, constant(1.0, "box"), ActivationField(ZERO), P)
        m = 20
        tau = np.arange(m) / m
        expect = np.sum((1 + tau) * np.sin(tau)) / m * 2.0
        assert rel_err(eval_dipanet(dip, [2.0], m, Solver("rk4", 5)), [expect]) <= 1e-14

    @pytest.mark.parametrize("m", [1, 7, 32])
    def test_mean_field_rk4(self, m):
        assert eval_dipanet(mean_field_dipanet(), [1.0], m, Solver("rk4", 1000))[0] == pytest.approx(math.e, abs=1e-9)

    @pytest.mark.parametrize("m", [1, 8])
    @pytest.mark.parametrize("ell", [1, 4, 10])
    def test_mean_field_euler(self, m, ell):
        Y = eval_dipanet(mean_field_dipanet(), [1.0], m, Solver("euler", ell))[0]
        assert Y == pytest.approx((1 + 1 / ell) ** ell, rel=1e-14)

    @pytest.mark.parametrize("arch", ["dipanet", "diparesnet"])
    def test_method_of_lines_identity(self, arch):
        dip = random_params(2, {"architecture": arch})
        for solver in (Solver("euler", 8), Solver("rk4", 4)):
            assert np.array_equal(eval_dipanet(dip, [0.3], 12, solver),
                                  eval_neuralode(discretize_dipanet_width(dip, 12), [0.3], solver))

    @pytest.mark.parametrize("seed", range(4))
    def test_integral_form(self, seed):
        dip = random_params(seed, {"architecture": "dipanet" if seed % 2 else "diparesnet"})
        s = Solver("rk4", 8)
        assert rel_err(dipanet_integral_form(dip, [0.5], 16, s), eval_dipanet(dip, [0.5], 16, s)) <= 1e-10

    def test_budget(self):
        with pytest.raises(ResourceError):
            eval_dipanet(mean_field_dipanet(), [1.0], 64, Solver("euler", 64), budget=1000)

    def test_linearity(self):
        dip = random_params(4, {"architecture": "dipanet", "activation": "identity", "dims": {"p": 2}})
        X1, X2 = np.array([1.0, 2.0]), np.array([-0.5, 0.25])
        s = Solver("rk4", 6)
        assert rel_err(eval_dipanet(dip, X1 + X2, 16, s),
                       eval_dipanet(dip, X1, 16, s) + eval_dipanet(dip, X2, 16, s)) <= 1e-12

    def test_activation_gain(self):
        # gain(tau, t) = 2: every label follows z' = 2 z
        dip = DipanetParams(ONE_UNIT, constant(1.0, "box"), ActivationField(IDENTITY, constant(2.0, "strip")),
                            ONE_UNIT)
        assert eval_dipanet(dip, [1.0], 4, Solver("rk4", 400))[0] == pytest.approx(math.exp(2), rel=1e-9)

    def test_tanh_mean_field_matches_scalar_ode(self):
        dip = mean_field_dipanet(activation=TANH)
        ode = scalar_ode(act=TANH)
        s = Solver("rk4", 50)
        assert rel_err(eval_dipanet(dip, [0.7], 9, s), eval_neuralode(ode, [0.7], s)) <= 1e-14
