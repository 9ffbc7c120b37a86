from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rel_err
from dipanet.errors import StructuralError
from dipanet.finite_nets import FiniteNetParams, augment_bias, eval_deepnet, eval_deepresnet, eval_finite
from dipanet.funcrep import IDENTITY, RELU, TANH, ZERO, LayerActivation


def net(L, W, P, act=RELU, dtau=None, residual="none"):
    W = [np.asarray(w, float) for w in W]
    return FiniteNetParams(np.asarray(L, float), tuple(W), np.asarray(P, float),
                           tuple(LayerActivation(act) for _ in W), dtau, residual)


def random_net(rng, n=4, p=3, q=2, layers=3, act=TANH, dtau=None, residual="none"):
    cols = 2 * n if residual == "skip" else n
    return net(rng.normal(size=(n, p)), [rng.normal(size=(n, n)) / n for _ in range(layers)],
               rng.normal(size=(q, cols)), act, dtau, residual)


class TestDeepNet:
    I2 = np.eye(2)

    def test_identity_wiring(self):
        assert np.array_equal(eval_deepnet(net(self.I2, [self.I2], self.I2), [1.0, -1.0]), [1.0, 0.0])

    def test_relu_kills_negatives(self):
        assert np.array_equal(eval_deepnet(net(self.I2, [self.I2], self.I2), [-3.0, -4.0]), [0.0, 0.0])

    def test_swap(self):
        Y = eval_deepnet(net(self.I2, [[[0, 1], [1, 0]]], self.I2), [2.0, -1.0])
        assert np.array_equal(Y, [0.0, 2.0])

    def test_sum_of_activations_hand(self):
        # Z1_j = dtau * sum_s relu(W_js Z0_s)
        W = np.array([[1.0, -1.0], [2.0, 0.5]])
        Y = eval_deepnet(net(self.I2, [W], self.I2, RELU, dtau=0.5), [1.0, 2.0])
        expect = 0.5 * np.array([max(1.0, 0) + max(-2.0, 0), max(2.0, 0) + max(1.0, 0)])
        assert np.array_equal(Y, expect)

    def test_zero_activation(self, rng):
        p = random_net(rng, act=ZERO)
        assert np.array_equal(eval_deepnet(p, rng.normal(size=3)), np.zeros(2))

    def test_trace(self, rng):
        p = random_net(rng)
        X = rng.normal(size=3)
        Y, trace = eval_deepnet(p, X, trace=True)
        assert len(trace) == p.depth + 1
        assert np.array_equal(trace[0], p.L @ X)
        assert np.array_equal(Y, p.P @ trace[-1])

    def test_dimension_mismatch(self, rng):
        with pytest.raises(StructuralError):
            eval_deepnet(random_net(rng), np.ones(4))
        with pytest.raises(StructuralError):
            net(np.ones((3, 1)), [np.eye(2)], np.ones((1, 3)))
        with pytest.raises(StructuralError):
            net(np.ones((2, 1)), [np.eye(2)], np.ones((1, 2)), residual="skip")

    def test_residual_dispatch(self, rng):
        with pytest.raises(StructuralError):
            eval_deepnet(random_net(rng, residual="plain"), np.ones(3))
        with pytest.raises(StructuralError):
            eval_deepresnet(random_net(rng), np.ones(3))

    @pytest.mark.parametrize("dtau", [None, 0.25])
    def test_linearity(self, rng, dtau):
        p = random_net(rng, act=IDENTITY, dtau=dtau)
        X1, X2 = rng.normal(size=3), rng.normal(size=3)
        lhs = eval_deepnet(p, 1.5 * X1 - 0.5 * X2)
        rhs = 1.5 * eval_deepnet(p, X1) - 0.5 * eval_deepnet(p, X2)
        assert rel_err(lhs, rhs) <= 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.sampled_from(["relu", "tanh", "identity"]))
    def test_conventions_agree_scalar(self, L, W, X, kind):
        from dipanet.funcrep import Activation

        act = Activation(kind)
        a = eval_deepnet(net([[L]], [[[W]]], [[1.0]], act), [X])
        b = eval_deepnet(net([[L]], [[[W]]], [[1.0]], act, dtau=1.0), [X])
        assert np.array_equal(a, b)


class TestDeepResNet:
    def test_zero_activation_plain(self, rng):
        p = random_net(rng, act=ZERO, residual="plain")
        X = rng.normal(size=3)
        assert np.array_equal(eval_deepresnet(p, X), p.P @ (p.L @ X))

    def test_zero_activation_skip(self, rng):
        p = random_net(rng, act=ZERO, residual="skip")
        X = rng.normal(size=3)
        expect = (p.P[:, :4] + p.P[:, 4:]) @ (p.L @ X)
        assert rel_err(eval_deepresnet(p, X), expect) <= 1e-14

    def test_hand_scalar(self):
        assert eval_deepresnet(net([[1.0]], [[[2.0]]], [[1.0]], RELU, residual="plain"), [1.0])[0] == 3.0

    def test_skip_reads_first_state(self):
        p = net([[1.0]], [[[2.0]]], [[0.0, 1.0]], RELU, residual="skip")
        assert eval_deepresnet(p, [1.5])[0] == 1.5

    def test_plain_vs_skip_zero_block(self, rng):
        plain = random_net(rng, residual="plain")
        skip = FiniteNetParams(plain.L, plain.W, np.hstack([plain.P, np.zeros_like(plain.P)]), plain.activations,
                               None, "skip")
        X = rng.normal(size=3)
        assert np.array_equal(eval_deepresnet(plain, X), eval_deepresnet(skip, X))

    @pytest.mark.parametrize("residual", ["plain", "skip"])
    @pytest.mark.parametrize("dtau", [None, 0.1])
    def test_linearity(self, rng, residual, dtau):
        p = random_net(rng, act=IDENTITY, dtau=dtau, residual=residual)
        X1, X2 = rng.normal(size=3), rng.normal(size=3)
        assert rel_err(eval_finite(p, 2 * X1 + X2), 2 * eval_finite(p, X1) + eval_finite(p, X2)) <= 1e-12

    def test_trace_length(self, rng):
        p = random_net(rng, layers=5, residual="plain")
        _, trace = eval_finite(p, np.ones(3), trace=True)
        assert len(trace) == 6


class TestSerializationAndBias:
    @pytest.mark.parametrize("residual,dtau", [("none", None), ("plain", 0.5), ("skip", None)])
    def test_json_roundtrip(self, rng, residual, dtau):
        p = random_net(rng, residual=residual, dtau=dtau)
        q = FiniteNetParams.from_json(p.to_json())
        X = rng.normal(size=3)
        assert np.array_equal(eval_finite(p, X), eval_finite(q, X))

    @pytest.mark.parametrize("act", [TANH, RELU])
    def test_bias_deepnet(self, rng, act):
        p = random_net(rng, n=3, p=2, layers=2, act=act)
        b = [rng.normal(size=3) for _ in range(2)]
        X = rng.normal(size=2)
        z = p.L @ X
        for W, bi in zip(p.W, b):
            z = act(W @ z + bi)
        assert rel_err(eval_deepnet(augment_bias(p, b), np.append(X, 1.0)), p.P @ z) <= 1e-12

    def test_bias_resnet(self, rng):
        p = random_net(rng, n=3, p=2, layers=2, residual="plain")
        b = [rng.normal(size=3) for _ in range(2)]
        X = rng.normal(size=2)
        z = p.L @ X
        for W, bi in zip(p.W, b):
            z = z + np.tanh(W @ z + bi)
        assert rel_err(eval_deepresnet(augment_bias(p, b), np.append(X, 1.0)), p.P @ z) <= 1e-12
