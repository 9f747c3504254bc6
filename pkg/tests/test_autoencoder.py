import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sdareduce.autoencoder import (
    DenoisingAutoencoderLayer,
    corrupt,
    decode_layer,
    encode_layer,
    init_layer,
    layer_gradients,
    reconstruction_loss,
    sigmoid,
)

from oracles import numeric_gradients, relative_error


# squares of these neither underflow nor overflow
moderate = st.floats(-1e3, 1e3).filter(lambda v: v == 0.0 or abs(v) > 1e-100)


def layer_1x1(w=0.0, b=0.0, wp=0.0, bp=0.0, rate=0.0):
    return DenoisingAutoencoderLayer([[w]], [b], [[wp]], [bp], rate)


class TestCorrupt:
    def test_zero_rate_is_identity(self, rng):
        np.testing.assert_array_equal(corrupt([1.0, 2.0, 3.0], 0.0, rng), [1.0, 2.0, 3.0])

    def test_full_rate_zeroes_everything(self, rng):
        np.testing.assert_array_equal(corrupt(rng.normal(size=50), 1.0, rng), np.zeros(50))

    def test_zeroed_fraction_within_binomial_interval(self):
        out = corrupt(np.ones(1000), 0.3, np.random.default_rng(2024))
        frac = np.mean(out == 0.0)
        assert 0.256 <= frac <= 0.344

    def test_deterministic_given_seed(self):
        x = np.arange(1.0, 101.0)
        a = corrupt(x, 0.5, np.random.default_rng(9))
        b = corrupt(x, 0.5, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_survivors_unchanged(self, rng):
        x = rng.normal(size=200) + 5.0
        out = corrupt(x, 0.4, rng)
        kept = out != 0.0
        np.testing.assert_array_equal(out[kept], x[kept])

    @pytest.mark.parametrize("rate", [-0.1, 1.5])
    def test_rate_out_of_range(self, rng, rate):
        with pytest.raises(ValueError):
            corrupt([1.0], rate, rng)


class TestEncodeDecode:
    def test_zero_weights_give_half(self, rng):
        layer = DenoisingAutoencoderLayer(np.zeros((3, 5)), np.zeros(3), np.zeros((5, 3)), np.zeros(5))
        np.testing.assert_array_equal(encode_layer(layer, rng.normal(size=5)), [0.5, 0.5, 0.5])

    def test_closed_form_three_quarters(self):
        y = encode_layer(layer_1x1(w=math.log(3.0)), [1.0])
        np.testing.assert_allclose(y, [0.75], rtol=0, atol=1e-15)

    @pytest.mark.parametrize("a", [1000.0, -1000.0, 745.0, -745.0])
    def test_saturation_stays_open_interval(self, a):
        y = encode_layer(layer_1x1(w=a), [1.0])[0]
        assert np.isfinite(y) and 0.0 < y < 1.0
        if a > 0:
            assert y > 1.0 - 1e-10

    def test_sigmoid_matches_naive_in_safe_range(self):
        a = np.linspace(-30, 30, 601)
        np.testing.assert_allclose(sigmoid(a), 1.0 / (1.0 + np.exp(-a)), rtol=1e-14)

    def test_decode_zero_code_is_bias(self, rng):
        layer = init_layer(4, 2, rng)
        layer.b_prime[:] = [1.0, 2.0, 3.0, 4.0]
        np.testing.assert_array_equal(decode_layer(layer, np.zeros(2)), [1.0, 2.0, 3.0, 4.0])

    def test_decode_zero_weights(self, rng):
        layer = DenoisingAutoencoderLayer(np.ones((2, 3)), np.zeros(2), np.zeros((3, 2)), [7.0, 8.0, 9.0])
        np.testing.assert_array_equal(decode_layer(layer, rng.random(2)), [7.0, 8.0, 9.0])

    def test_decode_hand_computed(self):
        layer = DenoisingAutoencoderLayer(np.zeros((2, 2)), np.zeros(2), [[2.0, 0.0], [0.0, 3.0]], [1.0, 1.0])
        np.testing.assert_array_equal(decode_layer(layer, [0.5, 0.5]), [2.0, 2.5])

    def test_dimension_mismatch(self, rng):
        layer = init_layer(4, 2, rng)
        with pytest.raises(ValueError, match="dimension mismatch"):
            encode_layer(layer, np.ones(3))
        with pytest.raises(ValueError, match="dimension mismatch"):
            decode_layer(layer, np.ones(3))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-1e6, 1e6)), st.integers(0, 2**32 - 1))
    def test_codes_strictly_inside_unit_interval(self, x, seed):
        layer = init_layer(x.size, 3, np.random.default_rng(seed))
        y = encode_layer(layer, x)
        assert np.all((y > 0.0) & (y < 1.0))


class TestLoss:
    def test_perfect_reconstruction(self, rng):
        x = rng.normal(size=(4, 3))
        assert reconstruction_loss(x, x) == 0.0

    @pytest.mark.parametrize("x, z, expected", [([0, 0], [1, 1], 1.0), ([1, 2], [2, 4], 2.5)])
    def test_hand_computed(self, x, z, expected):
        assert reconstruction_loss(x, z) == expected

    def test_batch_is_mean_over_rows(self):
        x = np.array([[0.0, 0.0], [1.0, 2.0]])
        z = np.array([[1.0, 1.0], [2.0, 4.0]])
        assert reconstruction_loss(x, z) == pytest.approx((1.0 + 2.5) / 2)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            reconstruction_loss([1.0, 2.0], [1.0])

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, 6, elements=moderate), arrays(np.float64, 6, elements=moderate))
    def test_nonnegative_zero_iff_equal(self, x, z):
        loss = reconstruction_loss(x, z)
        assert loss >= 0.0
        assert (loss == 0.0) == bool(np.array_equal(x, z))


class TestGradients:
    def test_hand_chain_rule(self, rng):
        grads, loss = layer_gradients(layer_1x1(), np.array([[1.0]]), rng)
        assert loss == 1.0
        # y = 0.5, z = 0, dL/dz = 2 (z - x) = -2
        np.testing.assert_allclose(grads.db_prime, [-2.0])
        np.testing.assert_allclose(grads.dW_prime, [[-1.0]])
        np.testing.assert_allclose(grads.db, [0.0])
        np.testing.assert_allclose(grads.dW, [[0.0]])

    def test_zero_residual_gives_zero_bias_gradient(self, rng):
        layer = DenoisingAutoencoderLayer(np.zeros((2, 3)), np.zeros(2), np.zeros((3, 2)), [1.0, 2.0, 3.0])
        x = np.tile([1.0, 2.0, 3.0], (4, 1))
        grads, loss = layer_gradients(layer, x, rng)
        assert loss == 0.0
        np.testing.assert_array_equal(grads.db_prime, np.zeros(3))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        layer = init_layer(6, 3, rng)
        layer.b[:] = rng.normal(size=3)
        layer.b_prime[:] = rng.normal(size=6)
        x = rng.normal(size=(7, 6))
        grads, _ = layer_gradients(layer, x, rng)
        for analytic, numeric in zip(grads.blocks(), numeric_gradients(layer, x)):
            assert analytic.shape == numeric.shape
            assert relative_error(analytic, numeric).max() < 1e-4

    def test_shapes_match_layer(self, rng):
        layer = init_layer(5, 2, rng, corruption_rate=0.3)
        grads, _ = layer_gradients(layer, rng.normal(size=(3, 5)), rng)
        assert [g.shape for g in grads.blocks()] == [p.shape for p in layer.params()]

    def test_corruption_only_reaches_encoder_input(self):
        # full corruption: the code is constant, so dW is exactly zero
        layer = init_layer(5, 2, np.random.default_rng(0), corruption_rate=1.0)
        grads, _ = layer_gradients(layer, np.random.default_rng(1).normal(size=(4, 5)), np.random.default_rng(2))
        np.testing.assert_array_equal(grads.dW, 0.0)
        assert np.any(grads.db_prime != 0.0)

    def test_deterministic_with_corruption(self):
        layer = init_layer(8, 3, np.random.default_rng(0), corruption_rate=0.4)
        x = np.random.default_rng(1).normal(size=(5, 8))
        g1, l1 = layer_gradients(layer, x, np.random.default_rng(3))
        g2, l2 = layer_gradients(layer, x, np.random.default_rng(3))
        assert l1 == l2
        for a, b in zip(g1.blocks(), g2.blocks()):
            np.testing.assert_array_equal(a, b)

    def test_empty_batch(self, rng):
        with pytest.raises(ValueError, match="empty"):
            layer_gradients(init_layer(3, 2, rng), np.zeros((0, 3)), rng)

    def test_non_finite_batch(self, rng):
        with pytest.raises(ValueError, match="non-finite"):
            layer_gradients(init_layer(3, 2, rng), np.array([[1.0, np.nan, 0.0]]), rng)


class TestLayer:
    def test_init_bounds_and_zero_biases(self, rng):
        layer = init_layer(30, 10, rng)
        bound = math.sqrt(6 / 40)
        assert np.abs(layer.W).max() <= bound and np.abs(layer.W_prime).max() <= bound
        assert not np.array_equal(layer.W.T, layer.W_prime)
        np.testing.assert_array_equal(layer.b, 0.0)
        np.testing.assert_array_equal(layer.b_prime, 0.0)

    def test_rejects_inconsistent_shapes(self):
        with pytest.raises(ValueError, match="inconsistent"):
            DenoisingAutoencoderLayer(np.zeros((2, 3)), np.zeros(2), np.zeros((2, 3)), np.zeros(3))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            DenoisingAutoencoderLayer([[np.inf]], [0.0], [[0.0]], [0.0])
