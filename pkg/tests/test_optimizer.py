import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sdareduce.autoencoder import DenoisingAutoencoderLayer, init_layer
from sdareduce.data import apply_standardizer, fit_standardizer, synthetic_manifold
from sdareduce.optimizer import (
    AdagradState,
    TrainingConfig,
    TrainingDivergedError,
    adagrad_delta,
    batch_slices,
    train_layer,
)


def state_for(*shapes):
    return AdagradState.zeros_like([np.zeros(s) for s in shapes])


class TestAdagradDelta:
    def test_zero_gradient_no_update(self):
        st_ = state_for((2, 3), (3,))
        cfg = TrainingConfig()
        upd = adagrad_delta(st_, [np.zeros((2, 3)), np.zeros(3)], cfg)
        for u in upd:
            np.testing.assert_array_equal(u, 0.0)
        for a in st_.accumulators:
            np.testing.assert_array_equal(a, 0.0)

    def test_first_step(self):
        st_ = state_for((1,))
        cfg = TrainingConfig(base_learning_rate=0.1, adagrad_epsilon=1e-300)
        (upd,) = adagrad_delta(st_, [np.array([2.0])], cfg)
        np.testing.assert_allclose(upd, [-0.1], rtol=1e-15)

    def test_two_steps(self):
        st_ = state_for((1,))
        cfg = TrainingConfig(base_learning_rate=0.1, adagrad_epsilon=1e-300)
        adagrad_delta(st_, [np.array([3.0])], cfg)
        np.testing.assert_array_equal(st_.accumulators[0], [9.0])
        (upd,) = adagrad_delta(st_, [np.array([4.0])], cfg)
        np.testing.assert_array_equal(st_.accumulators[0], [25.0])
        np.testing.assert_allclose(upd, [-0.08], rtol=1e-15)

    def test_weight_decay_and_momentum_order(self):
        st_ = state_for((1,))
        cfg = TrainingConfig(base_learning_rate=0.1, momentum=0.5, weight_decay=0.2, adagrad_epsilon=1e-300)
        theta = [np.array([3.0])]
        (u1,) = adagrad_delta(st_, [np.array([2.0])], cfg, theta)
        # raw = -0.1 * 2 / 2 = -0.1; decay = -0.1 * 0.2 * 3 = -0.06
        np.testing.assert_allclose(u1, [-0.16], rtol=1e-14)
        (u2,) = adagrad_delta(st_, [np.array([0.0])], cfg, theta)
        # raw 0, decay -0.06, velocity 0.5 * -0.16 - 0.06
        np.testing.assert_allclose(u2, [-0.14], rtol=1e-14)

    def test_weight_decay_needs_params(self):
        with pytest.raises(ValueError):
            adagrad_delta(state_for((1,)), [np.ones(1)], TrainingConfig(weight_decay=0.1))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            adagrad_delta(state_for((2,)), [np.ones(3)], TrainingConfig())
        with pytest.raises(ValueError, match="blocks"):
            adagrad_delta(state_for((2,)), [np.ones(2), np.ones(2)], TrainingConfig())

    @settings(max_examples=50, deadline=None)
    @given(st.lists(arrays(np.float64, 4, elements=st.floats(-1e3, 1e3)), min_size=1, max_size=10))
    def test_accumulators_nondecreasing_and_step_bounded(self, grads):
        cfg = TrainingConfig(base_learning_rate=0.05)
        st_ = state_for((4,))
        prev = st_.accumulators[0].copy()
        for g in grads:
            (u,) = adagrad_delta(st_, [g], cfg)
            assert np.all(st_.accumulators[0] >= prev)
            assert np.all(np.abs(u) <= cfg.base_learning_rate * (1 + 1e-12))
            prev = st_.accumulators[0].copy()


class TestTrainingConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(base_learning_rate=0.0),
            dict(momentum=1.0),
            dict(weight_decay=-1.0),
            dict(corruption_rate=1.2),
            dict(batch_size=0),
            dict(epochs=0),
            dict(adagrad_epsilon=0.0),
        ],
    )
    def test_rejects_out_of_range(self, kwargs):
        with pytest.raises(ValueError):
            TrainingConfig(**kwargs)

    def test_dict_round_trip(self):
        cfg = TrainingConfig(momentum=0.9, seed=4)
        assert TrainingConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            TrainingConfig.from_dict({"learning_rate": 0.1})

    def test_default_schedule(self):
        cfg = TrainingConfig()
        assert (cfg.batch_size, cfg.epochs) == (100, 50)


def test_batch_slices_keep_short_tail():
    assert batch_slices(250, 100) == [slice(0, 100), slice(100, 200), slice(200, 250)]


def small_data(seed=0, d=20, n_per_class=100):
    ds = synthetic_manifold(seed, n_per_class, 3, 5, d, 0.1)
    return apply_standardizer(ds.features, fit_standardizer(ds.features))


class TestTrainLayer:
    def test_update_count(self, monkeypatch):
        import sdareduce.optimizer as opt

        calls = []
        real = opt.layer_gradients

        def counting(*args):
            calls.append(1)
            return real(*args)

        monkeypatch.setattr(opt, "layer_gradients", counting)
        X = small_data()  # 300 rows
        train_layer(init_layer(20, 5, np.random.default_rng(0)), X, TrainingConfig(epochs=2))
        assert len(calls) == 6

    def test_bit_identical_for_same_seed(self):
        X = small_data()
        layer = init_layer(20, 5, np.random.default_rng(0))
        cfg = TrainingConfig(epochs=3, corruption_rate=0.3, momentum=0.5, weight_decay=1e-4, seed=11)
        a, la = train_layer(layer, X, cfg)
        b, lb = train_layer(layer, X, cfg)
        assert la == lb
        for p, q in zip(a.params(), b.params()):
            np.testing.assert_array_equal(p, q)

    def test_input_layer_not_mutated(self):
        X = small_data()
        layer = init_layer(20, 5, np.random.default_rng(0))
        before = [p.copy() for p in layer.params()]
        train_layer(layer, X, TrainingConfig(epochs=1))
        for p, q in zip(before, layer.params()):
            np.testing.assert_array_equal(p, q)

    def test_loss_decreases(self):
        X = small_data(n_per_class=500)
        _, losses = train_layer(init_layer(20, 5, np.random.default_rng(3)), X, TrainingConfig(epochs=10, seed=3))
        assert len(losses) == 10
        assert losses[-1] < losses[0]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            train_layer(init_layer(5, 2, np.random.default_rng(0)), np.zeros((200, 4)), TrainingConfig())

    def test_too_few_rows(self):
        with pytest.raises(ValueError, match="batch_size"):
            train_layer(init_layer(5, 2, np.random.default_rng(0)), np.ones((50, 5)), TrainingConfig())

    def test_divergence_reports_epoch_and_batch(self):
        layer = DenoisingAutoencoderLayer(np.zeros((1, 2)), np.zeros(1), np.zeros((2, 1)), np.zeros(2))
        X = np.full((10, 2), 1e4)  # initial loss 1e8 exceeds the divergence guard
        with pytest.raises(TrainingDivergedError, match="epoch 1, batch 1") as info:
            train_layer(layer, X, TrainingConfig(batch_size=5))
        assert (info.value.epoch, info.value.batch) == (1, 1)
