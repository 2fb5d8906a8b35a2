"""Layer-by-layer checks of the numeric core against hand arithmetic and
central finite differences."""
import numpy as np
import pytest

from phishcnn.nncore import (
    AdamState, adam_step, bce_loss, conv1d_backward, conv1d_forward,
    dense_backward, dense_forward, dropout_backward, dropout_forward,
    embedding_backward, embedding_forward, make_rng, maxpool1d,
    maxpool1d_backward, relu, relu_backward, sigmoid, sigmoid_backward,
)

from helpers import finite_diff, rel_err

TOL = 1e-6


class TestEmbedding:
    def test_gather(self):
        table = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        out = embedding_forward(np.array([2, 0]), table)
        np.testing.assert_array_equal(out, [[5.0, 6.0], [1.0, 2.0]])

    def test_all_pad_ids(self):
        table = make_rng(0).normal(size=(4, 3))
        out = embedding_forward(np.zeros(5, dtype=np.int64), table)
        np.testing.assert_array_equal(out, np.tile(table[0], (5, 1)))

    def test_out_of_range(self):
        table = np.zeros((3, 2))
        with pytest.raises(IndexError):
            embedding_forward(np.array([3]), table)
        with pytest.raises(IndexError):
            embedding_forward(np.array([-1]), table)

    def test_backward_accumulates_repeated_ids(self):
        ids = np.array([1, 1, 0])
        grad_out = np.array([[1.0, 2.0], [10.0, 20.0], [5.0, 6.0]])
        grad = embedding_backward(ids, grad_out, vocab_size=3)
        np.testing.assert_array_equal(grad, [[5.0, 6.0], [11.0, 22.0], [0.0, 0.0]])

    def test_backward_matches_finite_differences(self):
        rng = make_rng(1)
        table = rng.normal(size=(3, 2))
        ids = np.array([2, 0, 2])
        weights = rng.normal(size=(3, 2))

        def f(t):
            return float((embedding_forward(ids, t) * weights).sum())

        analytic = embedding_backward(ids, weights, vocab_size=3)
        assert rel_err(analytic, finite_diff(f, table)) <= TOL


class TestConv1d:
    def test_identity_kernel(self):
        x = make_rng(2).normal(size=(5, 1))
        w = np.ones((1, 1, 1))
        out = conv1d_forward(x, w, np.zeros(1))
        np.testing.assert_allclose(out, x)

    def test_hand_dot_product(self):
        # window dots: 1*1 + 2*(-1) = -1; 2*1 + 3*(-1) = -1
        x = np.array([[1.0], [2.0], [3.0]])
        w = np.array([[[1.0], [-1.0]]])
        out = conv1d_forward(x, w, np.zeros(1))
        np.testing.assert_array_equal(out, [[-1.0], [-1.0]])

    def test_too_short_input(self):
        with pytest.raises(ValueError):
            conv1d_forward(np.zeros((2, 3)), np.zeros((1, 4, 3)), np.zeros(1))

    def test_backward_matches_finite_differences(self):
        rng = make_rng(3)
        x = rng.normal(size=(7, 3))
        w = rng.normal(size=(2, 3, 3))
        b = rng.normal(size=2)
        proj = rng.normal(size=(5, 2))

        dx, dw, db = conv1d_backward(x, w, proj)
        assert rel_err(dx, finite_diff(lambda v: float((conv1d_forward(v, w, b) * proj).sum()), x)) <= TOL
        assert rel_err(dw, finite_diff(lambda v: float((conv1d_forward(x, v, b) * proj).sum()), w)) <= TOL
        assert rel_err(db, finite_diff(lambda v: float((conv1d_forward(x, w, v) * proj).sum()), b)) <= TOL


class TestRelu:
    def test_definition(self):
        np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])

    def test_positive_identity(self):
        x = np.abs(make_rng(4).normal(size=10)) + 0.1
        np.testing.assert_array_equal(relu(x), x)

    def test_gradient_off_kink(self):
        rng = make_rng(5)
        x = rng.normal(size=8)
        x[np.abs(x) < 0.05] = 0.1  # keep clear of the kink
        proj = rng.normal(size=8)
        analytic = relu_backward(x, proj)
        numeric = finite_diff(lambda v: float((relu(v) * proj).sum()), x)
        assert rel_err(analytic, numeric) <= TOL

    def test_subgradient_zero_at_zero(self):
        np.testing.assert_array_equal(relu_backward(np.zeros(3), np.ones(3)), np.zeros(3))


class TestMaxpool:
    def test_column_max(self):
        x = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0]).reshape(6, 1)
        np.testing.assert_array_equal(maxpool1d(x), [[3.0], [4.0], [9.0]])

    def test_constant_input(self):
        x = np.full((8, 2), 7.0)
        np.testing.assert_array_equal(maxpool1d(x), np.full((4, 2), 7.0))

    def test_odd_trailing_element_dropped(self):
        x = np.array([[1.0], [2.0], [99.0]])
        np.testing.assert_array_equal(maxpool1d(x), [[2.0]])

    def test_tie_routes_gradient_to_first(self):
        x = np.array([[2.0], [2.0]])
        dx = maxpool1d_backward(x, np.array([[5.0]]))
        np.testing.assert_array_equal(dx, [[5.0], [0.0]])

    def test_backward_matches_finite_differences(self):
        rng = make_rng(6)
        x = rng.normal(size=(10, 3))
        proj = rng.normal(size=(5, 3))
        analytic = maxpool1d_backward(x, proj)
        numeric = finite_diff(lambda v: float((maxpool1d(v) * proj).sum()), x)
        assert rel_err(analytic, numeric) <= TOL

    def test_too_short(self):
        with pytest.raises(ValueError):
            maxpool1d(np.zeros((1, 2)))


class TestDense:
    def test_identity_weights(self):
        x = np.array([1.5, -2.0, 3.0])
        out = dense_forward(x, np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(out, x)

    def test_hand_arithmetic(self):
        # 1*1 + 2*1 + 0.5 = 3.5
        out = dense_forward(np.array([1.0, 2.0]), np.array([[1.0], [1.0]]),
                            np.array([0.5]))
        np.testing.assert_array_equal(out, [3.5])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dense_forward(np.zeros(3), np.zeros((2, 4)), np.zeros(4))

    def test_backward_matches_finite_differences(self):
        rng = make_rng(7)
        x = rng.normal(size=4)
        w = rng.normal(size=(4, 3))
        b = rng.normal(size=3)
        proj = rng.normal(size=3)
        dx, dw, db = dense_backward(x, w, proj)
        assert rel_err(dx, finite_diff(lambda v: float((dense_forward(v, w, b) * proj).sum()), x)) <= TOL
        assert rel_err(dw, finite_diff(lambda v: float((dense_forward(x, v, b) * proj).sum()), w)) <= TOL
        assert rel_err(db, finite_diff(lambda v: float((dense_forward(x, w, v) * proj).sum()), b)) <= TOL


class TestDropout:
    def test_rate_zero_identity(self):
        x = make_rng(8).normal(size=6)
        for mode in ("train", "infer"):
            out, mask = dropout_forward(x, 0.0, mode, make_rng(0))
            np.testing.assert_array_equal(out, x)
            assert mask is None

    def test_infer_identity_any_rate(self):
        x = make_rng(9).normal(size=6)
        out, mask = dropout_forward(x, 0.9, "infer")
        np.testing.assert_array_equal(out, x)
        assert mask is None

    def test_fixed_seed_reproduces_mask(self):
        x = np.ones(100)
        out1, mask1 = dropout_forward(x, 0.5, "train", make_rng(42))
        out2, mask2 = dropout_forward(x, 0.5, "train", make_rng(42))
        np.testing.assert_array_equal(mask1, mask2)
        np.testing.assert_array_equal(out1, out2)

    def test_survivors_scaled(self):
        x = np.ones(1000)
        out, mask = dropout_forward(x, 0.5, "train", make_rng(1))
        np.testing.assert_array_equal(out[mask], 2.0)
        np.testing.assert_array_equal(out[~mask], 0.0)

    def test_backward_applies_same_mask(self):
        g = np.ones(10)
        _, mask = dropout_forward(np.ones(10), 0.4, "train", make_rng(2))
        dx = dropout_backward(g, mask, 0.4)
        np.testing.assert_allclose(dx, mask / 0.6)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            dropout_forward(np.ones(2), 1.0, "train", make_rng(0))


class TestSigmoid:
    def test_symmetry_point(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5

    def test_saturation_without_overflow(self):
        out = sigmoid(np.array([500.0, -500.0]))
        assert out[0] == 1.0
        assert out[1] == pytest.approx(0.0, abs=1e-100)
        assert np.all(np.isfinite(out))

    def test_gradient_at_reference_points(self):
        x = np.array([-2.0, 0.0, 3.0])
        proj = np.array([1.0, 1.0, 1.0])
        analytic = sigmoid_backward(sigmoid(x), proj)
        numeric = finite_diff(lambda v: float(sigmoid(v).sum()), x)
        assert rel_err(analytic, numeric) <= TOL


class TestBceLoss:
    def test_half_probability(self):
        loss, _ = bce_loss(0.5, 1)
        assert loss == pytest.approx(np.log(2.0), rel=1e-12)

    def test_exact_prediction_loss_vanishes(self):
        for y in (0, 1):
            loss, _ = bce_loss(float(y), y)
            assert loss == pytest.approx(0.0, abs=1e-11)

    def test_logit_gradient_through_sigmoid(self):
        for z, y in [(-1.3, 0), (0.4, 1), (2.2, 0)]:
            p = float(sigmoid(np.array([z]))[0])
            _, dlogit = bce_loss(p, y)
            numeric = finite_diff(
                lambda v: bce_loss(float(sigmoid(v)[0]), y)[0], np.array([z]))
            assert rel_err(np.array([dlogit]), numeric) <= TOL


class TestAdam:
    def test_first_step_hand_computed(self):
        # m=0.1, v=0.001; bias-corrected both become exactly 1,
        # so theta moves by -lr / (1 + eps)
        params = {"w": np.array([0.0])}
        grads = {"w": np.array([1.0])}
        state = AdamState.for_params(params, lr=0.0015)
        adam_step(params, grads, state)
        expected = -0.0015 / (1.0 + 1e-8)
        assert params["w"][0] == pytest.approx(expected, rel=1e-12)
        assert state.t == 1

    def test_zero_gradient_zero_state_is_noop(self):
        params = {"w": np.array([1.0, -2.0])}
        state = AdamState.for_params(params)
        adam_step(params, {"w": np.zeros(2)}, state)
        np.testing.assert_array_equal(params["w"], [1.0, -2.0])

    def test_constant_gradient_moves_monotonically(self):
        params = {"w": np.array([0.0])}
        state = AdamState.for_params(params, lr=0.01)
        trace = [0.0]
        for _ in range(3):
            adam_step(params, {"w": np.array([2.5])}, state)
            trace.append(params["w"][0])
        assert trace[0] > trace[1] > trace[2] > trace[3]

    def test_shape_mismatch(self):
        params = {"w": np.zeros(2)}
        state = AdamState.for_params(params)
        with pytest.raises(ValueError):
            adam_step(params, {"w": np.zeros(3)}, state)


class TestShapeAlgebra:
    def test_conv_and_pool_lengths(self):
        rng = make_rng(10)
        for _ in range(20):
            length = int(rng.integers(4, 40))
            n = int(rng.integers(1, min(length, 6) + 1))
            d = int(rng.integers(1, 5))
            n_filters = int(rng.integers(1, 4))
            x = rng.normal(size=(length, d))
            out = conv1d_forward(x, rng.normal(size=(n_filters, n, d)),
                                 np.zeros(n_filters))
            assert out.shape == (length - n + 1, n_filters)
            if out.shape[0] >= 2:
                assert maxpool1d(out).shape == (out.shape[0] // 2, n_filters)

    def test_default_scale_pipeline_arithmetic(self):
        length, n, n_filters = 2180, 8, 32
        conv_len = length - n + 1
        assert conv_len == 2173
        pooled = conv_len // 2
        assert pooled == 1086
        assert pooled * n_filters == 34752


class TestFiniteOutputs:
    def test_extreme_magnitudes_stay_finite(self):
        rng = make_rng(11)
        big = rng.normal(size=(6, 3)) * 1e12
        w = rng.normal(size=(2, 2, 3))
        out = conv1d_forward(big, w, np.zeros(2))
        assert np.all(np.isfinite(out))
        assert np.all(np.isfinite(relu(big * 1e200)))
        assert np.all(np.isfinite(maxpool1d(big)))
        assert np.all(np.isfinite(sigmoid(big.ravel() * 1e200)))

    def test_rng_requires_nonnegative_seed(self):
        with pytest.raises(ValueError):
            make_rng(-1)
