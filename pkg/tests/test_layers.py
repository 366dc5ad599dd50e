import numpy as np
import numpy.testing as npt
import pytest

from augnet import layers
from augnet.layers import (
    BatchNormParams,
    Conv2dParams,
    DenseParams,
    activation,
    batchnorm,
    conv2d,
    dense,
    dropout,
    maxpool2d,
)
from augnet.tensor import ShapeError, Tape, Tensor, backward, grad_check, reduce

from oracles import conv2d_loops, maxpool_loops


def _wsum(t, w):
    return reduce(t * Tensor(w), "sum")


class TestConv2d:
    def test_same_padding_shapes(self, rng):
        p = layers.init_conv_params(rng, 3, 3, 3, 16, padding="same")
        out = conv2d(Tensor(rng.normal(size=(1, 64, 64, 3))), p)
        assert out.shape == (1, 64, 64, 16)

    def test_valid_padding_shapes(self, rng):
        p = layers.init_conv_params(rng, 3, 3, 1, 4, padding="valid")
        out = conv2d(Tensor(rng.normal(size=(2, 10, 8, 1))), p)
        assert out.shape == (2, 8, 6, 4)

    def test_zero_kernel_gives_bias(self, rng):
        bias = np.array([0.5, -1.5])
        p = Conv2dParams(Tensor(np.zeros((3, 3, 2, 2))), Tensor(bias), "same")
        out = conv2d(Tensor(rng.normal(size=(1, 5, 5, 2))), p)
        npt.assert_array_equal(out.data, np.broadcast_to(bias, (1, 5, 5, 2)))

    @pytest.mark.parametrize("padding", ["same", "valid"])
    def test_against_loop_oracle(self, rng, padding):
        x = rng.normal(size=(1, 6, 6, 2))
        kernel = rng.normal(size=(3, 3, 2, 3))
        bias = rng.normal(size=3)
        p = Conv2dParams(Tensor(kernel), Tensor(bias), padding)
        got = conv2d(Tensor(x), p).data
        want = conv2d_loops(x, kernel, bias, padding)
        npt.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_channel_mismatch(self, rng):
        p = layers.init_conv_params(rng, 3, 3, 3, 4)
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.ones((1, 8, 8, 2))), p)

    def test_valid_too_small(self, rng):
        p = layers.init_conv_params(rng, 3, 3, 1, 2, padding="valid")
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.ones((1, 2, 8, 1))), p)

    def test_gradients(self, rng):
        x = Tensor(rng.normal(size=(2, 5, 5, 2)))
        p = layers.init_conv_params(rng, 3, 3, 2, 3)
        w = rng.normal(size=(2, 5, 5, 3))
        assert grad_check(lambda t: _wsum(conv2d(t, p), w), x) < 1e-4
        assert grad_check(
            lambda t: _wsum(conv2d(x, Conv2dParams(t, p.bias, p.padding)), w),
            p.kernel) < 1e-4
        assert grad_check(
            lambda t: _wsum(conv2d(x, Conv2dParams(p.kernel, t, p.padding)), w),
            p.bias) < 1e-4


class TestBatchNorm:
    def test_train_mode_normalizes(self, rng):
        p = layers.init_batchnorm_params(3)
        x = Tensor(rng.normal(2.0, 3.0, size=(4, 6, 6, 3)))
        out = batchnorm(x, p, mode="train").data
        npt.assert_allclose(out.mean(axis=(0, 1, 2)), 0.0, atol=1e-6)
        npt.assert_allclose(out.var(axis=(0, 1, 2)), 1.0, atol=1e-4)

    def test_gamma_zero_gives_beta(self, rng):
        p = layers.init_batchnorm_params(2)
        p.gamma.data = np.zeros(2)
        p.beta.data = np.array([0.7, -0.2])
        out = batchnorm(Tensor(rng.normal(size=(2, 4, 4, 2))), p, mode="train").data
        npt.assert_allclose(out, np.broadcast_to(p.beta.data, (2, 4, 4, 2)), atol=1e-12)

    def test_eval_matches_scalar_formula(self, rng):
        p = layers.init_batchnorm_params(2)
        p.gamma.data = np.array([1.5, 0.5])
        p.beta.data = np.array([0.1, -0.3])
        p.running_mean.data = np.array([0.4, -0.6])
        p.running_var.data = np.array([2.0, 0.5])
        x = rng.normal(size=(1, 2, 2, 2))
        out = batchnorm(Tensor(x), p, mode="eval").data
        for idx in np.ndindex(1, 2, 2, 2):
            c = idx[3]
            want = ((x[idx] - p.running_mean.data[c])
                    / np.sqrt(p.running_var.data[c] + p.epsilon)
                    * p.gamma.data[c] + p.beta.data[c])
            assert abs(out[idx] - want) < 1e-12

    def test_running_stats_update(self, rng):
        p = layers.init_batchnorm_params(1, momentum=0.9)
        x = rng.normal(1.0, 2.0, size=(8, 4, 4, 1))
        batchnorm(Tensor(x), p, mode="train")
        npt.assert_allclose(p.running_mean.data, 0.9 * 0.0 + 0.1 * x.mean(), rtol=1e-12)
        npt.assert_allclose(p.running_var.data, 0.9 * 1.0 + 0.1 * x.var(), rtol=1e-12)

    def test_single_element_train_rejected(self):
        p = layers.init_batchnorm_params(2)
        with pytest.raises(ValueError):
            batchnorm(Tensor(np.ones((1, 1, 1, 2))), p, mode="train")

    def test_eval_mode_pure(self, rng):
        p = layers.init_batchnorm_params(2)
        before = p.running_mean.data.copy()
        batchnorm(Tensor(rng.normal(size=(2, 2, 2, 2))), p, mode="eval")
        npt.assert_array_equal(p.running_mean.data, before)

    @pytest.mark.parametrize("mode", ["train", "eval"])
    def test_gradients(self, rng, mode):
        x = Tensor(rng.normal(size=(3, 4, 4, 2)))
        w = rng.normal(size=(3, 4, 4, 2)) + 2.0

        def fresh():
            p = layers.init_batchnorm_params(2)
            p.gamma.data = np.array([1.2, 0.7])
            p.beta.data = np.array([0.3, -0.1])
            p.running_mean.data = np.array([0.2, -0.4])
            p.running_var.data = np.array([1.1, 0.8])
            return p

        assert grad_check(lambda t: _wsum(batchnorm(t, fresh(), mode=mode), w), x) < 1e-4
        assert grad_check(
            lambda t: _wsum(batchnorm(x, BatchNormParams(
                t, fresh().beta, fresh().running_mean, fresh().running_var), mode=mode), w),
            fresh().gamma) < 1e-4
        assert grad_check(
            lambda t: _wsum(batchnorm(x, BatchNormParams(
                fresh().gamma, t, fresh().running_mean, fresh().running_var), mode=mode), w),
            fresh().beta) < 1e-4


class TestMaxPool:
    def test_shapes(self, rng):
        assert maxpool2d(Tensor(rng.normal(size=(1, 64, 64, 3)))).shape == (1, 32, 32, 3)
        assert maxpool2d(Tensor(rng.normal(size=(2, 28, 28, 1)))).shape == (2, 14, 14, 1)

    def test_window_max(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
        assert maxpool2d(Tensor(x)).item() == 4.0

    def test_against_loop_oracle(self, rng):
        x = rng.normal(size=(1, 4, 4, 1))
        npt.assert_array_equal(maxpool2d(Tensor(x)).data, maxpool_loops(x))

    def test_backward_one_hot_per_window(self, rng):
        x = Tensor(rng.permutation(16).astype(float).reshape(1, 4, 4, 1), requires_grad=True)
        with Tape():
            out = maxpool2d(x)
            g = backward(reduce(out, "sum")).grad(x)
        # each window routes exactly one unit of gradient
        assert g.sum() == 4.0
        assert set(np.unique(g)) == {0.0, 1.0}
        assert grad_check(lambda t: reduce(maxpool2d(t), "sum"),
                          Tensor(x.data * 0.37 + 0.05)) < 1e-8

    def test_tie_routes_to_first_in_window(self):
        x = Tensor(np.full((1, 2, 2, 1), 7.0), requires_grad=True)
        with Tape():
            g = backward(reduce(maxpool2d(x), "sum")).grad(x)
        npt.assert_array_equal(g.reshape(2, 2), [[1.0, 0.0], [0.0, 0.0]])

    def test_odd_extent_rejected(self):
        with pytest.raises(ShapeError):
            maxpool2d(Tensor(np.ones((1, 5, 4, 1))))


class TestDense:
    def test_identity(self, rng):
        x = rng.normal(size=(3, 4))
        p = DenseParams(Tensor(np.eye(4)), Tensor(np.zeros(4)))
        npt.assert_array_equal(dense(Tensor(x), p).data, x)

    def test_extent_mismatch(self, rng):
        p = layers.init_dense_params(rng, 5, 2)
        with pytest.raises(ShapeError):
            dense(Tensor(np.ones((2, 4))), p)

    def test_gradients(self, rng):
        p = layers.init_dense_params(rng, 5, 3)
        x = Tensor(rng.normal(size=(4, 5)))
        w = rng.normal(size=(4, 3))
        assert grad_check(lambda t: _wsum(dense(t, p), w), x) < 1e-4
        assert grad_check(lambda t: _wsum(dense(x, DenseParams(t, p.bias)), w), p.weight) < 1e-4


class TestActivations:
    def test_relu(self):
        npt.assert_array_equal(activation(Tensor([-1.0, 0.0, 2.0]), "relu").data,
                               [0.0, 0.0, 2.0])

    def test_relu_gradient_zero_at_zero(self):
        x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
        with Tape():
            g = backward(reduce(activation(x, "relu"), "sum")).grad(x)
        npt.assert_array_equal(g, [0.0, 0.0, 1.0])

    def test_sigmoid_at_zero(self):
        assert activation(Tensor([0.0]), "sigmoid").item() == 0.5

    def test_sigmoid_saturation_and_stability(self):
        big = activation(Tensor([36.0]), "sigmoid").item()
        assert big <= 1.0 and big >= 1.0 - 1e-12
        with np.errstate(over="raise"):
            out = activation(Tensor([-700.0, 700.0]), "sigmoid").data
        assert np.all(np.isfinite(out))
        # stable-form oracle: s(x) = exp(-log1p(exp(-|x|)) - max(-x, 0))
        for v in (-30.0, -3.0, 0.5, 20.0):
            want = np.exp(-(np.log1p(np.exp(-abs(v))) + max(-v, 0.0)))
            got = activation(Tensor([v]), "sigmoid").item()
            assert abs(got - want) < 1e-12

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            activation(Tensor([1.0]), "tanh")

    def test_gradients(self, rng):
        x = Tensor(np.sign(rng.normal(size=(3, 3))) * rng.uniform(0.2, 2.0, size=(3, 3)))
        assert grad_check(lambda t: reduce(activation(t, "relu"), "sum"), x) < 1e-4
        assert grad_check(lambda t: reduce(activation(t, "sigmoid"), "sum"), x) < 1e-4


class TestDropout:
    def test_rate_zero_identity(self, rng):
        x = rng.normal(size=(4, 4))
        out = dropout(Tensor(x), 0.0, "train", rng)
        npt.assert_array_equal(out.data, x)

    def test_eval_identity(self, rng):
        x = rng.normal(size=(4, 4))
        npt.assert_array_equal(dropout(Tensor(x), 0.9, "eval").data, x)

    def test_survivor_statistics(self):
        rng = np.random.default_rng(42)
        x = Tensor(np.ones(100_000))
        out = dropout(x, 0.5, "train", rng).data
        survive = np.count_nonzero(out) / x.size
        assert abs(survive - 0.5) < 0.01
        assert abs(out.mean() - 1.0) < 0.01  # inverted dropout preserves expectation

    def test_expectation_preserved_on_random_input(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(1.0, 2.0, size=100_000)
        out = dropout(Tensor(x), 0.3, "train", np.random.default_rng(8)).data
        assert abs(out.mean() - x.mean()) / x.mean() < 0.01

    def test_rate_one_rejected(self, rng):
        with pytest.raises(ValueError):
            dropout(Tensor([1.0]), 1.0, "train", rng)

    def test_backward_uses_forward_mask(self):
        x = Tensor(np.ones(64), requires_grad=True)
        with Tape():
            out = dropout(x, 0.5, "train", np.random.default_rng(3))
            g = backward(reduce(out, "sum")).grad(x)
        npt.assert_array_equal(g, (out.data != 0) * 2.0)

    def test_deterministic_under_seed(self):
        x = Tensor(np.ones(100))
        a = dropout(x, 0.5, "train", np.random.default_rng(11)).data
        b = dropout(x, 0.5, "train", np.random.default_rng(11)).data
        npt.assert_array_equal(a, b)
