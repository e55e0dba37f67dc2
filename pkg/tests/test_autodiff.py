"""
Retina Locator - Tests for the tensor autodiff engine
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import numpy as np
import pytest

from retina_locator.autodiff import nn
from retina_locator.autodiff import tensor as T
from retina_locator.autodiff.gradcheck import grad_check, relative_error
from retina_locator.autodiff.optim import ParamStore, adam_step, sgd_step
from retina_locator.autodiff.tensor import RunningStats, Tape, Tensor, backward
from retina_locator.exceptions import BatchSizeError, ContractError, DimensionError


def _param(values):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True, dtype=np.float64)


def _minimize_square(w0, steps, step_fn, **kwargs):
    """Run ``steps`` optimizer updates on loss = w^2."""
    w = _param([w0])
    store = ParamStore([('w', w)])
    for _ in range(steps):
        store.zero_grad()
        with Tape() as tape:
            loss = T.tensor_sum(T.mul(w, w))
        backward(loss, tape)
        step_fn(store, **kwargs)
    return w.data[0]


class TestMatmul:
    """Matrix product and its gradient."""

    def test_identity(self, float64):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = T.matmul(Tensor(np.eye(2)), a)
        np.testing.assert_array_equal(out.data, a.data)

    def test_row_times_column(self, float64):
        out = T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert out.shape == (1, 1)
        assert out.item() == 11.0

    def test_shape_mismatch_names_shapes(self, float64):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_gradient_matches_finite_differences(self, float64, grad_rng):
        a = _param(grad_rng.normal(size=(3, 4)))
        b = _param(grad_rng.normal(size=(4, 2)))
        err = grad_check(lambda: T.tensor_sum(T.matmul(a, b)), [a, b])
        assert err < 1e-6


class TestConv2d:
    """Cross-correlation with zero padding."""

    def test_identity_kernel(self, float64, rng):
        x = Tensor(rng.normal(size=(1, 4, 5)))
        out = T.conv2d(x, Tensor(np.ones((1, 1, 1, 1))))
        np.testing.assert_allclose(out.data, x.data)

    def test_constant_field(self, float64):
        c = 0.7
        out = T.conv2d(Tensor(np.full((1, 6, 6), c)), Tensor(np.ones((1, 1, 3, 3))))
        assert out.shape == (1, 4, 4)
        np.testing.assert_allclose(out.data, 9 * c)

    def test_output_size_with_stride_and_pad(self, float64):
        out = T.conv2d(Tensor(np.zeros((2, 7, 9))), Tensor(np.zeros((3, 2, 3, 3))), stride=2, pad=1)
        assert out.shape == (3, 4, 5)

    def test_kernel_larger_than_input(self, float64):
        with pytest.raises(DimensionError):
            T.conv2d(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))

    def test_gradient_matches_finite_differences(self, float64, grad_rng):
        x = _param(grad_rng.normal(size=(2, 5, 5)))
        k = _param(grad_rng.normal(size=(3, 2, 3, 3)))
        bias = _param(grad_rng.normal(size=3))
        weights = grad_rng.normal(size=(3, 3, 3))

        def loss():
            return T.tensor_sum(T.mul(T.conv2d(x, k, bias), Tensor(weights)))

        assert grad_check(loss, [x, k, bias]) < 1e-5

    def test_batched_gradient(self, float64, grad_rng):
        x = _param(grad_rng.normal(size=(2, 1, 6, 6)))
        k = _param(grad_rng.normal(size=(2, 1, 3, 3)))
        assert grad_check(lambda: T.tensor_sum(T.square(T.conv2d(x, k, stride=2, pad=1))), [x, k]) < 1e-5


class TestElementwise:
    def test_relu_values(self, float64):
        np.testing.assert_array_equal(T.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_relu_all_negative_has_zero_gradient(self, float64):
        x = _param([-3.0, -0.5, -1.0])
        with Tape() as tape:
            out = T.relu(x)
            loss = T.tensor_sum(out)
        backward(loss, tape)
        np.testing.assert_array_equal(out.data, 0.0)
        np.testing.assert_array_equal(x.grad, 0.0)

    def test_relu_gradient_away_from_zero(self, float64, grad_rng):
        values = grad_rng.uniform(0.1, 1.0, size=8) * grad_rng.choice([-1.0, 1.0], size=8)
        x = _param(values)
        assert grad_check(lambda: T.tensor_sum(T.square(T.relu(x))), [x]) < 1e-6

    def test_sigmoid_and_exp_log(self, float64, grad_rng):
        x = _param(grad_rng.normal(size=5))
        assert grad_check(lambda: T.tensor_sum(T.log(T.add(T.exp(x), T.sigmoid(x)))), [x]) < 1e-6


class TestSoftmax:
    def test_uniform(self, float64):
        np.testing.assert_allclose(T.softmax(Tensor([1.0, 1.0, 1.0])).data, [1 / 3] * 3)

    def test_single_element(self, float64):
        np.testing.assert_array_equal(T.softmax(Tensor([5.0])).data, [1.0])

    def test_large_logits_do_not_overflow(self, float64):
        out = T.softmax(Tensor([1000.0, 0.0]))
        assert np.all(np.isfinite(out.data))
        np.testing.assert_allclose(out.data, [1.0, 0.0])

    def test_empty_axis(self, float64):
        with pytest.raises(DimensionError):
            T.softmax(Tensor(np.zeros((2, 0))), axis=1)

    @pytest.mark.parametrize('seed', range(5))
    def test_rows_sum_to_one(self, float64, seed):
        x = np.random.default_rng(seed).normal(scale=50.0, size=(4, 7))
        out = T.softmax(Tensor(x), axis=1).data
        assert np.all((out >= 0) & (out <= 1))
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)

    def test_gradient(self, float64, grad_rng):
        x = _param(grad_rng.normal(size=(3, 4)))
        w = Tensor(grad_rng.normal(size=(3, 4)))
        assert grad_check(lambda: T.tensor_sum(T.mul(T.softmax(x, axis=1), w)), [x]) < 1e-6


class TestBatchNorm:
    """Batch normalization in train and eval mode."""

    def _affine(self, features, gamma=1.0, beta=0.0):
        return _param(np.full(features, gamma)), _param(np.full(features, beta))

    def test_standardized_batch_is_unchanged(self, float64):
        x = np.array([[-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [1.0, 1.0]])
        gamma, beta = self._affine(2)
        out = T.batch_norm(Tensor(x), gamma, beta, RunningStats(2))
        np.testing.assert_allclose(out.data, x, atol=1e-4)

    def test_zero_gamma_gives_beta(self, float64, rng):
        gamma, beta = self._affine(3, gamma=0.0, beta=0.25)
        out = T.batch_norm(Tensor(rng.normal(size=(5, 3))), gamma, beta, RunningStats(3))
        np.testing.assert_allclose(out.data, 0.25)

    @pytest.mark.parametrize('seed', range(3))
    def test_train_mode_moments(self, float64, seed):
        x = np.random.default_rng(seed).normal(3.0, 2.0, size=(16, 4))
        gamma, beta = self._affine(4)
        out = T.batch_norm(Tensor(x), gamma, beta, RunningStats(4)).data
        assert np.all(np.abs(out.mean(axis=0)) < 1e-6)
        np.testing.assert_allclose(out.var(axis=0), 1.0, atol=1e-4)

    def test_batch_of_one_rejected_in_train_mode(self, float64):
        gamma, beta = self._affine(2)
        with pytest.raises(BatchSizeError):
            T.batch_norm(Tensor(np.ones((1, 2))), gamma, beta, RunningStats(2))

    def test_eval_mode_uses_running_stats(self, float64):
        running = RunningStats(2)
        running.mean.data = np.array([1.0, -1.0])
        running.var.data = np.array([4.0, 4.0])
        gamma, beta = self._affine(2)
        out = T.batch_norm(Tensor([[3.0, 1.0]]), gamma, beta, running, mode='eval', eps=0.0)
        np.testing.assert_allclose(out.data, [[1.0, 1.0]])

    def test_running_stats_momentum(self, float64):
        running = RunningStats(1)
        gamma, beta = self._affine(1)
        T.batch_norm(Tensor([[1.0], [3.0]]), gamma, beta, running)
        assert running.mean.data[0] == pytest.approx(0.2)
        # unbiased batch variance is 2
        assert running.var.data[0] == pytest.approx(0.9 + 0.2)

    def test_gradient_train_and_eval(self, float64, grad_rng):
        x = _param(grad_rng.normal(size=(6, 3)))
        gamma, beta = _param(grad_rng.uniform(0.5, 1.5, 3)), _param(grad_rng.normal(size=3))
        w = Tensor(grad_rng.normal(size=(6, 3)))
        for mode in ('train', 'eval'):
            running = RunningStats(3)

            def loss():
                return T.tensor_sum(T.mul(T.batch_norm(x, gamma, beta, running, mode=mode), w))

            assert grad_check(loss, [x, gamma, beta]) < 1e-4

    def test_channel_maps(self, float64, grad_rng):
        x = _param(grad_rng.normal(size=(2, 3, 4, 4)))
        gamma, beta = _param(np.ones(3)), _param(np.zeros(3))
        w = Tensor(grad_rng.normal(size=(2, 3, 4, 4)))
        running = RunningStats(3)
        assert grad_check(lambda: T.tensor_sum(T.mul(T.batch_norm(x, gamma, beta, running), w)),
                          [x, gamma, beta]) < 1e-4


class TestShapeOps:
    def test_concat_single_input(self, float64):
        a = Tensor([[1.0, 2.0]])
        np.testing.assert_array_equal(T.concat([a], axis=1).data, a.data)

    def test_concat_along_columns(self, float64, rng):
        a, b = Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(2, 3)))
        out = T.concat([a, b], axis=1)
        assert out.shape == (2, 6)
        np.testing.assert_array_equal(out.data[:, :3], a.data)

    def test_concat_mismatch(self, float64):
        with pytest.raises(DimensionError):
            T.concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))], axis=1)

    def test_concat_backward_gives_ones(self, float64):
        a, b = _param(np.zeros((2, 2))), _param(np.zeros((2, 3)))
        with Tape() as tape:
            loss = T.tensor_sum(T.concat([a, b], axis=1))
        backward(loss, tape)
        np.testing.assert_array_equal(a.grad, np.ones((2, 2)))
        np.testing.assert_array_equal(b.grad, np.ones((2, 3)))

    def test_split_inverts_concat(self, float64, rng):
        a, b = Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(3, 4)))
        left, right = T.split(T.concat([a, b], axis=1), [2, 4], axis=1)
        np.testing.assert_array_equal(left.data, a.data)
        np.testing.assert_array_equal(right.data, b.data)

    def test_rows_gather_and_scatter(self, float64, grad_rng):
        base = _param(grad_rng.normal(size=(4, 3)))
        values = _param(grad_rng.normal(size=(2, 3)))
        w = Tensor(grad_rng.normal(size=(4, 3)))

        def loss():
            gathered = T.take_rows(base, [0, 0, 3])
            return T.add(T.tensor_sum(T.mul(T.put_rows(base, [1, 2], values), w)), T.tensor_sum(T.square(gathered)))

        assert grad_check(loss, [base, values]) < 1e-6


class TestBackward:
    """Reverse-mode accumulation over a tape."""

    def test_sum_gives_ones(self, float64):
        x = _param([1.0, -2.0, 3.0])
        with Tape() as tape:
            loss = T.tensor_sum(x)
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_square_gives_twice_input(self, float64):
        x = _param([1.0, -2.0, 3.0])
        with Tape() as tape:
            loss = T.tensor_sum(T.mul(x, x))
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, [2.0, -4.0, 6.0])

    def test_non_scalar_loss(self, float64):
        x = _param([1.0, 2.0])
        with Tape() as tape:
            out = T.mul(x, 2.0)
        with pytest.raises(ContractError):
            backward(out, tape)

    def test_tape_is_consumed(self, float64):
        x = _param([1.0])
        with Tape() as tape:
            loss = T.tensor_sum(x)
        backward(loss, tape)
        with pytest.raises(ContractError):
            backward(loss, tape)

    def test_loss_not_on_tape(self, float64):
        x = _param([1.0])
        with T.no_tape():
            loss = T.tensor_sum(x)
        with pytest.raises(ContractError):
            backward(loss, Tape())

    def test_broadcast_gradient_is_reduced(self, float64):
        x = _param(np.ones((3, 2)))
        b = _param([0.5, -0.5])
        with Tape() as tape:
            loss = T.tensor_sum(T.add(x, b))
        backward(loss, tape)
        np.testing.assert_array_equal(b.grad, [3.0, 3.0])

    def test_composed_network(self, float64, grad_rng):
        x = Tensor(grad_rng.normal(size=(1, 2, 6, 6)))
        k = _param(grad_rng.normal(size=(3, 2, 3, 3)))
        w = _param(grad_rng.normal(size=(3 * 4 * 4, 5)))
        target = np.eye(5)[2]

        def loss():
            h = T.relu(T.conv2d(x, k))
            probs = T.softmax(T.matmul(T.reshape(h, (1, -1)), w), axis=1)
            return T.tensor_sum(T.square(T.sub(probs, Tensor(target[None]))))

        assert grad_check(loss, [k, w]) < 1e-4

    def test_float32_default_dtype(self):
        with T.default_dtype(np.float32):
            assert Tensor([1.0]).dtype == np.float32
        assert Tensor([1.0]).dtype == np.float64

    def test_debug_checks_flag_non_finite(self, float64):
        with T.debug_checks():
            with pytest.raises(ContractError):
                T.log(Tensor([-1.0]))


class TestLosses:
    def test_cross_entropy_uniform(self, float64):
        loss = T.cross_entropy(Tensor(np.zeros((2, 4))), [0, 3])
        assert loss.item() == pytest.approx(np.log(4))

    def test_cross_entropy_gradient(self, float64, grad_rng):
        z = _param(grad_rng.normal(size=(5, 3)))
        assert grad_check(lambda: T.cross_entropy(z, [0, 1, 2, 1, 0]), [z]) < 1e-6

    def test_smooth_l1_branches(self, float64):
        loss = T.smooth_l1(Tensor([0.5, 3.0]), [0.0, 0.0])
        assert loss.item() == pytest.approx(0.125 + 2.5)

    def test_bce_with_logits(self, float64, grad_rng):
        z = _param(grad_rng.normal(size=6))
        t = grad_rng.integers(0, 2, size=6)
        assert grad_check(lambda: T.binary_cross_entropy_with_logits(z, t), [z]) < 1e-6
        assert T.binary_cross_entropy_with_logits(Tensor([0.0]), [1.0]).item() == pytest.approx(np.log(2))

    def test_mse(self, float64):
        assert T.mse_loss(Tensor([1.0, 3.0]), [0.0, 0.0]).item() == pytest.approx(5.0)


class TestOptimizers:
    """SGD with momentum and Adam."""

    def test_sgd_plain_step(self, float64):
        assert _minimize_square(1.0, 1, sgd_step, lr=0.1) == pytest.approx(0.8)

    def test_sgd_zero_lr(self, float64):
        assert _minimize_square(1.0, 3, sgd_step, lr=0.0, momentum=0.9, weight_decay=1e-4) == 1.0

    def test_sgd_momentum_unrolled(self, float64):
        lr, mu = 0.1, 0.9
        w1 = 1.0 - lr * 2.0
        v2 = mu * 2.0 + 2.0 * w1
        expected = w1 - lr * v2
        assert _minimize_square(1.0, 2, sgd_step, lr=lr, momentum=mu) == pytest.approx(expected)

    def test_sgd_weight_decay(self, float64):
        assert _minimize_square(1.0, 1, sgd_step, lr=0.1, weight_decay=0.5) == pytest.approx(1.0 - 0.1 * 2.5)

    def test_missing_gradient(self, float64):
        store = ParamStore([('w', _param([1.0]))])
        with pytest.raises(ContractError):
            sgd_step(store, lr=0.1)
        with pytest.raises(ContractError):
            adam_step(store, lr=0.1)

    def test_adam_first_step_is_lr(self, float64):
        w = _minimize_square(1.0, 1, adam_step, lr=0.01)
        assert abs((1.0 - w) - 0.01) < 1e-6

    def test_adam_zero_gradient(self, float64):
        w = _param([2.0])
        w.grad = np.zeros(1)
        adam_step(ParamStore([('w', w)]), lr=0.1)
        assert w.data[0] == 2.0

    def test_adam_converges_on_square(self, float64):
        assert abs(_minimize_square(1.0, 100, adam_step, lr=0.05)) < 0.1

    def test_ensure_grads(self, float64):
        a, b = _param([1.0]), _param([2.0])
        store = ParamStore([('a', a), ('b', b)])
        a.grad = np.ones(1)
        store.ensure_grads()
        np.testing.assert_array_equal(b.grad, [0.0])
        sgd_step(store, lr=1.0)
        assert b.data[0] == 2.0


class TestGradCheck:
    def test_linear_layer(self, float64, rng):
        layer = nn.Linear(4, 3, rng)
        x = Tensor(rng.normal(size=(5, 4)))
        assert grad_check(lambda: T.tensor_sum(layer(x)), dict(layer.named_parameters())) < 1e-8

    def test_detects_wrong_gradient(self, float64):
        x = _param([1.0, 2.0])

        def wrong_square(t):
            out = t.data * t.data
            return T._result('wrong_square', out, (t,), lambda g: (g * t.data,))

        assert grad_check(lambda: T.tensor_sum(wrong_square(x)), [x]) > 0.1

    def test_rejects_float32(self):
        with T.default_dtype(np.float32):
            x = Tensor([1.0], requires_grad=True)
        with pytest.raises(ContractError):
            grad_check(lambda: T.tensor_sum(x), [x])

    def test_relative_error_floor(self):
        assert relative_error(0.0, 0.0) == 0.0
        assert relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)


class TestModules:
    def test_state_dict_round_trip(self, float64, rng):
        a = nn.BatchNorm(3)
        a.running.mean.data = np.array([1.0, 2.0, 3.0])
        b = nn.BatchNorm(3)
        b.load_state_dict(a.state_dict('bn.'), 'bn.')
        np.testing.assert_array_equal(b.running.mean.data, [1.0, 2.0, 3.0])

    def test_load_state_dict_shape_mismatch(self, float64, rng):
        layer = nn.Linear(2, 2, rng)
        state = layer.state_dict()
        state['weight'] = np.zeros((3, 2))
        with pytest.raises(DimensionError):
            layer.load_state_dict(state)

    def test_eval_propagates_to_children(self, float64, rng):
        parent = nn.Linear(2, 2, rng)
        child = parent.add_child('bn', nn.BatchNorm(2))
        parent.eval()
        assert not child.training

    def test_normalizer(self, float64):
        norm = nn.Normalizer(3)
        norm.set(np.array([1.0, 2.0, 3.0]), np.array([2.0, 2.0, 2.0]))
        out = norm(np.ones((3, 2, 2)))
        np.testing.assert_allclose(out[:, 0, 0], [0.0, -0.5, -1.0])


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
