import sys
import os
import unittest
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np

from models.network import BatchNormState
from utils.diffcore import (
    Tape, Tensor, backward, broadcast_add, concat, exp, finite_diff_check, forward_primitive,
    l2norm, log, log_softmax, matmul, mean, relu, reshape, scale, softmax, sqrt, square,
    take_rows, total, variance,
)
from utils.errors import ContractError, DimensionError, NumericError
from utils.nn import bn_forward, cross_entropy
from helpers import frozen_model


def _weights(shape, seed):
    return np.random.default_rng(seed).normal(size=shape)


# name -> (builder of f(leaves) -> scalar, leaf generator)
GRADIENT_CASES = {
    'matmul': (lambda p: total(square(matmul(p[0], p[1]))), lambda r: [r.normal(size=(3, 4)), r.normal(size=(4, 2))]),
    'add': (lambda p: total(square(p[0] + p[1])), lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,))]),
    'sub': (lambda p: total(square(p[0] - p[1])), lambda r: [r.normal(size=(3, 4)), r.normal(size=(1, 4))]),
    'mul': (lambda p: total(p[0] * p[1]), lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 4))]),
    'div': (lambda p: total(p[0] / p[1]), lambda r: [r.normal(size=(3, 4)), r.uniform(1.0, 2.0, size=(4,))]),
    'relu': (lambda p: total(square(relu(p[0]))), lambda r: [r.choice([-1, 1], size=(3, 4)) * r.uniform(0.1, 1, size=(3, 4))]),
    'mean': (lambda p: total(square(mean(p[0], axis=0))), lambda r: [r.normal(size=(5, 3))]),
    'sum': (lambda p: total(square(total(p[0], axis=1))), lambda r: [r.normal(size=(5, 3))]),
    'variance': (lambda p: total(variance(p[0], axis=0)), lambda r: [r.normal(size=(6, 3))]),
    'softmax': (lambda p: total(square(softmax(p[0]))), lambda r: [r.normal(size=(2, 4))]),
    'log_softmax': (lambda p: total(log_softmax(p[0]) * Tensor(_weights((2, 4), 1))), lambda r: [r.normal(size=(2, 4))]),
    'log': (lambda p: total(log(p[0])), lambda r: [r.uniform(0.5, 2.0, size=(3, 3))]),
    'exp': (lambda p: total(exp(p[0])), lambda r: [r.normal(size=(3, 3))]),
    'square': (lambda p: total(square(p[0])), lambda r: [r.normal(size=(3, 3))]),
    'sqrt': (lambda p: total(sqrt(p[0])), lambda r: [r.uniform(0.5, 2.0, size=(3, 3))]),
    'l2norm': (lambda p: l2norm(p[0]), lambda r: [r.normal(size=(5,))]),
    'reshape': (lambda p: total(reshape(p[0], (2, 6)) * Tensor(_weights((2, 6), 2))), lambda r: [r.normal(size=(3, 4))]),
    'slice': (lambda p: total(square(take_rows(p[0], 1, 3))), lambda r: [r.normal(size=(4, 3))]),
    'concat': (lambda p: total(square(concat([p[0], p[1]], axis=0)) * Tensor(_weights((5, 2), 3))),
               lambda r: [r.normal(size=(2, 2)), r.normal(size=(3, 2))]),
    'broadcast_add': (lambda p: total(square(broadcast_add(p[0], p[1]))), lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,))]),
    'scale': (lambda p: total(square(scale(p[0], -2.5))), lambda r: [r.normal(size=(3,))]),
}


class TestForwardPrimitive(unittest.TestCase):
    def test_matmul_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matmul(np.eye(2), a).data, a.astype(np.float32))

    def test_relu(self):
        np.testing.assert_array_equal(relu([-1.0, 0.0, 2.0]).data, [0.0, 0.0, 2.0])

    def test_l2norm(self):
        self.assertEqual(l2norm([3.0, 4.0]).item(), 5.0)

    def test_output_is_float32(self):
        self.assertEqual(matmul(np.eye(2), np.eye(2)).data.dtype, np.float32)

    def test_shape_mismatch_is_dimension_error(self):
        with self.assertRaises(DimensionError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))
        with self.assertRaises(DimensionError):
            Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))

    def test_non_finite_output_is_numeric_error(self):
        with self.assertRaises(NumericError):
            log([0.0, 1.0])

    def test_unknown_primitive(self):
        with self.assertRaises(ContractError):
            forward_primitive('conv2d', [Tensor([1.0])])

    def test_tape_records_only_with_grad_inputs(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        c = Tensor([3.0, 4.0])
        with Tape() as tape:
            c * c
            x * c
        self.assertEqual(len(tape), 1)
        self.assertEqual(tape.leaves(), [x])


class TestBackward(unittest.TestCase):
    def test_sum_of_squares(self):
        x = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            loss = total(square(x))
        np.testing.assert_array_equal(backward(tape, loss)[x].data, [6.0])

    def test_mean(self):
        x = Tensor(np.arange(4.0), requires_grad=True)
        with Tape() as tape:
            loss = mean(x)
        np.testing.assert_array_equal(backward(tape, loss)[x].data, [0.25] * 4)

    def test_non_scalar_loss(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = square(x)
        with self.assertRaises(ContractError):
            backward(tape, y)

    def test_cross_entropy_of_softmax_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(1, 5))
        target = np.array([[0.0, 1.0, 0.0]])
        error = finite_diff_check(lambda p: cross_entropy(matmul(Tensor(x), p[0]), target), [rng.normal(size=(5, 3))])
        self.assertLessEqual(error, 1e-4)

    def test_linear_in_upstream_gradient(self):
        rng = np.random.default_rng(3)
        w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        x = Tensor(rng.normal(size=(2, 4)))
        with Tape() as tape:
            loss = total(softmax(matmul(x, w)) * Tensor(rng.normal(size=(2, 3))))
        once = backward(tape, loss, seed=np.array(1.0))[w].data
        twice = backward(tape, loss, seed=np.array(2.0))[w].data
        np.testing.assert_allclose(twice, 2.0 * once, atol=1e-6)

    def test_replay_is_bitwise_identical(self):
        rng = np.random.default_rng(5)
        w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        x = Tensor(rng.normal(size=(6, 4)))
        with Tape() as tape:
            loss = total(variance(relu(matmul(x, w)), axis=0))
        first = backward(tape, loss)[w].data
        second = backward(tape, loss)[w].data
        self.assertEqual(first.tobytes(), second.tobytes())

    def test_every_leaf_gets_a_gradient(self):
        a = Tensor([1.0, 2.0], requires_grad=True)
        unused = Tensor([5.0], requires_grad=True)
        with Tape() as tape:
            loss = total(a * Tensor([2.0, 2.0]))
            unused * Tensor([1.0])
        grads = backward(tape, loss)
        self.assertEqual(set(grads), {a, unused})
        np.testing.assert_array_equal(grads[unused].data, [0.0])

    def test_l2norm_at_zero_has_zero_subgradient(self):
        x = Tensor(np.zeros(3), requires_grad=True)
        with Tape() as tape:
            loss = l2norm(x)
        np.testing.assert_array_equal(backward(tape, loss)[x].data, np.zeros(3))


class TestFiniteDiffCheck(unittest.TestCase):
    def test_square_at_three(self):
        self.assertLessEqual(finite_diff_check(lambda p: total(p[0] * p[0]), [np.array([3.0])]), 1e-6)

    def test_bad_step(self):
        with self.assertRaises(ContractError):
            finite_diff_check(lambda p: total(p[0]), [np.array([1.0])], step=0.0)

    def test_every_primitive_over_randomized_cases(self):
        rng = np.random.default_rng(2024)
        for name, (f, make) in GRADIENT_CASES.items():
            for trial in range(100):
                with self.subTest(primitive=name, trial=trial):
                    self.assertLessEqual(finite_diff_check(f, make(rng)), 1e-4)

    def test_bn_train_forward(self):
        rng = np.random.default_rng(11)
        state = BatchNormState(
            gamma=Tensor(rng.uniform(0.5, 1.5, size=4).astype(np.float32)),
            beta=Tensor(rng.normal(size=4).astype(np.float32)),
            running_mean=np.zeros(4, np.float32),
            running_var=np.ones(4, np.float32),
        )
        weights = Tensor(rng.normal(size=(8, 4)))

        def f(p):
            return total(bn_forward(p[0], state, 'train') * weights)

        self.assertLessEqual(finite_diff_check(f, [rng.normal(size=(8, 4))]), 1e-4)

    def test_bn_width_mismatch(self):
        state = frozen_model('A2', d=4, C=3).bn_states[0]
        with self.assertRaises(DimensionError):
            bn_forward(Tensor(np.ones((8, 4))), state, 'train')


if __name__ == '__main__':
    unittest.main()
