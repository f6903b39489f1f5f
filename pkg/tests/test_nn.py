import sys
import os
import math
import unittest
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np

from data.toy_data import generate_toy_dataset
from models.network import BatchNormState, ModelSpec, TeacherModel
from models.run_config import TeacherRecipe
from utils.diffcore import Tensor, finite_diff_check
from utils.errors import ConfigError, ContractError, ConvergenceError
from utils.nn import (
    bn_forward, cross_entropy, forward_logits, init_model, kl_loss, penultimate_features, softmax_rows,
)
from utils.training import batches_per_epoch, epoch_batches, train_teacher
from helpers import frozen_model, tiny_teachers, zero_model


def _identity_state(width, momentum=0.1):
    return BatchNormState(
        gamma=Tensor(np.ones(width, np.float32)),
        beta=Tensor(np.zeros(width, np.float32)),
        running_mean=np.zeros(width, np.float32),
        running_var=np.ones(width, np.float32),
        momentum=momentum,
    )


class TestBatchNorm(unittest.TestCase):
    def test_eval_identity(self):
        x = np.random.default_rng(0).normal(size=(5, 3))
        out = bn_forward(Tensor(x), _identity_state(3), 'eval')
        np.testing.assert_allclose(out.data, x, atol=1e-4)

    def test_train_normalizes_batch(self):
        x = np.random.default_rng(1).normal(3.0, 2.0, size=(64, 4))
        state = _identity_state(4)
        state.gamma = Tensor(np.full(4, 2.0, np.float32))
        state.beta = Tensor(np.full(4, -1.0, np.float32))
        out = bn_forward(Tensor(x), state, 'train').data
        np.testing.assert_allclose(out.mean(axis=0), -1.0, atol=1e-4)
        np.testing.assert_allclose(out.var(axis=0), 4.0, rtol=1e-3)

    def test_running_mean_update(self):
        state = _identity_state(2)
        bn_forward(Tensor(np.array([[1.0, 1.0], [3.0, 3.0]])), state, 'train')
        np.testing.assert_allclose(state.running_mean, [0.2, 0.2], atol=1e-6)
        # population variance of {1, 3} is 1, so the running variance stays at 1
        np.testing.assert_allclose(state.running_var, [1.0, 1.0], atol=1e-6)

    def test_single_row_in_train_mode(self):
        with self.assertRaises(ContractError):
            bn_forward(Tensor(np.ones((1, 2))), _identity_state(2), 'train')

    def test_bad_state(self):
        with self.assertRaises(ContractError):
            _identity_state(2, momentum=1.0)


class TestLosses(unittest.TestCase):
    def test_uniform_logits_give_log_c(self):
        target = np.array([[0.1, 0.2, 0.3, 0.4]])
        self.assertAlmostEqual(cross_entropy(np.zeros((1, 4)), target).item(), math.log(4), places=6)

    def test_saturated_logits(self):
        loss = cross_entropy(np.array([[50.0, 0.0, 0.0]]), np.array([[1.0, 0.0, 0.0]])).item()
        self.assertLess(loss, 1e-20)

    def test_one_hot_matches_negative_log_probability(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(size=(6, 4))
        labels = rng.integers(0, 4, size=6)
        target = np.eye(4)[labels]
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        expected = -np.log(probs[np.arange(6), labels]).mean()
        self.assertAlmostEqual(cross_entropy(logits, target).item(), expected, places=5)

    def test_unnormalized_target(self):
        with self.assertRaises(ContractError):
            cross_entropy(np.zeros((1, 2)), np.array([[0.5, 0.6]]))

    def test_kl_of_equal_distributions(self):
        logits = np.array([[0.3, -1.2, 2.0]])
        self.assertAlmostEqual(kl_loss(softmax_rows(logits), logits).item(), 0.0, places=6)

    def test_kl_with_one_hot_teacher_is_cross_entropy(self):
        logits = np.array([[0.3, -1.2, 2.0]])
        target = np.array([[0.0, 1.0, 0.0]])
        self.assertAlmostEqual(kl_loss(target, logits).item(), cross_entropy(logits, target).item(), places=6)

    def test_kl_hand_value(self):
        expected = 0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75)
        self.assertAlmostEqual(kl_loss(np.array([0.5, 0.5]), np.array([0.0, math.log(3)])).item(), expected, places=6)

    def test_softmax_rows_sum_to_one(self):
        logits = np.random.default_rng(9).normal(scale=10.0, size=(20, 7))
        np.testing.assert_allclose(softmax_rows(logits).sum(axis=1), 1.0, atol=1e-6)

    def test_loss_gradients_wrt_parameters(self):
        spec = ModelSpec('A2', 3, 3)
        model = init_model(spec, 0)
        rng = np.random.default_rng(6)
        x = rng.normal(size=(5, 3))
        soft = softmax_rows(rng.normal(size=(5, 3)))
        names = list(model.parameters)
        bn = model.bn_states[0]

        def f(p, loss):
            state = BatchNormState(p[-2], p[-1], bn.running_mean.copy(), bn.running_var.copy())
            candidate = TeacherModel(spec, dict(zip(names, p[:-2])), [state], mode='train')
            return loss(forward_logits(candidate, x), soft)

        start = [model.parameters[n].data for n in names] + [bn.gamma.data, bn.beta.data]
        self.assertLessEqual(finite_diff_check(lambda p: f(p, cross_entropy), start, step=1e-5), 1e-4)
        self.assertLessEqual(finite_diff_check(lambda p: f(p, lambda z, t: kl_loss(t, z)), start, step=1e-5), 1e-4)


class TestForward(unittest.TestCase):
    def test_zero_model_gives_zero_logits(self):
        logits = forward_logits(zero_model('A1', d=4, C=3), np.random.default_rng(0).random((5, 4)))
        np.testing.assert_array_equal(logits.data, np.zeros((5, 3)))

    def test_eval_forward_is_pure(self):
        model = frozen_model('A3', d=4, C=3)
        batch = np.random.default_rng(2).random((6, 4))
        before = model.state_digest()
        first = forward_logits(model, batch).data
        second = forward_logits(model, batch).data
        self.assertEqual(before, model.state_digest())
        self.assertEqual(first.tobytes(), second.tobytes())

    def test_dimension_mismatch(self):
        with self.assertRaises(ContractError):
            forward_logits(frozen_model(d=4), np.zeros((2, 5)))

    def test_single_vector_batch(self):
        self.assertEqual(forward_logits(frozen_model(d=4, C=3), np.zeros(4)).shape, (1, 3))

    def test_penultimate_width(self):
        model = frozen_model('A3', d=4, C=3)
        self.assertEqual(penultimate_features(model, np.zeros((2, 4))).shape, (2, 24))

    def test_unknown_architecture(self):
        with self.assertRaises(ConfigError):
            ModelSpec('A9', 4, 3)


class TestTeacherTraining(unittest.TestCase):
    def test_epoch_batches_drop_single_trailing_row(self):
        batches = epoch_batches(9, 4, np.random.default_rng(0))
        self.assertEqual([len(b) for b in batches], [4, 4])
        self.assertEqual(batches_per_epoch(9, 4), 2)
        self.assertEqual(batches_per_epoch(10, 4), 3)

    def test_separable_data(self):
        dataset = generate_toy_dataset(2, 4, 20, 0.02, seed=3, class_separation=0.45)
        recipe = TeacherRecipe(lr=0.05, epochs=30, batch_size=8, target_accuracy=1.0)
        model = train_teacher(dataset.train(), ModelSpec('A2', 4, 2), recipe)
        self.assertEqual(model.metadata['train_top1'], 1.0)
        self.assertEqual(model.mode, 'eval')
        self.assertEqual(len(model.metadata['trace']), 30)

    def test_trained_teacher_fits_its_training_set(self):
        dataset, teachers = tiny_teachers()
        train = dataset.train()
        for teacher in teachers:
            predictions = np.argmax(forward_logits(teacher, train.instances).data, axis=1)
            self.assertGreaterEqual(np.mean(predictions == train.labels), 0.95)

    def test_deterministic(self):
        dataset = generate_toy_dataset(3, 8, 10, 0.05, seed=1)
        recipe = TeacherRecipe(epochs=3, batch_size=8, target_accuracy=0.0)
        first = train_teacher(dataset, ModelSpec('A1', 8, 3), recipe, seed=5)
        second = train_teacher(dataset, ModelSpec('A1', 8, 3), recipe, seed=5)
        self.assertEqual(first.state_digest(), second.state_digest())

    def test_unreachable_target(self):
        dataset = generate_toy_dataset(3, 8, 10, 0.05, seed=1)
        recipe = TeacherRecipe(epochs=1, batch_size=8, target_accuracy=1.01)
        with self.assertRaises(ConvergenceError) as ctx:
            train_teacher(dataset, ModelSpec('A2', 8, 3), recipe)
        self.assertLessEqual(ctx.exception.accuracy, 1.0)

    def test_spec_must_fit_dataset(self):
        dataset = generate_toy_dataset(3, 8, 10, 0.05, seed=1)
        with self.assertRaises(ContractError):
            train_teacher(dataset, ModelSpec('A2', 4, 3), TeacherRecipe(epochs=1))


if __name__ == '__main__':
    unittest.main()
