import sys
import os
import unittest
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np

from data.sampling import sample_anchor_set, select_per_class, stratified_split
from data.toy_data import class_templates, generate_toy_dataset, load_external_dataset
from models.dataset import AnchorSet, LabeledDataset
from utils.errors import BudgetError, ContractError


class TestToyDataset(unittest.TestCase):
    def test_zero_spread_copies_templates(self):
        dataset = generate_toy_dataset(3, 16, 5, 0.0, seed=4)
        templates = class_templates(3, 16, seed=4).astype(np.float32)
        for c in range(3):
            for row in dataset.instances[dataset.labels == c]:
                np.testing.assert_array_equal(row, templates[c])

    def test_same_seed_same_dataset(self):
        a = generate_toy_dataset(4, 9, 10, 0.1, seed=7)
        b = generate_toy_dataset(4, 9, 10, 0.1, seed=7)
        self.assertEqual(a.instances.tobytes(), b.instances.tobytes())
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.test_mask, b.test_mask)

    def test_different_seed_differs(self):
        a = generate_toy_dataset(4, 9, 10, 0.1, seed=7)
        b = generate_toy_dataset(4, 9, 10, 0.1, seed=8)
        self.assertNotEqual(a.instances.tobytes(), b.instances.tobytes())

    def test_values_in_unit_range(self):
        dataset = generate_toy_dataset(5, 10, 20, 0.5, seed=0)
        self.assertGreaterEqual(dataset.instances.min(), 0.0)
        self.assertLessEqual(dataset.instances.max(), 1.0)
        self.assertEqual(dataset.class_counts(), [20] * 5)

    def test_split_is_stratified(self):
        dataset = generate_toy_dataset(3, 4, 10, 0.1, seed=0)
        self.assertEqual(dataset.test().class_counts(), [2, 2, 2])
        self.assertEqual(dataset.train().class_counts(), [8, 8, 8])

    def test_bad_arguments(self):
        for args in [(1, 4, 10, 0.1), (3, 1, 10, 0.1), (3, 4, 3, 0.1), (3, 4, 10, -0.1)]:
            with self.subTest(args=args), self.assertRaises(ContractError):
                generate_toy_dataset(*args, seed=0)

    def test_external_loader_hook(self):
        with self.assertRaises(NotImplementedError):
            load_external_dataset('cifar-10-python.tar.gz')


class TestStratifiedSplit(unittest.TestCase):
    def test_floor_per_class(self):
        labels = np.repeat([0, 1, 2], [7, 10, 3])
        mask = stratified_split(labels, 3, 0.2, seed=1)
        self.assertEqual([int(mask[labels == c].sum()) for c in range(3)], [1, 2, 0])

    def test_fraction_bounds(self):
        with self.assertRaises(ContractError):
            stratified_split(np.zeros(4, dtype=int), 1, 1.0, seed=0)


class TestAnchorSampling(unittest.TestCase):
    def setUp(self):
        self.dataset = generate_toy_dataset(3, 4, 6, 0.1, seed=2)

    def test_one_instance_per_class(self):
        anchors = sample_anchor_set(self.dataset, 0, seed=0)
        self.assertEqual(sorted(anchors.labels.tolist()), [0, 1, 2])
        np.testing.assert_array_equal(self.dataset.labels[anchors.source_indices], anchors.labels)

    def test_different_k_are_disjoint(self):
        first = sample_anchor_set(self.dataset, 0, seed=3)
        second = sample_anchor_set(self.dataset, 1, seed=3)
        self.assertFalse(set(first.source_indices) & set(second.source_indices))

    def test_exhaustive_use(self):
        used = np.concatenate([sample_anchor_set(self.dataset, k, seed=5).source_indices for k in range(6)])
        self.assertEqual(sorted(used.tolist()), list(range(len(self.dataset))))

    def test_exhausted_class(self):
        with self.assertRaises(BudgetError) as ctx:
            sample_anchor_set(self.dataset, 6, seed=0)
        self.assertIn('class 0', str(ctx.exception))

    def test_select_per_class_matches_anchor_sets(self):
        chosen = select_per_class(self.dataset, 2, seed=9)
        for k in range(2):
            anchors = sample_anchor_set(self.dataset, k, seed=9)
            self.assertEqual([int(chosen[c][k]) for c in range(3)], anchors.source_indices.tolist())

    def test_select_too_many(self):
        with self.assertRaises(BudgetError):
            select_per_class(self.dataset, 7, seed=0)

    def test_anchor_set_needs_permutation(self):
        with self.assertRaises(ContractError):
            AnchorSet(np.zeros((2, 4)), [0, 0], [0, 1])


class TestLabeledDataset(unittest.TestCase):
    def test_labels_in_range(self):
        with self.assertRaises(ContractError):
            LabeledDataset(np.zeros((2, 3)), [0, 3], 3)

    def test_coverage(self):
        with self.assertRaises(ContractError):
            LabeledDataset(np.zeros((2, 3)), [0, 0], 2).validate_coverage()

    def test_one_hot(self):
        dataset = LabeledDataset(np.zeros((3, 2)), [2, 0, 1], 3)
        np.testing.assert_array_equal(dataset.one_hot(), np.eye(3)[[2, 0, 1]])


if __name__ == '__main__':
    unittest.main()
