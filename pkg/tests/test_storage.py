import sys
import os
import tempfile
import unittest
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np

from models.dataset import LabeledDataset
from utils.baselines import random_coreset
from utils.errors import ArtifactError, CorruptBundleError
from utils.storage import (
    load_bundle, load_dataset, load_model, read_manifest, save_bundle, save_dataset, save_model,
)
from utils.student import integrate
from helpers import frozen_model, synthetic_bundle, tiny_dataset, tiny_teachers


def _files(directory):
    contents = {}
    for name in sorted(os.listdir(directory)):
        with open(os.path.join(directory, name), 'rb') as f:
            contents[name] = f.read()
    return contents


class TestDatasetStorage(unittest.TestCase):
    def test_round_trip_is_bitwise(self):
        dataset = tiny_dataset()
        with tempfile.TemporaryDirectory() as tmp:
            first, second = os.path.join(tmp, 'a'), os.path.join(tmp, 'b')
            save_dataset(dataset, first, stamp={'section_hash': 'x'})
            loaded = load_dataset(first)
            save_dataset(loaded, second)
            self.assertEqual(_files(first), _files(second))
        self.assertEqual(loaded.instances.tobytes(), dataset.instances.tobytes())
        np.testing.assert_array_equal(loaded.labels, dataset.labels)
        np.testing.assert_array_equal(loaded.test_mask, dataset.test_mask)
        self.assertEqual(loaded.metadata['stamp'], {'section_hash': 'x'})

    def test_truncated_binary(self):
        with tempfile.TemporaryDirectory() as tmp:
            save_dataset(tiny_dataset(), tmp)
            with open(os.path.join(tmp, 'instances.bin'), 'r+b') as f:
                f.truncate(16)
            with self.assertRaises(CorruptBundleError):
                load_dataset(tmp)

    def test_class_without_instances(self):
        dataset = LabeledDataset(np.zeros((2, 3), np.float32), [0, 0], 2)
        with tempfile.TemporaryDirectory() as tmp:
            save_dataset(dataset, tmp)
            with self.assertRaises(ArtifactError):
                load_dataset(tmp)

    def test_missing_manifest(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ArtifactError):
                read_manifest(tmp)


class TestModelStorage(unittest.TestCase):
    def test_round_trip_is_bitwise(self):
        _, teachers = tiny_teachers()
        model = teachers[0]
        with tempfile.TemporaryDirectory() as tmp:
            first, second = os.path.join(tmp, 'a'), os.path.join(tmp, 'b')
            save_model(model, first)
            loaded = load_model(first)
            save_model(loaded, second)
            self.assertEqual(_files(first), _files(second))
        self.assertEqual(loaded.state_digest(), model.state_digest())
        self.assertEqual(loaded.spec, model.spec)
        self.assertEqual(loaded.input_mean, model.input_mean)
        self.assertEqual(loaded.metadata['train_top1'], model.metadata['train_top1'])

    def test_kind_is_checked(self):
        with tempfile.TemporaryDirectory() as tmp:
            save_dataset(tiny_dataset(), tmp)
            with self.assertRaises(ArtifactError):
                load_model(tmp)

    def test_every_architecture(self):
        for arch in ('A1', 'A2', 'A3', 'A4'):
            model = frozen_model(arch, d=5, C=4, seed=1)
            with tempfile.TemporaryDirectory() as tmp:
                save_model(model, tmp)
                self.assertEqual(load_model(tmp).state_digest(), model.state_digest())


class TestBundleStorage(unittest.TestCase):
    def test_round_trip_is_bitwise(self):
        bundle = synthetic_bundle(ipc=10, C=5, M=3, d=7)
        with tempfile.TemporaryDirectory() as tmp:
            first, second = os.path.join(tmp, 'a'), os.path.join(tmp, 'b')
            save_bundle(bundle, first)
            loaded = load_bundle(first)
            save_bundle(loaded, second)
            self.assertEqual(_files(first), _files(second))
        self.assertEqual((loaded.K, loaded.M, loaded.C, loaded.ipc), (bundle.K, bundle.M, bundle.C, bundle.ipc))
        a, b = integrate(bundle), integrate(loaded)
        self.assertEqual(a.instances.tobytes(), b.instances.tobytes())
        self.assertEqual(a.labels.tobytes(), b.labels.tobytes())

    def test_only_bundle_files_are_written(self):
        with tempfile.TemporaryDirectory() as tmp:
            save_bundle(synthetic_bundle(ipc=10, C=5, M=3, d=7), tmp)
            self.assertEqual(sorted(os.listdir(tmp)),
                             ['anchors.bin', 'compensators.bin', 'labels.bin', 'manifest.json'])

    def test_baseline_round_trip(self):
        coreset = random_coreset(tiny_dataset(), 3, seed=2)
        with tempfile.TemporaryDirectory() as tmp:
            save_bundle(coreset, tmp)
            loaded = load_bundle(tmp)
        self.assertEqual(loaded.kind, 'coreset')
        self.assertEqual(loaded.instances.tobytes(), coreset.instances.tobytes())
        self.assertEqual(loaded.labels.tobytes(), coreset.labels.tobytes())
        np.testing.assert_array_equal(loaded.class_ids, coreset.class_ids)

    def test_corrupt_labels(self):
        with tempfile.TemporaryDirectory() as tmp:
            save_bundle(synthetic_bundle(ipc=10, C=5, M=3, d=7), tmp)
            with open(os.path.join(tmp, 'labels.bin'), 'ab') as f:
                f.write(b'\0\0\0\0')
            with self.assertRaises(CorruptBundleError):
                load_bundle(tmp)

    def test_labels_that_are_not_distributions(self):
        with tempfile.TemporaryDirectory() as tmp:
            save_bundle(synthetic_bundle(ipc=10, C=5, M=3, d=7), tmp)
            path = os.path.join(tmp, 'labels.bin')
            with open(path, 'rb') as f:
                raw = bytearray(f.read())
            raw[:4] = np.float32(5.0).tobytes()
            with open(path, 'wb') as f:
                f.write(bytes(raw))
            with self.assertRaises(CorruptBundleError):
                load_bundle(tmp)


if __name__ == '__main__':
    unittest.main()
