"""Labelled datasets and per-class anchor sets."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

import config
from utils.errors import ContractError


@dataclass
class LabeledDataset:
    """N x d float32 instances with integer labels in [0, C)."""
    instances: np.ndarray
    labels: np.ndarray
    class_count: int
    precision_bits: int = config.PRECISION_BITS
    test_mask: Optional[np.ndarray] = None
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.instances = np.asarray(self.instances, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.instances.ndim != 2 or self.instances.shape[0] != self.labels.shape[0]:
            raise ContractError(
                f"instances {self.instances.shape} and labels {self.labels.shape} disagree on N"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ContractError(f"labels must lie in [0, {self.class_count})")
        if self.test_mask is not None:
            self.test_mask = np.asarray(self.test_mask, dtype=bool)

    def __len__(self) -> int:
        return int(self.instances.shape[0])

    @property
    def dim(self) -> int:
        return int(self.instances.shape[1])

    def class_indices(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def class_counts(self) -> List[int]:
        return [int(n) for n in np.bincount(self.labels, minlength=self.class_count)]

    def validate_coverage(self) -> None:
        missing = [c for c, n in enumerate(self.class_counts()) if n == 0]
        if missing:
            raise ContractError(f"classes without instances: {missing}")

    def subset(self, indices) -> 'LabeledDataset':
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            self.instances[indices], self.labels[indices], self.class_count,
            self.precision_bits, metadata={**self.metadata, 'parent_indices': indices.tolist()},
        )

    def train(self) -> 'LabeledDataset':
        if self.test_mask is None:
            return self
        return self.subset(np.flatnonzero(~self.test_mask))

    def test(self) -> 'LabeledDataset':
        if self.test_mask is None:
            raise ContractError("dataset has no test split")
        return self.subset(np.flatnonzero(self.test_mask))

    def one_hot(self) -> np.ndarray:
        targets = np.zeros((len(self), self.class_count), dtype=np.float32)
        targets[np.arange(len(self)), self.labels] = 1.0
        return targets

    def pixel_stats(self):
        """Scalar mean and std used by the model input layer."""
        if len(self) == 0:
            return 0.0, 1.0
        std = float(self.instances.std())
        return float(self.instances.mean()), std if std > 0 else 1.0

    def to_dict(self):
        return {
            'size': len(self),
            'dim': self.dim,
            'class_count': self.class_count,
            'precision_bits': self.precision_bits,
            'class_counts': self.class_counts(),
            'test_size': int(self.test_mask.sum()) if self.test_mask is not None else 0,
        }


@dataclass
class AnchorSet:
    """Exactly one natural instance per class; row i carries label i."""
    instances: np.ndarray
    labels: np.ndarray
    source_indices: np.ndarray

    def __post_init__(self):
        self.instances = np.asarray(self.instances, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int32)
        self.source_indices = np.asarray(self.source_indices, dtype=np.int64)
        if sorted(self.labels.tolist()) != list(range(len(self.labels))):
            raise ContractError(f"anchor labels must be a permutation of 0..C-1, got {self.labels.tolist()}")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def one_hot(self) -> np.ndarray:
        targets = np.zeros((len(self), len(self)), dtype=np.float32)
        targets[np.arange(len(self)), self.labels] = 1.0
        return targets
