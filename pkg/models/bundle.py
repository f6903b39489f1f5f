"""Distilled data: compensators, subset records, bundles, integrated sets and baseline sets."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from models.dataset import AnchorSet
from utils.errors import BudgetError, ContractError, CorruptBundleError


def compute_K(ipc: int, C: int, M: int) -> int:
    """Number of subsets a budget of ipc images per class buys: floor(ipc*C / (C+M))."""
    if ipc < 1 or C < 1 or M < 1:
        raise ContractError(f"ipc, C and M must be >= 1 (got ipc={ipc}, C={C}, M={M})")
    K = (ipc * C) // (C + M)
    if K == 0:
        raise BudgetError(f"budget too small: ipc={ipc}, C={C}, M={M} gives K=0")
    return K


@dataclass
class UFC:
    """One universal feature compensator, shaped like a single instance."""
    u: np.ndarray
    optimized_against: str
    final_objective: float = float('nan')
    initial_objective: float = float('nan')
    trace: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float32)
        if self.u.ndim != 1:
            raise ContractError(f"compensator must be a vector, got shape {self.u.shape}")
        if not np.all(np.isfinite(self.u)):
            raise ContractError(f"compensator optimised against {self.optimized_against} has non-finite entries")


@dataclass
class SubsetRecord:
    """
    Anchors, their M compensators and the C x M static labels.

    static_labels[i, j] is the ensemble label of anchor i integrated with
    compensator j.
    """
    anchors: AnchorSet
    compensators: List[UFC]
    static_labels: np.ndarray

    def __post_init__(self):
        self.static_labels = np.asarray(self.static_labels, dtype=np.float32)

    @property
    def C(self) -> int:
        return len(self.anchors)

    @property
    def M(self) -> int:
        return len(self.compensators)

    def compensator_matrix(self) -> np.ndarray:
        return np.stack([ufc.u for ufc in self.compensators]) if self.compensators else np.zeros((0, 0), np.float32)

    def integrated(self) -> np.ndarray:
        """(C*M, d) instances, anchor-major then compensator."""
        grid = self.anchors.instances[:, None, :] + self.compensator_matrix()[None, :, :]
        return grid.reshape(self.C * self.M, -1)

    def validate(self, where: str = 'subset') -> None:
        d = self.anchors.instances.shape[1]
        for j, ufc in enumerate(self.compensators):
            if ufc.u.shape != (d,):
                raise CorruptBundleError(f"{where}: compensator {j} has shape {ufc.u.shape}, anchors have d={d}")
        if self.static_labels.shape != (self.C, self.M, self.C):
            raise CorruptBundleError(
                f"{where}: static labels have shape {self.static_labels.shape}, expected {(self.C, self.M, self.C)}"
            )
        sums = self.static_labels.sum(axis=-1, dtype=np.float64)
        if np.any(self.static_labels < 0) or not np.allclose(sums, 1.0, atol=1e-5):
            raise CorruptBundleError(f"{where}: static label rows are not distributions")


@dataclass
class DistilledDataset:
    """K subset records sharing C classes and M compensators each."""
    subsets: List[SubsetRecord]
    M: int
    C: int
    ipc: int
    provenance: Dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.subsets)

    @property
    def dim(self) -> int:
        return int(self.subsets[0].anchors.instances.shape[1]) if self.subsets else 0

    @property
    def integrated_size(self) -> int:
        return sum(s.C * s.M for s in self.subsets)

    @property
    def is_empty(self) -> bool:
        return not self.subsets

    def validate(self) -> 'DistilledDataset':
        if self.is_empty:
            return self
        expected = compute_K(self.ipc, self.C, self.M)
        if self.K != expected:
            raise CorruptBundleError(f"bundle holds K={self.K} subsets, ipc={self.ipc} C={self.C} M={self.M} implies {expected}")
        for k, subset in enumerate(self.subsets):
            if subset.C != self.C or subset.M != self.M:
                raise CorruptBundleError(f"subset {k} has C={subset.C} M={subset.M}, bundle declares C={self.C} M={self.M}")
            if subset.anchors.instances.shape[1] != self.dim:
                raise CorruptBundleError(f"subset {k} has a different instance dimension")
            subset.validate(f"subset {k}")
        if self.integrated_size != self.K * self.C * self.M:
            raise CorruptBundleError("integrated size does not equal K*C*M")
        return self

    def to_dict(self):
        return {
            'kind': 'infer',
            'K': self.K,
            'M': self.M,
            'C': self.C,
            'ipc': self.ipc,
            'dim': self.dim,
            'integrated_size': self.integrated_size,
            'provenance': self.provenance,
        }


@dataclass
class IntegratedSet:
    """Anchor + compensator instances with their labels and (k, i, j) provenance."""
    instances: np.ndarray
    labels: np.ndarray
    provenance: np.ndarray
    bundle: Optional[DistilledDataset] = None

    def __len__(self) -> int:
        return int(self.instances.shape[0])

    def lookup(self, index: int) -> Tuple[Tuple[int, int, int], np.ndarray]:
        """Provenance of one instance and the instance rebuilt by re-adding its parts."""
        if self.bundle is None:
            raise ContractError("integrated set was built without its bundle")
        k, i, j = (int(v) for v in self.provenance[index])
        subset = self.bundle.subsets[k]
        return (k, i, j), subset.anchors.instances[i] + subset.compensators[j].u


@dataclass
class MixupBatch:
    inputs: np.ndarray
    labels: np.ndarray
    lam: float
    permutation: np.ndarray


@dataclass
class BaselineSet:
    """
    ipc instances per class with one stored label each.

    kind is 'coreset' or 'class_specific'; class_ids holds the class each
    instance was selected or synthesised for.
    """
    instances: np.ndarray
    labels: np.ndarray
    class_ids: np.ndarray
    kind: str
    ipc: int
    C: int
    provenance: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.instances = np.asarray(self.instances, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.float32)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int32)
        if self.kind not in ('coreset', 'class_specific'):
            raise ContractError(f"Unknown baseline kind '{self.kind}'")
        if len(self.instances) != self.ipc * self.C:
            raise CorruptBundleError(f"{self.kind} set holds {len(self.instances)} instances, expected ipc*C={self.ipc * self.C}")
        if self.labels.shape != (len(self.instances), self.C):
            raise CorruptBundleError(f"{self.kind} labels have shape {self.labels.shape}")

    def __len__(self) -> int:
        return int(self.instances.shape[0])

    @property
    def dim(self) -> int:
        return int(self.instances.shape[1])

    def as_training_set(self) -> IntegratedSet:
        n = len(self)
        provenance = np.stack([np.zeros(n, np.int64), self.class_ids.astype(np.int64), np.zeros(n, np.int64)], axis=1)
        return IntegratedSet(self.instances, self.labels, provenance)

    def by_class(self) -> Dict[int, np.ndarray]:
        return {c: self.instances[self.class_ids == c] for c in range(self.C)}

    def to_dict(self):
        return {
            'kind': self.kind,
            'ipc': self.ipc,
            'C': self.C,
            'dim': self.dim,
            'size': len(self),
            'provenance': self.provenance,
        }
