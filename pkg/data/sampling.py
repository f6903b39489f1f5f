"""Class-indexed sampling: stratified splits, anchor sets and per-class selections."""

from typing import Dict, List

import numpy as np

from models.dataset import AnchorSet, LabeledDataset
from utils.errors import BudgetError, ContractError


def stratified_split(labels: np.ndarray, class_count: int, test_fraction: float, seed: int) -> np.ndarray:
    """Boolean test mask holding floor(n_c * test_fraction) instances of every class."""
    if not 0 < test_fraction < 1:
        raise ContractError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    mask = np.zeros(len(labels), dtype=bool)
    for c in range(class_count):
        members = np.flatnonzero(labels == c)
        n_test = int(len(members) * test_fraction)
        mask[rng.permutation(members)[:n_test]] = True
    return mask


def class_permutations(dataset: LabeledDataset, seed: int) -> Dict[int, np.ndarray]:
    """One seeded random order of every class's instance indices."""
    rng = np.random.default_rng(seed)
    return {c: rng.permutation(dataset.class_indices(c)) for c in range(dataset.class_count)}


def sample_anchor_set(dataset: LabeledDataset, k_index: int, seed: int) -> AnchorSet:
    """
    Anchor set k: one instance per class.

    Anchor sets drawn with the same seed for different k never share an
    instance, because set k takes position k of each class permutation.
    """
    if k_index < 0:
        raise ContractError(f"k_index must be non-negative, got {k_index}")
    order = class_permutations(dataset, seed)
    sources = []
    for c in range(dataset.class_count):
        if k_index >= len(order[c]):
            raise BudgetError(
                f"class {c} exhausted: anchor set {k_index} needs {k_index + 1} instances, class has {len(order[c])}"
            )
        sources.append(int(order[c][k_index]))
    sources = np.asarray(sources, dtype=np.int64)
    return AnchorSet(dataset.instances[sources], dataset.labels[sources], sources)


def select_per_class(dataset: LabeledDataset, per_class: int, seed: int) -> List[np.ndarray]:
    """The first per_class entries of each class permutation, without replacement."""
    if per_class < 1:
        raise ContractError(f"per-class count must be at least 1, got {per_class}")
    order = class_permutations(dataset, seed)
    chosen = []
    for c in range(dataset.class_count):
        if per_class > len(order[c]):
            raise BudgetError(f"class {c} has {len(order[c])} instances, {per_class} requested")
        chosen.append(order[c][:per_class])
    return chosen
