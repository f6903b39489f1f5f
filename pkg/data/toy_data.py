"""Toy original dataset: noisy copies of smooth per-class template images."""

import logging
import math

import numpy as np

from data.sampling import stratified_split
from models.dataset import LabeledDataset
from utils.errors import ContractError

logger = logging.getLogger(__name__)

FREQUENCIES = 3


def _smooth_pattern(rng: np.random.Generator, d: int) -> np.ndarray:
    """Random low-frequency pattern in [-1, 1]; 2-D when d is a perfect square."""
    side = int(math.isqrt(d))
    if side * side == d and side > 1:
        ys, xs = np.meshgrid(np.linspace(0, 1, side), np.linspace(0, 1, side), indexing='ij')
        coords = [xs.ravel(), ys.ravel()]
    else:
        coords = [np.linspace(0, 1, d)]
    pattern = np.zeros(d)
    for _ in range(FREQUENCIES):
        freq = rng.uniform(0.5, 2.5, size=len(coords))
        phase = rng.uniform(0, 2 * np.pi)
        pattern += rng.normal() * np.sin(2 * np.pi * sum(f * c for f, c in zip(freq, coords)) + phase)
    peak = np.abs(pattern).max()
    return pattern / peak if peak > 0 else pattern


def class_templates(C: int, d: int, seed: int, class_separation: float = 0.35) -> np.ndarray:
    rng = np.random.default_rng([seed, 0])
    return np.stack([np.clip(0.5 + class_separation * _smooth_pattern(rng, d), 0.0, 1.0) for _ in range(C)])


def generate_toy_dataset(C: int, d: int, n_per_class: int, spread: float, seed: int,
                         class_separation: float = 0.35, test_fraction: float = 0.2) -> LabeledDataset:
    """
    Class c is template_c plus isotropic Gaussian noise of std `spread`,
    clipped to [0, 1]. A stratified test split is attached as test_mask.
    """
    if C < 2 or d < 2 or n_per_class < 4:
        raise ContractError(f"toy dataset needs C >= 2, d >= 2, n_per_class >= 4 (got C={C}, d={d}, n={n_per_class})")
    if spread < 0:
        raise ContractError(f"spread must be non-negative, got {spread}")

    templates = class_templates(C, d, seed, class_separation)
    rng = np.random.default_rng([seed, 1])
    instances = []
    labels = []
    for c in range(C):
        noise = rng.normal(0.0, 1.0, size=(n_per_class, d)) * spread
        instances.append(np.clip(templates[c] + noise, 0.0, 1.0))
        labels.append(np.full(n_per_class, c))
    labels = np.concatenate(labels)
    test_mask = stratified_split(labels, C, test_fraction, seed)

    dataset = LabeledDataset(
        np.concatenate(instances).astype(np.float32), labels, C, test_mask=test_mask,
        metadata={
            'generator': 'toy',
            'n_per_class': n_per_class,
            'spread': spread,
            'class_separation': class_separation,
            'test_fraction': test_fraction,
            'seed': seed,
        },
    )
    logger.info("Generated toy dataset: C=%d d=%d N=%d (%d test)", C, d, len(dataset), int(test_mask.sum()))
    return dataset


def load_external_dataset(path: str) -> LabeledDataset:
    """Hook for real image archives; only the toy generator is supported."""
    raise NotImplementedError(f"{path}: external dataset archives are not supported, use gen-data")
