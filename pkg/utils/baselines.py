"""Comparison sets: a random per-class coreset and class-specific BN-matching synthesis."""

import logging
from dataclasses import asdict
from typing import List, Optional, Sequence

import numpy as np

from data.sampling import select_per_class
from models.bundle import BaselineSet
from models.dataset import LabeledDataset
from models.network import TeacherModel
from models.run_config import SynthesisRecipe
from utils.diffcore import Tape, Tensor, backward
from utils.distill import relabel_batch, synthesis_objective
from utils.errors import ContractError, DivergenceError, NumericError
from utils.nn import cross_entropy, forward_logits
from utils.optim import Adam, cosine_lr
from utils.parallel import ordered_map

logger = logging.getLogger(__name__)


def _labels_for(instances: np.ndarray, class_ids: np.ndarray, C: int,
                ensemble: Optional[Sequence[TeacherModel]], labels: str) -> np.ndarray:
    if labels == 'one_hot':
        targets = np.zeros((len(instances), C), np.float32)
        targets[np.arange(len(instances)), class_ids] = 1.0
        return targets
    if labels == 'ensemble':
        if not ensemble:
            raise ContractError("ensemble labels requested without an ensemble")
        return relabel_batch(ensemble, instances)
    raise ContractError(f"Unknown label source '{labels}'")


def random_coreset(dataset: LabeledDataset, ipc: int, seed: int,
                   ensemble: Optional[Sequence[TeacherModel]] = None, labels: Optional[str] = None) -> BaselineSet:
    """ipc instances per class without replacement, stored class-major."""
    labels = labels or ('ensemble' if ensemble else 'one_hot')
    chosen = select_per_class(dataset, ipc, seed)
    indices = np.concatenate(chosen)
    class_ids = np.repeat(np.arange(dataset.class_count), ipc)
    instances = dataset.instances[indices]
    return BaselineSet(
        instances, _labels_for(instances, class_ids, dataset.class_count, ensemble, labels),
        class_ids, 'coreset', ipc, dataset.class_count,
        provenance={'seed': seed, 'labels': labels},
    )


def _initial_images(dataset: LabeledDataset, ipc: int, seed: int, init: str) -> np.ndarray:
    """(ipc, C, d) starting images, slot-major."""
    C, d = dataset.class_count, dataset.dim
    if init == 'real':
        chosen = select_per_class(dataset, ipc, seed)
        return np.stack([dataset.instances[chosen[c]] for c in range(C)], axis=1)
    if init == 'noise':
        rng = np.random.default_rng([seed, 3])
        return rng.normal(0.5, 0.2, size=(ipc, C, d)).astype(np.float32)
    raise ContractError(f"Unknown init '{init}', expected 'real' or 'noise'")


def _synthesize_slot(teacher: TeacherModel, images: np.ndarray, alpha: float, recipe: SynthesisRecipe,
                     slot: int) -> np.ndarray:
    """
    Optimise one image per class together so BN statistics are taken over a
    real batch. Each image keeps the iterate with its lowest own CE.
    """
    C = len(images)
    targets = np.eye(C, dtype=np.float32)
    x = Tensor(images, requires_grad=True)
    optimizer = Adam({'x': x}, recipe.lr, betas=(recipe.beta1, recipe.beta2))
    best_ce = np.full(C, np.inf)
    best = images.copy()

    for iteration in range(recipe.iterations + 1):
        try:
            per_image = cross_entropy(forward_logits(teacher, x.data, mode='eval'), targets, reduction='none').data
        except NumericError as e:
            raise DivergenceError(f"slot {slot} diverged at iteration {iteration}: {e}", iteration, {'slot': slot})
        bad = np.flatnonzero(~np.isfinite(per_image))
        if len(bad):
            raise DivergenceError(f"class {int(bad[0])} slot {slot} diverged at iteration {iteration}",
                                  iteration, {'class': int(bad[0]), 'slot': slot})
        improved = per_image < best_ce
        best_ce[improved] = per_image[improved]
        best[improved] = x.data[improved]
        if iteration == recipe.iterations:
            break
        try:
            with Tape() as tape:
                objective = synthesis_objective(teacher, x, targets, alpha)
        except NumericError as e:
            raise DivergenceError(f"slot {slot} diverged at iteration {iteration}: {e}", iteration, {'slot': slot})
        grads = backward(tape, objective)
        optimizer.step({'x': grads[x].data}, lr=cosine_lr(recipe.lr, iteration, recipe.iterations))
    return best


def class_specific_synthesis(teacher: TeacherModel, dataset: LabeledDataset, ipc: int, alpha: float,
                             recipe: SynthesisRecipe, seed: int,
                             ensemble: Optional[Sequence[TeacherModel]] = None, init: str = 'real',
                             threads: Optional[int] = None) -> BaselineSet:
    """
    ipc images per class, each optimised towards its own one-hot class with
    the BN alignment term, then relabelled by the ensemble when one is given.
    """
    if ipc < 1:
        raise ContractError(f"ipc must be >= 1, got {ipc}")
    C = dataset.class_count
    start = _initial_images(dataset, ipc, seed, init)
    logger.info("Class-specific synthesis: %d slots x %d classes against %s", ipc, C, teacher.spec.architecture_id)

    slots: List[np.ndarray] = ordered_map(
        lambda s: _synthesize_slot(teacher, start[s], alpha, recipe, s), list(range(ipc)), threads,
    )
    # slot-major (ipc, C, d) -> class-major rows
    instances = np.stack(slots, axis=1).reshape(C * ipc, -1)
    class_ids = np.repeat(np.arange(C), ipc)
    labels = 'ensemble' if ensemble else 'one_hot'
    return BaselineSet(
        instances, _labels_for(instances, class_ids, C, ensemble, labels),
        class_ids, 'class_specific', ipc, C,
        provenance={'seed': seed, 'alpha': alpha, 'init': init, 'labels': labels,
                    'teacher': teacher.spec.architecture_id, 'synthesis': asdict(recipe)},
    )
