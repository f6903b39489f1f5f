"""
Student side: on-the-fly integration, MixUp, KL training and evaluation.

Static mode trains on stored labels and never touches a teacher; dynamic
mode relabels every augmented batch with the ensemble and runs
ceil(epochs / M) epochs.
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from models.bundle import BaselineSet, DistilledDataset, IntegratedSet, MixupBatch
from models.dataset import LabeledDataset
from models.network import ModelSpec, TeacherModel
from models.run_config import StudentRecipe
from utils.diffcore import Tape, backward
from utils.distill import relabel_batch
from utils.errors import ContractError
from utils.nn import forward_logits, init_model, kl_loss, predict
from utils.optim import AdamW, cosine_lr, named_grads
from utils.parallel import ordered_map
from utils.training import batches_per_epoch, epoch_batches

logger = logging.getLogger(__name__)


class TeacherStore:
    """
    Lazy access to the teacher ensemble.

    `reads` counts every teacher handed out, so a caller can show that a
    training run never consulted the teachers.
    """

    def __init__(self, loaders: Sequence[Callable[[], TeacherModel]], names: Sequence[str]):
        self._loaders = list(loaders)
        self.names = list(names)
        self.reads = 0

    @classmethod
    def from_models(cls, models: Sequence[TeacherModel]) -> 'TeacherStore':
        return cls([(lambda m=m: m) for m in models], [m.spec.architecture_id for m in models])

    @classmethod
    def from_paths(cls, paths: Dict[str, str]) -> 'TeacherStore':
        from utils.storage import load_model
        return cls([(lambda p=p: load_model(p)) for p in paths.values()], list(paths))

    def __len__(self) -> int:
        return len(self._loaders)

    def ensemble(self) -> List[TeacherModel]:
        models = []
        for load in self._loaders:
            self.reads += 1
            models.append(load().eval())
        return models


def integrate(bundle: DistilledDataset) -> IntegratedSet:
    """All anchor + compensator instances, k-major, then anchor, then compensator."""
    bundle.validate()
    instances, labels, provenance = [], [], []
    for k, subset in enumerate(bundle.subsets):
        instances.append(subset.integrated())
        labels.append(subset.static_labels.reshape(subset.C * subset.M, subset.C))
        i, j = np.meshgrid(np.arange(subset.C), np.arange(subset.M), indexing='ij')
        provenance.append(np.stack([np.full(i.size, k), i.ravel(), j.ravel()], axis=1))
    if not instances:
        return IntegratedSet(np.zeros((0, 0), np.float32), np.zeros((0, bundle.C), np.float32),
                             np.zeros((0, 3), np.int64), bundle)
    return IntegratedSet(np.concatenate(instances), np.concatenate(labels),
                         np.concatenate(provenance).astype(np.int64), bundle)


def mixup(inputs: np.ndarray, labels: np.ndarray, beta: float, rng: np.random.Generator,
          lam: Optional[float] = None) -> MixupBatch:
    """
    Mix the batch with a shuffled copy of itself using one lambda' = max(lambda, 1 - lambda),
    lambda ~ Beta(beta, beta) unless given.
    """
    if len(inputs) < 2:
        raise ContractError(f"mixup needs a batch of at least 2, got {len(inputs)}")
    if beta <= 0:
        raise ContractError(f"mixup beta must be positive, got {beta}")
    permutation = rng.permutation(len(inputs))
    drawn = rng.beta(beta, beta) if lam is None else lam
    lam = np.float32(max(drawn, 1.0 - drawn))
    rest = np.float32(1.0) - lam
    mixed_inputs = lam * inputs + rest * inputs[permutation]
    mixed_labels = lam * labels + rest * labels[permutation]
    return MixupBatch(mixed_inputs.astype(np.float32), mixed_labels.astype(np.float32), float(lam), permutation)


def as_training_set(source: Union[DistilledDataset, BaselineSet, IntegratedSet]) -> IntegratedSet:
    if isinstance(source, DistilledDataset):
        return integrate(source)
    if isinstance(source, BaselineSet):
        return source.as_training_set()
    if isinstance(source, IntegratedSet):
        return source
    raise ContractError(f"cannot train a student on {type(source).__name__}")


def train_student(source, spec: ModelSpec, recipe: StudentRecipe, mode: str = 'static',
                  teachers: Optional[TeacherStore] = None, beta: float = 1.0, seed: int = 0,
                  use_mixup: bool = True, force_lambda: Optional[float] = None,
                  testset: Optional[LabeledDataset] = None) -> Tuple[TeacherModel, List[Dict]]:
    """Train a fresh student with KL loss; returns the model and its per-epoch trace."""
    if mode not in ('static', 'dynamic'):
        raise ContractError(f"Unknown student mode '{mode}'")
    data = as_training_set(source)
    if len(data) < 2:
        raise ContractError(f"student training needs at least 2 instances, got {len(data)}")
    if data.instances.shape[1] != spec.input_dim:
        raise ContractError(f"training instances have d={data.instances.shape[1]}, spec expects {spec.input_dim}")

    ensemble = None
    epochs = recipe.epochs
    if mode == 'dynamic':
        if teachers is None or len(teachers) == 0:
            raise ContractError("dynamic mode needs the teacher ensemble")
        ensemble = teachers.ensemble()
        epochs = math.ceil(recipe.epochs / len(ensemble))

    std = float(data.instances.std())
    model = init_model(spec, seed, float(data.instances.mean()), std if std > 0 else 1.0)
    params = model.trainable()
    optimizer = AdamW(params, recipe.lr, weight_decay=recipe.weight_decay)
    shuffle_rng = np.random.default_rng([seed, 1])
    mix_rng = np.random.default_rng([seed, 2])
    total_steps = batches_per_epoch(len(data), recipe.batch_size) * epochs
    step = 0
    trace: List[Dict] = []
    step_losses: List[float] = []

    logger.info("Training %s student %s on %d instances for %d epochs", mode, spec.architecture_id, len(data), epochs)
    for epoch in range(1, epochs + 1):
        model.train()
        losses = []
        for batch in epoch_batches(len(data), recipe.batch_size, shuffle_rng):
            inputs, targets = data.instances[batch], data.labels[batch]
            if use_mixup:
                mixed = mixup(inputs, targets, beta, mix_rng, lam=force_lambda)
                inputs, targets = mixed.inputs, mixed.labels
            if ensemble is not None:
                targets = relabel_batch(ensemble, inputs)
            with Tape() as tape:
                loss = kl_loss(targets, forward_logits(model, inputs))
            grads = backward(tape, loss)
            optimizer.step(named_grads(params, grads), lr=cosine_lr(recipe.lr, step, total_steps))
            losses.append(loss.item())
            step += 1
        step_losses.extend(losses)

        model.eval()
        row = {
            'epoch': epoch,
            'train_loss': float(np.mean(losses)) if losses else 0.0,
            'test_top1': evaluate(model, testset) if testset is not None else float('nan'),
        }
        trace.append(row)
        logger.debug("student epoch %d: loss %.4f test %.3f", epoch, row['train_loss'], row['test_top1'])

    model.eval()
    model.metadata.update({'mode': mode, 'seed': seed, 'epochs': epochs, 'trace': trace, 'step_losses': step_losses})
    if trace:
        logger.info("Student %s (%s) final loss %.4f test %.3f", spec.architecture_id, mode,
                    trace[-1]['train_loss'], trace[-1]['test_top1'])
    return model, trace


def evaluate(model: TeacherModel, testset: LabeledDataset, threads: Optional[int] = None, chunk: int = 512) -> float:
    """Top-1 accuracy on testset, predicted chunk by chunk."""
    if len(testset) == 0:
        return 0.0
    starts = list(range(0, len(testset), chunk))
    predictions = ordered_map(lambda s: predict(model, testset.instances[s:s + chunk], chunk), starts, threads)
    return float(np.mean(np.concatenate(predictions) == testset.labels))
