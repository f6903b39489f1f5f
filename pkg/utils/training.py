"""Teacher training: SGD with momentum and cosine decay on one-hot cross-entropy."""

import logging
from typing import Dict, List, Optional

import numpy as np

from models.dataset import LabeledDataset
from models.network import ModelSpec, TeacherModel
from models.run_config import TeacherRecipe
from utils.diffcore import Tape, backward
from utils.errors import ContractError, ConvergenceError
from utils.nn import cross_entropy, forward_logits, init_model, set_requires_grad, top1_accuracy
from utils.optim import SGD, cosine_lr, named_grads

logger = logging.getLogger(__name__)


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Shuffled batch indices for one epoch; a trailing single row is dropped."""
    order = rng.permutation(n)
    batches = [order[start:start + batch_size] for start in range(0, n, batch_size)]
    return [b for b in batches if len(b) >= 2]


def batches_per_epoch(n: int, batch_size: int) -> int:
    full, rest = divmod(n, batch_size)
    return full + (1 if rest >= 2 else 0)


def train_teacher(dataset: LabeledDataset, spec: ModelSpec, recipe: TeacherRecipe,
                  seed: Optional[int] = None, testset: Optional[LabeledDataset] = None) -> TeacherModel:
    """
    Train a fresh model on dataset and return it frozen in eval mode.

    Raises ConvergenceError when the final training accuracy is below
    recipe.target_accuracy.
    """
    counts = dataset.class_counts()
    if min(counts) < 2:
        raise ContractError(f"teacher training needs >= 2 instances per class, got {counts}")
    if spec.input_dim != dataset.dim or spec.class_count != dataset.class_count:
        raise ContractError(f"spec {spec.to_dict()} does not fit dataset d={dataset.dim} C={dataset.class_count}")

    seed = recipe.seed if seed is None else seed
    input_mean, input_std = dataset.pixel_stats()
    model = init_model(spec, seed, input_mean, input_std)
    params = model.trainable()
    optimizer = SGD(params, recipe.lr, recipe.momentum, recipe.weight_decay)
    targets = dataset.one_hot()
    rng = np.random.default_rng([seed, 17])

    steps_per_epoch = batches_per_epoch(len(dataset), recipe.batch_size)
    total_steps = steps_per_epoch * recipe.epochs
    step = 0
    trace: List[Dict] = []

    logger.info("Training teacher %s for %d epochs (%d steps)", spec.architecture_id, recipe.epochs, total_steps)
    for epoch in range(1, recipe.epochs + 1):
        model.train()
        losses = []
        for batch in epoch_batches(len(dataset), recipe.batch_size, rng):
            with Tape() as tape:
                logits = forward_logits(model, dataset.instances[batch])
                loss = cross_entropy(logits, targets[batch])
            grads = backward(tape, loss)
            optimizer.step(named_grads(params, grads), lr=cosine_lr(recipe.lr, step, total_steps))
            losses.append(loss.item())
            step += 1

        model.eval()
        row = {
            'epoch': epoch,
            'train_loss': float(np.mean(losses)) if losses else 0.0,
            'train_top1': top1_accuracy(model, dataset.instances, dataset.labels),
            'test_top1': top1_accuracy(model, testset.instances, testset.labels) if testset is not None else float('nan'),
        }
        trace.append(row)
        if epoch % 10 == 0 or epoch == recipe.epochs:
            logger.info("  %s epoch %d: loss %.4f train %.3f test %.3f", spec.architecture_id, epoch,
                        row['train_loss'], row['train_top1'], row['test_top1'])

    model.eval()
    set_requires_grad(model, False)
    final = top1_accuracy(model, dataset.instances, dataset.labels)
    model.metadata.update({'seed': seed, 'trace': trace, 'train_top1': final})
    if testset is not None:
        model.metadata['test_top1'] = top1_accuracy(model, testset.instances, testset.labels)

    if final < recipe.target_accuracy:
        raise ConvergenceError(
            f"teacher {spec.architecture_id} reached {final:.3f} train accuracy, target {recipe.target_accuracy}",
            accuracy=final,
        )
    return model
