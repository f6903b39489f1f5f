"""
Compensator distillation.

For every subset k an anchor set is drawn, one compensator per ensemble
member is optimised against that member alone, and every anchor+compensator
instance is relabelled with the averaged ensemble logits.
"""

import logging
from dataclasses import asdict
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.bundle import UFC, DistilledDataset, SubsetRecord, compute_K
from models.dataset import AnchorSet, LabeledDataset
from models.network import TeacherModel
from models.run_config import SynthesisRecipe
from data.sampling import sample_anchor_set
from utils.diffcore import Tape, Tensor, as_tensor, backward, l2norm, scale
from utils.errors import BudgetError, ContractError, DivergenceError, NumericError
from utils.nn import cross_entropy, forward_logits, softmax_rows
from utils.optim import Adam, cosine_lr
from utils.parallel import ordered_map

logger = logging.getLogger(__name__)

__all__ = ['compute_K', 'bn_alignment_loss', 'synthesis_objective', 'optimize_ufc', 'relabel', 'relabel_batch', 'distill']


def _bn_distance(sink) -> Tensor:
    loss = None
    for batch_mean, batch_var, state in sink:
        term = l2norm(batch_mean - Tensor(state.running_mean)) + l2norm(batch_var - Tensor(state.running_var))
        loss = term if loss is None else loss + term
    return loss if loss is not None else Tensor(0.0)


def bn_alignment_loss(model: TeacherModel, batch) -> Tensor:
    """
    Sum over BN layers of ||batch mean - running mean|| + ||batch var - running var||.

    The forward pass runs in eval mode; only the statistics of each BN input
    are taken from the batch.
    """
    batch = as_tensor(batch)
    if len(batch.shape) != 2 or batch.shape[0] < 2:
        raise ContractError(f"BN alignment needs a batch of at least 2 rows, got shape {batch.shape}")
    sink = []
    forward_logits(model, batch, mode='eval', bn_sink=sink)
    return _bn_distance(sink)


def synthesis_objective(model: TeacherModel, batch, targets: np.ndarray, alpha: float) -> Tensor:
    """sum_i CE(f(s_i), y_i) + alpha * L_BN(f, s_i), with L_BN taken over the whole batch."""
    batch = as_tensor(batch)
    if len(batch.shape) != 2 or batch.shape[0] < 2:
        raise ContractError(f"synthesis needs a batch of at least 2 rows, got shape {batch.shape}")
    sink = []
    logits = forward_logits(model, batch, mode='eval', bn_sink=sink)
    ce = cross_entropy(logits, targets, reduction='sum')
    return ce + scale(_bn_distance(sink), alpha * batch.shape[0])


def optimize_ufc(teacher: TeacherModel, anchors: AnchorSet, alpha: float, recipe: SynthesisRecipe,
                 context: Optional[dict] = None) -> UFC:
    """
    Optimise one compensator u (zero-initialised) so that anchors + u are
    classified as their own labels while matching the teacher's BN statistics.

    The lowest-objective iterate is returned, never one worse than u = 0.
    """
    context = context or {}
    x = Tensor(anchors.instances)
    targets = anchors.one_hot()
    u = Tensor(np.zeros(anchors.instances.shape[1], np.float32), requires_grad=True, name='u')
    optimizer = Adam({'u': u}, recipe.lr, betas=(recipe.beta1, recipe.beta2))

    trace: List[float] = []
    best_value, best_u = None, u.data.copy()
    for iteration in range(recipe.iterations + 1):
        try:
            with Tape() as tape:
                objective = synthesis_objective(teacher, x + u, targets, alpha)
        except NumericError as e:
            raise DivergenceError(f"objective diverged at iteration {iteration}: {e}", iteration, context)
        value = objective.item()
        if not np.isfinite(value):
            raise DivergenceError(f"objective diverged at iteration {iteration}", iteration, context)
        trace.append(value)
        if best_value is None or value < best_value:
            best_value, best_u = value, u.data.copy()
        if iteration == recipe.iterations:
            break
        grads = backward(tape, objective)
        optimizer.step({'u': grads[u].data}, lr=cosine_lr(recipe.lr, iteration, recipe.iterations))
        logger.debug("ufc %s iteration %d objective %.6f", context, iteration, value)

    return UFC(best_u, teacher.spec.architecture_id, final_objective=best_value,
               initial_objective=trace[0], trace=trace)


def relabel(ensemble: Sequence[TeacherModel], instance: np.ndarray) -> np.ndarray:
    """Softmax of the ensemble-averaged logits of one instance."""
    if not ensemble:
        raise ContractError("relabel needs at least one teacher")
    row = np.asarray(instance, dtype=np.float32).reshape(1, -1)
    logits = np.stack([forward_logits(model, row, mode='eval').data[0] for model in ensemble]).astype(np.float64)
    return softmax_rows(logits.mean(axis=0))


def relabel_batch(ensemble: Sequence[TeacherModel], instances: np.ndarray) -> np.ndarray:
    """Row-by-row relabel, so a row's label never depends on its batch."""
    if not ensemble:
        raise ContractError("relabel needs at least one teacher")
    instances = np.asarray(instances, dtype=np.float32)
    if len(instances) == 0:
        return np.zeros((0, ensemble[0].spec.class_count), np.float32)
    return np.stack([relabel(ensemble, row) for row in instances])


def distill(dataset: LabeledDataset, ensemble: Sequence[TeacherModel], ipc: int, alpha: float,
            recipe: SynthesisRecipe, seed: int, threads: Optional[int] = None) -> DistilledDataset:
    """Build K subsets of C anchors, M compensators and C x M static labels."""
    M, C = len(ensemble), dataset.class_count
    if M == 0:
        raise ContractError("distill needs a non-empty ensemble")
    K = compute_K(ipc, C, M)
    logger.info("Distilling K=%d subsets x C=%d anchors x M=%d compensators (ipc=%d)", K, C, M, ipc)

    anchor_sets = []
    for k in range(K):
        try:
            anchor_sets.append(sample_anchor_set(dataset, k, seed))
        except BudgetError as e:
            raise BudgetError(f"subset {k}: {e}")

    def solve(job: Tuple[int, int]) -> UFC:
        k, j = job
        logger.info("  optimising compensator (k=%d, j=%d) against %s", k, j, ensemble[j].spec.architecture_id)
        ufc = optimize_ufc(ensemble[j], anchor_sets[k], alpha, recipe, context={'k': k, 'j': j})
        logger.info("  (k=%d, j=%d) objective %.4f -> %.4f", k, j, ufc.initial_objective, ufc.final_objective)
        return ufc

    jobs = [(k, j) for k in range(K) for j in range(M)]
    ufcs = ordered_map(solve, jobs, threads)

    subsets = []
    for k in range(K):
        record = SubsetRecord(anchor_sets[k], ufcs[k * M:(k + 1) * M], np.zeros((C, M, C), np.float32))
        record.static_labels = relabel_batch(ensemble, record.integrated()).reshape(C, M, C)
        subsets.append(record)

    provenance = {
        'seed': seed,
        'alpha': alpha,
        'synthesis': asdict(recipe),
        'ensemble': [model.spec.architecture_id for model in ensemble],
    }
    return DistilledDataset(subsets, M, C, ipc, provenance).validate()
