"""
Layers, losses and forward passes for the MLP+BN classifiers.

All forward passes are composed from diffcore primitives so that gradients
reach parameters and inputs alike.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from models.network import BatchNormState, ModelSpec, TeacherModel
from utils.diffcore import (
    Tensor, as_tensor, broadcast_add, log_softmax, mean, relu, reshape,
    scale, sqrt, total, variance,
)
from utils.errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


def init_model(spec: ModelSpec, seed: int, input_mean: float = 0.0, input_std: float = 1.0,
               momentum: float = BN_MOMENTUM, eps: float = BN_EPS) -> TeacherModel:
    """Fresh model: He-normal hidden weights, zero biases, identity BN."""
    rng = np.random.default_rng(seed)
    parameters = {}
    bn_states = []
    fan_in = spec.input_dim
    for index, width in enumerate(spec.hidden):
        weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width)).astype(np.float32)
        parameters[f'hidden{index}.weight'] = Tensor(weight, requires_grad=True)
        parameters[f'hidden{index}.bias'] = Tensor(np.zeros(width, np.float32), requires_grad=True)
        bn_states.append(BatchNormState(
            gamma=Tensor(np.ones(width, np.float32), requires_grad=True),
            beta=Tensor(np.zeros(width, np.float32), requires_grad=True),
            running_mean=np.zeros(width, np.float32),
            running_var=np.ones(width, np.float32),
            momentum=momentum,
            eps=eps,
        ))
        fan_in = width
    head = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, spec.class_count)).astype(np.float32)
    parameters['head.weight'] = Tensor(head, requires_grad=True)
    parameters['head.bias'] = Tensor(np.zeros(spec.class_count, np.float32), requires_grad=True)
    return TeacherModel(spec, parameters, bn_states, float(input_mean), float(input_std), mode='train')


def set_requires_grad(model: TeacherModel, flag: bool) -> TeacherModel:
    for tensor in model.trainable().values():
        tensor.requires_grad = flag
    return model


def bn_forward(x: Tensor, state: BatchNormState, mode: str) -> Tensor:
    """Normalise by batch statistics (train) or running statistics (eval)."""
    if len(x.shape) != 2 or x.shape[1] != state.width:
        raise DimensionError(f"BN layer of width {state.width} got input of shape {x.shape}")
    if mode == 'train':
        if x.shape[0] < 2:
            raise ContractError("BN in train mode needs a batch of at least 2 rows")
        batch_mean = mean(x, axis=0)
        batch_var = variance(x, axis=0)
        normalized = (x - batch_mean) / sqrt(batch_var + state.eps)
        state.update_running(batch_mean.data, batch_var.data)
    elif mode == 'eval':
        std = np.sqrt(state.running_var.astype(np.float64) + state.eps)
        normalized = (x - Tensor(state.running_mean)) / Tensor(std)
    else:
        raise ContractError(f"Unknown mode '{mode}'")
    return normalized * state.gamma + state.beta


def _as_batch(batch, input_dim: int) -> Tensor:
    x = as_tensor(batch)
    if len(x.shape) == 1:
        x = reshape(x, (1, x.shape[0]))
    if len(x.shape) != 2 or x.shape[1] != input_dim:
        raise ContractError(f"batch feature dim {x.shape[-1]} does not match model input dim {input_dim}")
    return x


def forward_logits(model: TeacherModel, batch, mode: Optional[str] = None,
                   bn_sink: Optional[List[Tuple[Tensor, Tensor, BatchNormState]]] = None,
                   return_features: bool = False):
    """
    Logits of shape (batch, C).

    bn_sink, when given, receives (batch mean, batch variance, state) for the
    input of every BN layer, as graph tensors. return_features also returns
    the penultimate activations.
    """
    mode = mode or model.mode
    x = _as_batch(batch, model.spec.input_dim)
    h = scale(x - model.input_mean, 1.0 / model.input_std)
    for index, state in enumerate(model.bn_states):
        h = broadcast_add(h @ model.parameters[f'hidden{index}.weight'], model.parameters[f'hidden{index}.bias'])
        if bn_sink is not None:
            bn_sink.append((mean(h, axis=0), variance(h, axis=0), state))
        h = relu(bn_forward(h, state, mode))
    logits = broadcast_add(h @ model.parameters['head.weight'], model.parameters['head.bias'])
    if return_features:
        return logits, h
    return logits


def penultimate_features(model: TeacherModel, batch) -> np.ndarray:
    _, features = forward_logits(model, batch, mode='eval', return_features=True)
    return features.data


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row softmax computed in float64 and returned as float32."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)


def _check_distribution(target: np.ndarray, what: str) -> np.ndarray:
    target = np.asarray(target)
    if target.ndim == 1:
        target = target[None, :]
    if np.any(target < 0) or not np.allclose(target.sum(axis=-1), 1.0, atol=1e-4):
        raise ContractError(f"{what} rows must be non-negative and sum to 1")
    return target


def _reduce(per_row: Tensor, reduction: str) -> Tensor:
    if reduction == 'mean':
        return mean(per_row)
    if reduction == 'sum':
        return total(per_row)
    if reduction == 'none':
        return per_row
    raise ContractError(f"Unknown reduction '{reduction}'")


def cross_entropy(logits, target, reduction: str = 'mean') -> Tensor:
    """-sum(target * log softmax(logits)) per row, reduced over the batch."""
    target = _check_distribution(target, 'cross_entropy target')
    logits = as_tensor(logits)
    if len(logits.shape) == 1:
        logits = reshape(logits, (1, logits.shape[0]))
    if logits.shape != target.shape:
        raise ContractError(f"logits {logits.shape} and target {target.shape} differ")
    per_row = scale(total(Tensor(target) * log_softmax(logits), axis=1), -1.0)
    return _reduce(per_row, reduction)


def kl_loss(teacher_probs, student_logits, reduction: str = 'mean') -> Tensor:
    """KL(teacher || softmax(student)) per row, with 0 log 0 taken as 0."""
    p = _check_distribution(teacher_probs, 'teacher_probs').astype(np.float64)
    logits = as_tensor(student_logits)
    if len(logits.shape) == 1:
        logits = reshape(logits, (1, logits.shape[0]))
    if logits.shape != p.shape:
        raise ContractError(f"student logits {logits.shape} and teacher probs {p.shape} differ")
    positive = p > 0
    entropy_term = np.where(positive, p * np.log(np.where(positive, p, 1.0)), 0.0).sum(axis=1)
    per_row = Tensor(entropy_term) - total(Tensor(p) * log_softmax(logits), axis=1)
    return _reduce(per_row, reduction)


def predict(model: TeacherModel, instances: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Eval-mode argmax predictions, computed in fixed-size chunks."""
    predictions = []
    for start in range(0, len(instances), chunk):
        logits = forward_logits(model, instances[start:start + chunk], mode='eval')
        predictions.append(np.argmax(logits.data, axis=1))
    if not predictions:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(predictions)


def top1_accuracy(model: TeacherModel, instances: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    return float(np.mean(predict(model, instances) == np.asarray(labels)))
