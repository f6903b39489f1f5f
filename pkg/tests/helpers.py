"""Small fixtures shared by the test modules."""

import os
import sys

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np

from data.toy_data import generate_toy_dataset
from models.bundle import UFC, DistilledDataset, SubsetRecord, compute_K
from models.dataset import AnchorSet
from models.network import ModelSpec
from models.run_config import StudentRecipe, SynthesisRecipe, TeacherRecipe
from utils.nn import init_model, set_requires_grad, softmax_rows
from utils.training import train_teacher

QUICK_TEACHER = TeacherRecipe(lr=0.05, momentum=0.9, epochs=15, batch_size=16, target_accuracy=0.0)
QUICK_SYNTHESIS = SynthesisRecipe(lr=0.05, beta1=0.5, beta2=0.9, iterations=15)
QUICK_STUDENT = StudentRecipe(lr=1e-2, weight_decay=0.01, batch_size=16, epochs=3)


def tiny_dataset(C=3, d=8, n_per_class=10, spread=0.05, seed=0):
    return generate_toy_dataset(C, d, n_per_class, spread, seed)


_TEACHER_CACHE = {}


def tiny_teachers(archs=('A1', 'A2'), C=3, d=8, n_per_class=10, seed=0):
    """Teachers trained once per configuration and reused; tests must not mutate them."""
    key = (tuple(archs), C, d, n_per_class, seed)
    if key not in _TEACHER_CACHE:
        dataset = tiny_dataset(C, d, n_per_class, seed=seed)
        train = dataset.train()
        teachers = [train_teacher(train, ModelSpec(arch, d, C), QUICK_TEACHER, seed=seed + i)
                    for i, arch in enumerate(archs)]
        _TEACHER_CACHE[key] = (dataset, teachers)
    return _TEACHER_CACHE[key]


def frozen_model(arch='A1', d=4, C=3, seed=0):
    """An untrained eval-mode model with gradients switched off."""
    model = init_model(ModelSpec(arch, d, C), seed)
    return set_requires_grad(model.eval(), False)


def zero_model(arch='A2', d=4, C=3):
    model = frozen_model(arch, d, C)
    for tensor in model.trainable().values():
        tensor.data = np.zeros_like(tensor.data)
    return model


def logit_model(logits, d=2):
    """
    A2 model whose eval-mode logits equal `logits` for every input: zero
    hidden weights and a head bias carrying the logits.
    """
    logits = np.asarray(logits, dtype=np.float32)
    model = zero_model('A2', d, len(logits))
    model.parameters['head.bias'].data = logits.copy()
    return model


def single_bn_model(running_mean, running_var):
    """A2 model with identity hidden weights on a 2-feature input, for hand-checked BN statistics."""
    spec = ModelSpec('A2', 2, 2)
    model = init_model(spec, 0)
    width = spec.hidden[0]
    weight = np.zeros((2, width), np.float32)
    weight[0, 0] = weight[1, 1] = 1.0
    model.parameters['hidden0.weight'].data = weight
    # unused features see constant zero activations, so give them zero running variance
    mean = np.zeros(width, np.float32)
    var = np.zeros(width, np.float32)
    mean[:2], var[:2] = running_mean, running_var
    model.bn_states[0].running_mean = mean
    model.bn_states[0].running_var = var
    return set_requires_grad(model.eval(), False)


def synthetic_bundle(ipc=10, C=10, M=4, d=64, seed=0):
    """A DistilledDataset with random anchors, compensators and labels, built without any teacher."""
    rng = np.random.default_rng(seed)
    K = compute_K(ipc, C, M)
    subsets = []
    for k in range(K):
        anchors = AnchorSet(rng.random((C, d)), np.arange(C), np.arange(C) + k * C)
        ufcs = [UFC(rng.normal(0.0, 0.1, d), f'A{j % 4 + 1}', final_objective=0.5, initial_objective=1.0)
                for j in range(M)]
        labels = softmax_rows(rng.normal(size=(C, M, C)))
        subsets.append(SubsetRecord(anchors, ufcs, labels))
    return DistilledDataset(subsets, M, C, ipc, provenance={'seed': seed}).validate()
