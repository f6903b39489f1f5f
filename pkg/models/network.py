"""Network value types: architecture specs, BN state and trained models."""

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from utils.diffcore import Tensor
from utils.errors import ConfigError, ContractError


# Hidden widths per architecture id. Every hidden affine layer is followed by BN and ReLU.
ARCHITECTURES: Dict[str, Tuple[int, ...]] = {
    'A1': (64, 64),
    'A2': (128,),
    'A3': (96, 48, 24),
    'A4': (32, 32, 32),
}


@dataclass(frozen=True)
class ModelSpec:
    """Architecture id plus the input and output sizes it is instantiated for."""
    architecture_id: str
    input_dim: int
    class_count: int

    def __post_init__(self):
        if self.architecture_id not in ARCHITECTURES:
            raise ConfigError(f"Unknown architecture '{self.architecture_id}', expected one of {sorted(ARCHITECTURES)}")
        if self.input_dim < 1 or self.class_count < 2:
            raise ConfigError(f"Invalid dims d={self.input_dim}, C={self.class_count}")

    @property
    def hidden(self) -> Tuple[int, ...]:
        return ARCHITECTURES[self.architecture_id]

    @property
    def feature_dim(self) -> int:
        return self.hidden[-1]

    def to_dict(self):
        return {
            'architecture_id': self.architecture_id,
            'input_dim': self.input_dim,
            'class_count': self.class_count,
            'hidden': list(self.hidden),
        }


@dataclass
class BatchNormState:
    """Per-feature BN affine parameters and running statistics."""
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.momentum < 1.0:
            raise ContractError(f"BN momentum must be in (0, 1), got {self.momentum}")
        if self.eps <= 0:
            raise ContractError(f"BN eps must be positive, got {self.eps}")

    @property
    def width(self) -> int:
        return int(self.running_mean.shape[0])

    def update_running(self, batch_mean: np.ndarray, batch_var: np.ndarray) -> None:
        m = np.float32(self.momentum)
        dtype = self.running_mean.dtype
        self.running_mean = ((1 - m) * self.running_mean + m * batch_mean).astype(dtype)
        self.running_var = np.maximum((1 - m) * self.running_var + m * batch_var, 0).astype(dtype)


@dataclass
class TeacherModel:
    """
    An MLP+BN classifier: parameters, BN states and mode.

    Used for teachers and students alike. Eval-mode forwards never touch
    bn_states; train-mode forwards update their running statistics.
    """
    spec: ModelSpec
    parameters: Dict[str, Tensor]
    bn_states: List[BatchNormState]
    input_mean: float = 0.0
    input_std: float = 1.0
    mode: str = 'eval'
    metadata: Dict = field(default_factory=dict)

    def train(self) -> 'TeacherModel':
        self.mode = 'train'
        return self

    def eval(self) -> 'TeacherModel':
        self.mode = 'eval'
        return self

    def trainable(self) -> Dict[str, Tensor]:
        """Every tensor an optimiser updates, hidden/head weights and BN affine."""
        named = dict(self.parameters)
        for index, state in enumerate(self.bn_states):
            named[f'bn{index}.gamma'] = state.gamma
            named[f'bn{index}.beta'] = state.beta
        return named

    def state_digest(self) -> str:
        digest = hashlib.sha256()
        for name, tensor in self.trainable().items():
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(tensor.data).tobytes())
        for state in self.bn_states:
            digest.update(state.running_mean.tobytes())
            digest.update(state.running_var.tobytes())
        return digest.hexdigest()

    def to_dict(self):
        return {
            'spec': self.spec.to_dict(),
            'mode': self.mode,
            'input_mean': self.input_mean,
            'input_std': self.input_std,
            'parameter_count': sum(t.size for t in self.trainable().values()),
            'metadata': self.metadata,
        }
