"""Run configuration: every knob of every command, with defaults."""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from typing import Dict, List, Optional, Tuple

from utils.errors import ConfigError


@dataclass
class DatasetParams:
    class_count: int = 10
    dim: int = 64
    n_per_class: int = 200
    spread: float = 0.15
    class_separation: float = 0.35
    test_fraction: float = 0.2
    seed: int = 0


@dataclass
class TeacherRecipe:
    """Teacher training recipe (SGD with momentum, cosine decay)."""
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    epochs: int = 100
    batch_size: int = 64
    target_accuracy: float = 0.95
    seed: int = 0


@dataclass
class SynthesisRecipe:
    """Compensator / class-specific image optimisation recipe (Adam, cosine decay)."""
    lr: float = 0.25
    beta1: float = 0.5
    beta2: float = 0.9
    iterations: int = 1000


@dataclass
class DistillParams:
    ipc: int = 10
    alpha: float = 1.0
    seed: int = 0
    synthesis: SynthesisRecipe = field(default_factory=SynthesisRecipe)
    baseline_init: str = 'real'
    coreset_labels: str = 'ensemble'


@dataclass
class StudentRecipe:
    """Student training recipe (AdamW, cosine decay)."""
    lr: float = 1e-3
    weight_decay: float = 0.01
    batch_size: int = 64
    epochs: int = 100


@dataclass
class StudentParams:
    architecture_id: str = 'A1'
    mode: str = 'static'
    mixup_beta: float = 1.0
    use_mixup: bool = True
    seed: int = 0
    recipe: StudentRecipe = field(default_factory=StudentRecipe)


@dataclass
class MetricToggles:
    compression_ratio: bool = True
    duplication: bool = True
    landscape: bool = False
    linearity: bool = True
    features: bool = False
    probe_architecture: str = 'A1'
    dynamic_epochs: int = 0
    landscape_extent: float = 1.0
    landscape_resolution: int = 21
    linearity_pairs: int = 100
    linearity_lambdas: List[float] = field(default_factory=lambda: [0.25, 0.5, 0.75])


@dataclass
class CompareParams:
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])
    ipc_values: List[int] = field(default_factory=lambda: [10])
    methods: List[str] = field(default_factory=lambda: ['random', 'class_specific', 'infer_static', 'infer_dyn'])
    ensemble_sizes: List[int] = field(default_factory=list)
    student_architectures: List[str] = field(default_factory=lambda: ['A1'])
    duplication_ipcs: List[int] = field(default_factory=list)


@dataclass
class RunConfig:
    dataset: DatasetParams = field(default_factory=DatasetParams)
    ensemble: List[str] = field(default_factory=lambda: ['A1', 'A2', 'A3', 'A4'])
    teacher: TeacherRecipe = field(default_factory=TeacherRecipe)
    distill: DistillParams = field(default_factory=DistillParams)
    student: StudentParams = field(default_factory=StudentParams)
    metrics: MetricToggles = field(default_factory=MetricToggles)
    compare: CompareParams = field(default_factory=CompareParams)

    @classmethod
    def from_dict(cls, data: Optional[Dict]) -> 'RunConfig':
        config = _build(cls, data or {}, 'config')
        config.validate()
        return config

    @classmethod
    def load(cls, path: str, overrides: Optional[List[str]] = None) -> 'RunConfig':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"{path}: cannot read config ({e})")
        return cls.from_dict(apply_overrides(data, overrides or []))

    def merged(self, overrides: List[str]) -> 'RunConfig':
        return RunConfig.from_dict(apply_overrides(self.to_dict(), overrides))

    def validate(self) -> None:
        if len(set(self.ensemble)) != len(self.ensemble) or not self.ensemble:
            raise ConfigError(f"ensemble architecture ids must be non-empty and distinct, got {self.ensemble}")
        if self.student.mode not in ('static', 'dynamic'):
            raise ConfigError(f"student.mode must be 'static' or 'dynamic', got '{self.student.mode}'")
        if self.distill.baseline_init not in ('real', 'noise'):
            raise ConfigError(f"distill.baseline_init must be 'real' or 'noise'")
        if self.distill.coreset_labels not in ('ensemble', 'one_hot'):
            raise ConfigError(f"distill.coreset_labels must be 'ensemble' or 'one_hot'")
        if self.student.mixup_beta <= 0:
            raise ConfigError("student.mixup_beta must be positive")
        if not 0 < self.dataset.test_fraction < 1:
            raise ConfigError("dataset.test_fraction must lie in (0, 1)")
        if self.metrics.landscape_resolution < 1 or self.metrics.landscape_resolution % 2 == 0:
            raise ConfigError(f"metrics.landscape_resolution must be odd so the grid is centred on the anchor, "
                              f"got {self.metrics.landscape_resolution}")

    def to_dict(self) -> Dict:
        return asdict(self)

    def config_hash(self) -> str:
        return _digest(self.to_dict())

    def section_hash(self, *names: str) -> str:
        data = self.to_dict()
        return _digest({name: data[name] for name in names})


# Sections each artifact kind depends on.
ARTIFACT_SECTIONS: Dict[str, Tuple[str, ...]] = {
    'dataset': ('dataset',),
    'teacher': ('dataset', 'teacher'),
    'bundle': ('dataset', 'ensemble', 'teacher', 'distill'),
    'baseline': ('dataset', 'ensemble', 'teacher', 'distill'),
    'student': ('dataset', 'ensemble', 'teacher', 'distill', 'student'),
}


def _digest(data) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {path}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}.{name}")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def apply_overrides(data: Dict, overrides: List[str]) -> Dict:
    """Apply dotted key=value overrides; values parse as JSON when they can."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if '=' not in item:
            raise ConfigError(f"override '{item}' must look like key=value")
        key, raw = item.split('=', 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.strip().split('.')
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{key}' descends into a non-object")
        node[parts[-1]] = value
    return data
