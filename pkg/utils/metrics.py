"""Budget accounting and diagnostics of distilled data."""

import logging
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from models.budget import BudgetReport
from models.bundle import BaselineSet, DistilledDataset, IntegratedSet
from models.dataset import LabeledDataset
from models.network import TeacherModel
from utils.csv_export import write_features
from utils.distill import relabel_batch
from utils.errors import ContractError
from utils.nn import cross_entropy, forward_logits, penultimate_features
from utils.storage import bundle_manifest_bytes

logger = logging.getLogger(__name__)


def compression_ratio(data: Union[DistilledDataset, BaselineSet], original: LabeledDataset,
                      label_mode: str = 'static', epochs: int = 1) -> BudgetReport:
    """
    Bytes of stored images, compensators, labels and manifest over the bytes
    of the original instances.

    Dynamic labels are counted once per epoch for every integrated instance.
    """
    if label_mode not in ('static', 'dynamic'):
        raise ContractError(f"Unknown label mode '{label_mode}'")
    label_epochs = epochs if label_mode == 'dynamic' else 1
    if label_epochs < 1:
        raise ContractError(f"dynamic label accounting needs epochs >= 1, got {epochs}")
    element = original.precision_bits // 8
    original_bytes = len(original) * original.dim * element

    if isinstance(data, BaselineSet):
        n, d, C = len(data), data.dim, data.C
        images, compensators, labelled = n * d, 0, n
    else:
        if data.is_empty:
            return BudgetReport(0, 0, 0, 0, original_bytes, label_mode, label_epochs)
        d, C = data.dim, data.C
        images = data.K * C * d
        compensators = data.K * data.M * d
        labelled = data.integrated_size

    return BudgetReport(
        image_bytes=images * element,
        compensator_bytes=compensators * element,
        label_bytes=labelled * C * element * label_epochs,
        manifest_bytes=bundle_manifest_bytes(data),
        original_bytes=original_bytes,
        label_mode=label_mode,
        label_epochs=label_epochs,
    )


def feature_duplication(model: TeacherModel, groups: Dict[int, np.ndarray]) -> Dict:
    """
    Mean over classes of the mean pairwise cosine similarity of penultimate
    features within each class. Zero-norm features are excluded and counted.
    """
    per_class = {}
    excluded = 0
    for c, instances in sorted(groups.items()):
        if len(instances) < 2:
            raise ContractError(f"class {c} needs at least 2 instances for duplication, got {len(instances)}")
        features = penultimate_features(model, np.asarray(instances, dtype=np.float32)).astype(np.float64)
        norms = np.linalg.norm(features, axis=1)
        keep = norms > 0
        excluded += int((~keep).sum())
        if keep.sum() < 2:
            logger.warning("class %d has fewer than 2 non-zero feature vectors; skipped", c)
            continue
        unit = features[keep] / norms[keep, None]
        similarity = unit @ unit.T
        upper = similarity[np.triu_indices(len(unit), k=1)]
        per_class[c] = float(np.clip(upper.mean(), -1.0, 1.0))
    if excluded:
        logger.warning("%d zero-norm feature vectors excluded from duplication", excluded)
    mean = float(np.mean(list(per_class.values()))) if per_class else float('nan')
    return {'per_class': per_class, 'mean': mean, 'excluded': excluded}


def grid_coordinates(extent: float, resolution: int) -> np.ndarray:
    if resolution < 1:
        raise ContractError(f"resolution must be >= 1, got {resolution}")
    if resolution == 1:
        return np.zeros(1)
    return np.linspace(-extent, extent, resolution)


def loss_landscape_grid(model: TeacherModel, anchor: np.ndarray, label, dir_u: np.ndarray, dir_v: np.ndarray,
                        extent: float = 1.0, resolution: int = 21) -> np.ndarray:
    """CE loss at anchor + a*u + b*v on a resolution x resolution grid, rows indexed by a."""
    u = np.asarray(dir_u, dtype=np.float64)
    v = np.asarray(dir_v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0 or abs(u @ v) / (nu * nv) > 1 - 1e-9:
        raise ContractError("landscape directions must be non-zero and linearly independent")
    u, v = u / nu, v / nv

    anchor = np.asarray(anchor, dtype=np.float64).reshape(-1)
    if np.isscalar(label) or np.ndim(label) == 0:
        target = np.zeros(model.spec.class_count, np.float32)
        target[int(label)] = 1.0
    else:
        target = np.asarray(label, dtype=np.float32)

    coords = grid_coordinates(extent, resolution)
    points = np.array([anchor + a * u + b * v for a in coords for b in coords], dtype=np.float32)
    logits = forward_logits(model, points, mode='eval')
    losses = cross_entropy(logits, np.tile(target, (len(points), 1)), reduction='none')
    return losses.data.astype(np.float64).reshape(resolution, resolution)


def sample_pairs(integrated: IntegratedSet, n: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """n random pairs of distinct instances from the integrated set."""
    if len(integrated) < 2:
        raise ContractError("need at least 2 instances to sample pairs")
    rng = np.random.default_rng(seed)
    first = rng.integers(0, len(integrated), size=n)
    offset = rng.integers(1, len(integrated), size=n)
    second = (first + offset) % len(integrated)
    return integrated.instances[first], integrated.instances[second]


def label_linearity_gap(ensemble: Sequence[TeacherModel], pairs: Tuple[np.ndarray, np.ndarray],
                        lambdas: Sequence[float] = (0.25, 0.5, 0.75)) -> Dict:
    """
    L1 distance between the ensemble label of a mixed pair and the mix of the
    pair's labels, summarised per lambda. Measured, never thresholded.
    """
    a, b = (np.asarray(p, dtype=np.float32) for p in pairs)
    labels_a = relabel_batch(ensemble, a)
    labels_b = relabel_batch(ensemble, b)
    per_lambda = {}
    gaps_all = []
    for lam in lambdas:
        lam32 = np.float32(lam)
        rest = np.float32(1.0) - lam32
        mixed_label = relabel_batch(ensemble, lam32 * a + rest * b)
        gaps = np.abs(mixed_label - (lam32 * labels_a + rest * labels_b)).sum(axis=1).astype(np.float64)
        per_lambda[float(lam)] = {
            'mean': float(gaps.mean()) if len(gaps) else 0.0,
            'max': float(gaps.max()) if len(gaps) else 0.0,
        }
        gaps_all.append(gaps)
    pooled = np.concatenate(gaps_all) if gaps_all else np.zeros(0)
    return {
        'per_lambda': per_lambda,
        'mean': float(pooled.mean()) if len(pooled) else 0.0,
        'max': float(pooled.max()) if len(pooled) else 0.0,
        'pairs': int(len(a)),
    }


def export_penultimate_features(model: TeacherModel, dataset: LabeledDataset, path: Optional[str] = None) -> np.ndarray:
    """N x feature-width matrix of eval-mode penultimate activations; written as CSV when path is given."""
    width = model.spec.feature_dim
    if len(dataset) == 0:
        features = np.zeros((0, width), np.float32)
    else:
        features = penultimate_features(model, dataset.instances)
    if path is not None:
        write_features(path, features, dataset.labels, width)
    return features
