"""
End-to-end comparison of distillation methods at equalised compression ratio.

INFER-static fixes the budget; each baseline takes the largest ipc whose own
compression ratio does not exceed it. INFER-dyn is reported at its own,
larger ratio.
"""

import logging
import math
from dataclasses import asdict, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from models.bundle import BaselineSet, DistilledDataset
from models.dataset import LabeledDataset
from models.network import ModelSpec, TeacherModel
from models.run_config import RunConfig
from utils.baselines import class_specific_synthesis, random_coreset
from utils.distill import distill
from utils.errors import ContractError
from utils.metrics import compression_ratio, feature_duplication
from utils.student import TeacherStore, evaluate, integrate, train_student

logger = logging.getLogger(__name__)

METHODS = ('random', 'class_specific', 'infer_static', 'infer_dyn', 'infer_no_ufc')


def dynamic_label_epochs(config: RunConfig, M: int) -> int:
    if config.metrics.dynamic_epochs > 0:
        return config.metrics.dynamic_epochs
    return max(1, math.ceil(config.student.recipe.epochs / M))


def baseline_cr(original: LabeledDataset, kind: str, ipc: int, provenance: Dict) -> float:
    """Compression ratio a baseline set of this kind and ipc would have."""
    C, d = original.class_count, original.dim
    placeholder = BaselineSet(np.zeros((C * ipc, d), np.float32), np.full((C * ipc, C), 1.0 / C, np.float32),
                              np.repeat(np.arange(C), ipc), kind, ipc, C, provenance)
    return compression_ratio(placeholder, original).cr


def equal_cr_ipc(original: LabeledDataset, kind: str, target_cr: float, provenance: Dict, max_ipc: int) -> int:
    """Largest ipc in [1, max_ipc] whose baseline ratio stays within target_cr."""
    best = 1
    for ipc in range(1, max_ipc + 1):
        if baseline_cr(original, kind, ipc, provenance) > target_cr:
            break
        best = ipc
    if baseline_cr(original, kind, best, provenance) > target_cr:
        logger.warning("%s baseline exceeds the target ratio %.5f even at ipc=1", kind, target_cr)
    return best


def _coreset_provenance(config: RunConfig, seed: int) -> Dict:
    return {'seed': seed, 'labels': config.distill.coreset_labels}


def _class_specific_provenance(config: RunConfig, seed: int, teacher: TeacherModel) -> Dict:
    return {'seed': seed, 'alpha': config.distill.alpha, 'init': config.distill.baseline_init, 'labels': 'ensemble',
            'teacher': teacher.spec.architecture_id, 'synthesis': asdict(config.distill.synthesis)}


def _student_top1(source, arch: str, mode: str, dataset: LabeledDataset, teachers: Optional[TeacherStore],
                   config: RunConfig, seed: int) -> float:
    spec = ModelSpec(arch, dataset.dim, dataset.class_count)
    model, _ = train_student(source, spec, config.student.recipe, mode=mode, teachers=teachers,
                             beta=config.student.mixup_beta, seed=seed, use_mixup=config.student.use_mixup)
    return evaluate(model, dataset.test())


def run_seed(dataset: LabeledDataset, ensemble: Sequence[TeacherModel], config: RunConfig, seed: int, ipc: int,
             methods: Sequence[str] = METHODS, architectures: Optional[Sequence[str]] = None,
             threads: Optional[int] = None, tag: str = '') -> List[Dict]:
    """One seed of every requested method; rows of method, ipc, cr, seed, top1."""
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ContractError(f"Unknown compare method(s): {sorted(unknown)}")
    train = dataset.train()
    architectures = list(architectures or [config.student.architecture_id])
    teachers = TeacherStore.from_models(ensemble)
    synthesis = config.distill.synthesis
    rows = []

    def record(method: str, method_ipc: int, cr: float, source, mode: str, store: Optional[TeacherStore]):
        for arch in architectures:
            name = method + tag + (f'@{arch}' if len(architectures) > 1 else '')
            top1 = _student_top1(source, arch, mode, dataset, store, config, seed)
            logger.info("seed %d %-24s ipc=%d cr=%.5f top1=%.3f", seed, name, method_ipc, cr, top1)
            rows.append({'method': name, 'ipc': method_ipc, 'cr': cr, 'seed': seed, 'top1': top1})

    bundle: Optional[DistilledDataset] = None
    if {'infer_static', 'infer_dyn', 'random', 'class_specific'} & set(methods):
        bundle = distill(train, ensemble, ipc, config.distill.alpha, synthesis, seed, threads)
    static_cr = compression_ratio(bundle, dataset).cr if bundle is not None else None

    if 'infer_static' in methods:
        record('infer_static', ipc, static_cr, bundle, 'static', None)
    if 'infer_dyn' in methods:
        dyn = compression_ratio(bundle, dataset, 'dynamic', dynamic_label_epochs(config, len(ensemble)))
        record('infer_dyn', ipc, dyn.cr, bundle, 'dynamic', teachers)
    if 'infer_no_ufc' in methods:
        plain = distill(train, ensemble, ipc, config.distill.alpha, replace(synthesis, iterations=0), seed, threads)
        record('infer_no_ufc', ipc, compression_ratio(plain, dataset).cr, plain, 'static', None)

    max_ipc = min(train.class_counts())
    if 'random' in methods:
        provenance = _coreset_provenance(config, seed)
        r_ipc = equal_cr_ipc(dataset, 'coreset', static_cr, provenance, max_ipc)
        coreset = random_coreset(train, r_ipc, seed, ensemble, config.distill.coreset_labels)
        record('random', r_ipc, compression_ratio(coreset, dataset).cr, coreset, 'static', None)
    if 'class_specific' in methods:
        provenance = _class_specific_provenance(config, seed, ensemble[0])
        c_ipc = equal_cr_ipc(dataset, 'class_specific', static_cr, provenance, max_ipc)
        synthesized = class_specific_synthesis(ensemble[0], train, c_ipc, config.distill.alpha, synthesis, seed,
                                               ensemble, config.distill.baseline_init, threads)
        record('class_specific', c_ipc, compression_ratio(synthesized, dataset).cr, synthesized, 'static', None)
    return rows


def summarize(rows: List[Dict]) -> List[Dict]:
    """Per method: mean and std of top-1 over seeds, mean ratio and ipc."""
    summary = []
    for method in dict.fromkeys(row['method'] for row in rows):
        chosen = [row for row in rows if row['method'] == method]
        top1 = np.array([row['top1'] for row in chosen])
        summary.append({
            'method': method,
            'ipc': chosen[0]['ipc'],
            'cr': float(np.mean([row['cr'] for row in chosen])),
            'top1_mean': float(top1.mean()),
            'top1_std': float(top1.std()),
            'seeds': len(chosen),
        })
    return summary


def ensemble_gains(summary: List[Dict]) -> List[Dict]:
    """Add gain_over_m1: top-1 mean minus that of the same method with a single teacher."""
    single = {entry['method'].rsplit('_m', 1)[0]: entry['top1_mean']
              for entry in summary if entry['method'].endswith('_m1')}
    for entry in summary:
        base = entry['method'].rsplit('_m', 1)[0]
        if base in single:
            entry['gain_over_m1'] = entry['top1_mean'] - single[base]
    return summary


def infer_class_groups(bundle: DistilledDataset) -> Dict[int, np.ndarray]:
    """Integrated instances grouped by the class of their anchor."""
    integrated = integrate(bundle)
    return {c: integrated.instances[integrated.provenance[:, 1] == c] for c in range(bundle.C)}


def duplication_sweep(dataset: LabeledDataset, ensemble: Sequence[TeacherModel], probe: TeacherModel,
                      config: RunConfig, ipcs: Sequence[int], seed: int, threads: Optional[int] = None) -> Dict:
    """Within-class feature duplication of the class-specific baseline and INFER across ipc values."""
    train = dataset.train()
    rows = []
    for ipc in ipcs:
        synthesized = class_specific_synthesis(ensemble[0], train, ipc, config.distill.alpha, config.distill.synthesis,
                                               seed, None, config.distill.baseline_init, threads)
        bundle = distill(train, ensemble, ipc, config.distill.alpha, config.distill.synthesis, seed, threads)
        baseline = feature_duplication(probe, synthesized.by_class())['mean']
        infer = feature_duplication(probe, infer_class_groups(bundle))['mean']
        rows.append({'ipc': ipc, 'class_specific': baseline, 'infer': infer, 'gap': baseline - infer})
        logger.info("duplication ipc=%d class_specific=%.4f infer=%.4f", ipc, baseline, infer)
    gaps = [row['gap'] for row in rows]
    return {
        'rows': rows,
        'gap_non_decreasing': all(b >= a for a, b in zip(gaps, gaps[1:])),
    }


def compare(dataset: LabeledDataset, ensemble: Sequence[TeacherModel], config: RunConfig,
            threads: Optional[int] = None) -> Dict:
    """Every configured comparison: the main table plus the ensemble-size, architecture and duplication studies."""
    params = config.compare
    rows: List[Dict] = []
    for ipc in params.ipc_values:
        for seed in params.seeds:
            rows.extend(run_seed(dataset, ensemble, config, seed, ipc, params.methods,
                                 params.student_architectures, threads))

    ensemble_rows: List[Dict] = []
    for m in params.ensemble_sizes:
        if not 1 <= m <= len(ensemble):
            raise ContractError(f"ensemble size {m} outside 1..{len(ensemble)}")
        for seed in params.seeds:
            ensemble_rows.extend(run_seed(dataset, ensemble[:m], config, seed, params.ipc_values[0],
                                          ('infer_static', 'infer_dyn'), None, threads, tag=f'_m{m}'))

    result = {'rows': rows, 'summary': summarize(rows)}
    if ensemble_rows:
        result['ensemble_rows'] = ensemble_rows
        result['ensemble_summary'] = ensemble_gains(summarize(ensemble_rows))
    if params.duplication_ipcs:
        probe = next((m for m in ensemble if m.spec.architecture_id == config.metrics.probe_architecture), ensemble[0])
        result['duplication'] = duplication_sweep(dataset, ensemble, probe, config, params.duplication_ipcs,
                                                  params.seeds[0], threads)
    return result
