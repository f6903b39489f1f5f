"""
On-disk formats: a JSON manifest plus little-endian binaries, per artifact.

dataset/  manifest.json  instances.bin (<f4)  labels.bin (<i4)  split.bin (u1, optional)
model/    manifest.json  parameters.bin (<f4, manifest entry order)
bundle/   manifest.json  anchors.bin  compensators.bin  labels.bin (<f4)

Manifests are written in one canonical encoding, so save -> load -> save
reproduces every file byte for byte.
"""

import json
import logging
import os
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

import config
from models.bundle import UFC, BaselineSet, DistilledDataset, SubsetRecord
from models.dataset import AnchorSet, LabeledDataset
from models.network import BatchNormState, ModelSpec, TeacherModel
from utils.diffcore import Tensor
from utils.errors import ArtifactError, ContractError, CorruptBundleError

logger = logging.getLogger(__name__)

MANIFEST = 'manifest.json'
FLOAT = '<f4'
INT = '<i4'
BUNDLE_FILES = ('anchors.bin', 'compensators.bin', 'labels.bin')


def encode_manifest(data: Dict) -> bytes:
    return (json.dumps(data, indent=2, sort_keys=True) + '\n').encode('utf-8')


def read_manifest(directory: str) -> Dict:
    path = os.path.join(directory, MANIFEST)
    if not os.path.isfile(path):
        raise ArtifactError("manifest not found", path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ArtifactError(f"manifest is not valid JSON ({e})", path)


def _write(directory: str, name: str, payload: bytes) -> None:
    with open(os.path.join(directory, name), 'wb') as f:
        f.write(payload)


def _read_array(directory: str, name: str, dtype: str, shape: Tuple[int, ...]) -> np.ndarray:
    path = os.path.join(directory, name)
    if not os.path.isfile(path):
        raise ArtifactError("binary file not found", path)
    with open(path, 'rb') as f:
        raw = f.read()
    expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
    if len(raw) != expected:
        raise CorruptBundleError(f"holds {len(raw)} bytes, manifest implies {expected}", path)
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def _floats(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype=FLOAT).tobytes()


def _check_kind(manifest: Dict, kind: Union[str, Tuple[str, ...]], directory: str) -> None:
    kinds = (kind,) if isinstance(kind, str) else kind
    if manifest.get('kind') not in kinds:
        raise ArtifactError(f"expected a {' or '.join(kinds)} manifest, found '{manifest.get('kind')}'",
                            os.path.join(directory, MANIFEST))


# --- datasets ----------------------------------------------------------------

def save_dataset(dataset: LabeledDataset, directory: str, stamp: Optional[Dict] = None) -> None:
    os.makedirs(directory, exist_ok=True)
    manifest = {
        'kind': 'dataset',
        'size': len(dataset),
        'dim': dataset.dim,
        'class_count': dataset.class_count,
        'precision_bits': dataset.precision_bits,
        'has_split': dataset.test_mask is not None,
        'metadata': {k: v for k, v in dataset.metadata.items() if k not in ('parent_indices', 'stamp')},
        'stamp': stamp if stamp is not None else dataset.metadata.get('stamp', {}),
    }
    _write(directory, 'instances.bin', _floats(dataset.instances))
    _write(directory, 'labels.bin', np.ascontiguousarray(dataset.labels, dtype=INT).tobytes())
    if dataset.test_mask is not None:
        _write(directory, 'split.bin', dataset.test_mask.astype(np.uint8).tobytes())
    _write(directory, MANIFEST, encode_manifest(manifest))


def load_dataset(directory: str) -> LabeledDataset:
    manifest = read_manifest(directory)
    _check_kind(manifest, 'dataset', directory)
    n, d = manifest['size'], manifest['dim']
    instances = _read_array(directory, 'instances.bin', FLOAT, (n, d)).astype(np.float32)
    labels = _read_array(directory, 'labels.bin', INT, (n,)).astype(np.int32)
    test_mask = _read_array(directory, 'split.bin', 'u1', (n,)).astype(bool) if manifest['has_split'] else None
    metadata = dict(manifest['metadata'], stamp=manifest.get('stamp', {}))
    dataset = LabeledDataset(instances, labels, manifest['class_count'], manifest['precision_bits'], test_mask, metadata)
    try:
        dataset.validate_coverage()
    except ContractError as e:
        raise ArtifactError(str(e), os.path.join(directory, MANIFEST))
    return dataset


# --- models ------------------------------------------------------------------

def _model_entries(model: TeacherModel) -> List[Tuple[str, np.ndarray]]:
    entries = [(name, tensor.data) for name, tensor in model.trainable().items()]
    for index, state in enumerate(model.bn_states):
        entries.append((f'bn{index}.running_mean', state.running_mean))
        entries.append((f'bn{index}.running_var', state.running_var))
    return entries


def _scalar_metadata(metadata: Dict) -> Dict:
    return {k: v for k, v in metadata.items() if isinstance(v, (str, int, float, bool)) or v is None}


def save_model(model: TeacherModel, directory: str, stamp: Optional[Dict] = None) -> None:
    os.makedirs(directory, exist_ok=True)
    entries = _model_entries(model)
    manifest = {
        'kind': 'model',
        'spec': model.spec.to_dict(),
        'input_mean': model.input_mean,
        'input_std': model.input_std,
        'mode': model.mode,
        'bn': [{'momentum': s.momentum, 'eps': s.eps} for s in model.bn_states],
        'entries': [{'name': name, 'shape': list(array.shape)} for name, array in entries],
        'metadata': _scalar_metadata(model.metadata),
        'stamp': stamp if stamp is not None else model.metadata.get('stamp', {}),
    }
    _write(directory, 'parameters.bin', b''.join(_floats(array) for _, array in entries))
    _write(directory, MANIFEST, encode_manifest(manifest))


def load_model(directory: str) -> TeacherModel:
    manifest = read_manifest(directory)
    _check_kind(manifest, 'model', directory)
    spec_data = manifest['spec']
    spec = ModelSpec(spec_data['architecture_id'], spec_data['input_dim'], spec_data['class_count'])
    shapes = [tuple(e['shape']) for e in manifest['entries']]
    flat = _read_array(directory, 'parameters.bin', FLOAT, (sum(int(np.prod(s)) for s in shapes),))

    arrays = {}
    offset = 0
    for entry, shape in zip(manifest['entries'], shapes):
        count = int(np.prod(shape))
        arrays[entry['name']] = flat[offset:offset + count].reshape(shape).astype(np.float32)
        offset += count

    try:
        parameters = {name: Tensor(arrays[name]) for name in arrays if not name.startswith('bn')}
        bn_states = [
            BatchNormState(
                gamma=Tensor(arrays[f'bn{i}.gamma']),
                beta=Tensor(arrays[f'bn{i}.beta']),
                running_mean=arrays[f'bn{i}.running_mean'],
                running_var=arrays[f'bn{i}.running_var'],
                momentum=bn['momentum'],
                eps=bn['eps'],
            )
            for i, bn in enumerate(manifest['bn'])
        ]
    except KeyError as e:
        raise ArtifactError(f"model manifest lacks entry {e}", os.path.join(directory, MANIFEST))
    metadata = dict(manifest['metadata'], stamp=manifest.get('stamp', {}))
    return TeacherModel(spec, parameters, bn_states, manifest['input_mean'], manifest['input_std'],
                        manifest['mode'], metadata)


# --- distilled bundles and baseline sets -------------------------------------

def bundle_manifest(data: Union[DistilledDataset, BaselineSet]) -> Dict:
    if isinstance(data, BaselineSet):
        return {
            'kind': 'baseline',
            'baseline_kind': data.kind,
            'ipc': data.ipc,
            'C': data.C,
            'dim': data.dim,
            'precision_bits': config.PRECISION_BITS,
            'provenance': data.provenance,
        }
    return {
        'kind': 'bundle',
        'K': data.K,
        'M': data.M,
        'C': data.C,
        'ipc': data.ipc,
        'dim': data.dim,
        'precision_bits': config.PRECISION_BITS,
        'compensators': [
            [{'optimized_against': u.optimized_against, 'final_objective': u.final_objective,
              'initial_objective': u.initial_objective} for u in subset.compensators]
            for subset in data.subsets
        ],
        'provenance': data.provenance,
    }


def bundle_manifest_bytes(data: Union[DistilledDataset, BaselineSet]) -> int:
    return len(encode_manifest(bundle_manifest(data)))


def save_bundle(data: Union[DistilledDataset, BaselineSet], directory: str) -> None:
    """Write a distilled bundle or a baseline set; only the four bundle files go in directory."""
    os.makedirs(directory, exist_ok=True)
    if isinstance(data, BaselineSet):
        if not np.array_equal(data.class_ids, np.repeat(np.arange(data.C), data.ipc)):
            raise CorruptBundleError("baseline instances must be stored class-major", directory)
        payloads = (_floats(data.instances), b'', _floats(data.labels))
    else:
        data.validate()
        for k, subset in enumerate(data.subsets):
            if not np.array_equal(subset.anchors.labels, np.arange(subset.C)):
                raise CorruptBundleError(f"subset {k} anchors must be stored in class order", directory)
        payloads = (
            b''.join(_floats(s.anchors.instances) for s in data.subsets),
            b''.join(_floats(s.compensator_matrix()) for s in data.subsets),
            b''.join(_floats(s.static_labels) for s in data.subsets),
        )
    for name, payload in zip(BUNDLE_FILES, payloads):
        _write(directory, name, payload)
    _write(directory, MANIFEST, encode_manifest(bundle_manifest(data)))


def load_bundle(directory: str) -> Union[DistilledDataset, BaselineSet]:
    manifest = read_manifest(directory)
    _check_kind(manifest, ('bundle', 'baseline'), directory)
    try:
        if manifest['kind'] == 'baseline':
            n, C, d = manifest['ipc'] * manifest['C'], manifest['C'], manifest['dim']
            return BaselineSet(
                _read_array(directory, 'anchors.bin', FLOAT, (n, d)).astype(np.float32),
                _read_array(directory, 'labels.bin', FLOAT, (n, C)).astype(np.float32),
                np.repeat(np.arange(C), manifest['ipc']),
                manifest['baseline_kind'], manifest['ipc'], C, manifest['provenance'],
            )

        K, M, C, d = manifest['K'], manifest['M'], manifest['C'], manifest['dim']
        anchors = _read_array(directory, 'anchors.bin', FLOAT, (K, C, d)).astype(np.float32)
        compensators = _read_array(directory, 'compensators.bin', FLOAT, (K, M, d)).astype(np.float32)
        labels = _read_array(directory, 'labels.bin', FLOAT, (K, C, M, C)).astype(np.float32)
        if len(manifest['compensators']) != K or any(len(row) != M for row in manifest['compensators']):
            raise CorruptBundleError("compensator table does not match K x M", os.path.join(directory, MANIFEST))
        subsets = []
        for k in range(K):
            anchor_set = AnchorSet(anchors[k], np.arange(C), np.full(C, -1))
            ufcs = [UFC(compensators[k, j], meta['optimized_against'], meta['final_objective'], meta['initial_objective'])
                    for j, meta in enumerate(manifest['compensators'][k])]
            subsets.append(SubsetRecord(anchor_set, ufcs, labels[k]))
        bundle = DistilledDataset(subsets, M, C, manifest['ipc'], manifest['provenance'])
    except KeyError as e:
        raise ArtifactError(f"manifest lacks field {e}", os.path.join(directory, MANIFEST))
    try:
        return bundle.validate()
    except CorruptBundleError as e:
        raise CorruptBundleError(str(e), directory)


def directory_bytes(directory: str) -> int:
    return sum(os.path.getsize(os.path.join(directory, name)) for name in os.listdir(directory)
               if os.path.isfile(os.path.join(directory, name)))
