"""CSV writers (and a reader for traces) with fixed, documented headers."""

import csv
import io
from typing import Dict, List, Sequence

import numpy as np

TRACE_HEADER = ['epoch', 'train_loss', 'test_top1']
TEACHER_TRACE_HEADER = ['epoch', 'train_loss', 'train_top1', 'test_top1']
ACCURACY_HEADER = ['method', 'ipc', 'cr', 'seed', 'top1']
UFC_TRACE_HEADER = ['k', 'j', 'iteration', 'objective']


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def rows_to_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buffer.getvalue()


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(rows_to_csv(header, rows))


def write_trace(path: str, trace: List[Dict], header: Sequence[str] = TRACE_HEADER) -> None:
    """Per-epoch trace rows: epoch,train_loss,test_top1 (teachers add train_top1)."""
    write_csv(path, header, [[row[h] for h in header] for row in trace])


def read_trace(path: str) -> List[Dict]:
    with open(path, 'r', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        return [{k: (int(v) if k == 'epoch' else float(v)) for k, v in row.items()} for row in reader]


def write_grid(path: str, grid: np.ndarray, a_values: Sequence[float], b_values: Sequence[float]) -> None:
    """Row-major loss grid; the header row holds the b coordinates, the first column a."""
    header = ['a\\b'] + [_cell(b) for b in b_values]
    write_csv(path, header, [[a] + list(row) for a, row in zip(a_values, np.asarray(grid))])


def write_features(path: str, features: np.ndarray, labels: np.ndarray, width: int) -> None:
    """Columns f0..f{width-1},label."""
    header = [f'f{i}' for i in range(width)] + ['label']
    rows = [list(f) + [int(y)] for f, y in zip(np.asarray(features), np.asarray(labels))]
    write_csv(path, header, rows)


def write_accuracy_table(path: str, rows: List[Dict]) -> None:
    """Accuracy versus compression ratio: method,ipc,cr,seed,top1."""
    write_csv(path, ACCURACY_HEADER, [[row[h] for h in ACCURACY_HEADER] for row in rows])
