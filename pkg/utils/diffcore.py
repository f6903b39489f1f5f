"""
Tensor and reverse-mode automatic differentiation core.

Every primitive computes its value eagerly with numpy and, when one of its
inputs requires a gradient and a Tape is active on the current thread,
appends an entry to that tape. backward() replays the tape in reverse.
Tapes are never shared between threads.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import ContractError, DimensionError, NumericError


PRIMITIVES = (
    'matmul', 'add', 'sub', 'mul', 'div', 'relu', 'mean', 'sum', 'variance',
    'softmax', 'log_softmax', 'log', 'exp', 'square', 'sqrt', 'l2norm',
    'reshape', 'slice', 'concat', 'broadcast_add', 'scale',
)

_local = threading.local()


def working_dtype():
    """Float type new tensors are created with on this thread."""
    return getattr(_local, 'dtype', np.float32)


@contextmanager
def precision(dtype):
    """Temporarily switch the working float type of the current thread."""
    previous = working_dtype()
    _local.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _local.dtype = previous


def _active_tapes() -> List['Tape']:
    if not hasattr(_local, 'tapes'):
        _local.tapes = []
    return _local.tapes


class Tensor:
    """n-dimensional float array that can take part in differentiation."""

    __slots__ = ('data', 'requires_grad', 'name')
    # numpy operands hand arithmetic back to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=working_dtype())
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool = False) -> 'Tensor':
        tensor = cls.__new__(cls)
        tensor.data = array
        tensor.requires_grad = requires_grad
        tensor.name = None
        return tensor

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        label = f" {self.name}" if self.name else ''
        return f'<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>'

    def __add__(self, other):
        return forward_primitive('add', [self, other])

    def __radd__(self, other):
        return forward_primitive('add', [other, self])

    def __sub__(self, other):
        return forward_primitive('sub', [self, other])

    def __rsub__(self, other):
        return forward_primitive('sub', [other, self])

    def __mul__(self, other):
        return forward_primitive('mul', [self, other])

    def __rmul__(self, other):
        return forward_primitive('mul', [other, self])

    def __truediv__(self, other):
        return forward_primitive('div', [self, other])

    def __rtruediv__(self, other):
        return forward_primitive('div', [other, self])

    def __matmul__(self, other):
        return forward_primitive('matmul', [self, other])

    def __neg__(self):
        return forward_primitive('scale', [self], factor=-1.0)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class TapeEntry:
    op_id: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    attrs: Dict = field(default_factory=dict)
    saved: Dict = field(default_factory=dict)


class Tape:
    """Ordered record of primitive applications, used as a context manager."""

    def __init__(self):
        self.entries: List[TapeEntry] = []

    def __enter__(self) -> 'Tape':
        _active_tapes().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _active_tapes().pop()
        return False

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, entry: TapeEntry) -> None:
        self.entries.append(entry)

    def leaves(self) -> List[Tensor]:
        """Gradient-requiring inputs not produced by any entry, in first-use order."""
        produced = {id(entry.output) for entry in self.entries}
        seen = set()
        leaves = []
        for entry in self.entries:
            for tensor in entry.inputs:
                key = id(tensor)
                if tensor.requires_grad and key not in produced and key not in seen:
                    seen.add(key)
                    leaves.append(tensor)
        return leaves


# --- forward rules: (arrays, attrs) -> (value, saved) -------------------------

def _check_broadcast(a: np.ndarray, b: np.ndarray, op_id: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op_id}: cannot broadcast shapes {a.shape} and {b.shape}")


def _fwd_matmul(arrays, attrs):
    a, b = arrays
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return a @ b, {}


def _fwd_elementwise(fn, op_id):
    def forward(arrays, attrs):
        a, b = arrays
        _check_broadcast(a, b, op_id)
        return fn(a, b), {}
    return forward


def _fwd_broadcast_add(arrays, attrs):
    a, b = arrays
    if b.ndim != 1 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"broadcast_add: cannot add row vector {b.shape} to {a.shape}")
    return a + b, {}


def _fwd_mean(arrays, attrs):
    return arrays[0].mean(axis=attrs.get('axis'), keepdims=attrs.get('keepdims', False)), {}


def _fwd_sum(arrays, attrs):
    return arrays[0].sum(axis=attrs.get('axis'), keepdims=attrs.get('keepdims', False)), {}


def _fwd_variance(arrays, attrs):
    a = arrays[0]
    axis = attrs.get('axis')
    centered = a - a.mean(axis=axis, keepdims=True)
    return (centered * centered).mean(axis=axis, keepdims=attrs.get('keepdims', False)), {'centered': centered}


def _softmax(a, axis):
    shifted = a - a.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def _fwd_softmax(arrays, attrs):
    value = _softmax(arrays[0], attrs.get('axis', -1))
    return value, {'probs': value}


def _fwd_log_softmax(arrays, attrs):
    a = arrays[0]
    axis = attrs.get('axis', -1)
    shifted = a - a.max(axis=axis, keepdims=True)
    value = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    return value, {'probs': np.exp(value)}


def _fwd_reshape(arrays, attrs):
    a = arrays[0]
    shape = tuple(attrs['shape'])
    if int(np.prod(shape)) != a.size:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}")
    return a.reshape(shape), {}


def _slice_index(ndim, axis, start, stop):
    index = [slice(None)] * ndim
    index[axis] = slice(start, stop)
    return tuple(index)


def _fwd_slice(arrays, attrs):
    a = arrays[0]
    axis = attrs.get('axis', 0)
    start, stop = attrs['start'], attrs['stop']
    if not 0 <= start < stop <= a.shape[axis]:
        raise DimensionError(f"slice: [{start}:{stop}] out of range for axis {axis} of {a.shape}")
    return a[_slice_index(a.ndim, axis, start, stop)], {}


def _fwd_concat(arrays, attrs):
    try:
        return np.concatenate(arrays, axis=attrs.get('axis', 0)), {}
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}")


def _fwd_l2norm(arrays, attrs):
    a = arrays[0]
    return np.sqrt((a * a).sum()), {}


_FORWARD: Dict[str, Callable] = {
    'matmul': _fwd_matmul,
    'add': _fwd_elementwise(np.add, 'add'),
    'sub': _fwd_elementwise(np.subtract, 'sub'),
    'mul': _fwd_elementwise(np.multiply, 'mul'),
    'div': _fwd_elementwise(np.divide, 'div'),
    'broadcast_add': _fwd_broadcast_add,
    'relu': lambda arrays, attrs: (np.maximum(arrays[0], 0), {}),
    'mean': _fwd_mean,
    'sum': _fwd_sum,
    'variance': _fwd_variance,
    'softmax': _fwd_softmax,
    'log_softmax': _fwd_log_softmax,
    'log': lambda arrays, attrs: (np.log(arrays[0]), {}),
    'exp': lambda arrays, attrs: (np.exp(arrays[0]), {}),
    'square': lambda arrays, attrs: (arrays[0] * arrays[0], {}),
    'sqrt': lambda arrays, attrs: (np.sqrt(arrays[0]), {}),
    'l2norm': _fwd_l2norm,
    'reshape': _fwd_reshape,
    'slice': _fwd_slice,
    'concat': _fwd_concat,
    'scale': lambda arrays, attrs: (arrays[0] * attrs['factor'], {}),
}


# --- backward rules: (entry, upstream grad) -> grads per input ----------------

def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _expand_reduced(grad, entry):
    """Broadcast the grad of a reduction back to the input shape."""
    source = entry.inputs[0].data
    axis = entry.attrs.get('axis')
    if axis is not None and not entry.attrs.get('keepdims', False):
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, source.shape), source


def _reduced_count(entry) -> int:
    source = entry.inputs[0].data
    axis = entry.attrs.get('axis')
    return source.size if axis is None else source.shape[axis]


def _bwd_matmul(entry, g):
    a, b = (t.data for t in entry.inputs)
    return [g @ b.T, a.T @ g]


def _bwd_add(entry, g):
    a, b = (t.data for t in entry.inputs)
    return [_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)]


def _bwd_sub(entry, g):
    a, b = (t.data for t in entry.inputs)
    return [_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)]


def _bwd_mul(entry, g):
    a, b = (t.data for t in entry.inputs)
    return [_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)]


def _bwd_div(entry, g):
    a, b = (t.data for t in entry.inputs)
    return [_unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)]


def _bwd_broadcast_add(entry, g):
    return [g, g.reshape(-1, g.shape[-1]).sum(axis=0)]


def _bwd_relu(entry, g):
    return [g * (entry.inputs[0].data > 0)]


def _bwd_mean(entry, g):
    expanded, _ = _expand_reduced(g, entry)
    return [expanded / _reduced_count(entry)]


def _bwd_sum(entry, g):
    expanded, _ = _expand_reduced(g, entry)
    return [np.array(expanded)]


def _bwd_variance(entry, g):
    expanded, _ = _expand_reduced(g, entry)
    return [expanded * 2.0 * entry.saved['centered'] / _reduced_count(entry)]


def _bwd_softmax(entry, g):
    probs = entry.saved['probs']
    axis = entry.attrs.get('axis', -1)
    return [probs * (g - (g * probs).sum(axis=axis, keepdims=True))]


def _bwd_log_softmax(entry, g):
    probs = entry.saved['probs']
    axis = entry.attrs.get('axis', -1)
    return [g - probs * g.sum(axis=axis, keepdims=True)]


def _bwd_sqrt(entry, g):
    value = entry.output.data
    safe = np.where(value > 0, value, 1.0)
    return [np.where(value > 0, g / (2.0 * safe), 0.0)]


def _bwd_l2norm(entry, g):
    a = entry.inputs[0].data
    norm = float(entry.output.data)
    if norm == 0.0:
        return [np.zeros_like(a)]
    return [g * a / norm]


def _bwd_slice(entry, g):
    a = entry.inputs[0].data
    grad = np.zeros_like(a)
    grad[_slice_index(a.ndim, entry.attrs.get('axis', 0), entry.attrs['start'], entry.attrs['stop'])] = g
    return [grad]


def _bwd_concat(entry, g):
    axis = entry.attrs.get('axis', 0)
    bounds = np.cumsum([t.data.shape[axis] for t in entry.inputs])[:-1]
    return np.split(g, bounds, axis=axis)


_BACKWARD: Dict[str, Callable] = {
    'matmul': _bwd_matmul,
    'add': _bwd_add,
    'sub': _bwd_sub,
    'mul': _bwd_mul,
    'div': _bwd_div,
    'broadcast_add': _bwd_broadcast_add,
    'relu': _bwd_relu,
    'mean': _bwd_mean,
    'sum': _bwd_sum,
    'variance': _bwd_variance,
    'softmax': _bwd_softmax,
    'log_softmax': _bwd_log_softmax,
    'log': lambda entry, g: [g / entry.inputs[0].data],
    'exp': lambda entry, g: [g * entry.output.data],
    'square': lambda entry, g: [2.0 * entry.inputs[0].data * g],
    'sqrt': _bwd_sqrt,
    'l2norm': _bwd_l2norm,
    'reshape': lambda entry, g: [g.reshape(entry.inputs[0].data.shape)],
    'slice': _bwd_slice,
    'concat': _bwd_concat,
    'scale': lambda entry, g: [g * entry.attrs['factor']],
}


def forward_primitive(op_id: str, inputs: Sequence, **attrs) -> Tensor:
    """Apply one primitive and record it on the active tape when needed."""
    if op_id not in _FORWARD:
        raise ContractError(f"Unknown primitive '{op_id}'")
    tensors = tuple(as_tensor(value) for value in inputs)
    with np.errstate(all='ignore'):
        value, saved = _FORWARD[op_id]([t.data for t in tensors], attrs)
    value = np.asarray(value, dtype=working_dtype())
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{op_id} produced a non-finite value")
    requires_grad = any(t.requires_grad for t in tensors)
    output = Tensor._wrap(value, requires_grad)
    tapes = _active_tapes()
    if requires_grad and tapes:
        tapes[-1].record(TapeEntry(op_id, tensors, output, attrs, saved))
    return output


def backward(tape: Tape, loss: Tensor, seed: Optional[np.ndarray] = None) -> Dict[Tensor, Tensor]:
    """
    Replay the tape in reverse and return d(loss)/d(leaf) for every leaf.

    The tape is not modified, so replaying it again yields the same result.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    upstream = np.ones_like(loss.data) if seed is None else np.asarray(seed, dtype=loss.data.dtype).reshape(loss.shape)
    grads: Dict[int, np.ndarray] = {id(loss): upstream}
    for entry in reversed(tape.entries):
        grad = grads.get(id(entry.output))
        if grad is None:
            continue
        with np.errstate(all='ignore'):
            input_grads = _BACKWARD[entry.op_id](entry, grad)
        for tensor, input_grad in zip(entry.inputs, input_grads):
            if input_grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            grads[key] = grads[key] + input_grad if key in grads else input_grad

    result: Dict[Tensor, Tensor] = {}
    for leaf in tape.leaves():
        grad = grads.get(id(leaf))
        if grad is None:
            grad = np.zeros_like(leaf.data)
        result[leaf] = Tensor._wrap(np.asarray(grad, dtype=leaf.data.dtype).reshape(leaf.shape), False)
    return result


def finite_diff_check(f: Callable[[List[Tensor]], Tensor], params: Sequence, step: float = 1e-3) -> float:
    """
    Compare analytic gradients of f against central differences.

    Returns max over coordinates of |analytic - central| / max(1, |central|).
    Both sides run in float64.
    """
    if step <= 0:
        raise ContractError(f"step must be positive, got {step}")
    worst = 0.0
    with precision(np.float64):
        leaves = [Tensor(np.asarray(p, dtype=np.float64), requires_grad=True) for p in params]
        with Tape() as tape:
            loss = f(leaves)
        grads = backward(tape, loss)
        for leaf in leaves:
            analytic = grads[leaf].data.reshape(-1) if leaf in grads else np.zeros(leaf.size)
            flat = leaf.data.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + step
                plus = f(leaves).item()
                flat[i] = original - step
                minus = f(leaves).item()
                flat[i] = original
                central = (plus - minus) / (2.0 * step)
                worst = max(worst, abs(analytic[i] - central) / max(1.0, abs(central)))
    return worst


# --- thin functional wrappers -------------------------------------------------

def matmul(a, b):
    return forward_primitive('matmul', [a, b])


def relu(x):
    return forward_primitive('relu', [x])


def mean(x, axis=None, keepdims=False):
    return forward_primitive('mean', [x], axis=axis, keepdims=keepdims)


def total(x, axis=None, keepdims=False):
    return forward_primitive('sum', [x], axis=axis, keepdims=keepdims)


def variance(x, axis=None, keepdims=False):
    return forward_primitive('variance', [x], axis=axis, keepdims=keepdims)


def softmax(x, axis=-1):
    return forward_primitive('softmax', [x], axis=axis)


def log_softmax(x, axis=-1):
    return forward_primitive('log_softmax', [x], axis=axis)


def log(x):
    return forward_primitive('log', [x])


def exp(x):
    return forward_primitive('exp', [x])


def square(x):
    return forward_primitive('square', [x])


def sqrt(x):
    return forward_primitive('sqrt', [x])


def l2norm(x):
    return forward_primitive('l2norm', [x])


def reshape(x, shape):
    return forward_primitive('reshape', [x], shape=tuple(shape))


def take_rows(x, start, stop, axis=0):
    return forward_primitive('slice', [x], start=start, stop=stop, axis=axis)


def concat(tensors, axis=0):
    return forward_primitive('concat', list(tensors), axis=axis)


def broadcast_add(x, row):
    return forward_primitive('broadcast_add', [x, row])


def scale(x, factor: float):
    return forward_primitive('scale', [x], factor=float(factor))
