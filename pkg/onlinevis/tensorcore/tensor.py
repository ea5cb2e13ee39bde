__package__ = 'onlinevis.tensorcore'

import threading

from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..misc.errors import ContractError


_PRECISIONS = {'f32': np.float32, 'f64': np.float64}
_DEFAULT_DTYPE = np.float32

_GRAD_MODE = threading.local()


def get_default_dtype() -> type:
    return _DEFAULT_DTYPE


def set_precision(mode: str) -> None:
    """Switch the global storage precision ('f32' for training, 'f64' for check mode)"""
    global _DEFAULT_DTYPE
    if mode not in _PRECISIONS:
        raise ContractError(f'Unknown precision {mode!r}, expected one of {sorted(_PRECISIONS)}')
    _DEFAULT_DTYPE = _PRECISIONS[mode]


def get_precision() -> str:
    return 'f64' if _DEFAULT_DTYPE is np.float64 else 'f32'


@contextmanager
def check_mode() -> Iterator[None]:
    """64-bit storage for the duration of the block"""
    previous = get_precision()
    set_precision('f64')
    try:
        yield
    finally:
        set_precision(previous)


def is_grad_enabled() -> bool:
    return getattr(_GRAD_MODE, 'enabled', True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Stop recording onto the tape in the current thread"""
    previous = is_grad_enabled()
    _GRAD_MODE.enabled = False
    try:
        yield
    finally:
        _GRAD_MODE.enabled = previous


class TapeNode:
    """One recorded operation: its inputs and the closure mapping the output grad to input grads"""

    __slots__ = ('inputs', 'backward_fn', 'op')

    def __init__(self, inputs: Tuple['Tensor', ...], backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]], op: str):
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.op = op

    def __repr__(self) -> str:
        return f'<TapeNode {self.op} inputs={len(self.inputs)}>'


class Tensor:
    """Dense row-major array with an optional gradient and the tape node that produced it"""

    __slots__ = ('data', 'requires_grad', 'grad', 'node', 'name', '__weakref__')

    # ndarray (op) Tensor defers to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool=False, name: Optional[str]=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data: np.ndarray = np.array(data, dtype=dtype or get_default_dtype())
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[TapeNode] = None
        self.name = name

    @classmethod
    def from_op(cls, data: np.ndarray, inputs: Sequence['Tensor'], backward_fn, op: str) -> 'Tensor':
        out = cls.__new__(cls)
        out.data = np.asarray(data)
        out.grad = None
        out.name = None
        out.requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        out.node = TapeNode(tuple(inputs), backward_fn, op) if out.requires_grad else None
        return out

    # basic properties

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        grad = ', requires_grad=True' if self.requires_grad else ''
        op = f', op={self.node.op}' if self.node else ''
        return f'Tensor(shape={self.shape}, dtype={self.dtype}{grad}{op})'

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f'item() needs a single-element tensor, got shape {self.shape}')
        return float(self.data.reshape(-1)[0])

    def detach(self) -> 'Tensor':
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out.node = None
        out.name = self.name
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grads: Optional[Dict['Tensor', np.ndarray]]=None) -> None:
        backward(self, grads=grads)

    # operator sugar, all routed through functional

    def __add__(self, other):
        return F.add(self, other)

    def __radd__(self, other):
        return F.add(other, self)

    def __sub__(self, other):
        return F.sub(self, other)

    def __rsub__(self, other):
        return F.sub(other, self)

    def __mul__(self, other):
        return F.mul(self, other)

    def __rmul__(self, other):
        return F.mul(other, self)

    def __truediv__(self, other):
        return F.div(self, other)

    def __rtruediv__(self, other):
        return F.div(other, self)

    def __neg__(self):
        return F.neg(self)

    def __pow__(self, exponent: float):
        return F.power(self, exponent)

    def __matmul__(self, other):
        return F.matmul(self, other)

    def __getitem__(self, index):
        return F.getitem(self, index)

    @property
    def T(self) -> 'Tensor':
        return F.transpose(self)

    def sum(self, axis=None, keepdims: bool=False) -> 'Tensor':
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool=False) -> 'Tensor':
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes) -> 'Tensor':
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes or None)

    def exp(self) -> 'Tensor':
        return F.exp(self)

    def log(self) -> 'Tensor':
        return F.log(self)

    def sigmoid(self) -> 'Tensor':
        return F.sigmoid(self)

    def relu(self) -> 'Tensor':
        return F.relu(self)


TensorLike = Union[Tensor, np.ndarray, float, int, Sequence]


def as_tensor(value: TensorLike) -> Tensor:
    """Wrap constants as non-differentiable tensors, pass tensors through untouched"""
    if isinstance(value, Tensor):
        return value
    if isinstance(value, np.ndarray) and np.issubdtype(value.dtype, np.floating):
        return Tensor(value, dtype=value.dtype if value.dtype == get_default_dtype() else None)
    return Tensor(value)


def parameter(data, name: Optional[str]=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor, grads: Optional[Dict[Tensor, np.ndarray]]=None) -> None:
    """
    Reverse topological sweep from a scalar loss. Gradients accumulate into .grad
    (repeated calls add up until zero_grad). When a grads dict is given, leaf
    gradients accumulate there instead, so that several threads can share leaves.
    """
    if loss.data.size != 1:
        raise ContractError(f'backward() needs a scalar loss, got shape {loss.shape}')
    if not loss.requires_grad:
        raise ContractError('backward() called on a tensor that was not recorded on the tape')

    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for tensor in reversed(_topological_order(loss)):
        grad = pending.pop(id(tensor), None)
        if grad is None:
            continue

        if tensor.node is None and grads is not None:
            grads[tensor] = grad if tensor not in grads else grads[tensor] + grad
        else:
            tensor.grad = grad if tensor.grad is None else tensor.grad + grad

        if tensor.node is None:
            continue
        input_grads = tensor.node.backward_fn(grad)
        for parent, parent_grad in zip(tensor.node.inputs, input_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = parent_grad if key not in pending else pending[key] + parent_grad


from . import functional as F    # noqa: E402
