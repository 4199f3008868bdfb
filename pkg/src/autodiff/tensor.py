"""
Tensor com diferenciação reversa sobre numpy.

Cada operação cria um novo Tensor guardando os pais e uma closure de backward.
O estado de gradiente e a precisão padrão são por thread, de modo que grafos
distintos podem ser avaliados em threads distintas sem estado compartilhado.
"""
import threading
from contextlib import contextmanager
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from src.errors import ContractError

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


def default_dtype():
    return getattr(_state, "dtype", np.float32)


@contextmanager
def no_grad():
    previous = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextmanager
def precision(dtype):
    """
    Define a precisão padrão dos tensores criados via as_tensor.

    float32 no treino, float64 na checagem de gradiente.
    """
    previous = default_dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = previous


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """
    Reduz um gradiente com broadcast de volta ao shape original.
    """
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        op: str = "",
        name: str = "",
    ):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=default_dtype())
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.parents = tuple(parents)
        self.op = op
        self.name = name
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, grad: np.ndarray):
        if not self.requires_grad:
            return
        grad = unbroadcast(grad, self.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad = (self.grad + grad).astype(self.data.dtype, copy=False)

    def backward(self, grad: Optional[np.ndarray] = None):
        if grad is None:
            if self.data.size != 1:
                raise ContractError(f"backward sem gradiente exige saída escalar, shape={self.shape}")
            grad = np.ones_like(self.data)
        order = topological_order(self)
        self.accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op or 'leaf'})"

    # operadores delegam para ops
    def __add__(self, other):
        from src.autodiff import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from src.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from src.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from src.autodiff import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from src.autodiff import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from src.autodiff import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from src.autodiff import ops
        return ops.index(self, index)


def as_tensor(value, requires_grad: bool = False) -> Tensor:
    """
    Converte arrays/constantes para Tensor na precisão padrão corrente.
    """
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=default_dtype()), requires_grad=requires_grad)


def make_result(data: np.ndarray, parents: Sequence[Tensor], op: str, backward) -> Tensor:
    needs = _grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, parents=parents if needs else (), op=op)
    if needs:
        out._backward = backward
    return out


def topological_order(root: Tensor):
    """
    Ordenação topológica iterativa (grafos profundos estouram a recursão).
    """
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order
