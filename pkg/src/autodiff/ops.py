"""
Primitivas diferenciáveis.

Conjunto fixo: affine, layer_norm, attention, elementares (+, ×, tanh, GELU,
softmax, log-softmax), embedding, concatenação, reduções sum/mean e as
operações de forma (reshape, transpose, indexação). As reduções usam a ordem
sequencial do numpy, sem paralelismo dentro de um grafo.
"""
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.autodiff.tensor import Tensor, as_tensor, make_result
from src.errors import ConfigError, DimensionError

Axis = Optional[Union[int, Tuple[int, ...]]]

GELU_C = math.sqrt(2.0 / math.pi)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        a.accumulate(g)
        b.accumulate(g)

    return make_result(a.data + b.data, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        a.accumulate(g)
        b.accumulate(-g)

    return make_result(a.data - b.data, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        a.accumulate(g * b.data)
        b.accumulate(g * a.data)

    return make_result(a.data * b.data, (a, b), "mul", backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul incompatível: {a.shape} @ {b.shape}")

    def backward(g):
        a.accumulate(g @ np.swapaxes(b.data, -1, -2))
        b.accumulate(np.swapaxes(a.data, -1, -2) @ g)

    return make_result(a.data @ b.data, (a, b), "matmul", backward)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def backward(g):
        x.accumulate(g * (1.0 - y * y))

    return make_result(y, (x,), "tanh", backward)


def gelu(x) -> Tensor:
    """GELU na aproximação por tanh."""
    x = as_tensor(x)
    d = x.data
    inner = GELU_C * (d + 0.044715 * d ** 3)
    t = np.tanh(inner)
    y = 0.5 * d * (1.0 + t)

    def backward(g):
        dinner = GELU_C * (1.0 + 3 * 0.044715 * d * d)
        x.accumulate(g * (0.5 * (1.0 + t) + 0.5 * d * (1.0 - t * t) * dinner))

    return make_result(y, (x,), "gelu", backward)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x.accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return make_result(s, (x,), "softmax", backward)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        x.accumulate(g - np.exp(out) * g.sum(axis=axis, keepdims=True))

    return make_result(out, (x,), "log_softmax", backward)


def sum(x, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x.accumulate(np.broadcast_to(g, x.shape))

    return make_result(np.asarray(y, dtype=x.dtype), (x,), "sum", backward)


def mean(x, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    original = x.shape

    def backward(g):
        x.accumulate(g.reshape(original))

    return make_result(x.data.reshape(shape), (x,), "reshape", backward)


def transpose(x, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        x.accumulate(np.transpose(g, inverse))

    return make_result(np.transpose(x.data, axes), (x,), "transpose", backward)


def swap_last(x) -> Tensor:
    x = as_tensor(x)
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def index(x, idx) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        x.accumulate(full)

    return make_result(np.asarray(x.data[idx]), (x,), "index", backward)


def embedding(table, ids) -> Tensor:
    """Lookup de linhas da tabela [V, D] por ids inteiros."""
    ids = np.asarray(ids, dtype=np.int64)
    return index(table, ids)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            t.accumulate(part)

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return make_result(data, tuple(tensors), "concat", backward)


def affine(x, W, b) -> Tensor:
    """
    y = xW + b sobre o último eixo de x.

    Args:
        x: Tensor [..., I]
        W: Tensor [I, O]
        b: Tensor [O]
    """
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if W.ndim != 2 or x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise DimensionError(f"affine incompatível: x{x.shape}, W{W.shape}, b{b.shape}")
    return add(matmul(x, W), b)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    D = x.shape[-1]
    if D < 1 or gain.shape != (D,) or bias.shape != (D,):
        raise DimensionError(f"layer_norm incompatível: x{x.shape}, gain{gain.shape}, bias{bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    y = xhat * gain.data + bias.data

    def backward(g):
        gain.accumulate(g * xhat)
        bias.accumulate(g)
        dxhat = g * gain.data
        dx = (inv / D) * (
            D * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        x.accumulate(dx)

    return make_result(y, (x, gain, bias), "layer_norm", backward)


def causal_bias(n: int, dtype) -> np.ndarray:
    """Máscara aditiva: posição i só enxerga chaves j <= i."""
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    return np.where(upper, -1e9, 0.0).astype(dtype)


def split_heads(x: Tensor, heads: int) -> Tensor:
    lead = x.shape[:-2]
    n, d = x.shape[-2], x.shape[-1]
    L = len(lead)
    x = reshape(x, lead + (n, heads, d // heads))
    return transpose(x, tuple(range(L)) + (L + 1, L, L + 2))


def merge_heads(x: Tensor) -> Tensor:
    lead = x.shape[:-3]
    h, n, dh = x.shape[-3], x.shape[-2], x.shape[-1]
    L = len(lead)
    x = transpose(x, tuple(range(L)) + (L + 1, L, L + 2))
    return reshape(x, lead + (n, h * dh))


def attention(q, k, v, heads: int = 1, causal: bool = False) -> Tensor:
    """
    softmax(q kᵀ / √d_head) v por cabeça, com máscara causal opcional.

    Args:
        q, k, v: Tensor [..., N, D]
        heads: número de cabeças; D precisa ser divisível por heads
        causal: aplica a máscara triangular
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape != k.shape or k.shape != v.shape:
        raise DimensionError(f"attention com shapes diferentes: q{q.shape}, k{k.shape}, v{v.shape}")
    D = q.shape[-1]
    if heads < 1 or D % heads != 0:
        raise ConfigError(f"largura {D} não é divisível por {heads} cabeças")
    dh = D // heads
    qh, kh, vh = split_heads(q, heads), split_heads(k, heads), split_heads(v, heads)
    scores = mul(matmul(qh, swap_last(kh)), 1.0 / math.sqrt(dh))
    if causal:
        scores = add(scores, as_tensor(causal_bias(q.shape[-2], q.dtype)))
    probs = softmax(scores, axis=-1)
    return merge_heads(matmul(probs, vh))
