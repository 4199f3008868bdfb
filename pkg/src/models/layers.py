"""
Blocos compartilhados pelo expert, pelo backbone e pelo encoder do estágio 1.

Convenção de nomes: camadas lineares guardam `<nome>/W` e `<nome>/b`, LayerNorm
guarda `<nome>/gain` e `<nome>/bias`.
"""
from typing import Mapping

import numpy as np

from src.autodiff import ParamSet, Tensor, ops

PARAM_DTYPE = np.float32


def init_linear(params: ParamSet, name: str, fan_in: int, fan_out: int, rng: np.random.Generator,
                zero: bool = False, scale: float = 1.0):
    if zero:
        W = np.zeros((fan_in, fan_out), dtype=PARAM_DTYPE)
    else:
        W = (rng.standard_normal((fan_in, fan_out)) * (scale / np.sqrt(fan_in))).astype(PARAM_DTYPE)
    params.add(f"{name}/W", W)
    params.add(f"{name}/b", np.zeros(fan_out, dtype=PARAM_DTYPE))


def init_layer_norm(params: ParamSet, name: str, width: int):
    params.add(f"{name}/gain", np.ones(width, dtype=PARAM_DTYPE))
    params.add(f"{name}/bias", np.zeros(width, dtype=PARAM_DTYPE))


def init_embedding(params: ParamSet, name: str, rows: int, width: int, rng: np.random.Generator,
                   std: float = 0.02):
    params.add(name, (rng.standard_normal((rows, width)) * std).astype(PARAM_DTYPE))


def linear(p: Mapping[str, Tensor], name: str, x) -> Tensor:
    return ops.affine(x, p[f"{name}/W"], p[f"{name}/b"])


def layer_norm(p: Mapping[str, Tensor], name: str, x) -> Tensor:
    return ops.layer_norm(x, p[f"{name}/gain"], p[f"{name}/bias"])


def mlp(p: Mapping[str, Tensor], name: str, x) -> Tensor:
    """fc1 -> GELU -> fc2"""
    return linear(p, f"{name}/fc2", ops.gelu(linear(p, f"{name}/fc1", x)))


def init_transformer_block(params: ParamSet, prefix: str, width: int, ff: int, rng: np.random.Generator):
    init_layer_norm(params, f"{prefix}/ln1", width)
    for proj in ("q", "k", "v", "out"):
        init_linear(params, f"{prefix}/attn/{proj}", width, width, rng)
    init_layer_norm(params, f"{prefix}/ln2", width)
    init_linear(params, f"{prefix}/ff/fc1", width, ff, rng)
    init_linear(params, f"{prefix}/ff/fc2", ff, width, rng)


def transformer_block(p: Mapping[str, Tensor], prefix: str, x: Tensor, heads: int, causal: bool) -> Tensor:
    """Bloco pre-LN: atenção multi-cabeça e MLP, ambos residuais."""
    h = layer_norm(p, f"{prefix}/ln1", x)
    q = linear(p, f"{prefix}/attn/q", h)
    k = linear(p, f"{prefix}/attn/k", h)
    v = linear(p, f"{prefix}/attn/v", h)
    att = ops.attention(q, k, v, heads=heads, causal=causal)
    x = ops.add(x, linear(p, f"{prefix}/attn/out", att))
    h = layer_norm(p, f"{prefix}/ln2", x)
    return ops.add(x, mlp(p, f"{prefix}/ff", h))


def linear_count(fan_in: int, fan_out: int) -> int:
    return fan_in * fan_out + fan_out


def layer_norm_count(width: int) -> int:
    return 2 * width


def transformer_block_count(width: int, ff: int) -> int:
    return (
        2 * layer_norm_count(width)
        + 4 * linear_count(width, width)
        + linear_count(width, ff)
        + linear_count(ff, width)
    )
