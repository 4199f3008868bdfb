"""
Encoders do estágio 1: patches por vista com blocos residuais modulados por
FiLM da instrução, e o embedding de instrução por média de tokens.

Estes parâmetros vivem em stage1/ e são descartados ao enxertar o expert no
modelo completo.
"""
from typing import Mapping

import numpy as np

from src.autodiff import ParamSet, Tensor, as_tensor, ops
from src.errors import IngestError
from src.models import layers
from src.models.expert import Conditioning, DEFAULT_COND_WIDTH, film_modulate

RESOLUTION = 64
N_VIEWS = 3
STAGE1_PATCH = 8
STAGE1_BLOCKS = 2


def check_views(views: np.ndarray, resolution: int = RESOLUTION, n_views: int = N_VIEWS) -> np.ndarray:
    """Valida [B, V, R, R, 3]; aceita [V, R, R, 3] adicionando o eixo de batch."""
    views = np.asarray(views)
    if views.ndim == 4:
        views = views[None]
    expected = (n_views, resolution, resolution, 3)
    if views.ndim != 5 or views.shape[1:] != expected:
        raise IngestError(f"Vistas com shape {views.shape[1:] if views.ndim == 5 else views.shape}, esperado {expected}")
    return views


def patchify(views: np.ndarray, patch: int, dtype) -> np.ndarray:
    """
    [B, V, R, R, 3] uint8 -> [B, V, (R/patch)^2, patch*patch*3] em [0, 1]
    """
    B, V, R, _, C = views.shape
    g = R // patch
    x = views.reshape(B, V, g, patch, g, patch, C).transpose(0, 1, 2, 4, 3, 5, 6)
    x = x.reshape(B, V, g * g, patch * patch * C)
    return (x.astype(np.float64) / 255.0).astype(dtype)


def init_stage1_params(vocab_size: int, cond_width: int = DEFAULT_COND_WIDTH, seed: int = 0) -> ParamSet:
    rng = np.random.default_rng([seed, 3])
    params = ParamSet()
    n_patches = (RESOLUTION // STAGE1_PATCH) ** 2
    patch_dim = STAGE1_PATCH * STAGE1_PATCH * 3
    layers.init_linear(params, "stage1/vision/patch", patch_dim, cond_width, rng)
    layers.init_embedding(params, "stage1/vision/pos", n_patches, cond_width, rng)
    for i in range(STAGE1_BLOCKS):
        prefix = f"stage1/vision/block{i}"
        layers.init_layer_norm(params, f"{prefix}/ln", cond_width)
        layers.init_linear(params, f"{prefix}/fc1", cond_width, cond_width, rng)
        layers.init_linear(params, f"{prefix}/fc2", cond_width, cond_width, rng)
        layers.init_linear(params, f"stage1/film/block{i}/gamma", cond_width, cond_width, rng, zero=True)
        layers.init_linear(params, f"stage1/film/block{i}/beta", cond_width, cond_width, rng, zero=True)
    layers.init_embedding(params, "stage1/lang/embed", vocab_size, cond_width, rng, std=0.1)
    return params


def count_stage1_params(vocab_size: int, cond_width: int = DEFAULT_COND_WIDTH) -> int:
    n_patches = (RESOLUTION // STAGE1_PATCH) ** 2
    block = layers.layer_norm_count(cond_width) + 4 * layers.linear_count(cond_width, cond_width)
    return (
        layers.linear_count(STAGE1_PATCH * STAGE1_PATCH * 3, cond_width)
        + n_patches * cond_width
        + STAGE1_BLOCKS * block
        + vocab_size * cond_width
    )


def embed_instruction(ids: np.ndarray, params: Mapping[str, Tensor], pad_id: int = 0) -> Tensor:
    """
    Média dos embeddings dos tokens não-PAD: [B, L] -> [B, D_c].
    """
    ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
    mask = (ids != pad_id).astype(params["stage1/lang/embed"].dtype)
    counts = np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
    table = ops.embedding(params["stage1/lang/embed"], ids)
    summed = ops.sum(ops.mul(table, as_tensor(mask[..., None])), axis=1)
    return ops.mul(summed, as_tensor(1.0 / counts))


def encode_obs_stage1(views, instruction_embedding, params, proprio=None) -> Conditioning:
    """
    Codifica cada vista separadamente e concatena na ordem recebida.

    Args:
        views: uint8 [B, 3, 64, 64, 3]
        instruction_embedding: Tensor [B, D_c] que gera a FiLM de cada bloco
        params: ParamSet ou BoundParams com stage1/*
        proprio: [B, P] normalizado; o expert usa zeros quando omitido

    Returns:
        Conditioning com obs_embedding [B, 3, D_c]
    """
    p = params.bind() if isinstance(params, ParamSet) else params
    views = check_views(views)
    lang = as_tensor(instruction_embedding)
    x = as_tensor(patchify(views, STAGE1_PATCH, lang.dtype))
    x = ops.add(layers.linear(p, "stage1/vision/patch", x), p["stage1/vision/pos"])

    B = x.shape[0]
    for i in range(STAGE1_BLOCKS):
        prefix = f"stage1/vision/block{i}"
        h = layers.layer_norm(p, f"{prefix}/ln", x)
        x = ops.add(x, layers.mlp(p, prefix, h))
        gamma = layers.linear(p, f"stage1/film/block{i}/gamma", lang)
        beta = layers.linear(p, f"stage1/film/block{i}/beta", lang)
        D = gamma.shape[-1]
        # [B, D] -> [B, 1, 1, D] para alcançar vistas e patches
        x = film_modulate(x, ops.reshape(gamma, (B, 1, 1, D)), ops.reshape(beta, (B, 1, 1, D)))

    obs = ops.mean(x, axis=2)
    return Conditioning(obs_embedding=obs, proprio=proprio, lang_embedding=lang)
