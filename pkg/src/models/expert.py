"""
Expert de difusão: embedding de timestep, tokens de condição, tronco
transformer (ou MLP na variante tiny), modulação FiLM e cabeças por embodiment.

Layout de tokens do tronco transformer:
    [timestep | condição (N tokens) | proprio | ações (H tokens)]
A FiLM vinda do raciocínio modula os tokens de condição antes da projeção de
entrada; a linguagem só chega ao expert por esse caminho.
"""
import zlib
from dataclasses import dataclass
from typing import Iterable, List, Literal, Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.autodiff import BoundParams, ParamSet, Tensor, as_tensor, ops
from src.diffusion import ActionChunk, DEFAULT_T
from src.errors import CheckpointCompatibilityError, ConfigError, DimensionError, NumericError, TimestepRangeError
from src.models import layers
from src.models.embodiments import EmbodimentSpec, resolve

DEFAULT_COND_WIDTH = 128


class ExpertConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["transformer", "mlp"] = "transformer"
    layers: int = 4
    hidden: int = 128
    heads: int = 4
    horizon: int = 16
    max_timestep: int = DEFAULT_T
    ff_ratio: int = 2

    @model_validator(mode="after")
    def _check(self):
        if self.layers < 1:
            raise ValueError("layers precisa ser >= 1")
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden={self.hidden} não é divisível por heads={self.heads}")
        if self.horizon < 1:
            raise ValueError("horizon precisa ser >= 1")
        return self

    @property
    def ff(self) -> int:
        return self.hidden * self.ff_ratio


EXPERT_PRESETS = {
    "tiny": ExpertConfig(kind="mlp", layers=2, hidden=64, heads=1),
    "small": ExpertConfig(kind="transformer", layers=4, hidden=128, heads=4),
    "large": ExpertConfig(kind="transformer", layers=8, hidden=256, heads=4),
}


def expert_preset(name: str, **overrides) -> ExpertConfig:
    if name not in EXPERT_PRESETS:
        raise ConfigError(f"Preset de expert desconhecido: {name} (opções: {sorted(EXPERT_PRESETS)})")
    base = EXPERT_PRESETS[name].model_dump()
    base.update(overrides)
    return ExpertConfig(**base)


@dataclass
class Conditioning:
    """
    Entradas de condicionamento do expert.

    obs_embedding: [B, N, D_c] tokens de observação (estágio 1) ou de ação do conector
    lang_embedding: [B, D_l] embedding da instrução ou do raciocínio, apenas informativo
    film_params: (gamma, beta) [B, hidden] ou [hidden], aplicados à projeção de obs_embedding
    proprio: [B, P] normalizado; None equivale a zeros
    """
    obs_embedding: Tensor
    proprio: Optional[Tensor] = None
    lang_embedding: Optional[Tensor] = None
    film_params: Optional[Tuple[Tensor, Tensor]] = None

    def __post_init__(self):
        self.obs_embedding = as_tensor(self.obs_embedding)
        tensors = [self.obs_embedding]
        if self.proprio is not None:
            self.proprio = as_tensor(self.proprio)
            tensors.append(self.proprio)
        if self.film_params is not None:
            gamma, beta = as_tensor(self.film_params[0]), as_tensor(self.film_params[1])
            if gamma.shape != beta.shape:
                raise DimensionError(f"FiLM com gamma{gamma.shape} e beta{beta.shape}")
            self.film_params = (gamma, beta)
            tensors.extend(self.film_params)
        for t in tensors:
            if not np.all(np.isfinite(t.data)):
                raise NumericError("Conditioning com valores não finitos")

    @property
    def batch(self) -> int:
        return self.obs_embedding.shape[0]


def film_modulate(x, gamma, beta) -> Tensor:
    """
    y = (1 + gamma) * x + beta

    gamma/beta [D] modulam todas as linhas; com shape [B, D] e x [B, N, D] cada
    elemento do batch recebe sua própria modulação.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    D = x.shape[-1]
    if gamma.shape[-1] != D or beta.shape[-1] != D or gamma.shape != beta.shape:
        raise DimensionError(f"film_modulate incompatível: x{x.shape}, gamma{gamma.shape}, beta{beta.shape}")
    if gamma.ndim == 2 and x.ndim == 3:
        gamma = ops.reshape(gamma, (gamma.shape[0], 1, D))
        beta = ops.reshape(beta, (beta.shape[0], 1, D))
    return ops.add(ops.mul(x, ops.add(gamma, 1.0)), beta)


def timestep_embedding(t: np.ndarray, width: int, dtype) -> np.ndarray:
    """Embedding senoidal [B, width] do índice de difusão."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = width // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if emb.shape[1] < width:
        emb = np.pad(emb, ((0, 0), (0, width - emb.shape[1])))
    return emb.astype(dtype)


def _head_prefix(emb_id: str) -> str:
    return f"head/{emb_id}"


def head_names(emb_id: str) -> List[str]:
    prefix = _head_prefix(emb_id)
    return [f"{prefix}/{part}/{kind}" for part in ("in", "out/fc1", "out/fc2", "proprio") for kind in ("W", "b")]


def _bind(params: Union[ParamSet, BoundParams]) -> Mapping[str, Tensor]:
    return params.bind() if isinstance(params, ParamSet) else params


def _require_head(p: Mapping[str, Tensor], emb: EmbodimentSpec):
    missing = [n for n in head_names(emb.id) if n not in p]
    if missing:
        raise CheckpointCompatibilityError(
            f"Cabeça da embodiment '{emb.id}' ausente nos parâmetros: {missing}"
        )


def head_route(hidden, emb, params) -> Tensor:
    """
    MLP de duas camadas privada da embodiment, aplicada por posição do bloco.

    hidden: [..., H, hidden] -> [..., H, D_e]
    """
    emb = resolve(emb)
    p = _bind(params)
    _require_head(p, emb)
    return layers.mlp(p, f"{_head_prefix(emb.id)}/out", hidden)


def init_expert_params(cfg: ExpertConfig, embodiments: Iterable[EmbodimentSpec],
                       cond_width: int = DEFAULT_COND_WIDTH, seed: int = 0) -> ParamSet:
    rng = np.random.default_rng([seed, 1])
    params = ParamSet()
    hid = cfg.hidden
    layers.init_linear(params, "expert/time/fc1", hid, hid, rng)
    layers.init_linear(params, "expert/time/fc2", hid, hid, rng)
    layers.init_linear(params, "expert/cond/obs", cond_width, hid, rng)
    layers.init_embedding(params, "expert/pos", cfg.horizon, hid, rng)
    for i in range(cfg.layers):
        prefix = f"expert/block{i}"
        if cfg.kind == "transformer":
            layers.init_transformer_block(params, prefix, hid, cfg.ff, rng)
        else:
            layers.init_layer_norm(params, f"{prefix}/ln", hid)
            layers.init_linear(params, f"{prefix}/ff/fc1", hid, cfg.ff, rng)
            layers.init_linear(params, f"{prefix}/ff/fc2", cfg.ff, hid, rng)
    layers.init_layer_norm(params, "expert/ln_f", hid)
    for emb in embodiments:
        add_embodiment_head(params, emb, cfg, seed)
    return params


def add_embodiment_head(params: ParamSet, emb: EmbodimentSpec, cfg: ExpertConfig, seed: int = 0) -> ParamSet:
    """
    Cria o namespace head/<id>/ sem tocar no tronco.

    O gerador depende apenas de (seed, id), então a ordem em que as cabeças são
    adicionadas não altera seus pesos.
    """
    if any(n in params for n in head_names(emb.id)):
        raise ConfigError(f"Cabeça já existe para a embodiment {emb.id}")
    rng = np.random.default_rng([seed, 2, zlib.crc32(emb.id.encode("utf-8"))])
    prefix = _head_prefix(emb.id)
    hid = cfg.hidden
    layers.init_linear(params, f"{prefix}/in", emb.action_dim, hid, rng)
    layers.init_linear(params, f"{prefix}/proprio", emb.proprio_dim, hid, rng)
    layers.init_linear(params, f"{prefix}/out/fc1", hid, hid, rng)
    layers.init_linear(params, f"{prefix}/out/fc2", hid, emb.action_dim, rng, scale=0.1)
    return params


def count_expert_params(cfg: ExpertConfig, embodiments: Iterable[EmbodimentSpec],
                        cond_width: int = DEFAULT_COND_WIDTH) -> int:
    hid = cfg.hidden
    total = 2 * layers.linear_count(hid, hid) + layers.linear_count(cond_width, hid)
    total += cfg.horizon * hid
    if cfg.kind == "transformer":
        total += cfg.layers * layers.transformer_block_count(hid, cfg.ff)
    else:
        total += cfg.layers * (
            layers.layer_norm_count(hid) + layers.linear_count(hid, cfg.ff) + layers.linear_count(cfg.ff, hid)
        )
    total += layers.layer_norm_count(hid)
    for emb in embodiments:
        total += (
            layers.linear_count(emb.action_dim, hid)
            + layers.linear_count(emb.proprio_dim, hid)
            + layers.linear_count(hid, hid)
            + layers.linear_count(hid, emb.action_dim)
        )
    return total


def denoise(a_t, t, cond: Conditioning, emb, params, cfg: ExpertConfig) -> Tensor:
    """
    Prevê o ruído eps de um bloco de ações corrompido.

    Args:
        a_t: ActionChunk ou array [B, H, D_e] (ou [H, D_e])
        t: índice de difusão, inteiro ou vetor [B]
        cond: Conditioning com batch B
        emb: EmbodimentSpec ou id registrado
        params: ParamSet ou BoundParams (para treino)
        cfg: arquitetura do tronco

    Returns:
        Tensor com o shape de a_t
    """
    emb = resolve(emb)
    values = a_t.values if isinstance(a_t, ActionChunk) else a_t
    x_in = as_tensor(values)
    squeeze = x_in.ndim == 2
    if squeeze:
        x_in = ops.reshape(x_in, (1,) + x_in.shape)
    B, H, D = x_in.shape
    if D != emb.action_dim:
        raise DimensionError(f"Bloco com D={D}, embodiment {emb.id} espera {emb.action_dim}")
    if H != cfg.horizon:
        raise DimensionError(f"Bloco com H={H}, expert configurado para {cfg.horizon}")
    t_arr = np.broadcast_to(np.asarray(t), (B,))
    if t_arr.min() < 0 or t_arr.max() >= cfg.max_timestep:
        raise TimestepRangeError(f"timestep {t} fora de [0, {cfg.max_timestep})")

    p = _bind(params)
    _require_head(p, emb)
    prefix = _head_prefix(emb.id)
    dtype = x_in.dtype

    time = as_tensor(timestep_embedding(t_arr, cfg.hidden, dtype))
    time = layers.mlp(p, "expert/time", time)
    time = ops.reshape(time, (B, 1, cfg.hidden))

    obs = layers.linear(p, "expert/cond/obs", cond.obs_embedding)
    if cond.film_params is not None:
        obs = film_modulate(obs, *cond.film_params)

    proprio_in = cond.proprio
    if proprio_in is None:
        proprio_in = np.zeros((B, emb.proprio_dim), dtype=dtype)
    proprio = layers.linear(p, f"{prefix}/proprio", proprio_in)
    proprio = ops.reshape(proprio, (B, 1, cfg.hidden))

    actions = ops.add(layers.linear(p, f"{prefix}/in", x_in), p["expert/pos"])

    if cfg.kind == "transformer":
        x = ops.concat([time, obs, proprio, actions], axis=1)
        for i in range(cfg.layers):
            x = layers.transformer_block(p, f"expert/block{i}", x, cfg.heads, causal=False)
        x = layers.layer_norm(p, "expert/ln_f", x)
        hidden = ops.index(x, (slice(None), slice(x.shape[1] - H, None)))
    else:
        context = ops.add(ops.add(time, ops.mean(obs, axis=1, keepdims=True)), proprio)
        x = ops.add(actions, context)
        for i in range(cfg.layers):
            h = layers.layer_norm(p, f"expert/block{i}/ln", x)
            x = ops.add(x, layers.mlp(p, f"expert/block{i}/ff", h))
        hidden = layers.layer_norm(p, "expert/ln_f", x)

    out = head_route(hidden, emb, p)
    if squeeze:
        out = ops.reshape(out, (H, D))
    return out
