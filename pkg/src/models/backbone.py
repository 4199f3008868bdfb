"""
Backbone multimodal de brinquedo no lugar do VLM.

Sequência causal:
    [patches visuais | instrução (PAD até o limite) | SEP | BOS r1..rn EOS PAD... | K queries]

Duas saídas: tokens de raciocínio (decodificação gulosa) e os estados das
queries de ação, projetados pelo conector para a largura de condição do expert.
"""
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.autodiff import ParamSet, Tensor, as_tensor, no_grad, ops
from src.errors import ContextOverflowError, ContractError, DimensionError, NumericError
from src.models import layers
from src.models.expert import DEFAULT_COND_WIDTH
from src.models.vision import N_VIEWS, RESOLUTION, check_views, patchify
from src.models.vocab import BOS_ID, EOS_ID, PAD_ID, SEP_ID, SPECIAL_TOKENS


class BackboneConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    layers: int = 4
    width: int = 128
    heads: int = 4
    context: int = 256
    queries: int = 8
    instruction_cap: int = 12
    reasoning_cap: int = 8
    patch: int = 16
    ff_ratio: int = 2

    @model_validator(mode="after")
    def _check(self):
        if self.width % self.heads != 0:
            raise ValueError(f"width={self.width} não é divisível por heads={self.heads}")
        if RESOLUTION % self.patch != 0:
            raise ValueError(f"patch={self.patch} não divide a resolução {RESOLUTION}")
        return self

    @property
    def visual_tokens(self) -> int:
        return N_VIEWS * (RESOLUTION // self.patch) ** 2

    @property
    def span_len(self) -> int:
        return self.reasoning_cap + 2

    @property
    def span_start(self) -> int:
        return self.visual_tokens + self.instruction_cap + 1

    @property
    def sequence_len(self) -> int:
        return self.span_start + self.span_len + self.queries


@dataclass
class ReasoningOutput:
    token_ids: List[List[int]]
    embedding: Tensor
    film_params: Optional[Tuple[Tensor, Tensor]] = None


@dataclass
class ConnectorOutput:
    action_embedding: Tensor

    def __post_init__(self):
        if not np.all(np.isfinite(self.action_embedding.data)):
            raise NumericError("Saída do conector não finita")


def init_backbone_params(cfg: BackboneConfig, vocab_size: int, cond_width: int = DEFAULT_COND_WIDTH,
                         seed: int = 0, film_width: Optional[int] = None) -> ParamSet:
    """film_width é a largura da projeção de condição do expert (padrão: cond_width)."""
    rng = np.random.default_rng([seed, 4])
    params = ParamSet()
    W = cfg.width
    patch_dim = cfg.patch * cfg.patch * 3
    layers.init_linear(params, "backbone/vision/patch", patch_dim, W, rng)
    layers.init_embedding(params, "backbone/vision/pos", cfg.visual_tokens, W, rng)
    layers.init_embedding(params, "backbone/embed", vocab_size, W, rng)
    layers.init_embedding(params, "backbone/pos", cfg.context, W, rng)
    layers.init_embedding(params, "backbone/queries", cfg.queries, W, rng)
    for i in range(cfg.layers):
        layers.init_transformer_block(params, f"backbone/block{i}", W, W * cfg.ff_ratio, rng)
    layers.init_layer_norm(params, "backbone/ln_f", W)
    layers.init_linear(params, "backbone/lm_head", W, vocab_size, rng)
    layers.init_linear(params, "connector/fc1", W, cond_width, rng)
    layers.init_layer_norm(params, "connector/ln", cond_width)
    layers.init_linear(params, "connector/fc2", cond_width, cond_width, rng)
    film_width = film_width or cond_width
    layers.init_linear(params, "film/gamma", W, film_width, rng, zero=True)
    layers.init_linear(params, "film/beta", W, film_width, rng, zero=True)
    return params


def count_backbone_params(cfg: BackboneConfig, vocab_size: int, cond_width: int = DEFAULT_COND_WIDTH,
                          film_width: Optional[int] = None) -> int:
    W = cfg.width
    return (
        layers.linear_count(cfg.patch * cfg.patch * 3, W)
        + cfg.visual_tokens * W
        + vocab_size * W
        + cfg.context * W
        + cfg.queries * W
        + cfg.layers * layers.transformer_block_count(W, W * cfg.ff_ratio)
        + layers.layer_norm_count(W)
        + layers.linear_count(W, vocab_size)
        + layers.linear_count(W, cond_width)
        + layers.layer_norm_count(cond_width)
        + layers.linear_count(cond_width, cond_width)
        + 2 * layers.linear_count(W, film_width or cond_width)
    )


def prepare_instruction(ids, cap: int) -> np.ndarray:
    """
    Normaliza ids de instrução para [B, cap] com PAD.

    Aceita uma sequência simples, uma lista de sequências ou um array já
    preenchido.
    """
    if len(ids) == 0:
        raise ContractError("Instrução vazia")
    if isinstance(ids, np.ndarray) and ids.ndim == 2:
        rows = [list(r[r != PAD_ID]) for r in ids]
    elif len(ids) > 0 and np.ndim(ids[0]) == 0:
        rows = [list(ids)]
    else:
        rows = [list(r) for r in ids]
    out = np.full((len(rows), cap), PAD_ID, dtype=np.int64)
    for b, row in enumerate(rows):
        if len(row) == 0:
            raise ContractError("Instrução vazia")
        if len(row) > cap:
            raise ContextOverflowError(f"Instrução com {len(row)} tokens excede o limite de {cap}")
        out[b, : len(row)] = row
    return out


def _trunk(p: Mapping[str, Tensor], views: np.ndarray, instruction: np.ndarray, span: np.ndarray,
           cfg: BackboneConfig) -> Tensor:
    views = check_views(views)
    B = views.shape[0]
    if cfg.sequence_len > cfg.context:
        raise ContextOverflowError(f"Sequência de {cfg.sequence_len} tokens excede o contexto de {cfg.context}")
    if instruction.shape != (B, cfg.instruction_cap) or span.shape != (B, cfg.span_len):
        raise DimensionError(f"instrução {instruction.shape} / raciocínio {span.shape} incompatíveis com batch {B}")

    dtype = p["backbone/embed"].dtype
    vis = as_tensor(patchify(views, cfg.patch, dtype))
    vis = layers.linear(p, "backbone/vision/patch", ops.reshape(vis, (B, cfg.visual_tokens, vis.shape[-1])))
    vis = ops.add(vis, p["backbone/vision/pos"])

    text_ids = np.concatenate([instruction, np.full((B, 1), SEP_ID, dtype=np.int64), span], axis=1)
    text = ops.embedding(p["backbone/embed"], text_ids)
    queries = ops.add(as_tensor(np.zeros((B, cfg.queries, cfg.width), dtype=dtype)), p["backbone/queries"])

    x = ops.concat([vis, text, queries], axis=1)
    x = ops.add(x, ops.index(p["backbone/pos"], slice(0, cfg.sequence_len)))
    for i in range(cfg.layers):
        x = layers.transformer_block(p, f"backbone/block{i}", x, cfg.heads, causal=True)
    return layers.layer_norm(p, "backbone/ln_f", x)


def connector(p: Mapping[str, Tensor], h) -> Tensor:
    """Duas lineares com LayerNorm: fc1 -> LN -> GELU -> fc2."""
    h = layers.linear(p, "connector/fc1", h)
    h = ops.gelu(layers.layer_norm(p, "connector/ln", h))
    return layers.linear(p, "connector/fc2", h)


def _span_embedding(hidden: Tensor, span: np.ndarray, cfg: BackboneConfig) -> Tensor:
    """Média dos estados finais sobre BOS..EOS (posições não-PAD do trecho)."""
    s = cfg.span_start
    span_hidden = ops.index(hidden, (slice(None), slice(s, s + cfg.span_len)))
    mask = (span != PAD_ID).astype(hidden.dtype)
    counts = mask.sum(axis=1, keepdims=True)
    summed = ops.sum(ops.mul(span_hidden, as_tensor(mask[..., None])), axis=1)
    return ops.mul(summed, as_tensor(1.0 / counts))


def _outputs(p, hidden: Tensor, span: np.ndarray, cfg: BackboneConfig):
    embedding = _span_embedding(hidden, span, cfg)
    query_hidden = ops.index(hidden, (slice(None), slice(hidden.shape[1] - cfg.queries, None)))
    reasoning = ReasoningOutput(token_ids=[_strip_span(row) for row in span], embedding=embedding)
    reasoning.film_params = film_from_reasoning(reasoning, p)
    return reasoning, ConnectorOutput(action_embedding=connector(p, query_hidden))


def _strip_span(row: np.ndarray) -> List[int]:
    ids = []
    for tok in row[1:]:
        if tok == PAD_ID:
            break
        ids.append(int(tok))
        if tok == EOS_ID:
            break
    return ids


def forward_train(views, instruction, span_ids, params, cfg: BackboneConfig):
    """
    Passo com teacher forcing sobre o trecho de raciocínio alvo.

    Returns:
        (logits [B, cap+1, V], alvos [B, cap+1], ReasoningOutput, ConnectorOutput)
    """
    p = params.bind() if isinstance(params, ParamSet) else params
    instruction = prepare_instruction(instruction, cfg.instruction_cap)
    span = np.atleast_2d(np.asarray(span_ids, dtype=np.int64))
    hidden = _trunk(p, views, instruction, span, cfg)
    s = cfg.span_start
    pred = ops.index(hidden, (slice(None), slice(s, s + cfg.span_len - 1)))
    logits = layers.linear(p, "backbone/lm_head", pred)
    reasoning, conn = _outputs(p, hidden, span, cfg)
    return logits, span[:, 1:], reasoning, conn


def decode_reasoning(views, instruction, params, cfg: BackboneConfig) -> np.ndarray:
    """
    Decodificação gulosa do trecho de raciocínio, sem gradiente.

    Tokens especiais além de EOS são excluídos do argmax; após EOS o trecho é
    completado com PAD. Sem EOS até o limite, o último slot recebe EOS.
    """
    p = params.bind() if isinstance(params, ParamSet) else params
    instruction = prepare_instruction(instruction, cfg.instruction_cap)
    views = check_views(views)
    B = views.shape[0]
    span = np.full((B, cfg.span_len), PAD_ID, dtype=np.int64)
    span[:, 0] = BOS_ID
    finished = np.zeros(B, dtype=bool)
    banned = [i for i, _ in enumerate(SPECIAL_TOKENS) if i != EOS_ID]
    s = cfg.span_start
    with no_grad():
        for j in range(cfg.reasoning_cap):
            hidden = _trunk(p, views, instruction, span, cfg)
            h = ops.index(hidden, (slice(None), s + j))
            logits = layers.linear(p, "backbone/lm_head", h).data.astype(np.float64)
            logits[:, banned] = -np.inf
            tok = np.argmax(logits, axis=-1)
            span[:, j + 1] = np.where(finished, PAD_ID, tok)
            finished |= tok == EOS_ID
            if finished.all():
                break
    span[~finished, cfg.span_len - 1] = EOS_ID
    return span


def forward_multimodal(views, instruction, params, cfg: BackboneConfig) -> Tuple[ReasoningOutput, ConnectorOutput]:
    """
    Inferência: decodifica o raciocínio e roda uma última passada com o trecho
    decodificado para obter o embedding do raciocínio e as queries de ação.
    """
    p = params.bind() if isinstance(params, ParamSet) else params
    span = decode_reasoning(views, instruction, p, cfg)
    instruction = prepare_instruction(instruction, cfg.instruction_cap)
    hidden = _trunk(p, views, instruction, span, cfg)
    return _outputs(p, hidden, span, cfg)


def ntp_loss(logits, target_ids, pad_id: int = PAD_ID) -> Tensor:
    """
    Entropia cruzada média sobre as posições não-PAD.

    logits [..., L, V], target_ids [..., L]
    """
    logits = as_tensor(logits)
    targets = np.asarray(target_ids, dtype=np.int64)
    if logits.shape[:-1] != targets.shape:
        raise DimensionError(f"ntp_loss: logits{logits.shape} vs alvos{targets.shape}")
    mask = targets != pad_id
    n = int(mask.sum())
    if n == 0:
        raise ContractError("ntp_loss sem posições supervisionadas (todas PAD)")
    logp = ops.log_softmax(logits, axis=-1)
    idx = tuple(np.nonzero(mask)) + (targets[mask],)
    picked = ops.index(logp, idx)
    return ops.mul(ops.sum(picked), -1.0 / n)


def total_loss(l_diff, l_ntp, alpha: float = 1.0) -> Tensor:
    """L = L_diff + alpha * L_ntp"""
    l_diff, l_ntp = as_tensor(l_diff), as_tensor(l_ntp)
    if not (np.all(np.isfinite(l_diff.data)) and np.all(np.isfinite(l_ntp.data))):
        raise NumericError(f"Perda não finita: l_diff={l_diff.data}, l_ntp={l_ntp.data}")
    return ops.add(l_diff, ops.mul(l_ntp, alpha))


def film_from_reasoning(r: ReasoningOutput, params) -> Tuple[Tensor, Tensor]:
    if r.embedding is None:
        raise ContractError("ReasoningOutput sem embedding")
    p = params.bind() if isinstance(params, ParamSet) else params
    return layers.linear(p, "film/gamma", r.embedding), layers.linear(p, "film/beta", r.embedding)


def decode_text(token_ids: Sequence[int], vocab) -> str:
    return vocab.detokenize(t for t in token_ids if t != EOS_ID)
