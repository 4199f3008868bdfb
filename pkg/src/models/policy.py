"""
Política completa: perdas dos estágios e inferência para avaliação e serviço.

Estágio 1: encoders stage1/* + expert, só L_diff.
Estágios 2-3: backbone -> conector/FiLM -> expert, L = L_diff + alpha * L_ntp.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.autodiff import ParamSet, Tensor, as_tensor, load_checkpoint, no_grad
from src.data.norm import NORM_STATS_NAME, NormStats
from src.diffusion import ActionChunk, DEFAULT_T, diffusion_loss, make_schedule, q_sample, sample_chunk
from src.errors import ConfigError, RoutingError
from src.models.backbone import (
    BackboneConfig,
    count_backbone_params,
    decode_text,
    forward_multimodal,
    forward_train,
    init_backbone_params,
    ntp_loss,
    prepare_instruction,
    total_loss,
)
from src.models.embodiments import BUILTIN, EmbodimentSpec, resolve
from src.models.expert import (
    DEFAULT_COND_WIDTH,
    Conditioning,
    ExpertConfig,
    count_expert_params,
    denoise,
    head_names,
    init_expert_params,
)
from src.models.vision import count_stage1_params, embed_instruction, encode_obs_stage1, init_stage1_params
from src.models.vocab import VOCAB_NAME, Vocabulary
from src.world.environment import Environment, Observation
from src.world.scripted import scripted_expert

log = logging.getLogger(__name__)


class PolicyArchitecture(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    expert: ExpertConfig = Field(default_factory=ExpertConfig)
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    cond_width: int = DEFAULT_COND_WIDTH
    diffusion_steps: int = DEFAULT_T

    @property
    def horizon(self) -> int:
        return self.expert.horizon


def init_policy_params(arch: PolicyArchitecture, vocab_size: int, stage: int,
                       embodiments: Iterable[EmbodimentSpec] = (), seed: int = 0) -> ParamSet:
    """Parâmetros frescos do estágio: stage1/* no estágio 1, backbone/* nos demais."""
    embodiments = list(embodiments) or BUILTIN.specs()
    params = init_expert_params(arch.expert, embodiments, arch.cond_width, seed)
    if stage == 1:
        extra = init_stage1_params(vocab_size, arch.cond_width, seed)
    elif stage in (2, 3):
        extra = init_backbone_params(arch.backbone, vocab_size, arch.cond_width, seed, film_width=arch.expert.hidden)
    else:
        raise ConfigError(f"Estágio desconhecido: {stage}")
    for name, array in extra.items():
        params.add(name, array)
    return params


def count_policy_params(arch: PolicyArchitecture, vocab_size: int, stage: int,
                        embodiments: Iterable[EmbodimentSpec] = ()) -> int:
    embodiments = list(embodiments) or BUILTIN.specs()
    total = count_expert_params(arch.expert, embodiments, arch.cond_width)
    if stage == 1:
        return total + count_stage1_params(vocab_size, arch.cond_width)
    return total + count_backbone_params(arch.backbone, vocab_size, arch.cond_width, film_width=arch.expert.hidden)


@dataclass
class LossTerms:
    total: Tensor
    l_diff: Tensor
    l_ntp: Tensor

    def values(self) -> Tuple[float, float, float]:
        return float(self.total.data), float(self.l_diff.data), float(self.l_ntp.data)


def language_target(batch, use_substeps: bool) -> List[str]:
    """Frase de subpasso quando habilitada, senão a própria instrução (prompt direto)."""
    return list(batch.phrases) if use_substeps else list(batch.instructions)


def _noised(batch, arch: PolicyArchitecture, rng: np.random.Generator):
    s = make_schedule(arch.diffusion_steps)
    B = batch.size
    t = rng.integers(0, s.T, size=B)
    eps = rng.standard_normal(batch.actions.shape).astype(batch.actions.dtype)
    a_t = q_sample(ActionChunk(batch.actions, batch.embodiment), t, eps, s)
    return a_t, t, eps


def stage1_loss(batch, p: Mapping[str, Tensor], arch: PolicyArchitecture, vocab: Vocabulary,
                rng: np.random.Generator, use_substeps: bool = True) -> LossTerms:
    texts = language_target(batch, use_substeps)
    ids = np.stack([vocab.encode_padded(t, arch.backbone.instruction_cap) for t in texts])
    lang = embed_instruction(ids, p)
    cond = encode_obs_stage1(batch.views, lang, p, proprio=batch.proprio)
    a_t, t, eps = _noised(batch, arch, rng)
    eps_hat = denoise(a_t, t, cond, batch.embodiment, p, arch.expert)
    l_diff = diffusion_loss(eps_hat, eps, batch.mask)
    zero = as_tensor(0.0)
    return LossTerms(total_loss(l_diff, zero, 0.0), l_diff, zero)


def stage2_loss(batch, p: Mapping[str, Tensor], arch: PolicyArchitecture, vocab: Vocabulary,
                rng: np.random.Generator, use_substeps: bool = True, alpha: float = 1.0) -> LossTerms:
    cfg = arch.backbone
    instruction = [vocab.tokenize(t) for t in batch.instructions]
    spans = np.stack([vocab.encode_span(t, cfg.reasoning_cap) for t in language_target(batch, use_substeps)])
    logits, targets, reasoning, conn = forward_train(batch.views, instruction, spans, p, cfg)
    l_ntp = ntp_loss(logits, targets)
    cond = Conditioning(
        obs_embedding=conn.action_embedding,
        proprio=batch.proprio,
        lang_embedding=reasoning.embedding,
        film_params=reasoning.film_params,
    )
    a_t, t, eps = _noised(batch, arch, rng)
    eps_hat = denoise(a_t, t, cond, batch.embodiment, p, arch.expert)
    l_diff = diffusion_loss(eps_hat, eps, batch.mask)
    return LossTerms(total_loss(l_diff, l_ntp, alpha), l_diff, l_ntp)


@dataclass
class PolicyAction:
    """Bloco de ações desnormalizado [H, D_e] e o raciocínio decodificado."""
    actions: np.ndarray
    reasoning: str = ""


@dataclass
class LearnedPolicy:
    params: ParamSet
    arch: PolicyArchitecture
    vocab: Vocabulary
    norm: NormStats
    use_substeps: bool = True
    metadata: dict = field(default_factory=dict)

    @property
    def multimodal(self) -> bool:
        return "backbone/embed" in self.params

    @property
    def embodiments(self) -> List[str]:
        return sorted({n.split("/")[1] for n in self.params.names() if n.startswith("head/")})

    @classmethod
    def from_checkpoint(cls, directory) -> "LearnedPolicy":
        directory = Path(directory)
        params, metadata = load_checkpoint(directory)
        if "architecture" not in metadata:
            raise ConfigError(f"Checkpoint sem arquitetura nos metadados: {directory}")
        arch = PolicyArchitecture.model_validate(metadata["architecture"])
        vocab = Vocabulary.load(directory / VOCAB_NAME)
        norm = NormStats.load(directory / NORM_STATS_NAME)
        log.info("Política carregada de %s (%d parâmetros)", directory, params.count())
        return cls(params, arch, vocab, norm, bool(metadata.get("use_substeps", True)), metadata)

    def reset(self, env: Optional[Environment] = None):
        pass

    def _check_route(self, emb_id: str) -> EmbodimentSpec:
        emb = resolve(emb_id)
        missing = [n for n in head_names(emb.id) if n not in self.params]
        if missing:
            raise RoutingError(f"Checkpoint sem cabeça para a embodiment '{emb.id}' (disponíveis: {self.embodiments})")
        return emb

    def _conditioning(self, views: np.ndarray, instruction: str, proprio: np.ndarray, p):
        cfg = self.arch.backbone
        if self.multimodal:
            ids = prepare_instruction(self.vocab.tokenize(instruction), cfg.instruction_cap)
            reasoning, conn = forward_multimodal(views, ids, p, cfg)
            cond = Conditioning(
                obs_embedding=conn.action_embedding,
                proprio=proprio,
                lang_embedding=reasoning.embedding,
                film_params=reasoning.film_params,
            )
            return cond, decode_text(reasoning.token_ids[0], self.vocab)
        ids = self.vocab.encode_padded(instruction, cfg.instruction_cap)[None]
        lang = embed_instruction(ids, p)
        return encode_obs_stage1(views, lang, p, proprio=proprio), ""

    def act(self, obs: Observation, rng: np.random.Generator) -> PolicyAction:
        """
        Amostra um bloco de H ações para a observação.

        Raises:
            RoutingError: o checkpoint não tem cabeça para obs.embodiment
        """
        emb = self._check_route(obs.embodiment)
        proprio = self.norm.normalize_proprio(emb.id, obs.proprio)[None].astype(np.float32)
        views = np.asarray(obs.views)[None]
        with no_grad():
            p = self.params.bind()
            cond, text = self._conditioning(views, obs.instruction, proprio, p)

            def denoiser(a_t, t, c, e):
                return denoise(a_t, np.full(a_t.shape[0], t), c, e, p, self.arch.expert).data

            chunk = sample_chunk(
                denoiser, cond, emb.id, make_schedule(self.arch.diffusion_steps), rng,
                shape=(1, self.arch.horizon, emb.action_dim),
            )
        actions = self.norm.denormalize_actions(emb.id, np.clip(chunk.values[0], -1.0, 1.0))
        return PolicyAction(actions=actions, reasoning=text)


class ScriptedOraclePolicy:
    """
    Teto dos rubricas: lê o estado do ambiente e devolve um passo do expert.
    """

    def __init__(self):
        self.env: Optional[Environment] = None

    def reset(self, env: Environment):
        self.env = env

    def act(self, obs: Observation, rng: np.random.Generator) -> PolicyAction:
        if self.env is None:
            raise ConfigError("ScriptedOraclePolicy.act chamado antes de reset(env)")
        action = scripted_expert(self.env.scene, self.env.arm, self.env.instance)
        return PolicyAction(actions=action[None], reasoning="")
