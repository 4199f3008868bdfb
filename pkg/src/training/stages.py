"""
Configuração dos três estágios do currículo.

| estágio | lr   | agenda    | dados                  | treinável                               |
|---------|------|-----------|------------------------|-----------------------------------------|
| 1       | 1e-4 | constante | cross-embodiment       | expert, cabeças, encoders/FiLM stage1   |
| 2       | 2e-5 | constante | um embodiment          | backbone (menos visão), conector, expert|
| 3       | 2e-5 | cosseno   | tarefas de um embodiment | igual ao estágio 2                    |
"""
import math
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.autodiff import ParamSet
from src.config import validate
from src.data.batches import StageFilter
from src.errors import ConfigError
from src.models.backbone import BackboneConfig
from src.models.expert import expert_preset
from src.models.policy import PolicyArchitecture

STAGE1_TRAINABLE = ["expert/*", "head/*", "stage1/*"]
STAGE2_TRAINABLE = ["backbone/*", "connector/*", "film/*", "expert/*", "head/*"]
VISION_FROZEN = ["backbone/vision/*"]
STAGE1_ONLY = ["stage1/*"]


class DataSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: Optional[str] = None
    filter: StageFilter = Field(default_factory=StageFilter)


class InitSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    checkpoint: Optional[str] = None
    from_scratch: bool = False


class StageConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    stage: Literal[1, 2, 3]
    lr: float = Field(gt=0)
    schedule: Literal["constant", "cosine"] = "constant"
    weight_decay: float = Field(default=0.0, ge=0)
    betas: Tuple[float, float] = (0.9, 0.95)
    eps: float = 1e-8
    epochs: int = Field(default=5, ge=0)
    batch: int = Field(default=64, ge=1)
    seed: int = 0
    alpha: float = 1.0
    grad_clip: Optional[float] = 1.0
    max_steps: Optional[int] = Field(default=None, ge=0)
    sample_stride: Optional[int] = Field(default=None, ge=1)
    use_substeps: bool = True
    expert: str = "small"
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    prefetch: int = 2
    data: DataSection = Field(default_factory=DataSection)
    init: InitSection = Field(default_factory=InitSection)
    trainable: List[str] = Field(default_factory=list)
    frozen: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self):
        expert_preset(self.expert)
        if not self.trainable:
            raise ValueError("trainable precisa listar ao menos um padrão")
        return self

    @property
    def architecture(self) -> PolicyArchitecture:
        return PolicyArchitecture(expert=expert_preset(self.expert), backbone=self.backbone)


def build_stage(stage: int, params: Optional[ParamSet] = None, **overrides) -> StageConfig:
    """
    Configuração padrão do estágio, opcionalmente validada contra um ParamSet.

    Raises:
        ConfigError: estágio desconhecido ou padrões que não particionam os parâmetros
    """
    if stage == 1:
        base = dict(stage=1, lr=1e-4, schedule="constant", trainable=STAGE1_TRAINABLE,
                    data={"filter": {"kind": "cross-embodiment"}})
    elif stage == 2:
        base = dict(stage=2, lr=2e-5, schedule="constant", trainable=STAGE2_TRAINABLE, frozen=VISION_FROZEN,
                    data={"filter": {"kind": "embodiment", "embodiment": "arm3"}})
    elif stage == 3:
        base = dict(stage=3, lr=2e-5, schedule="cosine", trainable=STAGE2_TRAINABLE, frozen=VISION_FROZEN,
                    data={"filter": {"kind": "task", "embodiment": "arm3", "tasks": ["sort-2"]}})
    else:
        raise ConfigError(f"Estágio desconhecido: {stage} (esperado 1, 2 ou 3)")
    base.update(overrides)
    cfg = validate(StageConfig, base, source=f"stage{stage}")
    if params is not None:
        resolve_trainable(cfg, params)
    return cfg


def resolve_trainable(cfg: StageConfig, params: ParamSet) -> Tuple[List[str], List[str]]:
    """
    Classifica cada parâmetro como (treinável, congelado).

    Um nome que casa com um padrão congelado fica congelado mesmo que também
    case com um treinável; um nome sem padrão algum é erro de configuração.
    """
    frozen = {n for pattern in cfg.frozen for n in params.match(pattern)}
    trainable = {n for pattern in cfg.trainable for n in params.match(pattern)} - frozen
    orphans = sorted(set(params.names()) - frozen - trainable)
    if orphans:
        raise ConfigError(f"Parâmetros sem padrão treinável/congelado no estágio {cfg.stage}: {orphans[:5]}")
    return sorted(trainable), sorted(frozen)


def lr_at(cfg: StageConfig, step: int, total_steps: int) -> float:
    if cfg.schedule == "constant":
        return cfg.lr
    if total_steps <= 0:
        raise ConfigError("Agenda cosseno exige total_steps > 0")
    if not 0 <= step <= total_steps:
        raise ConfigError(f"Passo {step} fora de [0, {total_steps}]")
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
