import logging
from pathlib import Path
from typing import Iterable, Optional

from src.config import DATA_DIR, RUNS_DIR, apply_overrides, load_yaml
from src.errors import ConfigError
from src.training.stages import StageConfig, build_stage
from src.training.trainer import TrainResult, train_stage

log = logging.getLogger(__name__)


def load_stage_config(stage: int, config=None, overrides: Iterable[str] = (), seed: Optional[int] = None) -> StageConfig:
    """Padrões do estágio, sobrescritos pelo arquivo YAML e depois pelos overrides."""
    raw = load_yaml(config) if config else {}
    raw = apply_overrides(raw, overrides)
    if raw.get("stage", stage) != stage:
        raise ConfigError(f"{config} é do estágio {raw['stage']}, não do estágio {stage}")
    raw.pop("stage", None)
    if seed is not None:
        raw["seed"] = seed
    return build_stage(stage, **raw)


def main(stage: int, config=None, data=None, init=None, from_scratch: bool = False, out=None,
         seed: Optional[int] = None, overrides: Iterable[str] = (), progress: bool = True) -> TrainResult:
    cfg = load_stage_config(stage, config, overrides, seed)
    init = init or cfg.init.checkpoint
    if from_scratch:
        cfg = cfg.model_copy(update={"init": cfg.init.model_copy(update={"from_scratch": True})})
    if stage > 1 and init is None and not cfg.init.from_scratch:
        raise ConfigError(
            f"O estágio {stage} precisa do checkpoint do estágio {stage - 1} (--init <dir>) "
            "ou de --from-scratch"
        )
    if init is not None and not Path(init).exists():
        raise ConfigError(f"Checkpoint de inicialização não encontrado: {init}")

    dataset = data or cfg.data.path or DATA_DIR
    out_dir = Path(out) if out else RUNS_DIR / f"stage{stage}-seed{cfg.seed}"
    result = train_stage(cfg, dataset, out_dir, init=init, progress=progress)

    print(f"Estágio {stage} concluído em {result.steps} passos")
    if result.last:
        print(f"  perda final: {result.last['loss']:.4f} (difusão {result.last['l_diff']:.4f}, "
              f"ntp {result.last['l_ntp']:.4f})")
    print(f"  checkpoint final: {result.final}")
    print(f"  melhor checkpoint: {result.best}")
    return result
