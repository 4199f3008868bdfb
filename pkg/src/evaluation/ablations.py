"""
Ablações do currículo, do raciocínio por subpassos, do tamanho do expert e do
custo de treino. Cada braço treina a partir das mesmas sementes e do mesmo
dataset; divergências são registradas no braço e a comparação é emitida mesmo
assim.
"""
import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from src.config import write_run_snapshot
from src.data.batches import open_dataset
from src.errors import ConfigError, NumericError
from src.evaluation.trials import DEFAULT_TRIALS, run_suite
from src.models.policy import LearnedPolicy
from src.training.bench import MIN_STEPS, throughput
from src.training.stages import StageConfig, build_stage
from src.training.trainer import train_stage
from src.world.generate import DatasetRecipe, gen_dataset

log = logging.getLogger(__name__)

ABLATIONS = ("stages", "substep", "expert-size", "throughput")
EVAL_TASK = {"stages": "sort-2", "substep": "sort-4", "expert-size": "sort-2"}
COMPARISON_NAME = "comparison.csv"
RUNS_NAME = "runs.csv"
CHECKS_NAME = "checks.json"


class Budget(BaseModel):
    """Orçamento fixo de uma ablação: dataset, sementes, passos e tentativas."""
    model_config = ConfigDict(extra="forbid")

    name: str = "budget"
    recipe: DatasetRecipe
    data_seed: int = 0
    seeds: List[int] = Field(default_factory=lambda: [0])
    trials: int = Field(default=DEFAULT_TRIALS, ge=1)
    eval_seed: int = 1000
    embodiment: str = "arm3"
    batch: int = Field(default=16, ge=1)
    expert: str = "small"
    stage1: Dict[str, Any] = Field(default_factory=dict)
    stage2: Dict[str, Any] = Field(default_factory=dict)
    stage3: Dict[str, Any] = Field(default_factory=dict)
    bench_steps: int = Field(default=MIN_STEPS, ge=MIN_STEPS)
    n_jobs: int = 1


class Pipeline:
    """
    Treina cadeias de estágios com memória: prefixos iguais (mesma semente e
    mesmos ajustes) reaproveitam o checkpoint já treinado.
    """

    def __init__(self, budget: Budget, dataset, out_dir: Path, task: str):
        self.budget = budget
        self.dataset = dataset
        self.out_dir = out_dir
        self.task = task
        self._done: Dict[Tuple, Path] = {}

    def stage_config(self, stage: int, seed: int, expert: str, use_substeps: bool, scratch: bool = False) -> StageConfig:
        b = self.budget
        data = {
            1: {"filter": {"kind": "cross-embodiment"}},
            2: {"filter": {"kind": "embodiment", "embodiment": b.embodiment}},
            3: {"filter": {"kind": "task", "embodiment": b.embodiment, "tasks": [self.task]}},
        }[stage]
        overrides = {"batch": b.batch, "data": data}
        overrides.update(getattr(b, f"stage{stage}"))
        overrides.update(seed=seed, expert=expert, use_substeps=use_substeps,
                         init={"from_scratch": scratch})
        return build_stage(stage, **overrides)

    def run(self, stages: Tuple[int, ...], seed: int, expert: str, substeps: Tuple[bool, ...]) -> Path:
        """Checkpoint final da cadeia; o primeiro estágio > 1 parte do zero."""
        ckpt: Optional[Path] = None
        for k, stage in enumerate(stages):
            key = (stages[: k + 1], seed, expert, substeps[: k + 1])
            if key in self._done:
                ckpt = self._done[key]
                continue
            name = "-".join(f"s{s}{'sub' if u else 'dir'}" for s, u in zip(key[0], key[3]))
            out = self.out_dir / "runs" / f"{name}-{expert}-seed{seed}"
            cfg = self.stage_config(stage, seed, expert, substeps[k], scratch=ckpt is None and stage > 1)
            result = train_stage(cfg, self.dataset, out, init=ckpt)
            ckpt = result.final
            self._done[key] = ckpt
        return ckpt


def _arms(name: str, expert: str) -> List[Tuple[str, Tuple[int, ...], str, Tuple[bool, ...]]]:
    if name == "stages":
        return [
            ("stage1-only", (1,), expert, (True,)),
            ("stage2-only", (2,), expert, (True,)),
            ("stage1+2", (1, 2), expert, (True, True)),
            ("stage1+2+3", (1, 2, 3), expert, (True, True, True)),
        ]
    if name == "substep":
        return [
            ("direct-prompt-everywhere", (1, 2), expert, (False, False)),
            ("substeps-stage2-only", (1, 2), expert, (False, True)),
            ("substeps-both", (1, 2), expert, (True, True)),
        ]
    if name == "expert-size":
        return [(f"expert-{size}", (1, 2), size, (True, True)) for size in ("tiny", "small", "large")]
    raise ConfigError(f"Ablação desconhecida: {name} (opções: {list(ABLATIONS)})")


def _score_arms(name: str, budget: Budget, dataset, out_dir: Path) -> pd.DataFrame:
    task = EVAL_TASK[name]
    pipeline = Pipeline(budget, dataset, out_dir, task)
    rows = []
    for arm, stages, expert, substeps in _arms(name, budget.expert):
        for seed in budget.seeds:
            row = {"ablation": name, "arm": arm, "seed": seed, "task": task, "mean_score": np.nan,
                   "diverged": False, "error": ""}
            try:
                ckpt = pipeline.run(stages, seed, expert, substeps)
                policy = LearnedPolicy.from_checkpoint(ckpt)
                table = run_suite(policy, [task], budget.embodiment, budget.trials, budget.eval_seed,
                                  out_dir=out_dir / "eval" / f"{arm}-seed{seed}", n_jobs=budget.n_jobs)
                row["mean_score"] = float(table["mean_score"].iloc[0])
            except NumericError as e:
                log.warning("Braço %s (semente %d) divergiu: %s", arm, seed, e)
                row.update(diverged=True, error=str(e))
            rows.append(row)
    return pd.DataFrame(rows)


def _bench_arms(budget: Budget, dataset) -> pd.DataFrame:
    rows = []
    for stage in (1, 2):
        overrides = {"batch": budget.batch, "seed": budget.seeds[0], "expert": budget.expert,
                     "data": {"filter": {"kind": "embodiment", "embodiment": budget.embodiment}}}
        result = throughput(build_stage(stage, **overrides), dataset, budget.bench_steps)
        rows.append({"ablation": "throughput", "arm": f"stage{stage}", "seed": budget.seeds[0],
                     "steps_per_sec": result.steps_per_sec, "parameters": result.parameters,
                     "diverged": False, "error": ""})
    return pd.DataFrame(rows)


def _mean(table: pd.DataFrame, arm: str, column: str = "mean_score") -> float:
    values = table.loc[table["arm"] == arm, column]
    return float(values.mean()) if len(values) else float("nan")


CHECKS: Dict[str, Callable[[pd.DataFrame], Dict[str, bool]]] = {
    "stages": lambda t: {
        "stage1+2 - stage2-only >= 0.3": _mean(t, "stage1+2") - _mean(t, "stage2-only") >= 0.3,
        "stage1+2 - stage1-only >= 0.3": _mean(t, "stage1+2") - _mean(t, "stage1-only") >= 0.3,
        "stage1+2 >= 0.6": _mean(t, "stage1+2") >= 0.6,
    },
    "substep": lambda t: {
        "substeps-both - direct-prompt-everywhere >= 0.25":
            _mean(t, "substeps-both") - _mean(t, "direct-prompt-everywhere") >= 0.25,
    },
    "expert-size": lambda t: {
        "large > small + 0.05": _mean(t, "expert-large") > _mean(t, "expert-small") + 0.05,
        "small > tiny + 0.05": _mean(t, "expert-small") > _mean(t, "expert-tiny") + 0.05,
        "large - tiny >= 0.2": _mean(t, "expert-large") - _mean(t, "expert-tiny") >= 0.2,
    },
    "throughput": lambda t: {
        "stage1 >= 1.5x stage2": _mean(t, "stage1", "steps_per_sec") >= 1.5 * _mean(t, "stage2", "steps_per_sec"),
    },
}


def run_ablation(name: str, budget: Budget, out_dir, dataset_dir=None) -> pd.DataFrame:
    """
    Treina e avalia os braços da ablação e grava a comparação lado a lado.

    Returns:
        tabela agregada por braço (média sobre as sementes de treino)
    """
    if name not in ABLATIONS:
        raise ConfigError(f"Ablação desconhecida: {name} (opções: {list(ABLATIONS)})")
    out_dir = Path(out_dir)
    write_run_snapshot(out_dir, {"ablation": name, "budget": budget.model_dump(mode="json")}, budget.data_seed)
    if dataset_dir is None:
        dataset_dir = gen_dataset(budget.recipe, budget.data_seed, out_dir / "data")
    dataset = open_dataset(dataset_dir)

    runs = _bench_arms(budget, dataset) if name == "throughput" else _score_arms(name, budget, dataset, out_dir)
    metric = "steps_per_sec" if name == "throughput" else "mean_score"
    comparison = (
        runs.groupby("arm", sort=False)
        .agg(**{metric: (metric, "mean"), "seeds": ("seed", "count"), "diverged": ("diverged", "sum")})
        .reset_index()
    )
    comparison.insert(0, "ablation", name)
    checks = CHECKS[name](runs)
    for label, ok in checks.items():
        if not ok:
            log.warning("Ordenação esperada não observada em %s: %s", name, label)

    runs.to_csv(out_dir / RUNS_NAME, index=False, float_format="%.6f")
    comparison.to_csv(out_dir / COMPARISON_NAME, index=False, float_format="%.6f")
    with open(out_dir / CHECKS_NAME, "w", encoding="utf-8") as f:
        json.dump({k: bool(v) for k, v in checks.items()}, f, indent=2, sort_keys=True)
    log.info("Ablação %s concluída: %s", name, out_dir / COMPARISON_NAME)
    return comparison
