"""
Execução de tentativas semeadas e agregação das notas normalizadas.

A única entrada de linguagem da política é a instrução direta da tarefa; as
anotações de subpasso nunca são lidas aqui.
"""
import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.errors import ConfigError
from src.evaluation.rubrics import Trace, rubric_for
from src.world.environment import Environment
from src.world.raster import DEFAULT_PALETTE, Palette
from src.world.scripted import ScriptedExpert

log = logging.getLogger(__name__)

FIXTURE_SEEDS = tuple(range(5))
STEP_CAP_FACTOR = 4
DEFAULT_TRIALS = 10
SCORES_NAME = "scores.csv"
TRIALS_NAME = "trials.jsonl"


@dataclass
class TrialReport:
    task: str
    embodiment: str
    seed: int
    points: int
    max_points: int
    steps: int
    phrases: List[str] = field(default_factory=list)
    met: List[str] = field(default_factory=list)
    palette: str = "default"

    @property
    def normalized(self) -> float:
        return self.points / self.max_points

    def to_dict(self) -> dict:
        out = asdict(self)
        out["normalized"] = self.normalized
        return out


def scripted_length(task: str, embodiment: str, seed: int, limit: int = 5000) -> int:
    env = Environment(task, embodiment, seed)
    env.reset()
    expert = ScriptedExpert(env.instance)
    while not expert.done(env.scene) and env.steps < limit:
        env.step(expert(env.scene, env.arm), render=False)
    return env.steps


@lru_cache(maxsize=None)
def step_cap(task: str, embodiment: str, seeds: Sequence[int] = FIXTURE_SEEDS) -> int:
    """4x a mediana do comprimento do expert roteirizado nas sementes de referência."""
    lengths = [scripted_length(task, embodiment, s) for s in seeds]
    return int(STEP_CAP_FACTOR * np.median(lengths))


def run_trial(policy, task: str, embodiment: str, seed: int, cap: Optional[int] = None,
              palette: Palette = DEFAULT_PALETTE) -> TrialReport:
    """
    Executa blocos da política até a tarefa ser concluída ou o limite de passos.

    Raises:
        RoutingError: a política não tem cabeça para o embodiment
    """
    cap = cap or step_cap(task, embodiment)
    env = Environment(task, embodiment, seed, palette)
    obs = env.reset()
    policy.reset(env)
    done = ScriptedExpert(env.instance).done
    rng = np.random.default_rng([seed, 99])
    phrases: List[str] = []

    while env.steps < cap and not done(env.scene):
        action = policy.act(obs, rng)
        if action.reasoning and (not phrases or phrases[-1] != action.reasoning):
            phrases.append(action.reasoning)
        for a in action.actions:
            env.step(a, render=False)
            if env.steps >= cap or done(env.scene):
                break
        obs = env.observe()

    rubric = rubric_for(env.instance)
    trace = Trace(env.instance.scene, env.trajectory.pose_array(), env.trajectory.held_array())
    points, met = rubric.score(trace)
    return TrialReport(task, embodiment, seed, points, rubric.max_points, env.steps, phrases, met, palette.name)


def _trial(policy, task, embodiment, seed, palette):
    return run_trial(copy.copy(policy), task, embodiment, seed, palette=palette)


def run_trials(policy, task: str, embodiment: str, trials: int = DEFAULT_TRIALS, base_seed: int = 0,
               palette: Palette = DEFAULT_PALETTE, n_jobs: int = 1) -> List[TrialReport]:
    if trials < 1:
        raise ConfigError(f"trials deve ser >= 1 (recebido {trials})")
    step_cap(task, embodiment)
    reports = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_trial)(policy, task, embodiment, base_seed + i, palette) for i in range(trials)
    )
    return sorted(reports, key=lambda r: r.seed)


def summarize(reports: Sequence[TrialReport]) -> pd.DataFrame:
    """Média e desvio da nota normalizada por (tarefa, embodiment, paleta)."""
    frame = pd.DataFrame([r.to_dict() for r in reports])
    table = (
        frame.groupby(["task", "embodiment", "palette"], sort=True)
        .agg(trials=("seed", "count"), mean_score=("normalized", "mean"),
             std_score=("normalized", "std"), mean_steps=("steps", "mean"))
        .reset_index()
    )
    table["std_score"] = table["std_score"].fillna(0.0)
    return table


def write_reports(reports: Sequence[TrialReport], table: pd.DataFrame, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / TRIALS_NAME, "w", encoding="utf-8") as f:
        for r in reports:
            f.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    table.to_csv(out_dir / SCORES_NAME, index=False, float_format="%.6f")


def run_suite(policy, tasks: Sequence[str], embodiment: str, trials: int = DEFAULT_TRIALS, base_seed: int = 0,
              out_dir=None, n_jobs: int = 1, palette: Palette = DEFAULT_PALETTE) -> pd.DataFrame:
    """
    Nota normalizada média por tarefa sobre `trials` tentativas semeadas.
    """
    reports: List[TrialReport] = []
    for task in tasks:
        task_reports = run_trials(policy, task, embodiment, trials, base_seed, palette, n_jobs)
        log.info("%s/%s: nota média %.3f em %d tentativas", task, embodiment,
                 np.mean([r.normalized for r in task_reports]), trials)
        reports.extend(task_reports)
    table = summarize(reports)
    if out_dir is not None:
        write_reports(reports, table, out_dir)
    return table
