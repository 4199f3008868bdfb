import logging
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

from src.config import RUNS_DIR, write_run_snapshot
from src.evaluation.generalization import generalization_eval
from src.evaluation.trials import DEFAULT_TRIALS, run_suite
from src.models.policy import LearnedPolicy, ScriptedOraclePolicy

log = logging.getLogger(__name__)

GENERALIZATION_NAME = "generalization.csv"


def load_policy(checkpoint: Optional[str]):
    """Checkpoint treinado, ou o expert roteirizado quando checkpoint == 'oracle'."""
    if checkpoint == "oracle":
        return ScriptedOraclePolicy()
    return LearnedPolicy.from_checkpoint(checkpoint)


def main(checkpoint: str, tasks: Sequence[str], embodiment: str = "arm3", trials: int = DEFAULT_TRIALS,
         seed: int = 0, out=None, n_jobs: int = 1, generalization: bool = False) -> pd.DataFrame:
    policy = load_policy(checkpoint)
    out_dir = Path(out) if out else RUNS_DIR / "eval"
    write_run_snapshot(out_dir, {"checkpoint": str(checkpoint), "tasks": list(tasks), "embodiment": embodiment,
                                 "trials": trials, "generalization": generalization}, seed)

    table = run_suite(policy, tasks, embodiment, trials, seed, out_dir=out_dir, n_jobs=n_jobs)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))

    if generalization:
        frames = [generalization_eval(policy, task, embodiment, trials, seed, n_jobs=n_jobs) for task in tasks]
        gen = pd.concat(frames, ignore_index=True)
        gen.to_csv(out_dir / GENERALIZATION_NAME, index=False, float_format="%.6f")
        print(gen.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    return table
