import logging
from typing import Dict, Optional

import pandas as pd

from src.evaluation.trials import DEFAULT_TRIALS, run_trials, summarize
from src.world.raster import (
    DEFAULT_PALETTE,
    NOVEL_BOTH_PALETTE,
    NOVEL_OBJECT_PALETTE,
    NOVEL_SCENE_PALETTE,
    Palette,
)

log = logging.getLogger(__name__)

CONDITIONS: Dict[str, Palette] = {
    "in-domain": DEFAULT_PALETTE,
    "novel-object": NOVEL_OBJECT_PALETTE,
    "novel-scene": NOVEL_SCENE_PALETTE,
    "novel-object+scene": NOVEL_BOTH_PALETTE,
}


def generalization_eval(policy, task: str, embodiment: str, trials: int = DEFAULT_TRIALS, base_seed: int = 0,
                        conditions: Optional[Dict[str, Palette]] = None, n_jobs: int = 1) -> pd.DataFrame:
    """
    Mesma rubrica e mesmas sementes sob paletas recoloridas.

    Só cores mudam; geometria e predicados são idênticos entre as condições.
    """
    rows = []
    for condition, palette in (conditions or CONDITIONS).items():
        reports = run_trials(policy, task, embodiment, trials, base_seed, palette, n_jobs)
        row = summarize(reports).iloc[0].to_dict()
        row["condition"] = condition
        rows.append(row)
        log.info("Generalização %s: %.3f", condition, row["mean_score"])
    table = pd.DataFrame(rows)
    return table[["condition", "palette", "task", "embodiment", "trials", "mean_score", "std_score", "mean_steps"]]
