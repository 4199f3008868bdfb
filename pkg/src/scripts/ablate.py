from pathlib import Path
from typing import Iterable, Optional

import pandas as pd

from src.config import CONFIGS_DIR, RUNS_DIR, load_config
from src.evaluation.ablations import Budget, run_ablation


def budget_path(budget: str) -> Path:
    """Aceita um caminho YAML ou o nome de um orçamento em configs/budgets/."""
    path = Path(budget)
    if path.suffix in (".yaml", ".yml") or path.exists():
        return path
    return CONFIGS_DIR / "budgets" / f"{budget}.yaml"


def main(name: str, budget: str = "smoke", out=None, dataset=None, overrides: Iterable[str] = (),
         seeds: Optional[Iterable[int]] = None) -> pd.DataFrame:
    cfg = load_config(Budget, budget_path(budget), overrides)
    if seeds:
        cfg = cfg.model_copy(update={"seeds": list(seeds)})
    out_dir = Path(out) if out else RUNS_DIR / "ablations" / f"{name}-{cfg.name}"
    comparison = run_ablation(name, cfg, out_dir, dataset_dir=dataset)
    print(comparison.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    return comparison
