import json
from pathlib import Path
from typing import Iterable, Optional

from src.config import DATA_DIR, RUNS_DIR, write_run_snapshot
from src.scripts.train import load_stage_config
from src.training.bench import MIN_STEPS, Throughput, throughput


def main(stage: int, config=None, data=None, steps: int = MIN_STEPS, out=None,
         overrides: Iterable[str] = (), seed: Optional[int] = None) -> Throughput:
    cfg = load_stage_config(stage, config, overrides, seed)
    result = throughput(cfg, data or cfg.data.path or DATA_DIR, steps)

    out_dir = Path(out) if out else RUNS_DIR / "bench"
    write_run_snapshot(out_dir, cfg.model_dump(mode="json"), cfg.seed)
    with open(out_dir / f"stage{stage}.json", "w", encoding="utf-8") as f:
        json.dump({"stage": stage, "steps": result.steps, "seconds": result.seconds, "batch": result.batch,
                   "parameters": result.parameters, "steps_per_sec": result.steps_per_sec}, f, indent=2)
    print(f"Estágio {stage}: {result.steps_per_sec:.2f} passos/s "
          f"({result.parameters} parâmetros, batch {result.batch})")
    return result
