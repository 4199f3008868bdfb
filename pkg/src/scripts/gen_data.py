import logging
from pathlib import Path
from typing import Iterable, Optional

from src.config import DATA_DIR, load_config, write_run_snapshot
from src.data.episode_io import read_manifest
from src.world.generate import DatasetRecipe, gen_dataset

log = logging.getLogger(__name__)


def main(config, seed: int = 0, out: Optional[str] = None, overrides: Iterable[str] = (),
         progress: bool = True) -> Path:
    """Gera o dataset da receita e imprime o resumo da mistura."""
    recipe = load_config(DatasetRecipe, config, overrides)
    out_dir = Path(out) if out else DATA_DIR / recipe.name
    gen_dataset(recipe, seed, out_dir, progress=progress)
    write_run_snapshot(out_dir, recipe.model_dump(mode="json"), seed)

    manifest = read_manifest(out_dir)
    print(f"Dataset gravado em {out_dir}: {len(manifest['episodes'])} episódios, "
          f"{len(manifest['failures'])} falhas")
    for key, shares in manifest.get("mixture", {}).items():
        print(f"  {key}: " + ", ".join(f"{k}={v:.3f}" for k, v in shares.items()))
    return out_dir
