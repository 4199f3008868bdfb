from pathlib import Path
from typing import Optional

from src.config import CHECKPOINT_DIR, RUNS_DIR
from src.scripts.huggingface import download_checkpoint_from_hf, get_repo_id


def main(repo_name: Optional[str] = None, username: Optional[str] = None, out=None) -> Path:
    """Baixa o checkpoint publicado para `out` (padrão: DEXVLA_CHECKPOINT ou runs/downloaded)."""
    repo_id = get_repo_id(repo_name, username)
    local_dir = Path(out or CHECKPOINT_DIR or RUNS_DIR / "downloaded")
    path = download_checkpoint_from_hf(repo_id, local_dir)
    print(f"Checkpoint baixado para {path}")
    return path
