import json
import logging
from pathlib import Path
from typing import Dict, Optional, Sequence

from src.errors import ContractError
from src.evaluation.trials import DEFAULT_TRIALS, run_suite
from src.models.policy import LearnedPolicy
from src.scripts.huggingface import CHECKPOINT_FILES, get_repo_id, upload_checkpoint_to_hf

log = logging.getLogger(__name__)

MIN_SCORE = 0.6
SCORES_NAME = "publish_scores.json"


def check_checkpoint_files(checkpoint_dir: Path):
    missing = [f for f in CHECKPOINT_FILES if not (checkpoint_dir / f).exists()]
    if missing:
        raise FileNotFoundError(f"Arquivos não encontrados: {missing}")


def calculate_scores(policy, tasks: Sequence[str], embodiment: str, trials: int, seed: int) -> Dict[str, float]:
    table = run_suite(policy, tasks, embodiment, trials, seed)
    return {row.task: float(row.mean_score) for row in table.itertuples()}


def save_scores(checkpoint_dir: Path, scores: Dict[str, float]) -> Path:
    path = checkpoint_dir / SCORES_NAME
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scores, f, indent=2, sort_keys=True)
    return path


def validate_scores(scores: Dict[str, float], min_score: float = MIN_SCORE) -> bool:
    ok = True
    for task, value in sorted(scores.items()):
        passed = value >= min_score
        ok = ok and passed
        print(f"{task}: {value:.4f} ({'✓' if passed else '✗'})")
    return ok


def main(checkpoint, tasks: Sequence[str] = ("sort-2",), embodiment: str = "arm3",
         trials: int = DEFAULT_TRIALS, seed: int = 0, min_score: float = MIN_SCORE,
         repo_name: Optional[str] = None) -> str:
    """
    Avalia o checkpoint e publica no Hugging Face só se todas as tarefas passarem no mínimo.

    Raises:
        ContractError: alguma tarefa ficou abaixo de min_score
    """
    checkpoint_dir = Path(checkpoint)
    check_checkpoint_files(checkpoint_dir)
    repo_id = get_repo_id(repo_name)

    policy = LearnedPolicy.from_checkpoint(checkpoint_dir)
    scores = calculate_scores(policy, tasks, embodiment, trials, seed)
    save_scores(checkpoint_dir, scores)

    if not validate_scores(scores, min_score):
        raise ContractError(f"Publicação recusada: nota abaixo de {min_score:.2f} em {checkpoint_dir}")

    url = upload_checkpoint_to_hf(repo_id, checkpoint_dir, policy.metadata, scores, min_score)
    print(f"Deploy concluído: {url}")
    return url
