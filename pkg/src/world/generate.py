"""
Geração do dataset sintético a partir de uma receita.

Cada episódio usa um gerador filho derivado de (semente, índice, tentativa);
os episódios rodam em paralelo via joblib e são gravados na ordem do índice,
então a mesma semente produz um diretório idêntico byte a byte.
"""
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from src.data.episode_io import (
    EPISODES_DIR,
    EpisodeRecord,
    empty_manifest,
    read_manifest,
    write_episode,
    write_manifest,
)
from src.data.norm import NORM_STATS_NAME, compute_norm_stats
from src.errors import DatasetGenerationError, DexVLAError
from src.models.vocab import VOCAB_NAME, Vocabulary, build_vocabulary
from src.world.annotate import annotate_substeps
from src.world.environment import Environment
from src.world.raster import gripper_boxes
from src.world.scripted import ScriptedExpert
from src.world.tasks import generate_task, get_task, phrase_inventory

log = logging.getLogger(__name__)


class RecipeEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    embodiment: str
    task: str
    episodes: int = Field(ge=0)


class DatasetRecipe(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "dataset"
    entries: List[RecipeEntry] = Field(default_factory=list)
    max_steps: int = Field(default=1000, gt=0)
    retries: int = Field(default=5, ge=0)
    n_jobs: int = 1

    @property
    def total_episodes(self) -> int:
        return sum(e.episodes for e in self.entries)


def default_vocabulary() -> Vocabulary:
    instructions, phrases = phrase_inventory()
    return build_vocabulary(instructions, phrases)


def record_episode(task: str, emb_id: str, rng: np.random.Generator, max_steps: int):
    """
    Executa o expert roteirizado e devolve as trilhas do episódio.

    Após o expert concluir, um passo parado é gravado para que a última soltura
    caia dentro das trilhas.
    """
    instance = generate_task(get_task(task), emb_id, rng)
    env = Environment(task, emb_id, seed=0, instance=instance)
    env.reset()
    expert = ScriptedExpert(instance)

    proprio, actions, poses, boxes, grips = [], [], [], [], []
    for _ in range(max_steps):
        done = expert.done(env.scene)
        action = np.zeros(env.arm.spec.action_dim) if done else expert(env.scene, env.arm)
        proprio.append(env.arm.proprio())
        actions.append(action)
        poses.append(env.scene.poses.copy())
        boxes.append(env.scene.bboxes())
        grips.append(gripper_boxes(env.arm))
        if done:
            break
        env.step(action, render=False)
    else:
        raise DatasetGenerationError(f"Expert não concluiu {task} em {emb_id} dentro de {max_steps} passos")

    return instance, dict(
        proprio=np.asarray(proprio, dtype=np.float32),
        actions=np.asarray(actions, dtype=np.float32),
        object_pose=np.asarray(poses, dtype=np.float32),
        object_bbox=np.asarray(boxes, dtype=np.float32),
        gripper_bbox=np.asarray(grips, dtype=np.float32),
    )


def generate_episode(task: str, emb_id: str, seed: int, index: int, retries: int, max_steps: int,
                     vocab: Vocabulary):
    """Tenta até retries + 1 sementes filhas; devolve (registro, None) ou (None, falha)."""
    last_error = ""
    for attempt in range(retries + 1):
        child = [seed, index, attempt]
        try:
            instance, tracks = record_episode(task, emb_id, np.random.default_rng(child), max_steps)
            rec = EpisodeRecord(
                embodiment=emb_id,
                instruction=instance.instruction,
                instruction_ids=np.asarray(vocab.tokenize(instance.instruction), dtype=np.int64),
                scene=instance.scene.static_dict(),
                task=task,
                seed=child,
                **tracks,
            )
            rec.annotations = annotate_substeps(rec, vocab, episode_id=f"{emb_id}/{task}/{index}")
            return rec, None
        except DexVLAError as e:
            last_error = str(e)
    return None, {"index": index, "embodiment": emb_id, "task": task, "error": last_error}


def gen_dataset(recipe: DatasetRecipe, seed: int, out_dir, progress: bool = False) -> Path:
    """
    Gera, anota e grava os episódios, o manifest, o vocabulário e as estatísticas.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for stale in sorted((out_dir / EPISODES_DIR).glob("*.bin")):
        stale.unlink()
    vocab = default_vocabulary()

    jobs = []
    for entry in recipe.entries:
        for _ in range(entry.episodes):
            jobs.append((entry.task, entry.embodiment, len(jobs)))

    log.info("Gerando %d episódios (%s) com semente %d", len(jobs), recipe.name, seed)
    results = Parallel(n_jobs=recipe.n_jobs)(
        delayed(generate_episode)(task, emb, seed, i, recipe.retries, recipe.max_steps, vocab)
        for task, emb, i in jobs
    )

    manifest = empty_manifest()
    manifest["recipe"] = recipe.model_dump()
    manifest["seed"] = seed
    write_manifest(out_dir, manifest)
    failures = []
    iterator = tqdm(results, desc="gravando episódios", disable=not progress)
    for (task, emb, i), (rec, failure) in zip(jobs, iterator):
        if failure is not None:
            failures.append(failure)
            log.warning("Episódio %d (%s/%s) falhou após %d tentativas: %s", i, emb, task,
                        recipe.retries + 1, failure["error"])
            continue
        write_episode(rec, out_dir, episode_id=f"ep_{i:06d}")

    manifest = read_manifest(out_dir)
    manifest["failures"] = failures
    manifest["mixture"] = mixture_of(manifest["episodes"])
    write_manifest(out_dir, manifest)

    vocab.save(out_dir / VOCAB_NAME)
    if manifest["episodes"]:
        compute_norm_stats(out_dir).save(out_dir / NORM_STATS_NAME)
    log.info("Dataset em %s: %d episódios, %d falhas", out_dir, len(manifest["episodes"]), len(failures))
    return out_dir


def mixture_of(entries: List[dict]) -> dict:
    """Proporção de episódios por embodiment e por tarefa."""
    total = len(entries)
    out = {"embodiment": {}, "task": {}}
    for key in out:
        for e in entries:
            out[key][e[key]] = out[key].get(e[key], 0) + 1
        out[key] = {k: v / total for k, v in sorted(out[key].items())} if total else {}
    return out


def dataset_vocabulary(directory) -> Optional[Vocabulary]:
    path = Path(directory) / VOCAB_NAME
    return Vocabulary.load(path) if path.exists() else None
