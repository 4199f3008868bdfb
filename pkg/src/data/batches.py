"""
Seleção de episódios por estágio e montagem de batches.

Cada batch contém um único embodiment; no modo cross-embodiment os batches se
alternam entre embodiments em ordem alfabética.
"""
import logging
import queue
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.data.episode_io import EpisodeRecord, read_episode, read_manifest
from src.data.norm import NORM_STATS_NAME, NormStats
from src.errors import ConfigError, EmptySelectionError
from src.models.vocab import VOCAB_NAME, Vocabulary

log = logging.getLogger(__name__)


class StageFilter(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["cross-embodiment", "embodiment", "task"] = "cross-embodiment"
    embodiment: Optional[str] = None
    tasks: Optional[List[str]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "embodiment" and not self.embodiment:
            raise ValueError("filtro 'embodiment' exige o campo embodiment")
        if self.kind == "task" and not self.tasks:
            raise ValueError("filtro 'task' exige a lista tasks")
        return self

    def accepts(self, entry: dict) -> bool:
        if self.kind == "cross-embodiment":
            return True
        if self.embodiment and entry["embodiment"] != self.embodiment:
            return False
        if self.kind == "task":
            return entry["task"] in self.tasks
        return True


@dataclass
class EpisodeDataset:
    directory: Path
    entries: List[dict]
    records: List[EpisodeRecord]
    norm: NormStats
    vocab: Vocabulary

    @property
    def embodiments(self) -> List[str]:
        return sorted({r.embodiment for r in self.records})

    def select(self, flt: StageFilter) -> "EpisodeDataset":
        keep = [i for i, e in enumerate(self.entries) if flt.accepts(e)]
        if not keep:
            raise EmptySelectionError(f"Filtro {flt.model_dump(exclude_none=True)} não selecionou nenhum episódio")
        return EpisodeDataset(self.directory, [self.entries[i] for i in keep],
                              [self.records[i] for i in keep], self.norm, self.vocab)


def open_dataset(directory) -> EpisodeDataset:
    directory = Path(directory)
    entries = read_manifest(directory)["episodes"]
    records = [read_episode(directory / e["file"]) for e in entries]
    if not records:
        raise EmptySelectionError(f"Dataset vazio: {directory}")
    norm = NormStats.load(directory / NORM_STATS_NAME)
    vocab = Vocabulary.load(directory / VOCAB_NAME)
    log.info("Dataset %s aberto: %d episódios", directory, len(records))
    return EpisodeDataset(directory, entries, records, norm, vocab)


@dataclass
class Batch:
    embodiment: str
    views: np.ndarray           # uint8 [B, 3, 64, 64, 3]
    proprio: np.ndarray         # normalizado [B, P]
    actions: np.ndarray         # normalizado em [-1, 1] [B, H, D]
    mask: np.ndarray            # [B, H], 0 nas posições completadas
    instructions: List[str]
    phrases: List[str]
    starts: np.ndarray          # [B, 2] (episódio, passo inicial)

    @property
    def size(self) -> int:
        return int(self.actions.shape[0])


def sample_index(dataset: EpisodeDataset, stride: int) -> Dict[str, List[Tuple[int, int]]]:
    """(episódio, passo inicial) por embodiment, com passo `stride` entre janelas."""
    if stride < 1:
        raise ConfigError(f"stride deve ser >= 1 (recebido {stride})")
    index: Dict[str, List[Tuple[int, int]]] = {}
    for i, rec in enumerate(dataset.records):
        index.setdefault(rec.embodiment, []).extend((i, s) for s in range(0, rec.length, stride))
    return index


def batches_per_epoch(dataset: EpisodeDataset, batch: int, stride: int) -> int:
    return sum(-(-len(v) // batch) for v in sample_index(dataset, stride).values())


def action_window(actions: np.ndarray, start: int, horizon: int) -> Tuple[np.ndarray, np.ndarray]:
    """Janela de H ações a partir de start; o final é completado repetindo a última ação."""
    chunk = actions[start: start + horizon]
    n = chunk.shape[0]
    mask = np.zeros(horizon, dtype=np.float32)
    mask[:n] = 1.0
    if n < horizon:
        chunk = np.concatenate([chunk, np.repeat(actions[-1:], horizon - n, axis=0)], axis=0)
    return chunk, mask


def assemble(dataset: EpisodeDataset, emb_id: str, samples: Iterable[Tuple[int, int]], horizon: int) -> Batch:
    views, proprio, actions, masks, instructions, phrases, starts = [], [], [], [], [], [], []
    for ep, step in samples:
        rec = dataset.records[ep]
        chunk, mask = action_window(rec.actions, step, horizon)
        views.append(rec.views(step))
        proprio.append(dataset.norm.normalize_proprio(emb_id, rec.proprio[step]))
        actions.append(dataset.norm.normalize_actions(emb_id, chunk))
        masks.append(mask)
        instructions.append(rec.instruction)
        phrases.append(rec.annotations.phrase_at(step).phrase)
        starts.append((ep, step))
    return Batch(
        embodiment=emb_id,
        views=np.stack(views),
        proprio=np.asarray(proprio, dtype=np.float32),
        actions=np.asarray(actions, dtype=np.float32),
        mask=np.stack(masks),
        instructions=instructions,
        phrases=phrases,
        starts=np.asarray(starts, dtype=np.int64),
    )


def epoch_plan(dataset: EpisodeDataset, batch: int, stride: int, rng: np.random.Generator):
    """Lista de (embodiment, amostras) intercalando embodiments a cada batch."""
    per_emb = []
    for emb_id, samples in sorted(sample_index(dataset, stride).items()):
        order = rng.permutation(len(samples))
        shuffled = [samples[i] for i in order]
        per_emb.append((emb_id, [shuffled[k: k + batch] for k in range(0, len(shuffled), batch)]))
    plan = []
    longest = max((len(groups) for _, groups in per_emb), default=0)
    for k in range(longest):
        for emb_id, groups in per_emb:
            if k < len(groups):
                plan.append((emb_id, groups[k]))
    return plan


def make_batches(dataset: Union[EpisodeDataset, str, Path], flt: Optional[StageFilter], horizon: int,
                 batch: int, seed: int, stride: Optional[int] = None, epochs: int = 1) -> Iterator[Batch]:
    """
    Raises:
        EmptySelectionError: o filtro não seleciona nenhum episódio
    """
    if batch < 1 or horizon < 1:
        raise ConfigError(f"batch e horizon devem ser >= 1 (batch={batch}, horizon={horizon})")
    if not isinstance(dataset, EpisodeDataset):
        dataset = open_dataset(dataset)
    if flt is not None:
        dataset = dataset.select(flt)
    stride = stride or horizon
    sample_index(dataset, stride)
    return _stream(dataset, horizon, batch, seed, stride, epochs)


def _stream(dataset: EpisodeDataset, horizon: int, batch: int, seed: int, stride: int, epochs: int) -> Iterator[Batch]:
    for epoch in range(epochs):
        rng = np.random.default_rng([seed, epoch])
        for emb_id, samples in epoch_plan(dataset, batch, stride, rng):
            yield assemble(dataset, emb_id, samples, horizon)


_DONE = object()
_PUT_TIMEOUT = 0.05
_JOIN_TIMEOUT = 1.0


def prefetch(iterator: Iterator, size: int = 2) -> Iterator:
    """
    Consome o iterador numa thread separada com fila limitada.

    Exceções da thread produtora são relançadas no consumidor. Fechar o gerador
    encerra a thread produtora.
    """
    q: "queue.Queue" = queue.Queue(maxsize=max(1, size))
    stop = threading.Event()

    def put(item) -> bool:
        # a fila cheia não pode prender a thread depois que o consumidor parou
        while not stop.is_set():
            try:
                q.put(item, timeout=_PUT_TIMEOUT)
                return True
            except queue.Full:
                continue
        return False

    def produce():
        try:
            for item in iterator:
                if not put(item):
                    return
            put(_DONE)
        except BaseException as e:
            put(e)

    thread = threading.Thread(target=produce, name="prefetch", daemon=True)
    thread.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        thread.join(timeout=_JOIN_TIMEOUT)
