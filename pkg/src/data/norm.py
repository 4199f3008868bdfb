"""
Estatísticas de normalização por embodiment.

Ações: min/max exatos levados para [-1, 1] (dimensões degeneradas alargadas
por EPS). Propriocepção: média e desvio padrão.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np
from sklearn.preprocessing import MinMaxScaler, StandardScaler

from src.autodiff.checkpoint import atomic_write_json
from src.data.episode_io import load_episodes
from src.errors import FormatError, StatsError

log = logging.getLogger(__name__)

EPS = 1e-6
NORM_STATS_NAME = "norm_stats.json"


@dataclass
class EmbodimentStats:
    action_min: np.ndarray
    action_max: np.ndarray
    proprio_mean: np.ndarray
    proprio_std: np.ndarray
    episodes: int = 0

    def __post_init__(self):
        self.action_min = np.asarray(self.action_min, dtype=np.float64)
        self.action_max = np.asarray(self.action_max, dtype=np.float64)
        self.proprio_mean = np.asarray(self.proprio_mean, dtype=np.float64)
        self.proprio_std = np.asarray(self.proprio_std, dtype=np.float64)
        if not np.all(self.action_max > self.action_min):
            raise StatsError("Estatística de ação com max <= min")

    def to_dict(self) -> dict:
        return {
            "action_min": self.action_min.tolist(),
            "action_max": self.action_max.tolist(),
            "proprio_mean": self.proprio_mean.tolist(),
            "proprio_std": self.proprio_std.tolist(),
            "episodes": self.episodes,
        }


@dataclass
class NormStats:
    embodiments: Dict[str, EmbodimentStats] = field(default_factory=dict)

    def get(self, emb_id: str) -> EmbodimentStats:
        if emb_id not in self.embodiments:
            raise StatsError(f"Sem estatísticas de normalização para o embodiment {emb_id}")
        return self.embodiments[emb_id]

    def normalize_actions(self, emb_id: str, actions) -> np.ndarray:
        s = self.get(emb_id)
        scaled = 2.0 * (np.asarray(actions, dtype=np.float64) - s.action_min) / (s.action_max - s.action_min) - 1.0
        return np.clip(scaled, -1.0, 1.0)

    def denormalize_actions(self, emb_id: str, normalized) -> np.ndarray:
        s = self.get(emb_id)
        return (np.asarray(normalized, dtype=np.float64) + 1.0) / 2.0 * (s.action_max - s.action_min) + s.action_min

    def normalize_proprio(self, emb_id: str, proprio) -> np.ndarray:
        s = self.get(emb_id)
        return (np.asarray(proprio, dtype=np.float64) - s.proprio_mean) / s.proprio_std

    def denormalize_proprio(self, emb_id: str, normalized) -> np.ndarray:
        s = self.get(emb_id)
        return np.asarray(normalized, dtype=np.float64) * s.proprio_std + s.proprio_mean

    def to_dict(self) -> dict:
        return {"embodiments": {k: v.to_dict() for k, v in sorted(self.embodiments.items())}}

    def save(self, path):
        atomic_write_json(Path(path), self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "NormStats":
        try:
            return cls({k: EmbodimentStats(**v) for k, v in data["embodiments"].items()})
        except (KeyError, TypeError) as e:
            raise FormatError(f"norm_stats inválido: {e}") from e

    @classmethod
    def load(cls, path) -> "NormStats":
        path = Path(path)
        if not path.exists():
            raise FormatError(f"{NORM_STATS_NAME} não encontrado: {path}")
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def widen(lo: np.ndarray, hi: np.ndarray, eps: float = EPS):
    degenerate = hi <= lo
    center = (lo + hi) / 2.0
    return np.where(degenerate, center - eps, lo), np.where(degenerate, center + eps, hi)


def fit_embodiment(records: Iterable) -> EmbodimentStats:
    actions = MinMaxScaler(feature_range=(-1, 1))
    proprio = StandardScaler()
    n = 0
    for rec in records:
        actions.partial_fit(np.asarray(rec.actions, dtype=np.float64))
        proprio.partial_fit(np.asarray(rec.proprio, dtype=np.float64))
        n += 1
    if n == 0:
        raise StatsError("Nenhum episódio para ajustar as estatísticas")
    lo, hi = widen(actions.data_min_, actions.data_max_)
    return EmbodimentStats(lo, hi, proprio.mean_, proprio.scale_, episodes=n)


def compute_norm_stats(dataset, embodiments: Optional[List[str]] = None) -> NormStats:
    """
    Args:
        dataset: diretório do dataset ou lista de EpisodeRecord
        embodiments: partições exigidas; por padrão as presentes nos episódios

    Raises:
        StatsError: partição exigida sem episódios
    """
    records = load_episodes(dataset) if isinstance(dataset, (str, Path)) else list(dataset)
    by_emb: Dict[str, list] = {}
    for rec in records:
        by_emb.setdefault(rec.embodiment, []).append(rec)

    wanted = sorted(by_emb) if embodiments is None else sorted(embodiments)
    stats = {}
    for emb_id in wanted:
        if not by_emb.get(emb_id):
            raise StatsError(f"Partição do embodiment {emb_id} está vazia")
        stats[emb_id] = fit_embodiment(by_emb[emb_id])
        log.debug("Estatísticas de %s ajustadas em %d episódios", emb_id, len(by_emb[emb_id]))
    return NormStats(stats)
