from src.data.episode_io import EpisodeRecord, read_episode, read_manifest, write_episode
from src.data.norm import NormStats, compute_norm_stats
from src.data.batches import Batch, EpisodeDataset, StageFilter, make_batches, open_dataset, prefetch

__all__ = [
    "EpisodeRecord",
    "read_episode",
    "read_manifest",
    "write_episode",
    "NormStats",
    "compute_norm_stats",
    "Batch",
    "EpisodeDataset",
    "StageFilter",
    "make_batches",
    "open_dataset",
    "prefetch",
]
