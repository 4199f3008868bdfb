import logging
import time
from dataclasses import dataclass
from itertools import cycle, islice

import numpy as np

from src.data.batches import EpisodeDataset, make_batches, open_dataset
from src.errors import ConfigError
from src.training.optim import OptimizerState
from src.training.stages import StageConfig
from src.training.trainer import loss_fn, prepare_params, train_step

log = logging.getLogger(__name__)

MIN_STEPS = 20
WARMUP = 3
BATCH_POOL = 4


@dataclass
class Throughput:
    stage: int
    steps: int
    seconds: float
    batch: int
    parameters: int

    @property
    def steps_per_sec(self) -> float:
        return self.steps / self.seconds if self.seconds > 0 else float("inf")


def throughput(cfg: StageConfig, dataset, steps: int = MIN_STEPS) -> Throughput:
    """
    Passos de otimização por segundo com batch fixo.

    Os batches são montados antes da medição e os passos de aquecimento não
    entram na conta, então o número reflete só forward, backward e AdamW.
    """
    if steps < MIN_STEPS:
        raise ConfigError(f"throughput exige ao menos {MIN_STEPS} passos (recebido {steps})")
    if not isinstance(dataset, EpisodeDataset):
        dataset = open_dataset(dataset)
    selected = dataset.select(cfg.data.filter)
    pool = list(islice(make_batches(selected, None, cfg.architecture.horizon, cfg.batch, cfg.seed,
                                    cfg.sample_stride), BATCH_POOL))
    scratch = cfg.model_copy(update={"init": cfg.init.model_copy(update={"from_scratch": True})})
    params = prepare_params(scratch, len(dataset.vocab))
    compute = loss_fn(cfg)
    rng = np.random.default_rng([cfg.seed, 11])
    state = OptimizerState()
    batches = cycle(pool)

    for _ in range(WARMUP):
        train_step(cfg, params, state, next(batches), dataset.vocab, rng, cfg.lr, compute)
    start = time.perf_counter()
    for _ in range(steps):
        train_step(cfg, params, state, next(batches), dataset.vocab, rng, cfg.lr, compute)
    elapsed = time.perf_counter() - start
    result = Throughput(cfg.stage, steps, elapsed, cfg.batch, params.count())
    log.info("Estágio %d: %.2f passos/s (%d parâmetros, batch %d)", cfg.stage, result.steps_per_sec,
             result.parameters, cfg.batch)
    return result
