"""
Loop de treino de um estágio do currículo.

Saídas em out_dir:
    metrics.jsonl   perdas e lr por passo (determinístico para a mesma semente)
    timing.jsonl    tempo de parede e passos/s por passo
    final/ best/    checkpoints com vocab.json e norm_stats.json
    resolved_config.json
"""
import json
import logging
import shutil
import time
from contextlib import closing
from dataclasses import dataclass
from fnmatch import fnmatchcase
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from tqdm import tqdm

from src.autodiff import ParamSet, load_checkpoint, save_checkpoint
from src.config import write_run_snapshot
from src.data.batches import EpisodeDataset, batches_per_epoch, make_batches, open_dataset, prefetch
from src.data.norm import NORM_STATS_NAME
from src.errors import ConfigError, GraftError
from src.models.policy import LossTerms, init_policy_params, stage1_loss, stage2_loss
from src.models.vocab import VOCAB_NAME
from src.training.optim import OptimizerState, adamw_step, clip_grad_norm
from src.training.stages import STAGE1_ONLY, StageConfig, lr_at, resolve_trainable

log = logging.getLogger(__name__)

METRICS_NAME = "metrics.jsonl"
TIMING_NAME = "timing.jsonl"


@dataclass
class TrainResult:
    out_dir: Path
    final: Path
    best: Path
    steps: int
    last: Optional[dict] = None


def graft(init: ParamSet, fresh: ParamSet, stage: int) -> ParamSet:
    """
    Monta os parâmetros do estágio a partir de um checkpoint anterior.

    stage1/* é descartado; expert/* e head/* precisam vir do checkpoint.
    No estágio 2 backbone/conector/FiLM podem ser inicializados do zero; no
    estágio 3 todos os nomes precisam existir no checkpoint.

    Raises:
        GraftError: nomes faltando, inesperados ou com shape diferente
    """
    carried = [n for n in init.names() if not any(fnmatchcase(n, p) for p in STAGE1_ONLY)]
    unexpected = sorted(n for n in carried if n not in fresh)
    required = [n for n in fresh.names() if stage == 3 or n.startswith(("expert/", "head/"))]
    missing = sorted(n for n in required if n not in init)
    mismatched = sorted(n for n in carried if n in fresh and init[n].shape != fresh[n].shape)
    if unexpected or missing or mismatched:
        raise GraftError(
            f"Checkpoint incompatível com o estágio {stage}: faltando={missing[:8]} "
            f"inesperados={unexpected[:8]} shapes={mismatched[:8]}"
        )
    out = fresh.copy()
    out.unfreeze_all()
    for name in carried:
        out.set(name, init[name].astype(fresh[name].dtype, copy=True))
    log.info("Enxerto do estágio %d: %d nomes carregados, %d novos", stage, len(carried),
             len(fresh) - len(carried))
    return out


def loss_fn(cfg: StageConfig) -> Callable[..., LossTerms]:
    if cfg.stage == 1:
        return lambda batch, p, arch, vocab, rng: stage1_loss(batch, p, arch, vocab, rng, cfg.use_substeps)
    return lambda batch, p, arch, vocab, rng: stage2_loss(batch, p, arch, vocab, rng, cfg.use_substeps, cfg.alpha)


def prepare_params(cfg: StageConfig, vocab_size: int, init: Optional[ParamSet] = None) -> ParamSet:
    """Parâmetros iniciais com o congelamento do estágio aplicado."""
    fresh = init_policy_params(cfg.architecture, vocab_size, cfg.stage, seed=cfg.seed)
    if init is None:
        if cfg.stage > 1 and not cfg.init.from_scratch:
            raise ConfigError(f"Estágio {cfg.stage} exige init.checkpoint (ou from_scratch)")
        params = fresh
    elif cfg.stage == 1:
        if set(init.names()) != set(fresh.names()):
            raise GraftError("Checkpoint do estágio 1 não corresponde à arquitetura configurada")
        params = init.copy()
    else:
        params = graft(init, fresh, cfg.stage)
    _, frozen = resolve_trainable(cfg, params)
    params.unfreeze_all()
    params.freeze(frozen)
    return params


def train_step(cfg: StageConfig, params: ParamSet, state: OptimizerState, batch, vocab,
               rng: np.random.Generator, lr: float, compute: Callable[..., LossTerms]) -> LossTerms:
    bound = params.bind()
    terms = compute(batch, bound, cfg.architecture, vocab, rng)
    terms.total.backward()
    grads = clip_grad_norm(bound.grads(), cfg.grad_clip)
    adamw_step(params, grads, state, lr, cfg.betas, cfg.eps, cfg.weight_decay)
    return terms


def total_steps(cfg: StageConfig, dataset: EpisodeDataset) -> int:
    per_epoch = batches_per_epoch(dataset, cfg.batch, cfg.sample_stride or cfg.architecture.horizon)
    total = cfg.epochs * per_epoch
    return min(total, cfg.max_steps) if cfg.max_steps is not None else total


def _save(params: ParamSet, directory: Path, cfg: StageConfig, dataset: EpisodeDataset, steps: int):
    metadata = {
        "stage": cfg.stage,
        "architecture": cfg.architecture.model_dump(),
        "stage_config": cfg.model_dump(mode="json"),
        "use_substeps": cfg.use_substeps,
        "embodiments": sorted({n.split("/")[1] for n in params.names() if n.startswith("head/")}),
        "steps": steps,
    }
    save_checkpoint(params, directory, metadata)
    shutil.copyfile(dataset.directory / VOCAB_NAME, directory / VOCAB_NAME)
    shutil.copyfile(dataset.directory / NORM_STATS_NAME, directory / NORM_STATS_NAME)


def train_stage(cfg: StageConfig, dataset, out_dir, init=None, progress: bool = False) -> TrainResult:
    """
    Treina um estágio e grava métricas e checkpoints.

    Args:
        dataset: diretório do dataset ou EpisodeDataset já aberto
        init: ParamSet, diretório de checkpoint ou None
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not isinstance(dataset, EpisodeDataset):
        dataset = dataset or cfg.data.path
        if dataset is None:
            raise ConfigError("Nenhum dataset informado (argumento ou data.path)")
        dataset = open_dataset(dataset)
    selected = dataset.select(cfg.data.filter)
    if isinstance(init, (str, Path)):
        init, _ = load_checkpoint(init)

    params = prepare_params(cfg, len(dataset.vocab), init)
    write_run_snapshot(out_dir, cfg.model_dump(mode="json"), cfg.seed)
    total = total_steps(cfg, selected)
    compute = loss_fn(cfg)
    rng = np.random.default_rng([cfg.seed, 7])
    state = OptimizerState()
    horizon = cfg.architecture.horizon

    log.info("Estágio %d: %d passos, %d parâmetros (%d congelados)", cfg.stage, total, params.count(),
             sum(params[n].size for n in params.frozen))

    best, best_loss, window, last = out_dir / "best", float("inf"), [], None
    stream = make_batches(selected, None, horizon, cfg.batch, cfg.seed, cfg.sample_stride, max(cfg.epochs, 1))
    steps_per_epoch = max(1, batches_per_epoch(selected, cfg.batch, cfg.sample_stride or horizon))
    start = time.perf_counter()
    with open(out_dir / METRICS_NAME, "w", encoding="utf-8") as metrics, \
            open(out_dir / TIMING_NAME, "w", encoding="utf-8") as timing, \
            closing(prefetch(stream, cfg.prefetch)) as batches:
        bar = tqdm(total=total, desc=f"estágio {cfg.stage}", disable=not progress)
        for step, batch in zip(range(total), batches):
            lr = lr_at(cfg, step, total)
            terms = train_step(cfg, params, state, batch, dataset.vocab, rng, lr, compute)
            loss, l_diff, l_ntp = terms.values()
            last = {"step": step, "epoch": step // steps_per_epoch, "embodiment": batch.embodiment,
                    "loss": loss, "l_diff": l_diff, "l_ntp": l_ntp, "lr": lr}
            metrics.write(json.dumps(last, sort_keys=True) + "\n")
            elapsed = time.perf_counter() - start
            timing.write(json.dumps({"step": step, "wall": elapsed, "steps_per_sec": (step + 1) / elapsed}) + "\n")
            window.append(loss)
            if (step + 1) % steps_per_epoch == 0 or step + 1 == total:
                mean = float(np.mean(window))
                window = []
                if mean < best_loss:
                    best_loss = mean
                    _save(params, best, cfg, dataset, step + 1)
            bar.update(1)
            bar.set_postfix(loss=f"{loss:.4f}")
        bar.close()

    final = out_dir / "final"
    _save(params, final, cfg, dataset, total)
    if not best.exists():
        _save(params, best, cfg, dataset, total)
    log.info("Estágio %d concluído em %.1fs; checkpoint em %s", cfg.stage, time.perf_counter() - start, final)
    return TrainResult(out_dir, final, best, total, last)
