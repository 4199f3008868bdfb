from src.training.optim import OptimizerState, adamw_step, clip_grad_norm
from src.training.stages import StageConfig, build_stage, lr_at, resolve_trainable
from src.training.trainer import TrainResult, graft, train_stage
from src.training.bench import Throughput, throughput

__all__ = [
    "OptimizerState",
    "adamw_step",
    "clip_grad_norm",
    "StageConfig",
    "build_stage",
    "lr_at",
    "resolve_trainable",
    "TrainResult",
    "graft",
    "train_stage",
    "Throughput",
    "throughput",
]
