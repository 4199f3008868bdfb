from src.diffusion.schedule import DEFAULT_T, NoiseSchedule, make_schedule
from src.diffusion.process import ActionChunk, ddpm_step, diffusion_loss, q_sample
from src.diffusion.sampler import sample_chunk

__all__ = [
    "DEFAULT_T",
    "NoiseSchedule",
    "make_schedule",
    "ActionChunk",
    "q_sample",
    "diffusion_loss",
    "ddpm_step",
    "sample_chunk",
]
