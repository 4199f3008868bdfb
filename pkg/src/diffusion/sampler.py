from typing import Any, Callable, Optional, Tuple

import numpy as np

from src.diffusion.process import ActionChunk, ddpm_step
from src.diffusion.schedule import NoiseSchedule
from src.errors import DimensionError, NumericError

Denoiser = Callable[[np.ndarray, int, Any, str], np.ndarray]


def sample_chunk(
    denoiser: Denoiser,
    cond: Any,
    embodiment: str,
    s: NoiseSchedule,
    rng: np.random.Generator,
    shape: Tuple[int, ...],
    dtype=np.float32,
) -> ActionChunk:
    """
    Cadeia ancestral completa: a_T ~ N(0, I) e ddpm_step de T-1 até 0.

    Args:
        denoiser: função (a_t, t, cond, embodiment) -> eps_hat com o shape de a_t
        cond: condicionamento repassado ao denoiser sem alteração
        embodiment: id da embodiment, define a cabeça usada
        s: agenda de ruído
        rng: gerador dedicado a esta amostragem (nunca compartilhado entre threads)
        shape: (H, D) ou (B, H, D)

    Returns:
        ActionChunk em coordenadas normalizadas
    """
    a = ActionChunk(rng.standard_normal(shape).astype(dtype), embodiment)
    for t in range(s.T - 1, -1, -1):
        eps_hat = np.asarray(denoiser(a.values, t, cond, embodiment))
        if eps_hat.shape != tuple(shape):
            raise DimensionError(f"denoiser devolveu {eps_hat.shape}, esperado {tuple(shape)}")
        if not np.all(np.isfinite(eps_hat)):
            raise NumericError(f"saída não finita do denoiser no passo t={t}")
        z: Optional[np.ndarray] = None
        if t > 0:
            z = rng.standard_normal(shape).astype(dtype)
        a = ddpm_step(a, eps_hat.astype(dtype, copy=False), t, s, z)
    return a
