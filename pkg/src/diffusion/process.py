"""
Processo direto, perda e passo reverso do DDPM com parametrização ε.
"""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from src.autodiff import Tensor, as_tensor, ops
from src.diffusion.schedule import NoiseSchedule
from src.errors import ContractError, DimensionError, NumericError, TimestepRangeError


@dataclass
class ActionChunk:
    """
    Bloco de H ações normalizadas em [-1, 1] ([H, D] ou [B, H, D]).
    """
    values: np.ndarray
    embodiment: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NumericError(f"ActionChunk com valores não finitos ({self.embodiment})")

    @property
    def horizon(self) -> int:
        return self.values.shape[-2]

    @property
    def action_dim(self) -> int:
        return self.values.shape[-1]


def _check_t(t, s: NoiseSchedule):
    arr = np.asarray(t)
    if arr.size == 0 or arr.min() < 0 or arr.max() >= s.T:
        raise TimestepRangeError(f"timestep {t} fora de [0, {s.T})")
    return arr


def _coef(values: np.ndarray, t_arr: np.ndarray, target_ndim: int) -> np.ndarray:
    c = values[t_arr]
    if c.ndim == 0:
        return c
    return c.reshape(c.shape + (1,) * (target_ndim - c.ndim))


def q_sample(a0: ActionChunk, t: Union[int, np.ndarray], eps: np.ndarray, s: NoiseSchedule) -> ActionChunk:
    """
    a_t = √ᾱ_t · a0 + √(1 − ᾱ_t) · eps

    t pode ser um inteiro ou um vetor [B] quando a0 tem dimensão de batch.
    """
    t_arr = _check_t(t, s)
    if eps.shape != a0.values.shape:
        raise DimensionError(f"eps{eps.shape} não tem o shape de a0{a0.values.shape}")
    ab = _coef(s.alpha_bar, t_arr, a0.values.ndim)
    values = np.sqrt(ab) * a0.values + np.sqrt(1.0 - ab) * eps
    return ActionChunk(values.astype(a0.values.dtype, copy=False), a0.embodiment)


def diffusion_loss(eps_hat: Tensor, eps, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Erro quadrático médio entre ruído previsto e ruído real.

    Args:
        eps_hat: Tensor [..., H, D]
        eps: ruído alvo com o mesmo shape
        mask: [..., H] opcional; posições com 0 não contribuem
    """
    eps_hat = as_tensor(eps_hat)
    eps = as_tensor(eps)
    if eps_hat.shape != eps.shape:
        raise DimensionError(f"diffusion_loss: eps_hat{eps_hat.shape} vs eps{eps.shape}")
    diff = ops.sub(eps_hat, eps)
    sq = ops.mul(diff, diff)
    if mask is None:
        return ops.mean(sq)
    mask = np.asarray(mask)
    if mask.shape != eps_hat.shape[:-1]:
        raise DimensionError(f"máscara {mask.shape} incompatível com {eps_hat.shape}")
    denom = float(mask.sum()) * eps_hat.shape[-1]
    if denom == 0:
        raise ContractError("diffusion_loss sem posições válidas na máscara")
    weighted = ops.mul(sq, as_tensor(mask[..., None]))
    return ops.mul(ops.sum(weighted), 1.0 / denom)


def ddpm_step(a_t: ActionChunk, eps_hat: np.ndarray, t: int, s: NoiseSchedule,
              z: Optional[np.ndarray] = None) -> ActionChunk:
    """
    Um passo ancestral: média posterior mais σ_t · z (σ_0 = 0).
    """
    _check_t(t, s)
    if eps_hat.shape != a_t.values.shape:
        raise DimensionError(f"eps_hat{eps_hat.shape} vs a_t{a_t.values.shape}")
    if t == 0 and z is not None and np.any(z != 0):
        raise ContractError("z precisa ser zero em t = 0")
    beta_t = float(s.beta[t])
    ab_t = float(s.alpha_bar[t])
    mean = (a_t.values - beta_t / np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(1.0 - beta_t)
    if z is not None and t > 0:
        mean = mean + s.sigma(t) * z
    return ActionChunk(mean.astype(a_t.values.dtype, copy=False), a_t.embodiment)
