from dataclasses import dataclass

import numpy as np

from src.errors import ConfigError

DEFAULT_T = 100
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 2e-2


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Agenda DDPM com beta linear.

    alpha_bar[t] é o produto acumulado de (1 - beta) até t, calculado em float64.
    """
    T: int
    beta: np.ndarray
    alpha_bar: np.ndarray

    def alpha_bar_prev(self, t: int) -> float:
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def sigma(self, t: int) -> float:
        if t == 0:
            return 0.0
        var = float(self.beta[t]) * (1.0 - self.alpha_bar_prev(t)) / (1.0 - float(self.alpha_bar[t]))
        return float(np.sqrt(var))


def make_schedule(T: int = DEFAULT_T, beta_start: float = DEFAULT_BETA_START,
                  beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    if T < 1:
        raise ConfigError(f"T precisa ser >= 1, recebido {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(
            f"Limites de beta inválidos: exige 0 < beta_start <= beta_end < 1 "
            f"(recebido {beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bar = np.cumprod(1.0 - beta)
    return NoiseSchedule(T=T, beta=beta, alpha_bar=alpha_bar)
