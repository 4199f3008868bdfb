from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from src.autodiff import ParamSet
from src.errors import NumericError


@dataclass
class OptimizerState:
    """Momentos do AdamW por parâmetro; só existem para quem já recebeu gradiente."""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: Dict[str, int] = field(default_factory=dict)
    step: int = 0


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_grad_norm(grads: Mapping[str, np.ndarray], max_norm: Optional[float]) -> Dict[str, np.ndarray]:
    """Reescala todos os gradientes quando a norma global passa de max_norm."""
    grads = dict(grads)
    if not max_norm:
        return grads
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        grads = {n: (g * scale).astype(g.dtype) for n, g in grads.items()}
    return grads


def adamw_step(params: ParamSet, grads: Mapping[str, np.ndarray], state: OptimizerState, lr: float,
               betas=(0.9, 0.95), eps: float = 1e-8, weight_decay: float = 0.0) -> OptimizerState:
    """
    Atualização AdamW com correção de viés e decaimento desacoplado.

    Parâmetros congelados ou sem gradiente neste passo não são tocados.

    Raises:
        NumericError: gradiente com NaN/inf, nomeando parâmetro e passo
    """
    names = [n for n in sorted(grads) if n not in params.frozen and n in params]
    # nada é alterado se algum gradiente for inválido
    for name in names:
        if not np.all(np.isfinite(grads[name])):
            raise NumericError(f"Gradiente não finito em {name} no passo {state.step + 1}")
    state.step += 1
    b1, b2 = betas
    for name in names:
        g = np.asarray(grads[name], dtype=np.float64)
        p = params[name].astype(np.float64)
        m = b1 * state.m.get(name, np.zeros_like(p)) + (1 - b1) * g
        v = b2 * state.v.get(name, np.zeros_like(p)) + (1 - b2) * g * g
        t = state.t.get(name, 0) + 1
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p = p - lr * weight_decay * p - lr * m_hat / (np.sqrt(v_hat) + eps)
        params.set(name, p.astype(params[name].dtype))
        state.m[name], state.v[name], state.t[name] = m, v, t
    return state
