from typing import Callable, Optional

import numpy as np

from src.autodiff.params import BoundParams, ParamSet
from src.autodiff.tensor import Tensor, no_grad, precision
from src.errors import ContractError


def _evaluate(f: Callable[[BoundParams], Tensor], params: ParamSet) -> float:
    with no_grad():
        out = f(params.bind())
    if out.data.size != 1:
        raise ContractError(f"grad_check exige função escalar, shape={out.shape}")
    return float(out.data)


def grad_check(
    f: Callable[[BoundParams], Tensor],
    inputs: ParamSet,
    h: float = 1e-5,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Compara gradientes analíticos com diferenças centrais em float64.

    Args:
        f: função dos parâmetros ligados que devolve um Tensor escalar
        inputs: parâmetros (convertidos para float64 numa cópia)
        h: passo das diferenças finitas
        max_entries: se definido, amostra no máximo esse número de entradas por parâmetro

    Returns:
        max |analítico - numérico| / max(1, |analítico|) sobre todos os parâmetros
    """
    params = inputs.astype(np.float64)
    rng = np.random.default_rng(seed)

    with precision(np.float64):
        bound = params.bind()
        out = f(bound)
        if out.data.size != 1:
            raise ContractError(f"grad_check exige função escalar, shape={out.shape}")
        if out.requires_grad:
            out.backward()
        analytic = bound.grads()

        worst = 0.0
        for name in params.trainable_names():
            array = params[name]
            grad = analytic.get(name, np.zeros_like(array))
            flat = array.reshape(-1)
            positions = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                positions = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
            for i in positions:
                original = flat[i]
                flat[i] = original + h
                plus = _evaluate(f, params)
                flat[i] = original - h
                minus = _evaluate(f, params)
                flat[i] = original
                numeric = (plus - minus) / (2 * h)
                a = float(grad.reshape(-1)[i])
                worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
