import fnmatch
import hashlib
from typing import Dict, Iterable, Iterator, List, Mapping, Optional

import numpy as np

from src.autodiff.tensor import Tensor, _grad_enabled
from src.errors import ConfigError


class ParamSet:
    """
    Conjunto nomeado de parâmetros (arrays numpy) com nomes congelados.

    A iteração segue a ordem alfabética dos nomes. Um ParamSet guarda apenas
    arrays; os grafos são montados a partir de bind(), o que permite transferir
    snapshots entre threads.
    """

    def __init__(self, arrays: Optional[Mapping[str, np.ndarray]] = None, frozen: Iterable[str] = ()):
        self._arrays: Dict[str, np.ndarray] = {}
        self.frozen = set()
        for name, value in (arrays or {}).items():
            self.add(name, value)
        self.freeze(frozen)

    def add(self, name: str, value: np.ndarray):
        if name in self._arrays:
            raise ConfigError(f"Parâmetro duplicado: {name}")
        self._arrays[name] = np.ascontiguousarray(value)

    def set(self, name: str, value: np.ndarray):
        if name not in self._arrays:
            raise KeyError(name)
        self._arrays[name] = np.ascontiguousarray(value)

    def freeze(self, names: Iterable[str]):
        names = set(names)
        unknown = names - set(self._arrays)
        if unknown:
            raise ConfigError(f"Nomes congelados inexistentes: {sorted(unknown)}")
        self.frozen |= names

    def unfreeze_all(self):
        self.frozen = set()

    def names(self) -> List[str]:
        return sorted(self._arrays)

    def trainable_names(self) -> List[str]:
        return [n for n in self.names() if n not in self.frozen]

    def match(self, pattern: str) -> List[str]:
        return [n for n in self.names() if fnmatch.fnmatchcase(n, pattern)]

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def __len__(self) -> int:
        return len(self._arrays)

    def items(self):
        return [(n, self._arrays[n]) for n in self.names()]

    def count(self, prefix: str = "") -> int:
        return int(np.sum([a.size for n, a in self.items() if n.startswith(prefix)], dtype=np.int64))

    def copy(self) -> "ParamSet":
        out = ParamSet({n: a.copy() for n, a in self.items()})
        out.frozen = set(self.frozen)
        return out

    def astype(self, dtype) -> "ParamSet":
        out = ParamSet({n: a.astype(dtype) for n, a in self.items()})
        out.frozen = set(self.frozen)
        return out

    def subset(self, names: Iterable[str]) -> "ParamSet":
        names = set(names)
        out = ParamSet({n: a for n, a in self.items() if n in names})
        out.frozen = self.frozen & names
        return out

    def remove(self, names: Iterable[str]):
        for name in names:
            self._arrays.pop(name, None)
            self.frozen.discard(name)

    def digest(self, name: str) -> str:
        return hashlib.sha256(self._arrays[name].tobytes()).hexdigest()

    def digests(self, names: Optional[Iterable[str]] = None) -> Dict[str, str]:
        return {n: self.digest(n) for n in (names if names is not None else self.names())}

    def bind(self) -> "BoundParams":
        return BoundParams(self)


class BoundParams(Mapping):
    """
    Folhas Tensor para uma avaliação de grafo.

    Parâmetros congelados entram sem requires_grad e nunca acumulam gradiente.
    As folhas são criadas sob demanda, então cabeças de outras embodiments
    não aparecem nos gradientes.
    """

    def __init__(self, params: ParamSet):
        self.params = params
        self._leaves: Dict[str, Tensor] = {}

    def __getitem__(self, name: str) -> Tensor:
        leaf = self._leaves.get(name)
        if leaf is None:
            if name not in self.params:
                raise KeyError(name)
            trainable = name not in self.params.frozen and _grad_enabled()
            leaf = Tensor(self.params[name], requires_grad=trainable, name=name)
            self._leaves[name] = leaf
        return leaf

    def __contains__(self, name) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params.names())

    def __len__(self) -> int:
        return len(self.params)

    def grads(self) -> Dict[str, np.ndarray]:
        """Gradientes das folhas efetivamente usadas no grafo."""
        return {
            n: leaf.grad
            for n, leaf in sorted(self._leaves.items())
            if leaf.requires_grad and leaf.grad is not None
        }
