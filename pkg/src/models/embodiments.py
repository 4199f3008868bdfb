"""
Especificações de embodiment e o registro usado para rotear cabeças do expert.
"""
from dataclasses import dataclass
from typing import Dict, Iterable, List

from src.errors import ConfigError, RegistryError


@dataclass(frozen=True)
class EmbodimentSpec:
    id: str
    action_dim: int
    proprio_dim: int
    display_name: str = ""

    def __post_init__(self):
        if self.action_dim < 1:
            raise ConfigError(f"action_dim precisa ser >= 1 ({self.id})")
        if self.proprio_dim < 1:
            raise ConfigError(f"proprio_dim precisa ser >= 1 ({self.id})")


class EmbodimentRegistry:
    def __init__(self, specs: Iterable[EmbodimentSpec] = ()):
        self._specs: Dict[str, EmbodimentSpec] = {}
        for spec in specs:
            self.register(spec)

    def register(self, spec: EmbodimentSpec):
        if spec.id in self._specs:
            raise ConfigError(f"Embodiment duplicada no registro: {spec.id}")
        self._specs[spec.id] = spec

    def get(self, emb_id: str) -> EmbodimentSpec:
        try:
            return self._specs[emb_id]
        except KeyError:
            raise RegistryError(f"Embodiment desconhecida: {emb_id}") from None

    def ids(self) -> List[str]:
        return sorted(self._specs)

    def specs(self) -> List[EmbodimentSpec]:
        return [self._specs[i] for i in self.ids()]

    def __contains__(self, emb_id: str) -> bool:
        return emb_id in self._specs

    def __len__(self) -> int:
        return len(self._specs)


# proprio por braço: ângulos das juntas, garra, posição (x, y) do efetuador
ARM3 = EmbodimentSpec("arm3", action_dim=4, proprio_dim=6, display_name="Braço planar de 3 elos")
ARM2 = EmbodimentSpec("arm2", action_dim=3, proprio_dim=5, display_name="Braço planar de 2 elos")
BIMAN2X2 = EmbodimentSpec("biman2x2", action_dim=6, proprio_dim=10, display_name="Bimanual 2x2 elos")

BUILTIN = EmbodimentRegistry([ARM3, ARM2, BIMAN2X2])


def resolve(emb, registry: EmbodimentRegistry = BUILTIN) -> EmbodimentSpec:
    if isinstance(emb, EmbodimentSpec):
        return emb
    return registry.get(emb)
