"""
Cena de mesa 2D no espaço de trabalho [0, 1]².
"""
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import ConfigError

WORKSPACE = (0.0, 0.0, 1.0, 1.0)
STEP_RATE = 10
MIN_SEGMENT_SECONDS = 5

OBJECT_HALF = 0.04
GRIPPER_HALF = 0.04
CAPTURE_RADIUS = 0.05
IOU_THRESHOLD = 0.25

COLORS = ("red", "blue", "green", "yellow")
SHAPES = ("disc", "rect")
ZONE_OF_COLOR = {"red": "a", "blue": "b", "green": "c", "yellow": "d"}
ZONE_CENTERS = {"a": (0.2, 0.65), "b": (0.4, 0.65), "c": (0.6, 0.65), "d": (0.8, 0.65)}
ZONE_HALF = 0.07


@dataclass(frozen=True)
class SceneObject:
    id: str
    shape: str
    color: str
    half: float = OBJECT_HALF

    @property
    def name(self) -> str:
        return f"{self.color} {self.shape}"

    def to_dict(self) -> dict:
        return {"id": self.id, "shape": self.shape, "color": self.color, "half": self.half}


@dataclass(frozen=True)
class Zone:
    id: str
    center: Tuple[float, float]
    half: float = ZONE_HALF

    @property
    def bbox(self) -> np.ndarray:
        cx, cy = self.center
        return np.array([cx - self.half, cy - self.half, cx + self.half, cy + self.half])

    def contains(self, point) -> bool:
        cx, cy = self.center
        return abs(point[0] - cx) <= self.half and abs(point[1] - cy) <= self.half

    def to_dict(self) -> dict:
        return {"id": self.id, "center": list(self.center), "half": self.half}


def default_zones() -> Tuple[Zone, ...]:
    return tuple(Zone(z, c) for z, c in sorted(ZONE_CENTERS.items()))


def box_around(center, half: float) -> np.ndarray:
    c = np.asarray(center, dtype=np.float64)
    return np.concatenate([c - half, c + half], axis=-1)


@dataclass
class Scene:
    """
    Objetos, zonas-alvo e o estado dinâmico (poses e quem segura cada objeto).

    held_by[i] é o índice do braço que segura o objeto i, ou -1.
    """
    objects: Tuple[SceneObject, ...]
    zones: Tuple[Zone, ...]
    poses: np.ndarray
    held_by: np.ndarray = None
    time: int = 0
    step_rate: int = STEP_RATE

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64).reshape(len(self.objects), 2)
        if self.held_by is None:
            self.held_by = np.full(len(self.objects), -1, dtype=np.int64)
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"Ids de objetos repetidos: {ids}")
        self.poses = self.clamp(self.poses)

    def clamp(self, poses: np.ndarray) -> np.ndarray:
        halves = np.array([o.half for o in self.objects], dtype=np.float64).reshape(-1, 1)
        return np.clip(poses, WORKSPACE[0] + halves, WORKSPACE[2] - halves)

    def copy(self) -> "Scene":
        return replace(self, poses=self.poses.copy(), held_by=self.held_by.copy())

    def bboxes(self) -> np.ndarray:
        if not self.objects:
            return np.zeros((0, 4))
        halves = np.array([o.half for o in self.objects])[:, None]
        return np.concatenate([self.poses - halves, self.poses + halves], axis=1)

    def zone(self, zone_id: str) -> Zone:
        for z in self.zones:
            if z.id == zone_id:
                return z
        raise ConfigError(f"Zona desconhecida: {zone_id}")

    def zone_at(self, point) -> Optional[Zone]:
        for z in self.zones:
            if z.contains(point):
                return z
        return None

    def static_dict(self) -> dict:
        return {
            "objects": [o.to_dict() for o in self.objects],
            "zones": [z.to_dict() for z in self.zones],
            "step_rate": self.step_rate,
        }

    @classmethod
    def from_static(cls, static: dict, poses, held_by=None, time: int = 0) -> "Scene":
        objects = tuple(SceneObject(**o) for o in static["objects"])
        zones = tuple(Zone(z["id"], tuple(z["center"]), z["half"]) for z in static["zones"])
        return cls(objects, zones, poses, held_by, time, static.get("step_rate", STEP_RATE))


def empty_scene() -> Scene:
    return Scene(objects=(), zones=(), poses=np.zeros((0, 2)))
