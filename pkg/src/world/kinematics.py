"""
Cinemática planar dos braços sintéticos.

Ações por braço: [dq_1 .. dq_n, garra], cada componente em [-1, 1]. As juntas
usam ângulos relativos; o primeiro é medido a partir do eixo x.
"""
from dataclasses import dataclass, replace
from typing import Dict, Tuple

import numpy as np

from src.errors import DimensionError, RegistryError
from src.models.embodiments import ARM2, ARM3, BIMAN2X2, EmbodimentSpec

MAX_JOINT_SPEED = 0.05
GRIPPER_SPEED = 0.25
GRIPPER_CLOSED = 0.5
JOINT_LIMIT = np.pi


@dataclass(frozen=True)
class ArmGeometry:
    base: Tuple[float, float]
    links: Tuple[float, ...]

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def reach(self) -> float:
        return float(sum(self.links))

    @property
    def min_reach(self) -> float:
        return max(0.0, self.links[0] - sum(self.links[1:]))


@dataclass(frozen=True)
class EmbodimentGeometry:
    spec: EmbodimentSpec
    arms: Tuple[ArmGeometry, ...]
    max_joint_speed: float = MAX_JOINT_SPEED
    gripper_speed: float = GRIPPER_SPEED

    @property
    def n_arms(self) -> int:
        return len(self.arms)


GEOMETRY: Dict[str, EmbodimentGeometry] = {
    "arm3": EmbodimentGeometry(ARM3, (ArmGeometry((0.5, 0.1), (0.3, 0.25, 0.2)),)),
    "arm2": EmbodimentGeometry(ARM2, (ArmGeometry((0.5, 0.1), (0.4, 0.35)),)),
    "biman2x2": EmbodimentGeometry(
        BIMAN2X2,
        (ArmGeometry((0.25, 0.1), (0.35, 0.3)), ArmGeometry((0.75, 0.1), (0.35, 0.3))),
    ),
}


def geometry(emb_id: str) -> EmbodimentGeometry:
    try:
        return GEOMETRY[emb_id]
    except KeyError:
        raise RegistryError(f"Embodiment sem cinemática registrada: {emb_id}") from None


@dataclass
class KinematicEmbodiment:
    geometry: EmbodimentGeometry
    joints: Tuple[np.ndarray, ...]
    grippers: np.ndarray

    @property
    def spec(self) -> EmbodimentSpec:
        return self.geometry.spec

    def copy(self) -> "KinematicEmbodiment":
        return replace(self, joints=tuple(q.copy() for q in self.joints), grippers=self.grippers.copy())

    def link_points(self, arm: int) -> np.ndarray:
        """Base, juntas e efetuador do braço: [n_links + 1, 2]."""
        g = self.geometry.arms[arm]
        theta = np.cumsum(self.joints[arm])
        steps = np.stack([np.cos(theta), np.sin(theta)], axis=1) * np.asarray(g.links)[:, None]
        return np.vstack([np.asarray(g.base, dtype=np.float64), np.asarray(g.base) + np.cumsum(steps, axis=0)])

    def end_effector(self, arm: int) -> np.ndarray:
        return self.link_points(arm)[-1]

    def end_effectors(self) -> np.ndarray:
        return np.stack([self.end_effector(a) for a in range(self.geometry.n_arms)])

    def jacobian(self, arm: int) -> np.ndarray:
        """dEE/dq [2, n_links]"""
        g = self.geometry.arms[arm]
        theta = np.cumsum(self.joints[arm])
        links = np.asarray(g.links)
        dx = -links * np.sin(theta)
        dy = links * np.cos(theta)
        # coluna i soma as contribuições dos elos j >= i
        return np.stack([np.cumsum(dx[::-1])[::-1], np.cumsum(dy[::-1])[::-1]])

    def closed(self, arm: int) -> bool:
        return bool(self.grippers[arm] > GRIPPER_CLOSED)

    def proprio(self) -> np.ndarray:
        parts = []
        for a in range(self.geometry.n_arms):
            parts.extend([self.joints[a], [self.grippers[a]], self.end_effector(a)])
        return np.concatenate(parts).astype(np.float64)

    def apply_action(self, action) -> "KinematicEmbodiment":
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.spec.action_dim,):
            raise DimensionError(f"Ação com shape {action.shape}, {self.spec.id} espera ({self.spec.action_dim},)")
        action = np.clip(np.nan_to_num(action), -1.0, 1.0)
        out = self.copy()
        offset = 0
        for a, g in enumerate(self.geometry.arms):
            n = g.n_links
            dq = action[offset: offset + n] * self.geometry.max_joint_speed
            out.joints[a][:] = np.clip(self.joints[a] + dq, -JOINT_LIMIT, JOINT_LIMIT)
            grip = action[offset + n] * self.geometry.gripper_speed
            out.grippers[a] = np.clip(self.grippers[a] + grip, 0.0, 1.0)
            offset += n + 1
        return out

    @classmethod
    def from_proprio(cls, geom: EmbodimentGeometry, proprio) -> "KinematicEmbodiment":
        proprio = np.asarray(proprio, dtype=np.float64)
        joints, grippers, offset = [], [], 0
        for g in geom.arms:
            joints.append(proprio[offset: offset + g.n_links].copy())
            grippers.append(proprio[offset + g.n_links])
            offset += g.n_links + 3
        return cls(geom, tuple(joints), np.asarray(grippers, dtype=np.float64))

    @classmethod
    def home(cls, geom: EmbodimentGeometry, rng: np.random.Generator) -> "KinematicEmbodiment":
        """Braços apontando para cima com leve dobra e garras abertas."""
        joints = []
        for g in geom.arms:
            q = np.zeros(g.n_links)
            q[0] = np.pi / 2 + rng.uniform(-0.25, 0.25)
            q[1:] = rng.uniform(-0.6, -0.3, size=g.n_links - 1) * np.sign(g.base[0] - 0.5 + 1e-9)
            joints.append(q)
        return cls(geom, tuple(joints), np.zeros(geom.n_arms))


def action_slices(geom: EmbodimentGeometry):
    """(juntas, garra) de cada braço dentro do vetor de ação."""
    out, offset = [], 0
    for g in geom.arms:
        out.append((slice(offset, offset + g.n_links), offset + g.n_links))
        offset += g.n_links + 1
    return out
