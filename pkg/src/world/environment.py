"""
Transição do mundo e o ambiente usado na coleta e na avaliação.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from src.errors import TaskGenerationError
from src.world.annotate import grasp_candidate
from src.world.kinematics import KinematicEmbodiment, geometry
from src.world.raster import DEFAULT_PALETTE, Palette, gripper_boxes, render_views
from src.world.scene import Scene
from src.world.tasks import TaskInstance, generate_task, get_task

MAX_RESET_ATTEMPTS = 20


def step_env(scene: Scene, emb: KinematicEmbodiment, action) -> Tuple[Scene, KinematicEmbodiment]:
    """
    Aplica uma ação (cortada em [-1, 1]) e devolve novos estados.

    A pega é decidida com as poses anteriores dos objetos e a nova posição da
    garra; objetos segurados acompanham o efetuador.
    """
    emb2 = emb.apply_action(action)
    scene2 = scene.copy()
    boxes = scene.bboxes()
    g_boxes = gripper_boxes(emb2)
    for arm in range(emb2.geometry.n_arms):
        holding = np.flatnonzero(scene2.held_by == arm)
        closed = emb2.closed(arm)
        if holding.size and not closed:
            scene2.held_by[holding[0]] = -1
        elif not holding.size and closed and len(scene2.objects):
            i = grasp_candidate(g_boxes[arm], boxes, scene2.held_by >= 0)
            if i >= 0:
                scene2.held_by[i] = arm
    if len(scene2.objects):
        ee = emb2.end_effectors()
        held = scene2.held_by >= 0
        scene2.poses[held] = ee[scene2.held_by[held]]
        scene2.poses = scene2.clamp(scene2.poses)
    scene2.time = scene.time + 1
    return scene2, emb2


def sample_instance(task: str, embodiment: str, seed: int) -> TaskInstance:
    """Instância determinística da semente; poses inalcançáveis são sorteadas de novo."""
    spec = get_task(task)
    error = None
    for attempt in range(MAX_RESET_ATTEMPTS):
        try:
            return generate_task(spec, embodiment, np.random.default_rng([seed, attempt]))
        except TaskGenerationError as e:
            error = e
    raise TaskGenerationError(f"Semente {seed} sem instância válida de {task} em {embodiment}: {error}")


@dataclass
class Observation:
    """
    O que a política enxerga. Não há campo de subpasso: o raciocínio é saída.
    """
    embodiment: str
    instruction: str
    proprio: np.ndarray
    views: np.ndarray


@dataclass
class Trajectory:
    """Estados visitados (incluindo o inicial) para as rubricas."""
    poses: List[np.ndarray] = field(default_factory=list)
    held_by: List[np.ndarray] = field(default_factory=list)

    def record(self, scene: Scene):
        self.poses.append(scene.poses.copy())
        self.held_by.append(scene.held_by.copy())

    def __len__(self) -> int:
        return len(self.poses)

    def pose_array(self) -> np.ndarray:
        return np.stack(self.poses)

    def held_array(self) -> np.ndarray:
        return np.stack(self.held_by)


class Environment:
    def __init__(self, task: str, embodiment: str, seed: int, palette: Palette = DEFAULT_PALETTE,
                 instance: Optional[TaskInstance] = None):
        self.task_name = task
        self.embodiment_id = embodiment
        self.seed = seed
        self.palette = palette
        self._fixed_instance = instance
        self.instance: Optional[TaskInstance] = None
        self.scene: Optional[Scene] = None
        self.arm: Optional[KinematicEmbodiment] = None
        self.trajectory = Trajectory()

    def reset(self) -> Observation:
        if self._fixed_instance is not None:
            self.instance = self._fixed_instance
        else:
            self.instance = sample_instance(self.task_name, self.embodiment_id, self.seed)
        self.scene = self.instance.scene.copy()
        self.arm = self.instance.embodiment.copy()
        self.trajectory = Trajectory()
        self.trajectory.record(self.scene)
        return self.observe()

    @property
    def instruction(self) -> str:
        return self.instance.instruction

    @property
    def steps(self) -> int:
        return self.scene.time

    def observe(self) -> Observation:
        return Observation(
            embodiment=self.embodiment_id,
            instruction=self.instance.instruction,
            proprio=self.arm.proprio(),
            views=render_views(self.scene, self.arm, self.palette),
        )

    def step(self, action, render: bool = True) -> Optional[Observation]:
        self.scene, self.arm = step_env(self.scene, self.arm, action)
        self.trajectory.record(self.scene)
        return self.observe() if render else None


def scene_at(static: dict, object_pose: np.ndarray, proprio: np.ndarray, emb_id: str) -> Tuple[Scene, KinematicEmbodiment]:
    """Reconstrói cena e braço a partir das trilhas gravadas de um passo."""
    scene = Scene.from_static(static, object_pose)
    arm = KinematicEmbodiment.from_proprio(geometry(emb_id), proprio)
    return scene, arm


def views_from_record(record, step: int, palette: Palette = DEFAULT_PALETTE) -> np.ndarray:
    scene, arm = scene_at(record.scene, record.object_pose[step], record.proprio[step], record.embodiment)
    return render_views(scene, arm, palette)
