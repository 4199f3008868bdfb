"""
Tarefas sintéticas, geração de instâncias com checagem de alcance e o
inventário de frases/instruções que define o vocabulário.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.errors import ConfigError, TaskGenerationError
from src.world.annotate import DONE_PHRASE, place_phrase, reach_phrase
from src.world.kinematics import EmbodimentGeometry, KinematicEmbodiment, geometry
from src.world.scene import (
    COLORS,
    SHAPES,
    ZONE_CENTERS,
    ZONE_OF_COLOR,
    Scene,
    SceneObject,
    default_zones,
)

OBJECT_X_RANGE = (0.12, 0.88)
OBJECT_Y_RANGE = (0.28, 0.45)
MIN_SEPARATION = 0.12
REACH_MARGIN = 0.92
MAX_PLACEMENT_ATTEMPTS = 200
STACK_TOLERANCE = 0.03


@dataclass(frozen=True)
class TaskSpec:
    name: str
    n_objects: int
    kind: str


TASKS: Dict[str, TaskSpec] = {
    "pick-place": TaskSpec("pick-place", 1, "place"),
    "sort-2": TaskSpec("sort-2", 2, "sort"),
    "sort-4": TaskSpec("sort-4", 4, "sort"),
    "stack-fold": TaskSpec("stack-fold", 2, "stack"),
}


def get_task(name: str) -> TaskSpec:
    if name not in TASKS:
        raise ConfigError(f"Tarefa desconhecida: {name} (opções: {sorted(TASKS)})")
    return TASKS[name]


@dataclass(frozen=True)
class Subgoal:
    obj: int
    zone: str
    arm: int
    stack_on: Optional[int] = None


@dataclass
class TaskInstance:
    task: TaskSpec
    scene: Scene
    embodiment: KinematicEmbodiment
    instruction: str
    subgoals: Tuple[Subgoal, ...]

    def target_of(self, goal: Subgoal, scene: Scene) -> np.ndarray:
        if goal.stack_on is not None:
            return scene.poses[goal.stack_on].copy()
        return np.asarray(scene.zone(goal.zone).center, dtype=np.float64)


def instruction_for(task: TaskSpec, objects: Tuple[SceneObject, ...]) -> str:
    if task.kind == "place":
        obj = objects[0]
        return f"put the {obj.color} {obj.shape} in zone {ZONE_OF_COLOR[obj.color]}"
    if task.kind == "sort":
        return "sort the objects by color"
    base, top = objects[0], objects[1]
    return f"stack the {top.color} {top.shape} on the {base.color} {base.shape}"


def phrase_inventory() -> Tuple[List[str], List[str]]:
    """Todas as instruções e frases de subpasso que o mundo pode emitir."""
    names = [f"{c} {s}" for c in COLORS for s in SHAPES]
    phrases = [DONE_PHRASE]
    for name in names:
        phrases.append(reach_phrase(name))
        phrases.extend(place_phrase(name, z) for z in sorted(ZONE_CENTERS))
    instructions = ["sort the objects by color"]
    for c in COLORS:
        for s in SHAPES:
            instructions.append(f"put the {c} {s} in zone {ZONE_OF_COLOR[c]}")
    for top in names:
        for base in names:
            instructions.append(f"stack the {top} on the {base}")
    return instructions, phrases


def reachable(geom: EmbodimentGeometry, arm: int, point) -> bool:
    g = geom.arms[arm]
    d = float(np.linalg.norm(np.asarray(point) - np.asarray(g.base)))
    return g.min_reach + 0.05 <= d <= REACH_MARGIN * g.reach


def assign_arm(geom: EmbodimentGeometry, obj_pose, target) -> int:
    """Braço mais próximo do objeto que alcança objeto e alvo; -1 se nenhum."""
    order = sorted(range(geom.n_arms), key=lambda a: abs(geom.arms[a].base[0] - obj_pose[0]))
    for a in order:
        if reachable(geom, a, obj_pose) and reachable(geom, a, target):
            return a
    return -1


def _sample_poses(n: int, rng: np.random.Generator) -> np.ndarray:
    poses = np.zeros((n, 2))
    for i in range(n):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            p = np.array([rng.uniform(*OBJECT_X_RANGE), rng.uniform(*OBJECT_Y_RANGE)])
            if all(np.linalg.norm(p - poses[j]) >= MIN_SEPARATION for j in range(i)):
                poses[i] = p
                break
        else:
            raise TaskGenerationError(f"Não foi possível posicionar {n} objetos separados")
    return poses


def _plan(task: TaskSpec, geom: EmbodimentGeometry, objects, poses) -> Tuple[Subgoal, ...]:
    if task.kind == "stack":
        base_zone = ZONE_OF_COLOR[objects[0].color]
        target = ZONE_CENTERS[base_zone]
        goals = [(0, base_zone, None, poses[0], target), (1, base_zone, 0, poses[1], target)]
    else:
        order = np.argsort(poses[:, 0], kind="stable")
        goals = [(int(i), ZONE_OF_COLOR[objects[i].color], None, poses[i],
                  ZONE_CENTERS[ZONE_OF_COLOR[objects[i].color]]) for i in order]
    subgoals = []
    for obj, zone, stack_on, pose, target in goals:
        arm = assign_arm(geom, pose, target)
        if arm < 0:
            raise TaskGenerationError(
                f"Alvo inalcançável para {geom.spec.id}: objeto em {np.round(pose, 3).tolist()} -> zona {zone}"
            )
        subgoals.append(Subgoal(obj, zone, arm, stack_on))
    return tuple(subgoals)


def generate_task(task: TaskSpec, emb_id: str, rng: np.random.Generator) -> TaskInstance:
    """
    Sorteia objetos, poses e a configuração inicial do braço.

    Raises:
        TaskGenerationError: poses sem separação ou alvo fora de alcance
    """
    geom = geometry(emb_id)
    colors = rng.permutation(len(COLORS))[: task.n_objects]
    objects = tuple(
        SceneObject(id=f"obj{i}", shape=SHAPES[int(rng.integers(len(SHAPES)))], color=COLORS[int(c)])
        for i, c in enumerate(colors)
    )
    poses = _sample_poses(task.n_objects, rng)
    subgoals = _plan(task, geom, objects, poses)
    scene = Scene(objects=objects, zones=default_zones(), poses=poses)
    arm = KinematicEmbodiment.home(geom, rng)
    return TaskInstance(task, scene, arm, instruction_for(task, objects), subgoals)


def subgoal_satisfied(goal: Subgoal, scene: Scene) -> bool:
    if scene.held_by[goal.obj] >= 0:
        return False
    pose = scene.poses[goal.obj]
    zone = scene.zone(goal.zone)
    if not zone.contains(pose):
        return False
    if goal.stack_on is None:
        return True
    return (
        scene.held_by[goal.stack_on] < 0
        and float(np.linalg.norm(pose - scene.poses[goal.stack_on])) <= STACK_TOLERANCE
    )
