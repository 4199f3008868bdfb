"""
Rubricas de pontuação por tarefa.

Cada predicado é uma função pura da trajetória; um predicado vale ponto se
for satisfeito em algum estado visitado.
"""
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from src.errors import ConfigError
from src.world.scene import Scene
from src.world.tasks import Subgoal, TaskInstance, subgoal_satisfied


@dataclass
class Trace:
    """Estados visitados num episódio: poses [S, n, 2] e held_by [S, n]."""
    scene: Scene
    poses: np.ndarray
    held_by: np.ndarray

    def states(self):
        for poses, held in zip(self.poses, self.held_by):
            yield Scene(self.scene.objects, self.scene.zones, poses, held.copy(), step_rate=self.scene.step_rate)


Predicate = Callable[[Trace], bool]


@dataclass
class Rubric:
    task: str
    names: List[str]
    predicates: List[Predicate]

    @property
    def max_points(self) -> int:
        return len(self.predicates)

    def score(self, trace: Trace) -> Tuple[int, List[str]]:
        met = [name for name, pred in zip(self.names, self.predicates) if pred(trace)]
        return len(met), met


def placed(goal: Subgoal) -> Predicate:
    return lambda trace: any(subgoal_satisfied(goal, s) for s in trace.states())


def grasped(obj: int) -> Predicate:
    return lambda trace: bool(np.any(trace.held_by[:, obj] >= 0))


def rubric_for(instance: TaskInstance) -> Rubric:
    kind = instance.task.kind
    objects = instance.scene.objects
    names, preds = [], []
    if kind == "place":
        goal = instance.subgoals[0]
        names += [f"grasp {objects[goal.obj].name}", f"place {objects[goal.obj].name}"]
        preds += [grasped(goal.obj), placed(goal)]
    elif kind == "sort":
        for goal in instance.subgoals:
            names.append(f"place {objects[goal.obj].name} in zone {goal.zone}")
            preds.append(placed(goal))
    elif kind == "stack":
        base, top = instance.subgoals
        names += [f"place {objects[base.obj].name}", f"grasp {objects[top.obj].name}",
                  f"stack {objects[top.obj].name}"]
        preds += [placed(base), grasped(top.obj), placed(top)]
    else:
        raise ConfigError(f"Sem rubrica para o tipo de tarefa {kind}")
    return Rubric(instance.task.name, names, preds)
