"""
Expert roteirizado: controlador proporcional no espaço do efetuador com
Jacobiano amortecido (DLS) e máquina de fases derivada da própria cena.

Fases por subobjetivo: alcançar -> pegar -> transportar -> soltar. Como a fase
é recalculada a cada passo a partir da cena, o expert não guarda estado.
"""
from typing import Optional, Tuple

import numpy as np

from src.world.kinematics import KinematicEmbodiment, action_slices
from src.world.scene import Scene
from src.world.tasks import Subgoal, TaskInstance, subgoal_satisfied

GAIN = 0.06
MAX_EE_SPEED = 0.03
DAMPING = 0.05
REACH_TOLERANCE = 0.015

REACH, GRASP, TRANSPORT, RELEASE, IDLE = "reach", "grasp", "transport", "release", "idle"


def dls_step(emb: KinematicEmbodiment, arm: int, target) -> np.ndarray:
    """Comando de juntas normalizado em [-1, 1] que aproxima o efetuador do alvo."""
    err = np.asarray(target, dtype=np.float64) - emb.end_effector(arm)
    v = GAIN * err
    speed = float(np.linalg.norm(v))
    if speed > MAX_EE_SPEED:
        v *= MAX_EE_SPEED / speed
    J = emb.jacobian(arm)
    dq = J.T @ np.linalg.solve(J @ J.T + DAMPING ** 2 * np.eye(2), v)
    cmd = dq / emb.geometry.max_joint_speed
    peak = float(np.max(np.abs(cmd))) if cmd.size else 0.0
    if peak > 1.0:
        cmd /= peak
    return cmd


def active_subgoal(scene: Scene, task: TaskInstance) -> Optional[Subgoal]:
    for goal in task.subgoals:
        if not subgoal_satisfied(goal, scene):
            return goal
    return None


def current_phase(scene: Scene, emb: KinematicEmbodiment, task: TaskInstance) -> Tuple[str, Optional[Subgoal]]:
    goal = active_subgoal(scene, task)
    if goal is None:
        return IDLE, None
    arm = goal.arm
    if scene.held_by[goal.obj] == arm:
        target = task.target_of(goal, scene)
        if np.linalg.norm(emb.end_effector(arm) - target) <= REACH_TOLERANCE:
            return RELEASE, goal
        return TRANSPORT, goal
    if emb.closed(arm):
        # garra fechada sem objeto: abre antes de continuar
        return RELEASE, goal
    if np.linalg.norm(emb.end_effector(arm) - scene.poses[goal.obj]) <= REACH_TOLERANCE:
        return GRASP, goal
    return REACH, goal


def scripted_expert(scene: Scene, emb: KinematicEmbodiment, task: TaskInstance) -> np.ndarray:
    """
    Ação limitada em [-1, 1] para o estado corrente.

    Braços inativos ficam parados, apenas abrindo a garra se estiver fechada.
    """
    action = np.zeros(emb.spec.action_dim)
    slices = action_slices(emb.geometry)
    for a, (_, grip) in enumerate(slices):
        if emb.grippers[a] > 0.0 and scene.held_by.tolist().count(a) == 0:
            action[grip] = -1.0

    phase, goal = current_phase(scene, emb, task)
    if goal is None:
        return action
    joints, grip = slices[goal.arm]
    if phase == REACH:
        action[joints] = dls_step(emb, goal.arm, scene.poses[goal.obj])
        action[grip] = -1.0 if emb.grippers[goal.arm] > 0.0 else 0.0
    elif phase == GRASP:
        action[joints] = 0.0
        action[grip] = 1.0
    elif phase == TRANSPORT:
        action[joints] = dls_step(emb, goal.arm, task.target_of(goal, scene))
        action[grip] = 0.0
    elif phase == RELEASE:
        action[joints] = 0.0
        action[grip] = -1.0
    return action


class ScriptedExpert:
    """Interface chamável sobre scripted_expert para uma instância de tarefa."""

    def __init__(self, task: TaskInstance):
        self.task = task

    def __call__(self, scene: Scene, emb: KinematicEmbodiment) -> np.ndarray:
        return scripted_expert(scene, emb, self.task)

    def done(self, scene: Scene) -> bool:
        return active_subgoal(scene, self.task) is None
