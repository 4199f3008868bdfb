from src.world.environment import Environment, Observation, step_env
from src.world.raster import VIEWS, Palette, rasterize, render_views
from src.world.scene import Scene
from src.world.scripted import ScriptedExpert, scripted_expert
from src.world.tasks import TASKS, generate_task, get_task

__all__ = [
    "Environment",
    "Observation",
    "step_env",
    "VIEWS",
    "Palette",
    "rasterize",
    "render_views",
    "Scene",
    "ScriptedExpert",
    "scripted_expert",
    "TASKS",
    "generate_task",
    "get_task",
]
