"""
Rasterizador determinístico em ordem de pintura: fundo, zonas, objetos, elos
e garras. Função pura de (cena, braço, vista, paleta).
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from src.world.kinematics import KinematicEmbodiment
from src.world.scene import GRIPPER_HALF, Scene

RESOLUTION = 64
LINK_WIDTH = 0.025
GRIPPER_MARK = 0.02

RGB = Tuple[int, int, int]


@dataclass(frozen=True)
class ViewSpec:
    name: str
    x0: float
    y0: float
    x1: float
    y1: float


VIEWS: Tuple[ViewSpec, ...] = (
    ViewSpec("top", 0.0, 0.0, 1.0, 1.0),
    ViewSpec("left", 0.0, 0.2, 0.6, 0.8),
    ViewSpec("right", 0.4, 0.2, 1.0, 0.8),
)


@dataclass(frozen=True)
class Palette:
    name: str = "default"
    background: RGB = (235, 235, 225)
    zone: RGB = (190, 190, 190)
    link: RGB = (60, 60, 60)
    gripper_open: RGB = (20, 160, 160)
    gripper_closed: RGB = (160, 20, 160)
    objects: Dict[str, RGB] = field(default_factory=lambda: {
        "red": (220, 40, 40),
        "blue": (40, 70, 220),
        "green": (40, 170, 60),
        "yellow": (230, 200, 40),
    })

    def recolor(self, name: str, background: Optional[RGB] = None, zone: Optional[RGB] = None,
                objects: Optional[Dict[str, RGB]] = None) -> "Palette":
        return Palette(
            name=name,
            background=background or self.background,
            zone=zone or self.zone,
            link=self.link,
            gripper_open=self.gripper_open,
            gripper_closed=self.gripper_closed,
            objects={**self.objects, **(objects or {})},
        )


DEFAULT_PALETTE = Palette()
NOVEL_OBJECT_PALETTE = DEFAULT_PALETTE.recolor(
    "novel-object",
    objects={"red": (180, 30, 110), "blue": (40, 150, 200), "green": (120, 170, 30), "yellow": (240, 150, 40)},
)
NOVEL_SCENE_PALETTE = DEFAULT_PALETTE.recolor("novel-scene", background=(150, 160, 190), zone=(120, 120, 150))
NOVEL_BOTH_PALETTE = NOVEL_OBJECT_PALETTE.recolor(
    "novel-object+scene", background=NOVEL_SCENE_PALETTE.background, zone=NOVEL_SCENE_PALETTE.zone
)


def pixel_grid(view: ViewSpec, resolution: int = RESOLUTION) -> Tuple[np.ndarray, np.ndarray]:
    """Centros dos pixels em coordenadas do mundo; a linha 0 é o topo da vista."""
    xs = view.x0 + (np.arange(resolution) + 0.5) * (view.x1 - view.x0) / resolution
    ys = view.y1 - (np.arange(resolution) + 0.5) * (view.y1 - view.y0) / resolution
    return np.meshgrid(xs, ys)


def _segment_mask(px, py, a, b, half_width: float) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    t = np.zeros_like(px) if denom == 0 else np.clip(((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / denom, 0, 1)
    dx = px - (a[0] + t * ab[0])
    dy = py - (a[1] + t * ab[1])
    return dx * dx + dy * dy <= half_width * half_width


def rasterize(scene: Scene, emb: Optional[KinematicEmbodiment], view: ViewSpec,
              palette: Palette = DEFAULT_PALETTE, resolution: int = RESOLUTION) -> np.ndarray:
    px, py = pixel_grid(view, resolution)
    img = np.empty((resolution, resolution, 3), dtype=np.uint8)
    img[:] = palette.background

    for zone in scene.zones:
        cx, cy = zone.center
        img[(np.abs(px - cx) <= zone.half) & (np.abs(py - cy) <= zone.half)] = palette.zone

    for obj, (cx, cy) in zip(scene.objects, scene.poses):
        if obj.shape == "disc":
            mask = (px - cx) ** 2 + (py - cy) ** 2 <= obj.half ** 2
        else:
            mask = (np.abs(px - cx) <= obj.half) & (np.abs(py - cy) <= obj.half)
        img[mask] = palette.objects[obj.color]

    if emb is not None:
        for arm in range(emb.geometry.n_arms):
            points = emb.link_points(arm)
            for a, b in zip(points[:-1], points[1:]):
                img[_segment_mask(px, py, a, b, LINK_WIDTH / 2)] = palette.link
            ex, ey = points[-1]
            mark = (np.abs(px - ex) <= GRIPPER_MARK) & (np.abs(py - ey) <= GRIPPER_MARK)
            img[mark] = palette.gripper_closed if emb.closed(arm) else palette.gripper_open
    return img


def render_views(scene: Scene, emb: Optional[KinematicEmbodiment], palette: Palette = DEFAULT_PALETTE) -> np.ndarray:
    """As três vistas empilhadas: uint8 [3, 64, 64, 3]."""
    return np.stack([rasterize(scene, emb, v, palette) for v in VIEWS])


def gripper_boxes(emb: KinematicEmbodiment) -> np.ndarray:
    ee = emb.end_effectors()
    return np.concatenate([ee - GRIPPER_HALF, ee + GRIPPER_HALF], axis=1)
