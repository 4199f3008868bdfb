"""
Anotação de subpassos a partir das trilhas de caixas.

Eventos de pega: a garra fecha com IoU(garra, objeto) acima do limiar dentro do
raio de captura, a mesma regra aplicada pelo ambiente. Soltura: a garra abre
segurando um objeto. Segmentos curtos são fundidos com o seguinte até somarem
o mínimo de cinco segundos.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.errors import AnnotationError
from src.world.kinematics import GRIPPER_CLOSED, geometry
from src.world.scene import CAPTURE_RADIUS, IOU_THRESHOLD, MIN_SEGMENT_SECONDS, STEP_RATE, Scene

log = logging.getLogger(__name__)

DONE_PHRASE = "done"


def iou(a, b) -> float:
    """IoU de duas caixas (x0, y0, x1, y1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union) if union > 0 else 0.0


def box_center(box) -> np.ndarray:
    box = np.asarray(box, dtype=np.float64)
    return (box[..., :2] + box[..., 2:]) / 2.0


def grasp_candidate(gripper_box, object_boxes, held_mask) -> int:
    """Índice do objeto capturável pela garra, ou -1 (maior IoU, menor índice no empate)."""
    best, best_iou = -1, IOU_THRESHOLD
    g_center = box_center(gripper_box)
    for i, box in enumerate(object_boxes):
        if held_mask[i]:
            continue
        value = iou(gripper_box, box)
        if value >= best_iou and np.linalg.norm(box_center(box) - g_center) <= CAPTURE_RADIUS:
            if best < 0 or value > best_iou:
                best, best_iou = i, value
    return best


def reach_phrase(obj_name: str) -> str:
    return f"reach {obj_name}"


def place_phrase(obj_name: str, zone_id: str) -> str:
    return f"place {obj_name} in zone {zone_id}"


@dataclass
class Segment:
    start: int
    end: int
    phrase: str
    token_ids: List[int] = field(default_factory=list)

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class SubstepAnnotation:
    segments: List[Segment]

    def phrase_at(self, step: int) -> Segment:
        for seg in self.segments:
            if seg.start <= step < seg.end:
                return seg
        raise AnnotationError(f"Passo {step} fora dos segmentos anotados")

    def phrases(self) -> List[str]:
        return [s.phrase for s in self.segments]

    def to_list(self) -> list:
        return [{"start": s.start, "end": s.end, "phrase": s.phrase, "token_ids": list(s.token_ids)}
                for s in self.segments]

    @classmethod
    def from_list(cls, items: list) -> "SubstepAnnotation":
        return cls([Segment(int(i["start"]), int(i["end"]), i["phrase"], list(i["token_ids"])) for i in items])


@dataclass
class GraspEvent:
    step: int
    kind: str
    obj: int
    arm: int


def detect_events(proprio: np.ndarray, object_bbox: np.ndarray, gripper_bbox: np.ndarray,
                  emb_id: str) -> List[GraspEvent]:
    geom = geometry(emb_id)
    grip_index, offset = [], 0
    for arm in geom.arms:
        grip_index.append(offset + arm.n_links)
        offset += arm.n_links + 3

    L, n_obj = object_bbox.shape[:2]
    held_by = np.full(n_obj, -1)
    events: List[GraspEvent] = []
    for k in range(L):
        for a, gi in enumerate(grip_index):
            closed = proprio[k, gi] > GRIPPER_CLOSED
            holding = np.flatnonzero(held_by == a)
            if holding.size and not closed:
                held_by[holding[0]] = -1
                events.append(GraspEvent(k, "release", int(holding[0]), a))
            elif not holding.size and closed:
                i = grasp_candidate(gripper_bbox[k, a], object_bbox[k], held_by >= 0)
                if i >= 0:
                    held_by[i] = a
                    events.append(GraspEvent(k, "grasp", i, a))
    return events


def merge_segments(raw: List[Segment], min_len: int) -> List[Segment]:
    """Funde para frente enquanto o segmento corrente for menor que min_len."""
    merged: List[Segment] = []
    current: Optional[Segment] = None
    for seg in raw:
        if seg.length <= 0:
            continue
        if current is None:
            current = Segment(seg.start, seg.end, seg.phrase)
        elif current.length < min_len:
            current.end = seg.end
        else:
            merged.append(current)
            current = Segment(seg.start, seg.end, seg.phrase)
    if current is not None:
        merged.append(current)
    return merged


def annotate_substeps(episode, phrase_inventory, episode_id: str = "") -> SubstepAnnotation:
    """
    Args:
        episode: registro com proprio, object_bbox, gripper_bbox, scene e embodiment
        phrase_inventory: Vocabulary usado para tokenizar as frases
    """
    name = episode_id or getattr(episode, "seed", "")
    for track in ("proprio", "object_bbox", "gripper_bbox"):
        if getattr(episode, track, None) is None:
            raise AnnotationError(f"Episódio {name} sem a trilha {track}")
    L = episode.proprio.shape[0]
    if episode.object_bbox.shape[0] != L or episode.gripper_bbox.shape[0] != L:
        raise AnnotationError(f"Episódio {name} com trilhas de comprimentos diferentes")

    scene = Scene.from_static(episode.scene, episode.object_pose[0])
    events = detect_events(episode.proprio, episode.object_bbox, episode.gripper_bbox, episode.embodiment)

    raw, cursor = [], 0
    for ev in events:
        obj = scene.objects[ev.obj]
        if ev.kind == "grasp":
            raw.append(Segment(cursor, ev.step, reach_phrase(obj.name)))
        else:
            pose = box_center(episode.object_bbox[ev.step, ev.obj])
            zone = scene.zone_at(pose)
            if zone is None:
                zone = min(scene.zones, key=lambda z: np.linalg.norm(np.asarray(z.center) - pose))
            raw.append(Segment(cursor, ev.step, place_phrase(obj.name, zone.id)))
        cursor = ev.step
    raw.append(Segment(cursor, L, DONE_PHRASE))

    min_len = MIN_SEGMENT_SECONDS * getattr(scene, "step_rate", STEP_RATE)
    segments = merge_segments(raw, min_len)
    for seg in segments:
        seg.token_ids = phrase_inventory.tokenize(seg.phrase)
    log.debug("Episódio %s anotado com %d segmentos", name, len(segments))
    return SubstepAnnotation(segments)
