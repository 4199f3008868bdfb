"""
Formato binário de episódio e manifest do dataset.

Layout do blob (little-endian):

    offset  tamanho  campo
    0       4        magic b"DXEP"
    4       2        versão do formato (uint16)
    6       16       id do embodiment (ASCII, completado com zeros)
    22      4        L, número de passos (uint32)
    26      2        P, dimensão da propriocepção (uint16)
    28      2        D, dimensão da ação (uint16)
    30      2        n, número de objetos (uint16)
    32      2        a, número de braços (uint16)
    34      2        número de ids da instrução (uint16)
    36      4        tamanho do rodapé JSON em bytes (uint32)
    40      ...      float32: proprio L×P, actions L×D, object_pose L×n×2,
                     object_bbox L×n×4, gripper_bbox L×a×4
    ...     ...      int32: ids da instrução
    ...     ...      rodapé JSON UTF-8 (anotações, cena estática, tarefa, semente)

As vistas não são gravadas: são re-renderizadas a partir das trilhas.
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from src.autodiff.checkpoint import atomic_write_bytes, atomic_write_json
from src.config import EPISODE_FORMAT_VERSION, MANIFEST_FORMAT_VERSION
from src.errors import DimensionError, FormatError, NumericError
from src.models.embodiments import resolve
from src.world.annotate import SubstepAnnotation
from src.world.environment import views_from_record
from src.world.raster import DEFAULT_PALETTE, Palette

log = logging.getLogger(__name__)

MAGIC = b"DXEP"
HEADER = struct.Struct("<4sH16sIHHHHHI")
MANIFEST_NAME = "manifest.json"
EPISODES_DIR = "episodes"
TRACKS = ("proprio", "actions", "object_pose", "object_bbox", "gripper_bbox")


@dataclass
class EpisodeRecord:
    embodiment: str
    proprio: np.ndarray
    actions: np.ndarray
    object_pose: np.ndarray
    object_bbox: np.ndarray
    gripper_bbox: np.ndarray
    instruction: str
    instruction_ids: np.ndarray
    annotations: SubstepAnnotation = field(default_factory=lambda: SubstepAnnotation([]))
    scene: Dict[str, Any] = field(default_factory=dict)
    task: str = ""
    seed: Optional[List[int]] = None

    @property
    def length(self) -> int:
        return int(self.actions.shape[0])

    @property
    def n_objects(self) -> int:
        return int(self.object_pose.shape[1])

    @property
    def n_arms(self) -> int:
        return int(self.gripper_bbox.shape[1])

    def views(self, step: int, palette: Palette = DEFAULT_PALETTE) -> np.ndarray:
        return views_from_record(self, step, palette)

    def validate(self):
        spec = resolve(self.embodiment)
        L = self.length
        for name in TRACKS:
            track = getattr(self, name)
            if track.shape[0] != L:
                raise DimensionError(f"Trilha {name} com {track.shape[0]} passos, esperado {L}")
            if not np.all(np.isfinite(track)):
                raise NumericError(f"Trilha {name} com valores não finitos")
        if self.actions.shape[1] != spec.action_dim:
            raise DimensionError(f"Ações com dimensão {self.actions.shape[1]}, {spec.id} espera {spec.action_dim}")
        if self.proprio.shape[1] != spec.proprio_dim:
            raise DimensionError(f"Propriocepção com dimensão {self.proprio.shape[1]}, {spec.id} espera {spec.proprio_dim}")
        if self.object_bbox.shape[1] != self.n_objects:
            raise DimensionError("object_bbox e object_pose com números de objetos diferentes")


def blob_size(L: int, P: int, D: int, n: int, a: int, n_instr: int, footer: int) -> int:
    return HEADER.size + 4 * L * (P + D + 2 * n + 4 * n + 4 * a) + 4 * n_instr + footer


def _footer(rec: EpisodeRecord) -> bytes:
    return json.dumps(
        {
            "annotations": rec.annotations.to_list(),
            "scene": rec.scene,
            "task": rec.task,
            "instruction": rec.instruction,
            "seed": rec.seed,
        },
        sort_keys=True,
    ).encode("utf-8")


def encode_episode(rec: EpisodeRecord) -> bytes:
    rec.validate()
    emb = rec.embodiment.encode("ascii")
    if len(emb) > 16:
        raise FormatError(f"Id de embodiment longo demais para o cabeçalho: {rec.embodiment}")
    footer = _footer(rec)
    ids = np.asarray(rec.instruction_ids, dtype="<i4")
    header = HEADER.pack(
        MAGIC, EPISODE_FORMAT_VERSION, emb, rec.length, rec.proprio.shape[1], rec.actions.shape[1],
        rec.n_objects, rec.n_arms, ids.size, len(footer),
    )
    body = b"".join(np.ascontiguousarray(getattr(rec, t), dtype="<f4").tobytes() for t in TRACKS)
    return header + body + ids.tobytes() + footer


def decode_episode(blob: bytes, source: str = "<memória>") -> EpisodeRecord:
    if len(blob) < HEADER.size:
        raise FormatError(f"{source}: arquivo menor que o cabeçalho")
    magic, version, emb, L, P, D, n, a, n_instr, n_footer = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"{source}: magic inválido {magic!r}")
    if version != EPISODE_FORMAT_VERSION:
        raise FormatError(f"{source}: versão {version} não suportada (esperado {EPISODE_FORMAT_VERSION})")
    expected = blob_size(L, P, D, n, a, n_instr, n_footer)
    if len(blob) != expected:
        raise FormatError(f"{source}: tamanho {len(blob)} difere do esperado {expected}")

    shapes = {
        "proprio": (L, P), "actions": (L, D), "object_pose": (L, n, 2),
        "object_bbox": (L, n, 4), "gripper_bbox": (L, a, 4),
    }
    offset = HEADER.size
    tracks = {}
    for name in TRACKS:
        count = int(np.prod(shapes[name]))
        tracks[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shapes[name]).astype(np.float32)
        offset += 4 * count
    ids = np.frombuffer(blob, dtype="<i4", count=n_instr, offset=offset).astype(np.int64)
    offset += 4 * n_instr
    try:
        footer = json.loads(blob[offset: offset + n_footer].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{source}: rodapé JSON inválido: {e}") from e

    return EpisodeRecord(
        embodiment=emb.rstrip(b"\0").decode("ascii"),
        instruction=footer["instruction"],
        instruction_ids=ids,
        annotations=SubstepAnnotation.from_list(footer["annotations"]),
        scene=footer["scene"],
        task=footer["task"],
        seed=footer["seed"],
        **tracks,
    )


def read_episode(path) -> EpisodeRecord:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"Episódio não encontrado: {path}")
    return decode_episode(path.read_bytes(), source=str(path))


def empty_manifest() -> Dict[str, Any]:
    return {"format_version": MANIFEST_FORMAT_VERSION, "episodes": [], "failures": [], "mixture": {}}


def read_manifest(directory) -> Dict[str, Any]:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise FormatError(f"Manifest não encontrado em: {directory}")
    with open(path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise FormatError(f"Versão de manifest {manifest.get('format_version')} não suportada")
    return manifest


def write_manifest(directory, manifest: Dict[str, Any]):
    Path(directory).mkdir(parents=True, exist_ok=True)
    atomic_write_json(Path(directory) / MANIFEST_NAME, manifest)


def write_episode(rec: EpisodeRecord, directory, episode_id: Optional[str] = None) -> str:
    """
    Grava o blob do episódio e acrescenta a entrada no manifest.

    Returns:
        id do arquivo (ex.: ep_000003)
    """
    directory = Path(directory)
    (directory / EPISODES_DIR).mkdir(parents=True, exist_ok=True)
    manifest = read_manifest(directory) if (directory / MANIFEST_NAME).exists() else empty_manifest()

    episode_id = episode_id or f"ep_{len(manifest['episodes']):06d}"
    file = f"{EPISODES_DIR}/{episode_id}.bin"
    atomic_write_bytes(directory / file, encode_episode(rec))

    manifest["episodes"].append({
        "id": episode_id,
        "file": file,
        "embodiment": rec.embodiment,
        "task": rec.task,
        "length": rec.length,
        "n_substeps": len(rec.annotations.segments),
        "seed": rec.seed,
    })
    write_manifest(directory, manifest)
    log.debug("Episódio %s gravado (%d passos)", episode_id, rec.length)
    return episode_id


def load_episodes(directory, entries: Optional[List[Dict[str, Any]]] = None) -> List[EpisodeRecord]:
    directory = Path(directory)
    entries = read_manifest(directory)["episodes"] if entries is None else entries
    return [read_episode(directory / e["file"]) for e in entries]
