import json
import logging
import os
import subprocess
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Type, TypeVar

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError

from src.errors import ConfigError

load_dotenv()

PROJECT_ROOT = Path(__file__).parent.parent
CONFIGS_DIR = PROJECT_ROOT / "configs"
RUNS_DIR = Path(os.getenv("DEXVLA_RUNS_DIR", PROJECT_ROOT / "runs"))
DATA_DIR = Path(os.getenv("DEXVLA_DATA_DIR", PROJECT_ROOT / "data"))
CHECKPOINT_DIR = os.getenv("DEXVLA_CHECKPOINT")
LOG_LEVEL = os.getenv("LOG_LEVEL", "info")

# versões dos formatos gravados em disco
CHECKPOINT_FORMAT_VERSION = 1
EPISODE_FORMAT_VERSION = 1
MANIFEST_FORMAT_VERSION = 1

M = TypeVar("M", bound=BaseModel)


def setup_logging(level: Optional[str] = None):
    logging.basicConfig(
        level=(level or LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def load_yaml(path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Arquivo de configuração não encontrado: {path}")
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"Configuração inválida em {path}: esperado um mapeamento")
    return data


def apply_overrides(raw: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """
    Aplica overrides no formato chave.pontilhada=valor sobre o mapeamento bruto.

    Os valores são interpretados como escalares YAML (números, booleanos, listas).
    """
    result = json.loads(json.dumps(raw))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"Override inválido (esperado chave=valor): {item}")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = result
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = {}
                node[part] = child
            if not isinstance(child, dict):
                raise ConfigError(f"Override {key} atravessa um valor que não é mapeamento")
            node = child
        node[parts[-1]] = yaml.safe_load(value)
    return result


def validate(model: Type[M], raw: Dict[str, Any], source: str = "config") -> M:
    try:
        return model.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{source}: {where}: {first['msg']}") from e


def load_config(model: Type[M], path, overrides: Iterable[str] = ()) -> M:
    raw = apply_overrides(load_yaml(path), overrides)
    return validate(model, raw, source=str(path))


def git_describe() -> str:
    try:
        out = subprocess.check_output(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=PROJECT_ROOT,
            text=True,
            stderr=subprocess.DEVNULL,
        )
        return out.strip()
    except Exception:
        return "unknown"


def write_run_snapshot(out_dir, resolved: Dict[str, Any], seed: Optional[int]):
    """
    Grava resolved_config.json ao lado dos artefatos de uma execução.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = {
        "config": resolved,
        "seed": seed,
        "format_versions": {
            "checkpoint": CHECKPOINT_FORMAT_VERSION,
            "episode": EPISODE_FORMAT_VERSION,
            "manifest": MANIFEST_FORMAT_VERSION,
        },
        "git_describe": git_describe(),
    }
    path = out_dir / "resolved_config.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(snapshot, f, indent=2, sort_keys=True, default=str)
    return path
