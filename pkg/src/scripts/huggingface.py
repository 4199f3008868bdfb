import os
import shutil
import tempfile
from pathlib import Path
from typing import Dict, Optional

from dotenv import load_dotenv
from huggingface_hub import HfApi, create_repo, snapshot_download

from src.autodiff.checkpoint import BLOB_NAME, MANIFEST_NAME
from src.data.norm import NORM_STATS_NAME
from src.errors import ConfigError
from src.models.vocab import VOCAB_NAME

load_dotenv()

# arquivos que tornam um diretório de checkpoint autossuficiente
CHECKPOINT_FILES = [MANIFEST_NAME, BLOB_NAME, VOCAB_NAME, NORM_STATS_NAME]


def get_hf_api():
    token = os.getenv("HF_TOKEN")
    return HfApi(token=token), token


def get_repo_id(repo_name: Optional[str] = None, username: Optional[str] = None) -> str:
    username = username or os.getenv("HF_USERNAME")
    repo_name = repo_name or os.getenv("HF_REPO_NAME", "dexvla-desk")
    if not username:
        raise ConfigError("Configure HF_USERNAME no .env")
    return f"{username}/{repo_name}"


def create_readme(model_name: str, metadata: Dict, scores: Dict[str, float], min_score: float) -> str:
    scores_text = "".join(f"- **{task}**: {value:.4f}\n" for task, value in sorted(scores.items()))
    embodiments = ", ".join(metadata.get("embodiments", [])) or "-"
    expert = metadata.get("architecture", {}).get("expert", {})

    return f"""# {model_name}

Política visão-linguagem-ação de bancada: backbone causal com raciocínio por subpassos
e expert de difusão com cabeças por embodiment, treinada em mundo sintético 2D.

## Notas normalizadas
{scores_text}
## Critério de publicação

Publicado automaticamente porque todas as tarefas avaliadas têm nota média >= {min_score:.2f}.

## Uso
```python
from src.scripts.huggingface import download_checkpoint_from_hf
from src.models.policy import LearnedPolicy

path = download_checkpoint_from_hf("seu-usuario/dexvla-desk")
policy = LearnedPolicy.from_checkpoint(path)
```

## Detalhes

- **Estágio**: {metadata.get("stage", "-")}
- **Embodiments**: {embodiments}
- **Expert**: {expert.get("kind", "-")}, {expert.get("layers", "-")} camadas, largura {expert.get("hidden", "-")}
- **Passos de treino**: {metadata.get("steps", "-")}

## Arquivos

- `manifest.json`: nomes, shapes, dtypes e offsets dos parâmetros
- `params.bin`: bytes little-endian dos parâmetros
- `vocab.json`: vocabulário do backbone
- `norm_stats.json`: estatísticas de normalização por embodiment
"""


def upload_checkpoint_to_hf(repo_id: str, checkpoint_dir: Path, metadata: Dict, scores: Dict[str, float],
                            min_score: float, model_name: str = "DexVLA desk-scale") -> str:
    api, token = get_hf_api()

    create_repo(repo_id=repo_id, token=token, exist_ok=True)

    with tempfile.TemporaryDirectory() as temp_dir:
        temp_path = Path(temp_dir)

        for filename in CHECKPOINT_FILES:
            shutil.copy2(Path(checkpoint_dir) / filename, temp_path / filename)

        readme_content = create_readme(model_name, metadata, scores, min_score)
        (temp_path / "README.md").write_text(readme_content, encoding="utf-8")

        api.upload_folder(
            folder_path=temp_path,
            repo_id=repo_id,
            token=token
        )

    return f"https://huggingface.co/{repo_id}"


def download_checkpoint_from_hf(repo_id: str, local_dir: Optional[Path] = None) -> Path:
    token = os.getenv("HF_TOKEN")
    path = snapshot_download(repo_id=repo_id, token=token, allow_patterns=CHECKPOINT_FILES)
    if local_dir is None:
        return Path(path)

    local_dir = Path(local_dir)
    os.makedirs(local_dir, exist_ok=True)
    for filename in CHECKPOINT_FILES:
        shutil.copy2(Path(path) / filename, local_dir / filename)
    return local_dir
