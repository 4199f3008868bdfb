from pathlib import Path
from typing import List

from src.errors import ConfigError
from src.evaluation.plots import plot_directory, plot_losses, plot_scores


def main(path, out=None) -> List[Path]:
    """Um CSV de notas, um metrics.jsonl ou um diretório de execução inteiro."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Caminho não encontrado: {path}")
    if path.is_dir():
        outputs = plot_directory(path)
    elif path.suffix == ".jsonl":
        outputs = [plot_losses(path, out)]
    else:
        outputs = [plot_scores(path, out)]
    for output in outputs:
        print(f"Figura: {output}")
    return outputs
