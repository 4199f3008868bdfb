"""
Figuras estáticas a partir das tabelas de avaliação e dos logs de treino.
"""
import logging
from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from src.errors import FormatError  # noqa: E402

log = logging.getLogger(__name__)

# colunas aceitas como rótulo da barra, na ordem de preferência
LABEL_COLUMNS = ("arm", "condition", "task")
SCORE_COLUMNS = ("mean_score", "steps_per_sec")


def _columns(table: pd.DataFrame, source) -> tuple:
    label = next((c for c in LABEL_COLUMNS if c in table.columns), None)
    value = next((c for c in SCORE_COLUMNS if c in table.columns), None)
    if label is None or value is None:
        raise FormatError(f"{source}: tabela sem colunas de rótulo/nota ({list(table.columns)})")
    return label, value


def plot_scores(csv_path, out_path=None, title: str = None) -> Path:
    """Barras da nota média (com desvio, quando houver) por tarefa, braço ou condição."""
    csv_path = Path(csv_path)
    table = pd.read_csv(csv_path)
    label, value = _columns(table, csv_path)
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".png")

    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(table)), 3.5))
    yerr = table["std_score"] if "std_score" in table.columns else None
    ax.bar(table[label].astype(str), table[value], yerr=yerr, capsize=4, color="#4c72b0")
    if value == "mean_score":
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("nota normalizada")
    else:
        ax.set_ylabel("passos/s")
    ax.set_title(title or csv_path.stem)
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    log.info("Figura salva em %s", out_path)
    return out_path


def plot_losses(metrics_path, out_path=None) -> Path:
    metrics_path = Path(metrics_path)
    frame = pd.read_json(metrics_path, lines=True)
    if frame.empty:
        raise FormatError(f"{metrics_path}: nenhum passo registrado")
    out_path = Path(out_path) if out_path else metrics_path.with_name("losses.png")

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for column in ("loss", "l_diff", "l_ntp"):
        if column in frame.columns and frame[column].abs().sum() > 0:
            ax.plot(frame["step"], frame[column], label=column)
    ax.set_xlabel("passo")
    ax.set_ylabel("perda")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    log.info("Curva de perda salva em %s", out_path)
    return out_path


def plot_directory(directory) -> List[Path]:
    """Gera uma figura para cada CSV de notas e cada metrics.jsonl sob `directory`."""
    directory = Path(directory)
    outputs = []
    for csv_path in sorted(directory.rglob("*.csv")):
        if csv_path.name in ("scores.csv", "comparison.csv", "generalization.csv"):
            outputs.append(plot_scores(csv_path))
    for metrics in sorted(directory.rglob("metrics.jsonl")):
        outputs.append(plot_losses(metrics))
    if not outputs:
        raise FormatError(f"Nada para plotar em {directory}")
    return outputs
