from pathlib import Path

import pandas as pd

from src.autodiff.checkpoint import load_checkpoint
from src.models.embodiments import resolve
from src.models.policy import PolicyArchitecture, count_policy_params
from src.models.vocab import VOCAB_NAME, Vocabulary


def namespace(name: str) -> str:
    """head/<id>/... agrupa por embodiment; os demais pelo primeiro segmento."""
    parts = name.split("/")
    return "/".join(parts[:2]) if parts[0] == "head" else parts[0]


def parameter_table(params) -> pd.DataFrame:
    frame = pd.DataFrame(
        [(namespace(n), n, a.size, n in params.frozen) for n, a in params.items()],
        columns=["namespace", "name", "size", "frozen"],
    )
    return (
        frame.groupby("namespace", sort=True)
        .agg(tensors=("name", "count"), parameters=("size", "sum"))
        .reset_index()
    )


def main(checkpoint) -> pd.DataFrame:
    directory = Path(checkpoint)
    params, metadata = load_checkpoint(directory)
    table = parameter_table(params)
    total = int(table["parameters"].sum())

    print(f"Checkpoint {directory} (estágio {metadata.get('stage', '?')}, {metadata.get('steps', '?')} passos)")
    print(table.to_string(index=False))
    print(f"total: {total}")

    if "architecture" in metadata and (directory / VOCAB_NAME).exists():
        arch = PolicyArchitecture.model_validate(metadata["architecture"])
        vocab = Vocabulary.load(directory / VOCAB_NAME)
        embodiments = [resolve(e) for e in metadata.get("embodiments", [])]
        expected = count_policy_params(arch, len(vocab), int(metadata.get("stage", 1)), embodiments)
        status = "ok" if expected == total else "DIVERGE"
        print(f"contagem analítica: {expected} ({status})")
    return table
