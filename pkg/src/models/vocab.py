import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np

from src.errors import FormatError, IngestError

PAD, BOS, EOS, SEP = "<pad>", "<bos>", "<eos>", "<sep>"
SPECIAL_TOKENS = (PAD, BOS, EOS, SEP)
PAD_ID, BOS_ID, EOS_ID, SEP_ID = 0, 1, 2, 3
VOCAB_NAME = "vocab.json"


def words(text: str) -> List[str]:
    return text.lower().split()


@dataclass
class Vocabulary:
    """
    Tokens densos a partir de 0; os quatro especiais ocupam os primeiros ids.
    """
    tokens: List[str]
    phrases: List[str] = field(default_factory=list)

    def __post_init__(self):
        if tuple(self.tokens[:4]) != SPECIAL_TOKENS:
            raise FormatError(f"Vocabulário sem tokens especiais no início: {self.tokens[:4]}")
        if len(set(self.tokens)) != len(self.tokens):
            raise FormatError("Vocabulário com tokens duplicados")
        self._index: Dict[str, int] = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def tokenize(self, text: str) -> List[int]:
        ids = []
        for word in words(text):
            if word not in self._index:
                raise IngestError(f"Palavra fora do vocabulário: '{word}'")
            ids.append(self._index[word])
        return ids

    def detokenize(self, ids: Iterable[int]) -> str:
        return " ".join(self.tokens[i] for i in ids if i >= len(SPECIAL_TOKENS))

    def encode_padded(self, text: str, cap: int) -> np.ndarray:
        """Ids da frase truncados em cap e completados com PAD."""
        ids = self.tokenize(text)[:cap]
        out = np.full(cap, PAD_ID, dtype=np.int64)
        out[: len(ids)] = ids
        return out

    def encode_span(self, text: str, cap: int) -> np.ndarray:
        """[BOS, w1..wn, EOS, PAD...] com comprimento cap + 2."""
        ids = self.tokenize(text)[:cap]
        out = np.full(cap + 2, PAD_ID, dtype=np.int64)
        out[0] = BOS_ID
        out[1: 1 + len(ids)] = ids
        out[1 + len(ids)] = EOS_ID
        return out

    def to_json(self) -> str:
        return json.dumps(self.tokens)

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        path = Path(path)
        if not path.exists():
            raise FormatError(f"vocab.json não encontrado: {path}")
        tokens = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(tokens, list):
            raise FormatError(f"vocab.json deve ser uma lista: {path}")
        return cls(tokens=tokens)


def build_vocabulary(instructions: Sequence[str], phrases: Sequence[str]) -> Vocabulary:
    """
    Vocabulário fechado: especiais seguidos das palavras em ordem alfabética.
    """
    seen = set()
    for text in list(instructions) + list(phrases):
        seen.update(words(text))
    seen -= set(SPECIAL_TOKENS)
    return Vocabulary(tokens=list(SPECIAL_TOKENS) + sorted(seen), phrases=sorted(set(phrases)))
