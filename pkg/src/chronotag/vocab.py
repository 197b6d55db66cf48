"""Character vocabulary with reserved ids for padding and boundary symbols."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DataError

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<bos>", "<eos>")


@dataclass(frozen=True)
class Vocabulary:
    """Dense char -> id map; ids 0..3 are reserved for PAD/UNK/BOS/EOS."""

    symbols: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.symbols[: len(RESERVED)] != RESERVED:
            raise DataError("vocabulary must begin with the reserved symbols")
        object.__setattr__(
            self, "_index", {ch: i for i, ch in enumerate(self.symbols)}
        )

    @property
    def size(self) -> int:
        return len(self.symbols)

    def id_of(self, char: str) -> int:
        return self._index.get(char, UNK)

    def encode(self, text: Iterable[str]) -> np.ndarray:
        index = self._index
        return np.fromiter((index.get(ch, UNK) for ch in text), dtype=np.int64)

    def __contains__(self, char: str) -> bool:
        return char in self._index


def build_vocab(corpus: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Count characters over an iterable of texts and keep the frequent ones.

    Ordering is frequency-descending with code point as the tie-break, so the
    id assignment is a pure function of the corpus. Characters rarer than
    ``min_count`` fall back to UNK at encode time.
    """
    counts: Counter[str] = Counter()
    seen_any = False
    for text in corpus:
        seen_any = True
        counts.update(text)
    if not seen_any:
        raise DataError("cannot build a vocabulary from an empty corpus")
    kept = sorted(
        (ch for ch, c in counts.items() if c >= min_count),
        key=lambda ch: (-counts[ch], ch),
    )
    return Vocabulary(RESERVED + tuple(kept))
