"""Shared training plumbing: epoch logs and padded batch assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError
from .vocab import PAD


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    tokens_per_sec: float
    dev_metric: float


@dataclass
class TrainingLog:
    """Per-epoch training history; ``dev_metric`` is perplexity for language
    models and micro-F1 for taggers."""

    metric_name: str
    records: list[EpochRecord] = field(default_factory=list)

    def add(self, epoch: int, loss: float, tokens_per_sec: float, dev_metric: float) -> None:
        if self.records and epoch <= self.records[-1].epoch:
            raise DataError(
                f"epoch indices must increase: got {epoch} after {self.records[-1].epoch}"
            )
        self.records.append(EpochRecord(epoch, loss, tokens_per_sec, dev_metric))

    def __len__(self) -> int:
        return len(self.records)

    def to_rows(self) -> list[tuple]:
        return [(r.epoch, r.loss, r.tokens_per_sec, r.dev_metric) for r in self.records]


def pad_id_batch(sequences: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length id arrays into a time-major (T, B) batch.

    Returns (ids, mask); padded slots hold PAD and mask 0.
    """
    B = len(sequences)
    T = max(len(s) for s in sequences)
    ids = np.full((T, B), PAD, dtype=np.int64)
    mask = np.zeros((T, B))
    for b, seq in enumerate(sequences):
        ids[: len(seq), b] = seq
        mask[: len(seq), b] = 1.0
    return ids, mask


def pad_vector_batch(sequences: Sequence[np.ndarray], dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length (n_i, dim) arrays into (T, B, dim) plus mask."""
    B = len(sequences)
    T = max((len(s) for s in sequences), default=0)
    out = np.zeros((T, B, dim))
    mask = np.zeros((T, B))
    for b, seq in enumerate(sequences):
        out[: len(seq), b, :] = seq
        mask[: len(seq), b] = 1.0
    return out, mask


def batched(indices: np.ndarray, size: int) -> list[np.ndarray]:
    return [indices[i:i + size] for i in range(0, len(indices), size)]
