"""Span-level evaluation: exact-match micro and per-type precision/recall/F1.

A predicted span counts as a true positive iff some gold span in the same
document has the identical (start, end, label) triple; each gold span can be
matched at most once. Precision/recall are defined as 0 when their
denominator is empty, and F1 = 2PR/(P+R) or 0 when P+R = 0.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .corpus import BIO_SHORT, EntityLabel, EntitySpan
from .errors import DataError


@dataclass(frozen=True)
class TypeScore:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class EvalResult:
    micro: TypeScore
    per_type: dict[EntityLabel, TypeScore]
    accuracy: float

    @property
    def micro_precision(self) -> float:
        return self.micro.precision

    @property
    def micro_recall(self) -> float:
        return self.micro.recall

    @property
    def micro_f1(self) -> float:
        return self.micro.f1

    def quality_scores(self) -> list[float]:
        """The pooled per-type and micro metrics, in a fixed order."""
        values: list[float] = []
        for label in EntityLabel:
            ts = self.per_type[label]
            values.extend((ts.precision, ts.recall, ts.f1))
        values.extend((self.micro.precision, self.micro.recall, self.micro.f1))
        return values


def _prf(tp: int, fp: int, fn: int) -> TypeScore:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return TypeScore(precision, recall, f1, tp, fp, fn)


def _tags_of(spans: Sequence[EntitySpan], length: int) -> list[str]:
    tags = ["O"] * length
    for s in spans:
        if s.end > length:
            raise DataError(f"span ({s.start}, {s.end}) exceeds document length {length}")
        short = BIO_SHORT[s.label]
        tags[s.start] = f"B-{short}"
        for i in range(s.start + 1, s.end):
            tags[i] = f"I-{short}"
    return tags


def score_spans(
    gold: Sequence[Sequence[EntitySpan]],
    predicted: Sequence[Sequence[EntitySpan]],
    lengths: Sequence[int] | None = None,
) -> EvalResult:
    """Score predictions against gold, document by document.

    ``gold[i]`` and ``predicted[i]`` are the spans of document i. ``lengths``
    supplies document lengths for tag accuracy; when omitted, each document
    is taken to end at the last span boundary it contains.
    """
    if len(gold) != len(predicted):
        raise DataError(f"gold has {len(gold)} documents, predictions {len(predicted)}")
    if lengths is not None and len(lengths) != len(gold):
        raise DataError("lengths must parallel the document lists")

    tp: Counter[EntityLabel] = Counter()
    fp: Counter[EntityLabel] = Counter()
    fn: Counter[EntityLabel] = Counter()
    correct_tags = 0
    total_tags = 0
    for i, (g_spans, p_spans) in enumerate(zip(gold, predicted)):
        g_count = Counter((s.start, s.end, s.label) for s in g_spans)
        p_count = Counter((s.start, s.end, s.label) for s in p_spans)
        for key in g_count.keys() | p_count.keys():
            matched = min(g_count[key], p_count[key])
            tp[key[2]] += matched
            fp[key[2]] += p_count[key] - matched
            fn[key[2]] += g_count[key] - matched
        if lengths is not None:
            length = lengths[i]
        else:
            length = max((s.end for s in list(g_spans) + list(p_spans)), default=0)
        g_tags = _tags_of(g_spans, length)
        p_tags = _tags_of(p_spans, length)
        correct_tags += sum(a == b for a, b in zip(g_tags, p_tags))
        total_tags += length

    per_type = {label: _prf(tp[label], fp[label], fn[label]) for label in EntityLabel}
    micro = _prf(sum(tp.values()), sum(fp.values()), sum(fn.values()))
    accuracy = correct_tags / total_tags if total_tags else 1.0
    return EvalResult(micro=micro, per_type=per_type, accuracy=accuracy)
