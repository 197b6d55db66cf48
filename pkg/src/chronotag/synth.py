"""Synthetic annotated-corpus generator.

Stands in for the registration-gated historical corpus: paragraphs are
sequences of short phrases over a classical-Chinese-flavoured alphabet,
with entity mentions planted from per-label lexicons and standoff markers
(phrase boundaries, king-spaces, historians' notes) recorded exactly.

Two knobs shape the experiments:

* ``drift`` swaps a fraction of each lexicon for fresh entries when writing
  the future reign, so future text mentions entities the past never saw;
* ``informative_markers`` makes every mention occupy a whole phrase, so in
  the marked rendering each entity sits between boundary glyphs. With the
  flag off, mentions are buried at arbitrary offsets inside longer phrases
  and markers carry no entity signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import AnnotatedParagraph, EntityLabel, EntitySpan, MarkerKind, MarkerSpan
from .errors import ConfigError

# Character pools. The special head/tail characters below are deliberately
# excluded from the background alphabet so a planted mention can never also
# occur as accidental background text.
BACKGROUND_CHARS = (
    "之乎者也而不其以於為有無是此彼天地人事言行道德仁義禮樂刑政"
    "春秋冬夏日月米穀兵馬宮室門戶內外上下左右前後東西南北王命臣民朝夕雲雨風雪"
)
PERSON_HEADS = "金李朴崔鄭趙尹張韓吳"
LOCATION_TAILS = "州郡城山江浦"
BOOK_HEADS = "御經錄"
BOOK_TAILS = "書志記"
KING_CHAR = "王"

_NOTE_KINDS = (MarkerKind.OMISSION_NOTE, MarkerKind.COMPARATIVE_NOTE, MarkerKind.LINKING_NOTE)


@dataclass(frozen=True)
class SynthConfig:
    past_reign: str = "injo"
    future_reign: str = "soonjong"
    past_paragraphs: int = 200
    future_paragraphs: int = 50
    phrases_min: int = 3
    phrases_max: int = 6
    phrase_len_min: int = 4
    phrase_len_max: int = 10
    entity_rate: float = 0.35
    drift: float = 0.0
    note_rate: float = 0.08
    king_space: bool = True
    informative_markers: bool = True
    # background text follows a sparse first-order char chain: each character
    # allows `background_branch` successors, taken uniformly except for a
    # `background_noise` chance of an arbitrary character. branch 0 = IID.
    background_branch: int = 3
    background_noise: float = 0.1
    alphabet: str = BACKGROUND_CHARS
    lexicons: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    drift_lexicons: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    reign_years: Mapping[str, tuple[int, int]] = field(
        default_factory=lambda: {"injo": (1623, 1649), "soonjong": (1907, 1910)}
    )


@dataclass(frozen=True)
class MentionRecord:
    """Bookkeeping for one planted mention (generator ground truth)."""

    paragraph_id: str
    start: int
    end: int
    label: EntityLabel
    entry: str
    drifted: bool


@dataclass(frozen=True)
class SynthResult:
    paragraphs: tuple[AnnotatedParagraph, ...]
    mentions: tuple[MentionRecord, ...]

    def future_drift_fraction(self, future_reign: str) -> float:
        future = [m for m in self.mentions if m.paragraph_id.startswith(future_reign)]
        if not future:
            return 0.0
        return sum(m.drifted for m in future) / len(future)


def _make_entries(
    rng: np.random.Generator,
    label: EntityLabel,
    count: int,
    body_chars: str,
    taken: set[str],
) -> tuple[str, ...]:
    """Draw ``count`` distinct lexicon entries for one label.

    Every entry contains a label-specific head/tail character absent from the
    background alphabet, so entries cannot arise as background noise.
    """
    entries: list[str] = []
    while len(entries) < count:
        body_len = int(rng.integers(1, 3))  # 1 or 2 interior chars
        body = "".join(body_chars[int(i)] for i in rng.integers(0, len(body_chars), size=body_len))
        if label is EntityLabel.PERSON:
            entry = PERSON_HEADS[int(rng.integers(0, len(PERSON_HEADS)))] + body
        elif label is EntityLabel.LOCATION:
            entry = body + LOCATION_TAILS[int(rng.integers(0, len(LOCATION_TAILS)))]
        else:
            entry = (
                BOOK_HEADS[int(rng.integers(0, len(BOOK_HEADS)))]
                + body
                + BOOK_TAILS[int(rng.integers(0, len(BOOK_TAILS)))]
            )
        if entry not in taken:
            taken.add(entry)
            entries.append(entry)
    return tuple(entries)


def default_lexicons(
    seed: int = 7,
    sizes: Mapping[EntityLabel, int] | None = None,
    drift_sizes: Mapping[EntityLabel, int] | None = None,
    alphabet: str = BACKGROUND_CHARS,
) -> tuple[dict[str, tuple[str, ...]], dict[str, tuple[str, ...]]]:
    """Build deterministic per-label lexicons plus disjoint drift replacements."""
    sizes = sizes or {EntityLabel.PERSON: 20, EntityLabel.LOCATION: 12, EntityLabel.BOOK: 8}
    drift_sizes = drift_sizes or {k: v for k, v in sizes.items()}
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    lexicons = {
        label.value: _make_entries(rng, label, sizes[label], alphabet, taken)
        for label in EntityLabel
    }
    drift = {
        label.value: _make_entries(rng, label, drift_sizes[label], alphabet, taken)
        for label in EntityLabel
    }
    return lexicons, drift


def default_synth_config(**overrides) -> SynthConfig:
    lexicons, drift_lexicons = default_lexicons()
    return SynthConfig(lexicons=lexicons, drift_lexicons=drift_lexicons, **overrides)


def _reign_lexicons(
    config: SynthConfig, rng: np.random.Generator, future: bool
) -> dict[EntityLabel, list[tuple[str, bool]]]:
    """Lexicon per label for one reign; entries tagged with their drift origin."""
    out: dict[EntityLabel, list[tuple[str, bool]]] = {}
    for label in EntityLabel:
        base = list(config.lexicons.get(label.value, ()))
        if not base:
            raise ConfigError(f"empty lexicon for requested label {label.value}")
        entries = [(e, False) for e in base]
        if future and config.drift > 0:
            n_swap = int(round(config.drift * len(base)))
            pool = list(config.drift_lexicons.get(label.value, ()))
            if n_swap > len(pool):
                raise ConfigError(
                    f"drift {config.drift} needs {n_swap} replacement entries for "
                    f"{label.value}, got {len(pool)}"
                )
            swap_idx = rng.choice(len(base), size=n_swap, replace=False)
            fresh = rng.choice(len(pool), size=n_swap, replace=False)
            for i, j in zip(swap_idx, fresh):
                entries[int(i)] = (pool[int(j)], True)
        out[label] = entries
    return out


class _BackgroundSource:
    """Phrase sampler over the alphabet, optionally Markov-structured."""

    def __init__(self, config: SynthConfig, rng: np.random.Generator):
        self.alphabet = config.alphabet
        self.noise = config.background_noise
        self.successors: np.ndarray | None = None
        if config.background_branch > 0:
            n = len(self.alphabet)
            branch = min(config.background_branch, n)
            self.successors = np.empty((n, branch), dtype=np.int64)
            for i in range(n):
                self.successors[i] = rng.choice(n, size=branch, replace=False)

    def phrase(self, rng: np.random.Generator, length: int) -> str:
        n = len(self.alphabet)
        if self.successors is None:
            return "".join(self.alphabet[int(i)] for i in rng.integers(0, n, size=length))
        out = []
        cur = int(rng.integers(0, n))
        out.append(cur)
        for _ in range(length - 1):
            if rng.random() < self.noise:
                cur = int(rng.integers(0, n))
            else:
                row = self.successors[cur]
                cur = int(row[int(rng.integers(0, len(row)))])
            out.append(cur)
        return "".join(self.alphabet[i] for i in out)


def _paragraph(
    config: SynthConfig,
    rng: np.random.Generator,
    pid: str,
    reign: str,
    year: int,
    lexicons: dict[EntityLabel, list[tuple[str, bool]]],
    mentions: list[MentionRecord],
    background: _BackgroundSource,
) -> AnnotatedParagraph:
    n_phrases = int(rng.integers(config.phrases_min, config.phrases_max + 1))
    pieces: list[str] = []
    entities: list[EntitySpan] = []
    markers: list[MarkerSpan] = []
    labels = list(EntityLabel)
    offset = 0
    for _ in range(n_phrases):
        is_entity = bool(rng.random() < config.entity_rate)
        mention: tuple[EntityLabel, str, bool] | None = None
        if is_entity:
            label = labels[int(rng.integers(0, len(labels)))]
            entry, drifted = lexicons[label][int(rng.integers(0, len(lexicons[label])))]
            mention = (label, entry, drifted)

        if mention is not None and config.informative_markers:
            label, entry, drifted = mention
            phrase = entry
            span = EntitySpan(offset, offset + len(entry), label)
            entities.append(span)
            mentions.append(MentionRecord(pid, span.start, span.end, label, entry, drifted))
        else:
            length = int(rng.integers(config.phrase_len_min, config.phrase_len_max + 1))
            phrase = background.phrase(rng, length)
            if mention is not None:
                label, entry, drifted = mention
                at = int(rng.integers(0, length + 1))
                phrase = phrase[:at] + entry + phrase[at:]
                span = EntitySpan(offset + at, offset + at + len(entry), label)
                entities.append(span)
                mentions.append(MentionRecord(pid, span.start, span.end, label, entry, drifted))
            # historians' notes only on phrases with background text
            if rng.random() < config.note_rate:
                kind = _NOTE_KINDS[int(rng.integers(0, len(_NOTE_KINDS)))]
                ent_lo = entities[-1].start - offset if mention is not None else None
                ent_hi = entities[-1].end - offset if mention is not None else None
                note_len = int(rng.integers(1, 3))
                for _attempt in range(8):
                    if len(phrase) < note_len:
                        break
                    a = int(rng.integers(0, len(phrase) - note_len + 1))
                    b = a + note_len
                    if ent_lo is not None and not (b <= ent_lo or a >= ent_hi):
                        continue  # note range would touch the mention
                    markers.append(MarkerSpan(offset + a, offset + b, kind))
                    break
        if config.king_space:
            for i, ch in enumerate(phrase):
                if ch == KING_CHAR:
                    inside = any(
                        s.start - offset <= i < s.end - offset
                        for s in entities
                        if s.start >= offset
                    )
                    if not inside:
                        markers.append(MarkerSpan(offset + i, offset + i, MarkerKind.KING_SPACE))
        pieces.append(phrase)
        offset += len(phrase)
        markers.append(MarkerSpan(offset, offset, MarkerKind.PHRASE_BOUNDARY))

    return AnnotatedParagraph(
        id=pid,
        reign=reign,
        year=year,
        text="".join(pieces),
        entities=tuple(entities),
        markers=tuple(markers),
    )


def synthesize(config: SynthConfig, seed: int) -> SynthResult:
    """Generate a two-reign corpus with exact ground truth and bookkeeping."""
    if config.entity_rate > 0:
        for label in EntityLabel:
            if not config.lexicons.get(label.value):
                raise ConfigError(f"empty lexicon for requested label {label.value}")
    if not (0.0 <= config.drift <= 1.0):
        raise ConfigError(f"drift must lie in [0, 1], got {config.drift}")

    rng = np.random.default_rng(seed)
    background = _BackgroundSource(config, rng)
    mentions: list[MentionRecord] = []
    paragraphs: list[AnnotatedParagraph] = []
    for reign, count, future in (
        (config.past_reign, config.past_paragraphs, False),
        (config.future_reign, config.future_paragraphs, True),
    ):
        lexicons = _reign_lexicons(config, rng, future)
        lo, hi = config.reign_years.get(reign, (1, 1))
        for i in range(count):
            pid = f"{reign}-{i:06d}"
            year = int(rng.integers(lo, hi + 1))
            paragraphs.append(
                _paragraph(config, rng, pid, reign, year, lexicons, mentions, background)
            )
    return SynthResult(tuple(paragraphs), tuple(mentions))


def generate_synthetic(config: SynthConfig, seed: int) -> list[AnnotatedParagraph]:
    """Entity-annotated synthetic paragraphs, deterministic for a given seed."""
    return list(synthesize(config, seed).paragraphs)
