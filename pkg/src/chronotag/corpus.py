"""Annotated-corpus model: standoff spans, marker transforms, BIO codecs, splits.

Offsets everywhere are Unicode scalar-value indices into the paragraph text
(never bytes). A paragraph exists in one of two renderings:

* canonical/unmarked-ish: marker spans are standoff instructions ("a phrase
  boundary sits here", "this range is a historian's note") and the text does
  not contain marker glyphs;
* marked: each marker has been rendered as a single inline glyph and the
  marker spans point at the glyph positions.

``add_marker_view`` converts the first form to the second, ``strip_markers``
removes every glyph occurrence and returns a glyph-free paragraph. Both remap
entity offsets so that every entity's surface string is preserved; a glyph
inside an entity is corrupt annotation and raises.
"""

from __future__ import annotations

import bisect
import io
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    CorpusFormatError,
    CorruptAnnotationError,
    DataError,
    SpanError,
)


class EntityLabel(str, Enum):
    PERSON = "PERSON"
    LOCATION = "LOCATION"
    BOOK = "BOOK"


class MarkerKind(str, Enum):
    PHRASE_BOUNDARY = "PHRASE_BOUNDARY"
    KING_SPACE = "KING_SPACE"
    OMISSION_NOTE = "OMISSION_NOTE"
    COMPARATIVE_NOTE = "COMPARATIVE_NOTE"
    LINKING_NOTE = "LINKING_NOTE"


class Style(str, Enum):
    MARKED = "MARKED"
    UNMARKED = "UNMARKED"


#: Inline glyph used when a marker kind is rendered into the text. Glyph
#: characters are reserved: they must not occur as corpus content.
DEFAULT_GLYPHS: dict[MarkerKind, str] = {
    MarkerKind.PHRASE_BOUNDARY: "。",  # 。
    MarkerKind.KING_SPACE: " ",
    MarkerKind.OMISSION_NOTE: "〔",  # 〔
    MarkerKind.COMPARATIVE_NOTE: "〈",  # 〈
    MarkerKind.LINKING_NOTE: "〖",  # 〖
}

_MARKER_ORDER = {kind: i for i, kind in enumerate(MarkerKind)}


@dataclass(frozen=True, order=True)
class EntitySpan:
    start: int
    end: int
    label: EntityLabel

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise SpanError(f"entity span ({self.start}, {self.end}) must satisfy 0 <= start < end")


@dataclass(frozen=True)
class MarkerSpan:
    start: int
    end: int
    kind: MarkerKind

    def __post_init__(self) -> None:
        if not (0 <= self.start <= self.end):
            raise SpanError(f"marker span ({self.start}, {self.end}) must satisfy 0 <= start <= end")

    def sort_key(self) -> tuple[int, int, int]:
        return (self.start, self.end, _MARKER_ORDER[self.kind])


@dataclass(frozen=True)
class AnnotatedParagraph:
    """One diary paragraph with standoff entity and marker annotation.

    Entities are normalized to start order (they cannot overlap, so the order
    is canonical); markers are normalized to (start, end, kind) order.
    """

    id: str
    reign: str
    year: int
    text: str
    entities: tuple[EntitySpan, ...] = ()
    markers: tuple[MarkerSpan, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "entities", tuple(sorted(self.entities)))
        object.__setattr__(self, "markers", tuple(sorted(self.markers, key=MarkerSpan.sort_key)))
        n = len(self.text)
        prev_end = -1
        for span in self.entities:
            if span.end > n:
                raise SpanError(
                    f"paragraph {self.id!r}: entity span ({span.start}, {span.end}) "
                    f"out of bounds for text of length {n}"
                )
            if span.start < prev_end:
                raise SpanError(f"paragraph {self.id!r}: overlapping entity spans")
            prev_end = span.end
        for span in self.markers:
            if span.end > n:
                raise SpanError(
                    f"paragraph {self.id!r}: marker span ({span.start}, {span.end}) "
                    f"out of bounds for text of length {n}"
                )

    def surface(self, span: EntitySpan) -> str:
        return self.text[span.start:span.end]


@dataclass(frozen=True)
class CorpusVariant:
    """A corpus rendered in one annotation style."""

    style: Style
    paragraphs: tuple[AnnotatedParagraph, ...]

    def __post_init__(self) -> None:
        if self.style is Style.UNMARKED:
            glyphs = set(DEFAULT_GLYPHS.values())
            for p in self.paragraphs:
                if p.markers:
                    raise DataError(f"paragraph {p.id!r}: UNMARKED variant must carry no markers")
                if any(ch in glyphs for ch in p.text):
                    raise DataError(f"paragraph {p.id!r}: UNMARKED variant text contains a marker glyph")


# Short BIO forms for entity labels.
BIO_SHORT = {
    EntityLabel.PERSON: "PER",
    EntityLabel.LOCATION: "LOC",
    EntityLabel.BOOK: "BOOK",
}
_SHORT_TO_LABEL = {v: k for k, v in BIO_SHORT.items()}


@dataclass(frozen=True)
class TaggedSequence:
    """Characters with aligned, structurally valid BIO tags."""

    chars: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.chars) != len(self.tags):
            raise DataError(
                f"tagged sequence length mismatch: {len(self.chars)} chars vs {len(self.tags)} tags"
            )
        prev = "O"
        for i, tag in enumerate(self.tags):
            if tag != "O":
                head, _, short = tag.partition("-")
                if head not in ("B", "I") or short not in _SHORT_TO_LABEL:
                    raise DataError(f"invalid BIO tag {tag!r} at position {i}")
                if head == "I" and prev not in (f"B-{short}", f"I-{short}"):
                    raise DataError(f"dangling {tag!r} at position {i} after {prev!r}")
            prev = tag

    @property
    def text(self) -> str:
        return "".join(self.chars)


@dataclass(frozen=True)
class CorpusStats:
    paragraph_count: int
    char_count: int
    distinct_chars: int
    mean_paragraph_length: float
    entity_counts: dict[EntityLabel, int]


# ---------------------------------------------------------------------------
# Parsing / serialization (JSON Lines, one paragraph object per line)
# ---------------------------------------------------------------------------

def _paragraph_from_record(record: dict, line: int) -> AnnotatedParagraph:
    try:
        pid = record["id"]
        reign = record["reign"]
        year = record["year"]
        text = record["text"]
        raw_entities = record.get("entities", [])
        raw_markers = record.get("markers", [])
    except KeyError as exc:
        raise CorpusFormatError(f"missing field {exc.args[0]!r}", line) from None
    if not isinstance(pid, str) or not isinstance(reign, str) or not isinstance(text, str):
        raise CorpusFormatError("id, reign and text must be strings", line)
    if not isinstance(year, int) or isinstance(year, bool):
        raise CorpusFormatError("year must be an integer", line)

    entities = []
    for item in raw_entities:
        try:
            start, end, label = item
            entities.append(EntitySpan(int(start), int(end), EntityLabel(label)))
        except (ValueError, TypeError) as exc:
            raise CorpusFormatError(f"record {pid!r}: bad entity {item!r} ({exc})", line) from None
    markers = []
    for item in raw_markers:
        try:
            start, end, kind = item
            markers.append(MarkerSpan(int(start), int(end), MarkerKind(kind)))
        except (ValueError, TypeError) as exc:
            raise CorpusFormatError(f"record {pid!r}: bad marker {item!r} ({exc})", line) from None
    try:
        return AnnotatedParagraph(pid, reign, year, text, tuple(entities), tuple(markers))
    except SpanError as exc:
        raise SpanError(f"line {line}: {exc}") from None


def parse_corpus(source: IO[bytes] | bytes | Iterable[bytes]) -> list[AnnotatedParagraph]:
    """Parse a UTF-8 JSON-Lines byte stream into validated paragraphs.

    Accepts a binary file object, raw bytes, or an iterable of byte lines.
    Blank lines are ignored. Order is preserved.
    """
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    paragraphs: list[AnnotatedParagraph] = []
    for line_no, raw in enumerate(source, start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        try:
            record = json.loads(stripped.decode("utf-8"))
        except UnicodeDecodeError:
            raise CorpusFormatError("invalid UTF-8", line_no) from None
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"malformed JSON ({exc.msg})", line_no) from None
        if not isinstance(record, dict):
            raise CorpusFormatError("each line must hold a JSON object", line_no)
        paragraphs.append(_paragraph_from_record(record, line_no))
    return paragraphs


def load_corpus(path: str | Path) -> list[AnnotatedParagraph]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    with path.open("rb") as fh:
        return parse_corpus(fh)


def paragraph_to_record(p: AnnotatedParagraph) -> dict:
    return {
        "id": p.id,
        "reign": p.reign,
        "year": p.year,
        "text": p.text,
        "entities": [[s.start, s.end, s.label.value] for s in p.entities],
        "markers": [[m.start, m.end, m.kind.value] for m in p.markers],
    }


def dump_corpus(paragraphs: Iterable[AnnotatedParagraph]) -> bytes:
    lines = [
        json.dumps(paragraph_to_record(p), ensure_ascii=False, separators=(",", ":"))
        for p in paragraphs
    ]
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def write_corpus(paragraphs: Iterable[AnnotatedParagraph], path: str | Path) -> None:
    Path(path).write_bytes(dump_corpus(paragraphs))


# ---------------------------------------------------------------------------
# Marker transforms
# ---------------------------------------------------------------------------

def strip_markers(
    p: AnnotatedParagraph, glyphs: dict[MarkerKind, str] = DEFAULT_GLYPHS
) -> AnnotatedParagraph:
    """Remove every marker-glyph occurrence from the text.

    Entity offsets are remapped; the surface string of each entity must come
    out unchanged, otherwise the annotation is corrupt and this raises.
    The returned paragraph carries no markers.
    """
    glyph_set = set(glyphs.values())
    removed = [i for i, ch in enumerate(p.text) if ch in glyph_set]
    if not removed:
        return replace(p, markers=())

    # shift[i]: how many removed positions lie strictly before original index i
    new_text = "".join(ch for ch in p.text if ch not in glyph_set)
    removed_arr = removed
    entities = []
    for span in p.entities:
        before_start = bisect.bisect_left(removed_arr, span.start)
        before_end = bisect.bisect_left(removed_arr, span.end)
        if before_end != before_start:
            raise CorruptAnnotationError(
                f"paragraph {p.id!r}: entity ({span.start}, {span.end}, {span.label.value}) "
                f"straddles a marker glyph; stripping would change its surface text"
            )
        entities.append(EntitySpan(span.start - before_start, span.end - before_start, span.label))
    stripped = AnnotatedParagraph(p.id, p.reign, p.year, new_text, tuple(entities), ())
    for old, new in zip(p.entities, stripped.entities):
        assert p.surface(old) == stripped.surface(new)
    return stripped


def add_marker_view(
    p: AnnotatedParagraph, glyphs: dict[MarkerKind, str] = DEFAULT_GLYPHS
) -> AnnotatedParagraph:
    """Render standoff markers as inline glyphs.

    Each marker contributes one glyph inserted at its start offset. The
    output's marker spans point at the glyph positions, so
    ``strip_markers(add_marker_view(p))`` restores text and entity spans.
    A marker whose insertion point falls strictly inside an entity would
    change that entity's surface and raises instead.
    """
    for kind in {m.kind for m in p.markers}:
        if kind not in glyphs:
            raise DataError(f"marker kind {kind.value} has no assigned glyph")
    if not p.markers:
        return p

    inserts = sorted(p.markers, key=MarkerSpan.sort_key)
    positions = [m.start for m in inserts]
    for span in p.entities:
        for q in positions:
            if span.start < q < span.end:
                raise CorruptAnnotationError(
                    f"paragraph {p.id!r}: marker insertion at {q} falls inside entity "
                    f"({span.start}, {span.end}, {span.label.value})"
                )

    pieces: list[str] = []
    cursor = 0
    for m in inserts:
        pieces.append(p.text[cursor:m.start])
        pieces.append(glyphs[m.kind])
        cursor = m.start
    pieces.append(p.text[cursor:])
    new_text = "".join(pieces)

    entities = tuple(
        EntitySpan(
            span.start + bisect.bisect_right(positions, span.start),
            span.end + bisect.bisect_left(positions, span.end),
            span.label,
        )
        for span in p.entities
    )
    markers = tuple(
        MarkerSpan(m.start + k, m.start + k + 1, m.kind) for k, m in enumerate(inserts)
    )
    marked = AnnotatedParagraph(p.id, p.reign, p.year, new_text, entities, markers)
    for old, new in zip(p.entities, marked.entities):
        assert p.surface(old) == marked.surface(new)
    return marked


def make_variant(
    paragraphs: Sequence[AnnotatedParagraph],
    style: Style,
    glyphs: dict[MarkerKind, str] = DEFAULT_GLYPHS,
) -> CorpusVariant:
    """Render a canonical (standoff) corpus in the requested style."""
    if style is Style.MARKED:
        rendered = tuple(add_marker_view(p, glyphs) for p in paragraphs)
    else:
        rendered = tuple(strip_markers(p, glyphs) for p in paragraphs)
    return CorpusVariant(style, rendered)


# ---------------------------------------------------------------------------
# BIO encoding / decoding
# ---------------------------------------------------------------------------

def to_bio(p: AnnotatedParagraph) -> TaggedSequence:
    """Encode entity spans as per-character BIO tags."""
    tags = ["O"] * len(p.text)
    for span in p.entities:
        short = BIO_SHORT[span.label]
        tags[span.start] = f"B-{short}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{short}"
    return TaggedSequence(tuple(p.text), tuple(tags))


def spans_from_bio(tags: Sequence[str] | TaggedSequence) -> list[EntitySpan]:
    """Decode a (possibly invalid) BIO tag sequence into entity spans.

    Lenient repair: an I-X with no open B-X/I-X run is treated as B-X, so
    decoding is total over raw model output.
    """
    if isinstance(tags, TaggedSequence):
        tags = tags.tags
    spans: list[EntitySpan] = []
    start: int | None = None
    label: EntityLabel | None = None

    def close(end: int) -> None:
        nonlocal start, label
        if start is not None and label is not None:
            spans.append(EntitySpan(start, end, label))
        start, label = None, None

    for i, tag in enumerate(tags):
        if tag == "O":
            close(i)
            continue
        head, _, short = tag.partition("-")
        cur = _SHORT_TO_LABEL.get(short)
        if cur is None or head not in ("B", "I"):
            close(i)
            continue
        if head == "B" or label != cur:
            close(i)
            start, label = i, cur
    close(len(tags))
    return spans


# ---------------------------------------------------------------------------
# Temporal split
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitCorpus:
    train: tuple[AnnotatedParagraph, ...]
    dev: tuple[AnnotatedParagraph, ...]
    test: tuple[AnnotatedParagraph, ...]

    def __len__(self) -> int:
        return len(self.train) + len(self.dev) + len(self.test)

    def all(self) -> tuple[AnnotatedParagraph, ...]:
        return self.train + self.dev + self.test


@dataclass(frozen=True)
class TemporalSplit:
    past: SplitCorpus
    future: SplitCorpus


def split_corpus(
    paragraphs: Sequence[AnnotatedParagraph],
    seed: int,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> SplitCorpus:
    """Seeded shuffle followed by a train/dev/test cut at the given ratios.

    The permutation depends only on (seed, len(paragraphs)), so two corpora
    holding the same paragraphs in the same order split identically.
    """
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise DataError(f"split ratios must be non-negative and sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(paragraphs))
    shuffled = [paragraphs[i] for i in order]
    n = len(shuffled)
    n_train = int(n * ratios[0])
    n_dev = int(n * ratios[1])
    return SplitCorpus(
        train=tuple(shuffled[:n_train]),
        dev=tuple(shuffled[n_train:n_train + n_dev]),
        test=tuple(shuffled[n_train + n_dev:]),
    )


def split_temporal(
    corpus: Sequence[AnnotatedParagraph],
    past_reigns: Iterable[str],
    future_reigns: Iterable[str],
    seed: int,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> TemporalSplit:
    """Partition a corpus into past/future sides and shuffle-split each side.

    Paragraphs whose reign is in neither set are dropped. The shuffle is a
    pure function of the seed, so identical inputs give identical splits.
    """
    past_set, future_set = set(past_reigns), set(future_reigns)
    if past_set & future_set:
        raise DataError(f"past and future reigns overlap: {sorted(past_set & future_set)}")
    past = [p for p in corpus if p.reign in past_set]
    future = [p for p in corpus if p.reign in future_set]
    if not past:
        raise DataError(f"no paragraphs for past reigns {sorted(past_set)}")
    if not future:
        raise DataError(f"no paragraphs for future reigns {sorted(future_set)}")
    # independent, deterministic sub-seeds per side
    return TemporalSplit(
        past=split_corpus(past, seed * 2 + 0, ratios),
        future=split_corpus(future, seed * 2 + 1, ratios),
    )


# ---------------------------------------------------------------------------
# Stats
# ---------------------------------------------------------------------------

def corpus_stats(corpus: Sequence[AnnotatedParagraph]) -> CorpusStats:
    if not corpus:
        raise DataError("cannot compute statistics of an empty corpus")
    char_count = sum(len(p.text) for p in corpus)
    distinct: set[str] = set()
    entity_counts = Counter()
    for p in corpus:
        distinct.update(p.text)
        for span in p.entities:
            entity_counts[span.label] += 1
    return CorpusStats(
        paragraph_count=len(corpus),
        char_count=char_count,
        distinct_chars=len(distinct),
        mean_paragraph_length=char_count / len(corpus),
        entity_counts={label: entity_counts.get(label, 0) for label in EntityLabel},
    )
