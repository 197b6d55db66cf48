"""CRF sequence tagger: bidirectional recurrent encoder over frozen provider
embeddings, a linear emission head, and a linear-chain CRF output layer.

Characters are the sequence unit. Long paragraphs are capped at a maximum
window length, split at phrase-boundary markers when the paragraph carries
them and at a fixed stride with a small overlap otherwise; prediction
stitches the per-window spans back together, preferring spans that lie fully
interior to their window.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import (
    AnnotatedParagraph,
    EntityLabel,
    EntitySpan,
    MarkerKind,
    TaggedSequence,
    spans_from_bio,
    to_bio,
)
from .crf import nll_batch, viterbi_batch
from .errors import DataError, NumericalError
from .nn import LSTM, Linear, Parameter, sgd_step, uniform_init, zero_grads
from .providers import EmbeddingProvider
from .scoring import score_spans
from .training import TrainingLog, batched, pad_vector_batch


class TagSet:
    """The seven BIO tags plus virtual START/STOP indices."""

    tags: tuple[str, ...] = ("O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-BOOK", "I-BOOK")

    def __init__(self) -> None:
        self.index = {tag: i for i, tag in enumerate(self.tags)}
        self.size = len(self.tags)
        self.start = self.size
        self.stop = self.size + 1

    def encode(self, tags: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.index[t] for t in tags], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"unknown tag {exc.args[0]!r}") from None

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tags[i] for i in ids]


@dataclass(frozen=True)
class TaggerHyperparams:
    d_hidden: int = 96
    lr: float = 0.5
    epochs: int = 10
    batch_size: int = 32
    max_seq_len: int = 256
    overlap: int = 16
    clip: float = 5.0


def _reverse_padded(x: np.ndarray, lengths: Sequence[int]) -> np.ndarray:
    out = np.zeros_like(x)
    for b, n in enumerate(lengths):
        out[:n, b] = x[:n, b][::-1]
    return out


class CrfTagger:
    """Encoder + emission head + CRF transitions over a frozen provider."""

    def __init__(self, provider: EmbeddingProvider, hp: TaggerHyperparams, seed: int):
        self.provider = provider
        self.hp = hp
        self.tagset = TagSet()
        rng = np.random.default_rng(seed)
        d = provider.dimension
        self.fwd = LSTM(rng, d, hp.d_hidden, "encoder.fwd")
        self.bwd = LSTM(rng, d, hp.d_hidden, "encoder.bwd")
        self.proj = Linear(rng, 2 * hp.d_hidden, self.tagset.size, "emission")
        self.transitions = Parameter(
            "transitions", uniform_init(rng, (self.tagset.size + 2, self.tagset.size + 2))
        )

    def parameters(self) -> list[Parameter]:
        return (
            self.fwd.parameters()
            + self.bwd.parameters()
            + self.proj.parameters()
            + [self.transitions]
        )

    def emissions_batch(
        self, x: np.ndarray, mask: np.ndarray
    ) -> tuple[np.ndarray, tuple]:
        lengths = mask.sum(axis=0).astype(np.int64)
        h_f, cache_f = self.fwd.forward(x, mask=mask)
        x_rev = _reverse_padded(x, lengths)
        h_b_rev, cache_b = self.bwd.forward(x_rev, mask=mask)
        h_b = _reverse_padded(h_b_rev, lengths)
        h = np.concatenate([h_f, h_b], axis=2)
        emissions, cache_p = self.proj.forward(h)
        return emissions, (cache_f, cache_b, cache_p, lengths)

    def emissions_backward(self, cache: tuple, d_emissions: np.ndarray) -> None:
        cache_f, cache_b, cache_p, lengths = cache
        dh = self.proj.backward(cache_p, d_emissions)
        H = self.hp.d_hidden
        self.fwd.backward(cache_f, dh[:, :, :H])
        self.bwd.backward(cache_b, _reverse_padded(dh[:, :, H:], lengths))

    def emissions(self, text: str) -> np.ndarray:
        """Emission score matrix for one text; shape (len(text), n_tags)."""
        if not text:
            return np.zeros((0, self.tagset.size))
        x = self.provider.embed(text)
        em, _ = self.emissions_batch(x[:, None, :], np.ones((len(text), 1)))
        return em[:, 0, :]


# ---------------------------------------------------------------------------
# Windowing
# ---------------------------------------------------------------------------

def split_points(p: AnnotatedParagraph) -> list[int]:
    """Candidate cut positions derived from phrase-boundary markers."""
    pts = sorted(
        {m.end for m in p.markers if m.kind is MarkerKind.PHRASE_BOUNDARY}
        - {0, len(p.text)}
    )
    return pts


def segment_text(length: int, boundaries: Sequence[int], limit: int, overlap: int) -> list[tuple[int, int]]:
    """Cover [0, length) with windows no longer than ``limit``.

    Boundary positions are preferred cut points; stretches without a usable
    boundary fall back to fixed-stride windows that overlap by ``overlap``.
    """
    if length <= limit:
        return [(0, length)]
    windows: list[tuple[int, int]] = []
    usable = [b for b in boundaries if 0 < b < length]
    cur = 0
    while cur < length:
        if length - cur <= limit:
            windows.append((cur, length))
            break
        cuts = [b for b in usable if cur < b <= cur + limit]
        if cuts:
            nxt = cuts[-1]
            windows.append((cur, nxt))
            cur = nxt
        else:
            windows.append((cur, cur + limit))
            cur = cur + limit - overlap
    return windows


def paragraph_windows(
    p: AnnotatedParagraph, limit: int, overlap: int
) -> list[tuple[int, AnnotatedParagraph]]:
    """Window a paragraph; entities not fully inside a window are dropped."""
    if len(p.text) <= limit:
        return [(0, p)]
    out = []
    for ws, we in segment_text(len(p.text), split_points(p), limit, overlap):
        entities = tuple(
            EntitySpan(s.start - ws, s.end - ws, s.label)
            for s in p.entities
            if ws <= s.start and s.end <= we
        )
        window = AnnotatedParagraph(
            f"{p.id}#{ws}", p.reign, p.year, p.text[ws:we], entities, ()
        )
        out.append((ws, window))
    return out


def training_sequences(
    paragraphs: Sequence[AnnotatedParagraph], limit: int = 256, overlap: int = 16
) -> list[TaggedSequence]:
    """BIO training sequences, with long paragraphs windowed to ``limit``."""
    seqs = []
    for p in paragraphs:
        for _, window in paragraph_windows(p, limit, overlap):
            if window.text:
                seqs.append(to_bio(window))
    return seqs


def _stitch(
    window_spans: list[tuple[int, int, list[EntitySpan]]], text_len: int
) -> list[EntitySpan]:
    """Merge per-window spans; interior spans win over edge-touching ones."""
    interior_of: dict[tuple[int, int, EntityLabel], bool] = {}
    for ws, we, spans in window_spans:
        for s in spans:
            key = (s.start + ws, s.end + ws, s.label)
            interior = (key[0] > ws or ws == 0) and (key[1] < we or we == text_len)
            interior_of[key] = interior_of.get(key, False) or interior

    accepted: list[tuple[int, int, EntityLabel]] = []

    def overlaps(key: tuple[int, int, EntityLabel]) -> bool:
        return any(a < key[1] and key[0] < b for a, b, _ in accepted)

    for want_interior in (True, False):
        for key in sorted(interior_of, key=lambda k: (k[0], k[1], k[2].value)):
            if interior_of[key] == want_interior and not overlaps(key):
                accepted.append(key)
    return [EntitySpan(a, b, label) for a, b, label in sorted(accepted)]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _decode_batchwise(
    model: CrfTagger, embedded: Sequence[np.ndarray], batch_size: int
) -> list[list[int]]:
    """Viterbi tag ids for pre-embedded sequences, batched for speed."""
    out: list[list[int]] = [[] for _ in embedded]
    nonempty = [i for i, e in enumerate(embedded) if len(e)]
    for chunk in batched(np.arange(len(nonempty)), batch_size):
        idx = [nonempty[int(i)] for i in chunk]
        x, mask = pad_vector_batch([embedded[i] for i in idx], model.provider.dimension)
        emissions, _ = model.emissions_batch(x, mask)
        paths, _ = viterbi_batch(emissions, model.transitions.value, mask)
        for slot, i in enumerate(idx):
            out[i] = paths[slot]
    return out


def _dev_micro_f1(model: CrfTagger, dev: Sequence[TaggedSequence], embedded, batch_size) -> float:
    gold = [spans_from_bio(seq) for seq in dev]
    paths = _decode_batchwise(model, embedded, batch_size)
    predicted = [spans_from_bio(model.tagset.decode(path)) for path in paths]
    res = score_spans(gold, predicted, [len(seq.chars) for seq in dev])
    return res.micro.f1


def train_tagger(
    train: Sequence[TaggedSequence],
    dev: Sequence[TaggedSequence],
    provider: EmbeddingProvider,
    hp: TaggerHyperparams,
    seed: int,
) -> tuple[CrfTagger, TrainingLog]:
    """Train by mean-NLL SGD; returns the best-dev-F1 snapshot and the log."""
    train = [s for s in train if len(s.chars)]
    if not train:
        raise DataError("cannot train a tagger on an empty training set")
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(2)]
    model = CrfTagger(provider, hp, seeds[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    params = model.parameters()
    tagset = model.tagset

    train_emb = provider.embed_many([s.text for s in train])
    train_tags = [tagset.encode(s.tags) for s in train]
    dev_emb = provider.embed_many([s.text for s in dev])

    log = TrainingLog("dev_micro_f1")
    best_f1 = -1.0
    best_values = [p.value.copy() for p in params]
    for epoch in range(1, hp.epochs + 1):
        started = time.perf_counter()
        order = shuffle_rng.permutation(len(train))
        total_loss, total_seqs, total_tokens = 0.0, 0, 0
        for chunk in batched(order, hp.batch_size):
            idx = [int(i) for i in chunk]
            x, mask = pad_vector_batch([train_emb[i] for i in idx], provider.dimension)
            T, B = mask.shape
            tags = np.zeros((T, B), dtype=np.int64)
            for b, i in enumerate(idx):
                tags[: len(train_tags[i]), b] = train_tags[i]
            emissions, cache = model.emissions_batch(x, mask)
            loss, d_em, d_trans = nll_batch(emissions, model.transitions.value, tags, mask)
            if not np.isfinite(loss):
                raise NumericalError("non-finite tagger loss; lower the learning rate")
            zero_grads(params)
            model.transitions.grad += d_trans
            model.emissions_backward(cache, d_em)
            sgd_step(params, hp.lr, hp.clip)
            total_loss += loss * B
            total_seqs += B
            total_tokens += int(mask.sum())
        elapsed = max(time.perf_counter() - started, 1e-9)
        f1 = _dev_micro_f1(model, dev, dev_emb, hp.batch_size) if dev else 0.0
        log.add(epoch, total_loss / total_seqs, total_tokens / elapsed, f1)
        if f1 > best_f1:
            best_f1 = f1
            best_values = [p.value.copy() for p in params]
    for p, v in zip(params, best_values):
        p.value[...] = v
    return model, log


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict_paragraphs(
    model: CrfTagger, paragraphs: Sequence[AnnotatedParagraph], batch_size: int = 32
) -> list[list[EntitySpan]]:
    """Decode a corpus; one span list per paragraph, offsets in paragraph text."""
    hp = model.hp
    windows: list[tuple[int, int, int, int]] = []  # (paragraph idx, ws, we, flat idx)
    texts: list[str] = []
    for pi, p in enumerate(paragraphs):
        for ws, window in paragraph_windows(p, hp.max_seq_len, hp.overlap):
            windows.append((pi, ws, ws + len(window.text), len(texts)))
            texts.append(window.text)
    embedded = model.provider.embed_many(texts)
    paths = _decode_batchwise(model, embedded, batch_size)

    per_paragraph: list[list[tuple[int, int, list[EntitySpan]]]] = [[] for _ in paragraphs]
    for pi, ws, we, flat in windows:
        tags = model.tagset.decode(paths[flat])
        per_paragraph[pi].append((ws, we, spans_from_bio(tags)))
    return [
        _stitch(spans, len(p.text)) for spans, p in zip(per_paragraph, paragraphs)
    ]


def predict(model: CrfTagger, p: AnnotatedParagraph) -> list[EntitySpan]:
    """Viterbi-decode one paragraph into entity spans (empty text -> no spans)."""
    if not p.text:
        return []
    return predict_paragraphs(model, [p])[0]
