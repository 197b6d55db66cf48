"""Forward/backward next-character language models over an LSTM.

The pair of models is the corpus-specific pretraining stage: both are trained
on the same text (the backward one on reversed sequences), and their hidden
states are later concatenated into contextual character embeddings for the
tagger. Training is plain SGD with gradient-norm clipping, initialized
uniformly in [-0.1, 0.1] from the run seed, so a run is a pure function of
(corpus, hyperparams, seed).

Long paragraphs are cut into fixed-length windows and each window is modelled
independently (state is not carried across windows); this bounds memory on
paragraphs that can run to tens of thousands of characters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .corpus import AnnotatedParagraph, CorpusVariant
from .errors import DataError, NumericalError
from .nn import LSTM, Embedding, Linear, Parameter, sgd_step, softmax_xent, zero_grads
from .training import TrainingLog, batched, pad_id_batch
from .vocab import BOS, Vocabulary, build_vocab

FORWARD = "forward"
BACKWARD = "backward"


@dataclass(frozen=True)
class LmHyperparams:
    d_emb: int = 64
    d_h: int = 128
    lr: float = 0.5
    epochs: int = 10
    batch_size: int = 32
    trunc_len: int = 64
    min_count: int = 1
    dev_fraction: float = 0.1
    clip: float = 5.0


class CharLanguageModel:
    """One-directional next-character model: embedding -> LSTM -> projection."""

    def __init__(self, direction: str, vocab: Vocabulary, hp: LmHyperparams, seed: int):
        if direction not in (FORWARD, BACKWARD):
            raise DataError(f"unknown direction {direction!r}")
        self.direction = direction
        self.vocab = vocab
        self.hp = hp
        rng = np.random.default_rng(seed)
        self.emb = Embedding(rng, vocab.size, hp.d_emb, f"{direction}.emb")
        self.cell = LSTM(rng, hp.d_emb, hp.d_h, f"{direction}.cell")
        self.proj = Linear(rng, hp.d_h, vocab.size, f"{direction}.proj")

    @property
    def d_h(self) -> int:
        return self.hp.d_h

    def parameters(self) -> list[Parameter]:
        return self.emb.parameters() + self.cell.parameters() + self.proj.parameters()

    # -- inference ---------------------------------------------------------

    def _oriented(self, text: str) -> str:
        return text if self.direction == FORWARD else text[::-1]

    def hidden_states_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Hidden state after consuming each character, in model orientation.

        For a backward model, pass the original texts; they are reversed here
        and the returned states are in the *reversed* time order (state i
        belongs to the i-th character of the reversed text).
        """
        nonempty = [i for i, t in enumerate(texts) if t]
        out: list[np.ndarray] = [np.zeros((0, self.hp.d_h)) for _ in texts]
        if not nonempty:
            return out
        seqs = []
        for i in nonempty:
            ids = self.vocab.encode(self._oriented(texts[i]))
            seqs.append(np.concatenate(([BOS], ids)))
        ids_batch, mask = pad_id_batch(seqs)
        x, _ = self.emb.forward(ids_batch)
        hs, _ = self.cell.forward(x, mask=mask)
        for slot, i in enumerate(nonempty):
            n = len(texts[i])
            out[i] = hs[1:n + 1, slot, :].copy()
        return out

    def nll_many(self, texts: Sequence[str], batch_size: int = 64) -> tuple[float, int]:
        """Summed next-character negative log-likelihood over whole texts."""
        total, count = 0.0, 0
        items = [t for t in texts if t]
        for chunk in batched(np.arange(len(items)), batch_size):
            seqs_in, seqs_tgt = [], []
            for i in chunk:
                ids = self.vocab.encode(self._oriented(items[int(i)]))
                seqs_in.append(np.concatenate(([BOS], ids[:-1])))
                seqs_tgt.append(ids)
            ids_in, mask = pad_id_batch(seqs_in)
            ids_tgt, _ = pad_id_batch(seqs_tgt)
            x, _ = self.emb.forward(ids_in)
            hs, _ = self.cell.forward(x, mask=mask)
            logits, _ = self.proj.forward(hs)
            loss, n, _ = softmax_xent(logits, ids_tgt, mask)
            total += loss
            count += n
        return total, count

    # -- training ----------------------------------------------------------

    def _windows(self, texts: Sequence[str]) -> list[tuple[np.ndarray, np.ndarray]]:
        L = self.hp.trunc_len
        pairs = []
        for text in texts:
            if not text:
                continue
            stream = np.concatenate(([BOS], self.vocab.encode(self._oriented(text))))
            inputs, targets = stream[:-1], stream[1:]
            for k in range(0, len(inputs), L):
                pairs.append((inputs[k:k + L], targets[k:k + L]))
        return pairs

    def run_epoch(self, windows: list, rng: np.random.Generator) -> tuple[float, int]:
        """One SGD pass over the shuffled windows; returns (mean loss, tokens)."""
        order = rng.permutation(len(windows))
        params = self.parameters()
        total, count = 0.0, 0
        for chunk in batched(order, self.hp.batch_size):
            ins, tgts = zip(*(windows[int(i)] for i in chunk))
            ids_in, mask = pad_id_batch(list(ins))
            ids_tgt, _ = pad_id_batch(list(tgts))
            x, emb_cache = self.emb.forward(ids_in)
            hs, cell_cache = self.cell.forward(x, mask=mask)
            logits, proj_cache = self.proj.forward(hs)
            loss, n, dlogits = softmax_xent(logits, ids_tgt, mask)
            if not np.isfinite(loss):
                raise NumericalError("non-finite language-model loss; lower the learning rate")
            zero_grads(params)
            dh = self.proj.backward(proj_cache, dlogits / n)
            dx = self.cell.backward(cell_cache, dh)
            self.emb.backward(emb_cache, dx)
            sgd_step(params, self.hp.lr, self.hp.clip)
            total += loss
            count += n
        return (total / count if count else 0.0), count


def _as_texts(corpus) -> list[str]:
    if isinstance(corpus, CorpusVariant):
        return [p.text for p in corpus.paragraphs]
    texts = []
    for item in corpus:
        if isinstance(item, AnnotatedParagraph):
            texts.append(item.text)
        elif isinstance(item, str):
            texts.append(item)
        else:
            raise DataError(f"cannot treat {type(item).__name__} as corpus text")
    return texts


def pretrain_char_lm(
    corpus, hp: LmHyperparams, seed: int
) -> tuple[CharLanguageModel, CharLanguageModel, TrainingLog]:
    """Train the forward and backward character models on one corpus.

    The log carries one record per epoch with loss and dev perplexity
    averaged over the two directions. When the corpus is too small to hold
    out a dev slice, the training texts double as the dev set.
    """
    texts = [t for t in _as_texts(corpus) if t]
    if not texts:
        raise DataError("cannot pretrain on an empty corpus")
    vocab = build_vocab(texts, hp.min_count)

    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(4)]
    fwd = CharLanguageModel(FORWARD, vocab, hp, seeds[0])
    bwd = CharLanguageModel(BACKWARD, vocab, hp, seeds[1])

    split_rng = np.random.default_rng(seeds[2])
    order = split_rng.permutation(len(texts))
    n_dev = int(len(texts) * hp.dev_fraction)
    dev_texts = [texts[int(i)] for i in order[:n_dev]] or texts
    train_texts = [texts[int(i)] for i in order[n_dev:]] or texts

    shuffle_rng = np.random.default_rng(seeds[3])
    windows_f = fwd._windows(train_texts)
    windows_b = bwd._windows(train_texts)

    log = TrainingLog("dev_perplexity")
    for epoch in range(1, hp.epochs + 1):
        start = time.perf_counter()
        loss_f, tokens_f = fwd.run_epoch(windows_f, shuffle_rng)
        loss_b, tokens_b = bwd.run_epoch(windows_b, shuffle_rng)
        elapsed = max(time.perf_counter() - start, 1e-9)
        ppl_f = perplexity_over(fwd, dev_texts)
        ppl_b = perplexity_over(bwd, dev_texts)
        log.add(
            epoch,
            loss=(loss_f + loss_b) / 2.0,
            tokens_per_sec=(tokens_f + tokens_b) / elapsed,
            dev_metric=(ppl_f + ppl_b) / 2.0,
        )
    return fwd, bwd, log


def perplexity_over(lm: CharLanguageModel, texts: Sequence[str]) -> float:
    total, count = lm.nll_many(texts)
    if count == 0:
        raise DataError("cannot compute perplexity of empty text")
    return float(np.exp(total / count))


def perplexity(lm: CharLanguageModel, text: str) -> float:
    """exp(mean next-character negative log-likelihood); at least 1."""
    if not text:
        raise DataError("cannot compute perplexity of empty text")
    return perplexity_over(lm, [text])


def contextual_embed(
    fwd: CharLanguageModel, bwd: CharLanguageModel, chars: str
) -> np.ndarray:
    """Per-character contextual vectors from the two language models.

    Row i concatenates the forward state after consuming chars[0..i] with the
    backward state after consuming chars[i..]; shape (n, 2 * d_h).
    """
    return contextual_embed_many(fwd, bwd, [chars])[0]


def contextual_embed_many(
    fwd: CharLanguageModel, bwd: CharLanguageModel, texts: Sequence[str]
) -> list[np.ndarray]:
    if fwd.vocab.symbols != bwd.vocab.symbols:
        raise DataError("forward and backward models must share a vocabulary")
    fh = fwd.hidden_states_many(texts)
    bh = bwd.hidden_states_many(texts)
    return [np.concatenate([f, b[::-1]], axis=1) for f, b in zip(fh, bh)]
