"""The six temporal/annotation transfer paths and their results matrix.

Every path trains on the past period and evaluates on a (time, style)
combination::

    A: past/MARKED   -> past/UNMARKED      D: past/UNMARKED -> past/UNMARKED
    B: past/MARKED   -> future/MARKED      E: past/UNMARKED -> future/UNMARKED
    C: past/MARKED   -> future/UNMARKED    F: past/UNMARKED -> past/MARKED

Paths sharing a training condition (A/B/C, and D/E/F) reuse one trained
tagger per seed; the cache key carries the checkpoint digest so the sharing
is observable. Evaluation always runs on the held-out test split of the
eval-side variant.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import (
    AnnotatedParagraph,
    EntityLabel,
    SplitCorpus,
    Style,
    TemporalSplit,
    make_variant,
)
from .checkpoint import digest_bytes, load_tagger, pack_tagger
from .errors import ConfigError, DataError
from .providers import EmbeddingProvider
from .scoring import EvalResult, TypeScore, score_spans
from .tagger import (
    CrfTagger,
    TaggerHyperparams,
    paragraph_windows,
    predict_paragraphs,
    train_tagger,
    training_sequences,
)
from .training import TrainingLog


class Time(str, Enum):
    PAST = "PAST"
    FUTURE = "FUTURE"


@dataclass(frozen=True)
class TransferPath:
    name: str
    train_style: Style
    eval_time: Time
    eval_style: Style

    #: training always happens on the past period
    train_time: Time = Time.PAST


PATHS: dict[str, TransferPath] = {
    "A": TransferPath("A", Style.MARKED, Time.PAST, Style.UNMARKED),
    "B": TransferPath("B", Style.MARKED, Time.FUTURE, Style.MARKED),
    "C": TransferPath("C", Style.MARKED, Time.FUTURE, Style.UNMARKED),
    "D": TransferPath("D", Style.UNMARKED, Time.PAST, Style.UNMARKED),
    "E": TransferPath("E", Style.UNMARKED, Time.FUTURE, Style.UNMARKED),
    "F": TransferPath("F", Style.UNMARKED, Time.PAST, Style.MARKED),
}

Corpora = dict[tuple[Time, Style], SplitCorpus]


def build_variant_splits(split: TemporalSplit) -> Corpora:
    """Render each temporal side's train/dev/test in both styles.

    The same underlying paragraphs back the MARKED and UNMARKED variants of a
    split, so style comparisons are paired.
    """
    corpora: Corpora = {}
    for time_key, side in ((Time.PAST, split.past), (Time.FUTURE, split.future)):
        for style in Style:
            corpora[(time_key, style)] = SplitCorpus(
                train=make_variant(side.train, style).paragraphs,
                dev=make_variant(side.dev, style).paragraphs,
                test=make_variant(side.test, style).paragraphs,
            )
    return corpora


@dataclass(frozen=True)
class ModelSetup:
    """A named embedding provider plus the tagger recipe trained on top."""

    name: str
    provider: EmbeddingProvider
    hyperparams: TaggerHyperparams


@dataclass(frozen=True)
class QualitySampleSet:
    path: str
    model: str
    scores: tuple[float, ...]

    def __post_init__(self) -> None:
        for s in self.scores:
            if not (0.0 <= s <= 1.0):
                raise DataError(f"quality score {s} outside [0, 1]")


@dataclass
class PathMatrix:
    """(model, path) -> per-seed evaluation results, plus training metadata."""

    seeds: tuple[int, ...]
    results: dict[tuple[str, str], list[EvalResult]] = field(default_factory=dict)
    checkpoint_digests: dict[tuple[str, str, int], str] = field(default_factory=dict)
    training_logs: dict[tuple[str, str, int], TrainingLog] = field(default_factory=dict)

    def models(self) -> list[str]:
        return sorted({model for model, _ in self.results})

    def quality_sample_sets(self) -> list[QualitySampleSet]:
        sets = []
        for (model, path), results in sorted(self.results.items()):
            scores: list[float] = []
            for r in results:
                scores.extend(r.quality_scores())
            sets.append(QualitySampleSet(path=path, model=model, scores=tuple(scores)))
        return sets

    def samples_by_path(self) -> dict[str, list[float]]:
        pooled: dict[str, list[float]] = {}
        for sample_set in self.quality_sample_sets():
            pooled.setdefault(sample_set.path, []).extend(sample_set.scores)
        return pooled

    def micro_f1(self, model: str, path: str) -> list[float]:
        return [r.micro.f1 for r in self.results[(model, path)]]

    def validate_complete(self) -> None:
        for model in self.models():
            for name in PATHS:
                if (model, name) not in self.results:
                    raise DataError(f"matrix is missing path {name} for model {model!r}")


# ---------------------------------------------------------------------------
# Training with per-condition caching
# ---------------------------------------------------------------------------

TrainerCache = dict[tuple[str, str, int], tuple[CrfTagger, str, TrainingLog]]


def _condition_fingerprint(
    model: ModelSetup, style: Style, seed: int, train, dev
) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(asdict(model.hyperparams), sort_keys=True).encode())
    h.update(f"|{model.name}|{style.value}|{seed}|".encode())
    for seq in train + dev:
        h.update("\x00".join(seq.chars).encode())
        h.update("\x01".join(seq.tags).encode())
        h.update(b"\x02")
    return h.hexdigest()


def train_condition(
    model: ModelSetup,
    style: Style,
    seed: int,
    corpora: Corpora,
    cache: TrainerCache | None = None,
    out_dir: Path | None = None,
) -> tuple[CrfTagger, str, TrainingLog]:
    """Train (or reuse) the tagger for one (model, train-style, seed) triple.

    With an output directory, the checkpoint is written there and an existing
    file with a matching fingerprint short-circuits training (resume).
    """
    key = (model.name, style.value, seed)
    if cache is not None and key in cache:
        return cache[key]

    split = corpora.get((Time.PAST, style))
    if split is None:
        raise DataError(f"missing corpus variant (PAST, {style.value})")
    hp = model.hyperparams
    train = training_sequences(split.train, hp.max_seq_len, hp.overlap)
    dev = training_sequences(split.dev, hp.max_seq_len, hp.overlap)
    fingerprint = _condition_fingerprint(model, style, seed, train, dev)

    ckpt_path = None
    if out_dir is not None:
        ckpt_path = Path(out_dir) / f"tagger_{model.name}_{style.value.lower()}_{seed}.ckpt"
        if ckpt_path.exists():
            blob = ckpt_path.read_bytes()
            try:
                from .checkpoint import unpack_checkpoint

                _, header, _ = unpack_checkpoint(blob)
            except Exception:
                header = {}
            if header.get("fingerprint") == fingerprint:
                tagger = load_tagger(ckpt_path)
                entry = (tagger, digest_bytes(blob), TrainingLog("dev_micro_f1"))
                if cache is not None:
                    cache[key] = entry
                return entry

    tagger, log = train_tagger(train, dev, model.provider, hp, seed)
    blob = pack_tagger(tagger, extra={"fingerprint": fingerprint})
    if ckpt_path is not None:
        ckpt_path.write_bytes(blob)
    entry = (tagger, digest_bytes(blob), log)
    if cache is not None:
        cache[key] = entry
    return entry


def _evaluate(tagger: CrfTagger, docs: Sequence[AnnotatedParagraph]) -> EvalResult:
    gold = [list(p.entities) for p in docs]
    predicted = predict_paragraphs(tagger, docs)
    return score_spans(gold, predicted, [len(p.text) for p in docs])


def run_path(
    path: TransferPath,
    corpora: Corpora,
    model: ModelSetup,
    seeds: Sequence[int],
    cache: TrainerCache | None = None,
    out_dir: Path | None = None,
) -> list[EvalResult]:
    """Train per seed on the path's train condition; evaluate its eval split."""
    if not seeds:
        raise ConfigError("seeds must be non-empty")
    eval_split = corpora.get((path.eval_time, path.eval_style))
    if eval_split is None:
        raise DataError(f"missing corpus variant ({path.eval_time.value}, {path.eval_style.value})")
    results = []
    for seed in seeds:
        tagger, _, _ = train_condition(model, path.train_style, seed, corpora, cache, out_dir)
        results.append(_evaluate(tagger, eval_split.test))
    return results


def run_all_paths(
    models: Sequence[ModelSetup],
    corpora: Corpora,
    seeds: Sequence[int],
    jobs: int = 1,
    out_dir: Path | None = None,
    progress: Callable[[str], None] | None = None,
) -> PathMatrix:
    """Full matrix over models x paths x seeds with shared train conditions."""
    if not models:
        raise ConfigError("at least one model must be configured")
    if len({m.name for m in models}) != len(models):
        raise ConfigError("model names must be unique")
    if not seeds:
        raise ConfigError("seeds must be non-empty")
    for key in ((t, s) for t in Time for s in Style):
        if key not in corpora:
            raise DataError(f"missing corpus variant {key[0].value}/{key[1].value}")

    say = progress or (lambda message: None)
    matrix = PathMatrix(seeds=tuple(seeds))
    cache: TrainerCache = {}
    # warm each provider's embedding memo in a fixed order with exactly the
    # window texts that training and prediction will request, so later
    # lookups (possibly from worker threads) are pure reads and the batch
    # composition feeding the models never varies
    for model in models:
        model.provider.enable_memo()
        say(f"embedding corpus variants with {model.name}")
        hp = model.hyperparams
        for key in sorted(corpora, key=lambda k: (k[0].value, k[1].value)):
            split = corpora[key]
            for part in (split.train, split.dev):
                seqs = training_sequences(part, hp.max_seq_len, hp.overlap)
                model.provider.embed_many([s.text for s in seqs])
            windows = [
                w.text
                for p in split.test
                for _, w in paragraph_windows(p, hp.max_seq_len, hp.overlap)
            ]
            model.provider.embed_many(windows)
    jobs_list = [
        (model, style, seed) for model in models for style in Style for seed in seeds
    ]

    def run_job(job):
        model, style, seed = job
        return train_condition(model, style, seed, corpora, cache=None, out_dir=out_dir)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_job, jobs_list))
        for (model, style, seed), entry in zip(jobs_list, outcomes):
            cache[(model.name, style.value, seed)] = entry
    else:
        for job in jobs_list:
            model, style, seed = job
            say(f"training {model.name} on past/{style.value.lower()} (seed {seed})")
            train_condition(model, style, seed, corpora, cache, out_dir)

    for model in models:
        for name, path in sorted(PATHS.items()):
            say(f"evaluating {model.name} on path {name}")
            matrix.results[(model.name, name)] = run_path(
                path, corpora, model, seeds, cache, out_dir
            )
    for (model_name, style_value, seed), (_, digest, log) in sorted(cache.items()):
        matrix.checkpoint_digests[(model_name, style_value, seed)] = digest
        matrix.training_logs[(model_name, style_value, seed)] = log
    for model in models:
        model.provider.clear_memo()
    return matrix


# ---------------------------------------------------------------------------
# Results CSV (full precision, bit-exact round trip)
# ---------------------------------------------------------------------------

_TYPE_ORDER = [label.value for label in EntityLabel] + ["micro"]
_FLOAT_METRICS = ("precision", "recall", "f1")
_COUNT_METRICS = ("tp", "fp", "fn")


def matrix_to_csv(matrix: PathMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "path", "seed", "metric", "entity_type", "value"])

    def emit(model, path, seed, metric, entity_type, value):
        writer.writerow([model, path, seed, metric, entity_type, value])

    for (model, path), results in sorted(matrix.results.items()):
        for seed, result in zip(matrix.seeds, results):
            for label in EntityLabel:
                ts = result.per_type[label]
                for metric in _FLOAT_METRICS:
                    emit(model, path, seed, metric, label.value, repr(getattr(ts, metric)))
                for metric in _COUNT_METRICS:
                    emit(model, path, seed, metric, label.value, getattr(ts, metric))
            for metric in _FLOAT_METRICS:
                emit(model, path, seed, metric, "micro", repr(getattr(result.micro, metric)))
            for metric in _COUNT_METRICS:
                emit(model, path, seed, metric, "micro", getattr(result.micro, metric))
            emit(model, path, seed, "accuracy", "micro", repr(result.accuracy))
    return buf.getvalue()


def matrix_from_csv(text: str) -> PathMatrix:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["model", "path", "seed", "metric", "entity_type", "value"]:
        raise DataError("results CSV has an unexpected header")
    cells: dict[tuple[str, str, int], dict[tuple[str, str], str]] = {}
    for row in reader:
        if not row:
            continue
        model, path, seed, metric, entity_type, value = row
        cells.setdefault((model, path, int(seed)), {})[(metric, entity_type)] = value

    seeds = sorted({seed for (_, _, seed) in cells})
    results: dict[tuple[str, str], dict[int, EvalResult]] = {}
    for (model, path, seed), metrics in cells.items():
        def type_score(entity_type: str) -> TypeScore:
            return TypeScore(
                precision=float(metrics[("precision", entity_type)]),
                recall=float(metrics[("recall", entity_type)]),
                f1=float(metrics[("f1", entity_type)]),
                tp=int(metrics[("tp", entity_type)]),
                fp=int(metrics[("fp", entity_type)]),
                fn=int(metrics[("fn", entity_type)]),
            )

        result = EvalResult(
            micro=type_score("micro"),
            per_type={label: type_score(label.value) for label in EntityLabel},
            accuracy=float(metrics[("accuracy", "micro")]),
        )
        results.setdefault((model, path), {})[seed] = result

    matrix = PathMatrix(seeds=tuple(seeds))
    for key, by_seed in results.items():
        if sorted(by_seed) != seeds:
            raise DataError(f"results CSV is missing seeds for {key}")
        matrix.results[key] = [by_seed[s] for s in seeds]
    return matrix


def write_matrix_csv(matrix: PathMatrix, path: str | Path) -> None:
    Path(path).write_bytes(matrix_to_csv(matrix).encode("utf-8"))


def read_matrix_csv(path: str | Path) -> PathMatrix:
    path = Path(path)
    if not path.exists():
        raise DataError(f"results CSV not found: {path}")
    return matrix_from_csv(path.read_text(encoding="utf-8"))


def boxplot_csv(matrix: PathMatrix) -> str:
    """Quartile summary of pooled quality scores per (model, path)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "path", "min", "q1", "median", "q3", "max"])
    for sample_set in matrix.quality_sample_sets():
        qs = np.quantile(np.array(sample_set.scores), [0.0, 0.25, 0.5, 0.75, 1.0])
        writer.writerow([sample_set.model, sample_set.path] + [repr(float(q)) for q in qs])
    return buf.getvalue()
