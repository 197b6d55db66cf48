"""Experiment stages behind the CLI: prepare, pretrain, paths, hypotheses.

Every stage is a pure function of (config, files on disk): re-running a stage
with the same config and seeds rewrites byte-identical artifacts. All outputs
land under the configured output directory.
"""

from __future__ import annotations

import csv
import io
import time
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .charlm import pretrain_char_lm
from .checkpoint import load_charlm, save_charlm
from .config import ExperimentConfig
from .corpus import (
    AnnotatedParagraph,
    EntityLabel,
    SplitCorpus,
    Style,
    corpus_stats,
    load_corpus,
    make_variant,
    split_corpus,
    write_corpus,
)
from .errors import ConfigError, DataError
from .manifest import RunManifest
from .paths import (
    Corpora,
    ModelSetup,
    PathMatrix,
    Time,
    boxplot_csv,
    read_matrix_csv,
    run_all_paths,
    train_condition,
    write_matrix_csv,
)
from .providers import ContextualLmProvider, StaticTableProvider
from .stats import hypotheses_csv_rows, render_hypotheses_markdown, test_hypotheses
from .synth import generate_synthetic
from .tagger import CrfTagger
from .training import TrainingLog
from .vocab import build_vocab

VARIANT_FILES: dict[tuple[Time, Style], str] = {
    (Time.PAST, Style.MARKED): "past_marked.jsonl",
    (Time.PAST, Style.UNMARKED): "past_unmarked.jsonl",
    (Time.FUTURE, Style.MARKED): "future_marked.jsonl",
    (Time.FUTURE, Style.UNMARKED): "future_unmarked.jsonl",
}

Say = Callable[[str], None]


def _quiet(message: str) -> None:
    pass


def corpora_dir(cfg: ExperimentConfig) -> Path:
    return cfg.out_dir / "corpora"


def models_dir(cfg: ExperimentConfig) -> Path:
    return cfg.out_dir / "models"


def results_dir(cfg: ExperimentConfig) -> Path:
    return cfg.out_dir / "results"


def reports_dir(cfg: ExperimentConfig) -> Path:
    return cfg.out_dir / "reports"


def open_manifest(cfg: ExperimentConfig) -> RunManifest:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return RunManifest.load_or_create(cfg.out_dir, cfg.digest)


def timed_stage(cfg: ExperimentConfig, name: str, fn: Callable[[RunManifest], None]) -> None:
    manifest = open_manifest(cfg)
    started = time.perf_counter()
    fn(manifest)
    manifest.record_stage(name, time.perf_counter() - started)
    manifest.save(cfg.out_dir)


# ---------------------------------------------------------------------------
# Corpus resolution and preparation
# ---------------------------------------------------------------------------

def resolve_corpus(cfg: ExperimentConfig) -> list[AnnotatedParagraph]:
    if cfg.corpus_source is not None:
        if not cfg.corpus_source.exists():
            raise DataError(f"corpus file not found: {cfg.corpus_source}")
        return load_corpus(cfg.corpus_source)
    return generate_synthetic(cfg.synth_config(), cfg.seed)


def _partition_sides(
    cfg: ExperimentConfig, corpus: Sequence[AnnotatedParagraph]
) -> dict[Time, list[AnnotatedParagraph]]:
    past = [p for p in corpus if p.reign in set(cfg.past_reigns)]
    future = [p for p in corpus if p.reign in set(cfg.future_reigns)]
    if not past:
        raise DataError(f"no paragraphs for past reigns {sorted(cfg.past_reigns)}")
    if not future:
        raise DataError(f"no paragraphs for future reigns {sorted(cfg.future_reigns)}")
    return {Time.PAST: past, Time.FUTURE: future}


def _stats_rows(corpus: Sequence[AnnotatedParagraph]) -> list[list]:
    rows = [[
        "reign", "period", "paragraphs", "characters", "distinct_chars",
        "mean_paragraph_length", "person", "location", "book",
    ]]
    reigns: dict[str, list[AnnotatedParagraph]] = {}
    for p in corpus:
        reigns.setdefault(p.reign, []).append(p)
    for reign in sorted(reigns):
        ps = reigns[reign]
        stats = corpus_stats(ps)
        years = [p.year for p in ps]
        rows.append([
            reign,
            f"{min(years)}-{max(years)}",
            stats.paragraph_count,
            stats.char_count,
            stats.distinct_chars,
            repr(stats.mean_paragraph_length),
            stats.entity_counts[EntityLabel.PERSON],
            stats.entity_counts[EntityLabel.LOCATION],
            stats.entity_counts[EntityLabel.BOOK],
        ])
    return rows


def render_stats_markdown(rows: list[list]) -> str:
    header, *body = rows
    lines = [
        "# Corpus statistics by reign",
        "",
        "| " + " | ".join(str(c) for c in header) + " |",
        "| " + " | ".join("---" for _ in header) + " |",
    ]
    for row in body:
        lines.append("| " + " | ".join(str(c) for c in row) + " |")
    lines.append("")
    return "\n".join(lines)


def _csv_bytes(rows: list[list]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


def stage_prepare(cfg: ExperimentConfig, say: Say = _quiet) -> None:
    """Write the four corpus variant files plus the per-reign stats tables."""

    def run(manifest: RunManifest) -> None:
        corpus = resolve_corpus(cfg)
        sides = _partition_sides(cfg, corpus)
        out = corpora_dir(cfg)
        out.mkdir(parents=True, exist_ok=True)
        for (time_key, style), filename in VARIANT_FILES.items():
            variant = make_variant(sides[time_key], style)
            path = out / filename
            write_corpus(variant.paragraphs, path)
            manifest.record_artifact(cfg.out_dir, path)
            say(f"wrote {path} ({len(variant.paragraphs)} paragraphs)")
        rows = _stats_rows(corpus)
        (out / "stats.csv").write_bytes(_csv_bytes(rows))
        (out / "stats.md").write_text(render_stats_markdown(rows), encoding="utf-8")
        manifest.record_artifact(cfg.out_dir, out / "stats.csv")
        manifest.record_artifact(cfg.out_dir, out / "stats.md")

    timed_stage(cfg, "prepare", run)


def load_variants(cfg: ExperimentConfig) -> Corpora:
    """Load the prepared variant files and split each side deterministically.

    The same permutation applies to the MARKED and UNMARKED renderings of a
    side (same seed, same paragraph count), so splits stay paired across
    styles.
    """
    corpora: Corpora = {}
    for (time_key, style), filename in VARIANT_FILES.items():
        path = corpora_dir(cfg) / filename
        if not path.exists():
            raise DataError(f"missing prepared corpus {path}; run the prepare stage first")
        paragraphs = load_corpus(path)
        side_seed = cfg.seed * 2 + (0 if time_key is Time.PAST else 1)
        corpora[(time_key, style)] = split_corpus(paragraphs, side_seed, cfg.ratios)
    return corpora


# ---------------------------------------------------------------------------
# Pretraining
# ---------------------------------------------------------------------------

def _log_csv(log: TrainingLog) -> bytes:
    rows = [["epoch", "loss", "tokens_per_sec", log.metric_name]]
    for r in log.records:
        rows.append([r.epoch, repr(r.loss), repr(r.tokens_per_sec), repr(r.dev_metric)])
    return _csv_bytes(rows)


def lm_checkpoint_paths(cfg: ExperimentConfig) -> tuple[Path, Path]:
    return models_dir(cfg) / "charlm_forward.ckpt", models_dir(cfg) / "charlm_backward.ckpt"


def stage_pretrain(cfg: ExperimentConfig, say: Say = _quiet) -> None:
    """Pretrain the forward/backward character models on the past marked
    training split and write their checkpoints."""

    def run(manifest: RunManifest) -> None:
        corpora = load_variants(cfg)
        train_texts = [p.text for p in corpora[(Time.PAST, Style.MARKED)].train]
        say(f"pretraining character models on {len(train_texts)} paragraphs")
        fwd, bwd, log = pretrain_char_lm(train_texts, cfg.lm, cfg.seed)
        out = models_dir(cfg)
        out.mkdir(parents=True, exist_ok=True)
        fwd_path, bwd_path = lm_checkpoint_paths(cfg)
        save_charlm(fwd, fwd_path)
        save_charlm(bwd, bwd_path)
        log_path = out / "pretrain_log.csv"
        log_path.write_bytes(_log_csv(log))
        manifest.record_artifact(cfg.out_dir, fwd_path)
        manifest.record_artifact(cfg.out_dir, bwd_path)
        manifest.record_artifact(cfg.out_dir, log_path, volatile=True)
        if log.records:
            say(f"final dev perplexity {log.records[-1].dev_metric:.4f}")

    timed_stage(cfg, "pretrain", run)


# ---------------------------------------------------------------------------
# Models and the path matrix
# ---------------------------------------------------------------------------

def build_models(cfg: ExperimentConfig, corpora: Corpora) -> list[ModelSetup]:
    models: list[ModelSetup] = []
    for name in cfg.models:
        if name == "charlm":
            fwd_path, bwd_path = lm_checkpoint_paths(cfg)
            for path in (fwd_path, bwd_path):
                if not path.exists():
                    raise DataError(
                        f"model 'charlm' needs the pretrained checkpoint {path}; "
                        "run the pretrain stage first"
                    )
            provider = ContextualLmProvider(load_charlm(fwd_path), load_charlm(bwd_path))
        elif name == "static":
            texts = [p.text for p in corpora[(Time.PAST, Style.MARKED)].train]
            vocab = build_vocab(texts, cfg.lm.min_count)
            provider = StaticTableProvider.seeded(vocab, cfg.static_dim, cfg.seed)
        else:
            raise ConfigError(f"unknown model name {name!r}")
        models.append(ModelSetup(name=name, provider=provider, hyperparams=cfg.tagger))
    return models


def matrix_csv_path(cfg: ExperimentConfig) -> Path:
    return results_dir(cfg) / "paths.csv"


def stage_paths(cfg: ExperimentConfig, jobs: int = 1, say: Say = _quiet) -> PathMatrix:
    """Run the full model x path x seed matrix and write the results CSVs."""
    holder: dict[str, PathMatrix] = {}

    def run(manifest: RunManifest) -> None:
        corpora = load_variants(cfg)
        models = build_models(cfg, corpora)
        out_models = models_dir(cfg)
        out_models.mkdir(parents=True, exist_ok=True)
        matrix = run_all_paths(
            models, corpora, cfg.seeds, jobs=jobs, out_dir=out_models, progress=say
        )
        out = results_dir(cfg)
        out.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(matrix, matrix_csv_path(cfg))
        (out / "boxplot.csv").write_bytes(boxplot_csv(matrix).encode("utf-8"))
        manifest.record_artifact(cfg.out_dir, matrix_csv_path(cfg))
        manifest.record_artifact(cfg.out_dir, out / "boxplot.csv")
        for ckpt in sorted(out_models.glob("tagger_*.ckpt")):
            manifest.record_artifact(cfg.out_dir, ckpt)
        holder["matrix"] = matrix

    timed_stage(cfg, "paths", run)
    return holder["matrix"]


def stage_train(
    cfg: ExperimentConfig, model_name: str, style_name: str, train_seed: int, say: Say = _quiet
) -> CrfTagger:
    """Train a single tagger for one (model, train-style, seed) condition."""
    try:
        style = Style(style_name.upper())
    except ValueError:
        raise ConfigError(f"unknown style {style_name!r}; use marked or unmarked") from None
    if model_name not in cfg.models:
        raise ConfigError(f"model {model_name!r} is not listed in the configuration")
    holder: dict[str, CrfTagger] = {}

    def run(manifest: RunManifest) -> None:
        corpora = load_variants(cfg)
        models = {m.name: m for m in build_models(cfg, corpora)}
        out = models_dir(cfg)
        out.mkdir(parents=True, exist_ok=True)
        tagger, digest, log = train_condition(
            models[model_name], style, train_seed, corpora, cache=None, out_dir=out
        )
        ckpt = out / f"tagger_{model_name}_{style.value.lower()}_{train_seed}.ckpt"
        log_path = out / f"tagger_{model_name}_{style.value.lower()}_{train_seed}_log.csv"
        log_path.write_bytes(_log_csv(log))
        manifest.record_artifact(cfg.out_dir, ckpt)
        manifest.record_artifact(cfg.out_dir, log_path, volatile=True)
        say(f"trained {ckpt.name} (digest {digest[:12]})")
        holder["tagger"] = tagger

    timed_stage(cfg, f"train:{model_name}:{style_name}:{train_seed}", run)
    return holder["tagger"]


# ---------------------------------------------------------------------------
# Hypotheses and reports
# ---------------------------------------------------------------------------

def stage_hypotheses(cfg: ExperimentConfig, alpha: float | None = None, say: Say = _quiet):
    effective_alpha = cfg.alpha if alpha is None else alpha
    holder: dict[str, list] = {}

    def run(manifest: RunManifest) -> None:
        matrix = read_matrix_csv(matrix_csv_path(cfg))
        matrix.validate_complete()
        if not matrix.results:
            raise DataError("the results matrix is empty")
        outcomes = test_hypotheses(matrix, effective_alpha)
        out = reports_dir(cfg)
        out.mkdir(parents=True, exist_ok=True)
        (out / "hypotheses.csv").write_bytes(_csv_bytes(hypotheses_csv_rows(outcomes)))
        (out / "hypotheses.md").write_text(
            render_hypotheses_markdown(outcomes, effective_alpha), encoding="utf-8"
        )
        manifest.record_artifact(cfg.out_dir, out / "hypotheses.csv")
        manifest.record_artifact(cfg.out_dir, out / "hypotheses.md")
        for o in outcomes:
            say(
                f"{o.spec.id}: t={o.result.t_stat:.4f} df={o.result.df:.2f} "
                f"p={o.result.p_value:.4f} -> {o.verdict}"
            )
        holder["outcomes"] = outcomes

    timed_stage(cfg, "hypotheses", run)
    return holder["outcomes"]


def render_matrix_markdown(matrix: PathMatrix) -> str:
    lines = [
        "# Mean micro-F1 by model and path",
        "",
        "| model | " + " | ".join(sorted({p for _, p in matrix.results})) + " |",
    ]
    paths = sorted({p for _, p in matrix.results})
    lines.append("| --- | " + " | ".join("---" for _ in paths) + " |")
    for model in matrix.models():
        cells = []
        for path in paths:
            f1s = matrix.micro_f1(model, path)
            cells.append(f"{sum(f1s) / len(f1s):.4f}")
        lines.append(f"| {model} | " + " | ".join(cells) + " |")
    lines.append("")
    return "\n".join(lines)


def stage_report(cfg: ExperimentConfig, say: Say = _quiet) -> Path:
    """Re-render the combined Markdown report from existing CSV artifacts."""
    holder: dict[str, Path] = {}

    def run(manifest: RunManifest) -> None:
        sections = ["# Experiment report", ""]
        stats_md = corpora_dir(cfg) / "stats.md"
        if stats_md.exists():
            sections.append(stats_md.read_text(encoding="utf-8"))
        matrix_path = matrix_csv_path(cfg)
        if matrix_path.exists():
            sections.append(render_matrix_markdown(read_matrix_csv(matrix_path)))
        hyp_md = reports_dir(cfg) / "hypotheses.md"
        if hyp_md.exists():
            sections.append(hyp_md.read_text(encoding="utf-8"))
        if len(sections) == 2:
            raise DataError("nothing to report: run prepare/paths/hypotheses first")
        out = reports_dir(cfg)
        out.mkdir(parents=True, exist_ok=True)
        report = out / "report.md"
        report.write_text("\n".join(sections), encoding="utf-8")
        manifest.record_artifact(cfg.out_dir, report)
        say(f"wrote {report}")
        holder["report"] = report

    timed_stage(cfg, "report", run)
    return holder["report"]


def stage_synth(cfg: ExperimentConfig, out_path: Path, say: Say = _quiet) -> Path:
    corpus = generate_synthetic(cfg.synth_config(), cfg.seed)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, out_path)
    say(f"wrote {out_path} ({len(corpus)} paragraphs)")
    return out_path
