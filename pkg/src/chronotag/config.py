"""Experiment configuration: one YAML file, every value overridable from the
command line by its dotted key path (e.g. ``--tagger.lr 0.3``).

Unknown keys fail fast, before any work starts, so a typo cannot silently
fall back to a default. The resolved configuration has a canonical JSON
digest used by the run manifest.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .charlm import LmHyperparams
from .corpus import EntityLabel
from .errors import ConfigError
from .synth import SynthConfig, default_lexicons
from .tagger import TaggerHyperparams

KNOWN_MODELS = ("charlm", "static")

DEFAULTS: dict[str, Any] = {
    "seed": 1234,
    "out": "runs/experiment",
    "alpha": 0.005,
    "seeds": [101, 102, 103],
    "models": ["charlm", "static"],
    "static_dim": 64,
    "corpus": {
        "source": None,
        "synth": {
            "past_paragraphs": 2000,
            "future_paragraphs": 500,
            "phrases_min": 3,
            "phrases_max": 6,
            "phrase_len_min": 4,
            "phrase_len_max": 10,
            "entity_rate": 0.35,
            "drift": 0.5,
            "note_rate": 0.08,
            "king_space": True,
            "informative_markers": True,
            "background_branch": 3,
            "background_noise": 0.1,
            "lexicon_seed": 7,
            "persons": 20,
            "locations": 12,
            "books": 8,
        },
    },
    "reigns": {
        "past": ["injo"],
        "future": ["soonjong"],
    },
    "split": {"train": 0.8, "dev": 0.1, "test": 0.1},
    "lm": {
        "d_emb": 64,
        "d_h": 128,
        "lr": 0.5,
        "epochs": 10,
        "batch_size": 32,
        "trunc_len": 64,
        "min_count": 1,
        "dev_fraction": 0.1,
    },
    "tagger": {
        "d_hidden": 96,
        "lr": 0.5,
        "epochs": 10,
        "batch_size": 32,
        "max_seq_len": 256,
        "overlap": 16,
    },
}


def _merge(base: dict, update: Mapping, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {dotted!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"configuration key {dotted!r} must be a section")
            out[key] = _merge(base[key], value, prefix=f"{dotted}.")
        else:
            out[key] = value
    return out


def _set_dotted(raw: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = raw
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown configuration key {dotted!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown configuration key {dotted!r}")
    node[parts[-1]] = value


def parse_override_value(text: str) -> Any:
    """Interpret an override string with YAML scalar semantics."""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def resolve_config(
    config_path: str | Path | None = None,
    overrides: Sequence[tuple[str, str]] = (),
) -> dict:
    """Defaults <- file <- command-line overrides, with unknown keys rejected."""
    raw = copy.deepcopy(DEFAULTS)
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, Mapping):
            raise ConfigError(f"config file {path} must hold a mapping at the top level")
        raw = _merge(raw, loaded)
    for dotted, text in overrides:
        _set_dotted(raw, dotted, parse_override_value(text))
    return raw


def config_digest(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    seed: int
    out_dir: Path
    alpha: float
    seeds: tuple[int, ...]
    models: tuple[str, ...]
    static_dim: int
    corpus_source: Path | None
    past_reigns: tuple[str, ...]
    future_reigns: tuple[str, ...]
    ratios: tuple[float, float, float]
    lm: LmHyperparams
    tagger: TaggerHyperparams

    @property
    def digest(self) -> str:
        return config_digest(self.raw)

    def synth_config(self) -> SynthConfig:
        block = self.raw["corpus"]["synth"]
        sizes = {
            EntityLabel.PERSON: int(block["persons"]),
            EntityLabel.LOCATION: int(block["locations"]),
            EntityLabel.BOOK: int(block["books"]),
        }
        lexicons, drift_lexicons = default_lexicons(
            seed=int(block["lexicon_seed"]), sizes=sizes
        )
        return SynthConfig(
            past_reign=self.past_reigns[0],
            future_reign=self.future_reigns[0],
            past_paragraphs=int(block["past_paragraphs"]),
            future_paragraphs=int(block["future_paragraphs"]),
            phrases_min=int(block["phrases_min"]),
            phrases_max=int(block["phrases_max"]),
            phrase_len_min=int(block["phrase_len_min"]),
            phrase_len_max=int(block["phrase_len_max"]),
            entity_rate=float(block["entity_rate"]),
            drift=float(block["drift"]),
            note_rate=float(block["note_rate"]),
            king_space=bool(block["king_space"]),
            informative_markers=bool(block["informative_markers"]),
            background_branch=int(block["background_branch"]),
            background_noise=float(block["background_noise"]),
            lexicons=lexicons,
            drift_lexicons=drift_lexicons,
        )


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def build_config(raw: dict) -> ExperimentConfig:
    """Validate the resolved mapping and freeze it into an ExperimentConfig."""
    seeds = raw["seeds"]
    _require(isinstance(seeds, list) and len(seeds) > 0, "seeds must be a non-empty list")
    _require(all(isinstance(s, int) for s in seeds), "seeds must be integers")
    _require(len(set(seeds)) == len(seeds), "seeds must be distinct")

    models = raw["models"]
    _require(isinstance(models, list) and len(models) > 0, "models must be a non-empty list")
    for name in models:
        _require(name in KNOWN_MODELS, f"unknown model name {name!r}; known: {KNOWN_MODELS}")
    _require(len(set(models)) == len(models), "model names must be unique")

    alpha = raw["alpha"]
    _require(isinstance(alpha, (int, float)) and 0.0 < alpha <= 1.0, "alpha must lie in (0, 1]")

    split = raw["split"]
    ratios = (float(split["train"]), float(split["dev"]), float(split["test"]))
    _require(all(r >= 0 for r in ratios), "split ratios must be non-negative")
    _require(abs(sum(ratios) - 1.0) <= 1e-9, f"split ratios must sum to 1, got {sum(ratios)}")

    past = tuple(raw["reigns"]["past"])
    future = tuple(raw["reigns"]["future"])
    _require(len(past) > 0 and len(future) > 0, "both reign sets must be non-empty")
    _require(not set(past) & set(future), "past and future reigns must be disjoint")

    for section, cls in (("lm", LmHyperparams), ("tagger", TaggerHyperparams)):
        for key, value in raw[section].items():
            _require(
                isinstance(value, (int, float)) and value >= 0,
                f"{section}.{key} must be a non-negative number",
            )

    source = raw["corpus"]["source"]
    _require(
        source is None or isinstance(source, str),
        "corpus.source must be a path or null",
    )
    synth = raw["corpus"]["synth"]
    _require(0.0 <= float(synth["drift"]) <= 1.0, "corpus.synth.drift must lie in [0, 1]")
    _require(int(synth["phrases_min"]) >= 1, "corpus.synth.phrases_min must be >= 1")
    _require(
        int(synth["phrases_max"]) >= int(synth["phrases_min"]),
        "corpus.synth.phrases_max must be >= phrases_min",
    )
    _require(
        1 <= int(synth["phrase_len_min"]) <= int(synth["phrase_len_max"]),
        "corpus.synth phrase lengths must satisfy 1 <= min <= max",
    )

    lm = LmHyperparams(
        d_emb=int(raw["lm"]["d_emb"]),
        d_h=int(raw["lm"]["d_h"]),
        lr=float(raw["lm"]["lr"]),
        epochs=int(raw["lm"]["epochs"]),
        batch_size=int(raw["lm"]["batch_size"]),
        trunc_len=int(raw["lm"]["trunc_len"]),
        min_count=int(raw["lm"]["min_count"]),
        dev_fraction=float(raw["lm"]["dev_fraction"]),
    )
    tagger = TaggerHyperparams(
        d_hidden=int(raw["tagger"]["d_hidden"]),
        lr=float(raw["tagger"]["lr"]),
        epochs=int(raw["tagger"]["epochs"]),
        batch_size=int(raw["tagger"]["batch_size"]),
        max_seq_len=int(raw["tagger"]["max_seq_len"]),
        overlap=int(raw["tagger"]["overlap"]),
    )
    return ExperimentConfig(
        raw=raw,
        seed=int(raw["seed"]),
        out_dir=Path(raw["out"]),
        alpha=float(alpha),
        seeds=tuple(int(s) for s in seeds),
        models=tuple(models),
        static_dim=int(raw["static_dim"]),
        corpus_source=Path(source) if source else None,
        past_reigns=past,
        future_reigns=future,
        ratios=ratios,
        lm=lm,
        tagger=tagger,
    )


def load_config(
    config_path: str | Path | None = None,
    overrides: Sequence[tuple[str, str]] = (),
) -> ExperimentConfig:
    return build_config(resolve_config(config_path, overrides))
