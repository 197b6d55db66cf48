"""Binary model container: magic "CNER", JSON header, float32 LE tensors.

Layout::

    bytes 0..3    magic b"CNER"
    u32 LE        format version (currently 1)
    u32 LE        header length in bytes
    ...           UTF-8 JSON header (sorted keys)
    per tensor    raw little-endian float32 data, C order, in header order

Parameters live in float64 in memory and are quantized to float32 on write;
loading upcasts back, so load -> save reproduces a file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .charlm import BACKWARD, FORWARD, CharLanguageModel, LmHyperparams
from .errors import CheckpointError
from .vocab import Vocabulary

MAGIC = b"CNER"
VERSION = 1


def pack_checkpoint(section: str, header: dict, tensors: Sequence[tuple[str, np.ndarray]]) -> bytes:
    meta = dict(header)
    meta["section"] = section
    meta["tensors"] = [{"name": name, "shape": list(arr.shape)} for name, arr in tensors]
    head = json.dumps(meta, ensure_ascii=False, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(head)), head]
    for _, arr in tensors:
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def unpack_checkpoint(blob: bytes) -> tuple[str, dict, dict[str, np.ndarray]]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    version, head_len = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[12:12 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    offset = 12 + head_len
    tensors: dict[str, np.ndarray] = {}
    for spec in header.pop("tensors"):
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(blob):
            raise CheckpointError(f"truncated checkpoint at tensor {spec['name']!r}")
        arr = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape)
        tensors[spec["name"]] = arr.astype(np.float64)
        offset = end
    if offset != len(blob):
        raise CheckpointError("trailing bytes after final tensor")
    section = header.pop("section")
    return section, header, tensors


def write_checkpoint(
    path: str | Path, section: str, header: dict, tensors: Sequence[tuple[str, np.ndarray]]
) -> str:
    blob = pack_checkpoint(section, header, tensors)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def read_checkpoint(path: str | Path) -> tuple[str, dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return unpack_checkpoint(path.read_bytes())


def digest_bytes(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


# -- language-model (de)serialization ---------------------------------------

def charlm_payload(lm: CharLanguageModel) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    header = {
        "direction": lm.direction,
        "hyperparams": asdict(lm.hp),
        "vocab": list(lm.vocab.symbols),
    }
    tensors = [(p.name, p.value) for p in lm.parameters()]
    return header, tensors


def save_charlm(lm: CharLanguageModel, path: str | Path) -> str:
    header, tensors = charlm_payload(lm)
    return write_checkpoint(path, "CHARLM", header, tensors)


def charlm_from_parts(header: dict, tensors: dict[str, np.ndarray]) -> CharLanguageModel:
    hp = LmHyperparams(**header["hyperparams"])
    vocab = Vocabulary(tuple(header["vocab"]))
    lm = CharLanguageModel(header["direction"], vocab, hp, seed=0)
    for p in lm.parameters():
        if p.name not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {p.name!r}")
        if tensors[p.name].shape != p.value.shape:
            raise CheckpointError(
                f"tensor {p.name!r} has shape {tensors[p.name].shape}, expected {p.value.shape}"
            )
        p.value[...] = tensors[p.name]
    return lm


def load_charlm(path: str | Path) -> CharLanguageModel:
    section, header, tensors = read_checkpoint(path)
    if section != "CHARLM":
        raise CheckpointError(f"expected a CHARLM checkpoint, found {section!r}")
    lm = charlm_from_parts(header, tensors)
    expected = {p.name for p in lm.parameters()}
    if set(tensors) != expected:
        raise CheckpointError("checkpoint tensor names do not match the model")
    return lm


# -- embedding-provider (de)serialization ------------------------------------

def provider_payload(provider) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    from .providers import ContextualLmProvider, StaticTableProvider

    if isinstance(provider, ContextualLmProvider):
        f_head, f_tensors = charlm_payload(provider.fwd)
        b_head, b_tensors = charlm_payload(provider.bwd)
        header = {"kind": provider.kind, "forward": f_head, "backward": b_head}
        tensors = [(f"provider.{name}", arr) for name, arr in f_tensors + b_tensors]
        return header, tensors
    if isinstance(provider, StaticTableProvider):
        header = {"kind": provider.kind, "vocab": list(provider.vocab.symbols)}
        return header, [("provider.table", provider.table)]
    raise CheckpointError(f"cannot serialize provider of type {type(provider).__name__}")


def provider_from_parts(header: dict, tensors: dict[str, np.ndarray]):
    from .providers import ContextualLmProvider, StaticTableProvider

    kind = header.get("kind")
    sub = {
        name[len("provider."):]: arr for name, arr in tensors.items()
        if name.startswith("provider.")
    }
    if kind == "charlm":
        fwd = charlm_from_parts(header["forward"], sub)
        bwd = charlm_from_parts(header["backward"], sub)
        return ContextualLmProvider(fwd, bwd)
    if kind == "static":
        return StaticTableProvider(Vocabulary(tuple(header["vocab"])), sub["table"])
    raise CheckpointError(f"unknown provider kind {kind!r}")


# -- tagger (de)serialization -------------------------------------------------

def tagger_payload(tagger) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    p_head, p_tensors = provider_payload(tagger.provider)
    header = {
        "hyperparams": asdict(tagger.hp),
        "tagset": list(tagger.tagset.tags),
        "provider": p_head,
    }
    tensors = [(p.name, p.value) for p in tagger.parameters()] + p_tensors
    return header, tensors


def pack_tagger(tagger, extra: dict | None = None) -> bytes:
    header, tensors = tagger_payload(tagger)
    if extra:
        header.update(extra)
    return pack_checkpoint("TAGGER", header, tensors)


def save_tagger(tagger, path: str | Path) -> str:
    blob = pack_tagger(tagger)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def tagger_from_blob(blob: bytes):
    from .tagger import CrfTagger, TaggerHyperparams

    section, header, tensors = unpack_checkpoint(blob)
    if section != "TAGGER":
        raise CheckpointError(f"expected a TAGGER checkpoint, found {section!r}")
    provider = provider_from_parts(header["provider"], tensors)
    hp = TaggerHyperparams(**header["hyperparams"])
    tagger = CrfTagger(provider, hp, seed=0)
    if list(tagger.tagset.tags) != header["tagset"]:
        raise CheckpointError("checkpoint tag inventory does not match this build")
    for p in tagger.parameters():
        if p.name not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {p.name!r}")
        if tensors[p.name].shape != p.value.shape:
            raise CheckpointError(
                f"tensor {p.name!r} has shape {tensors[p.name].shape}, expected {p.value.shape}"
            )
        p.value[...] = tensors[p.name]
    return tagger


def load_tagger(path: str | Path):
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return tagger_from_blob(path.read_bytes())
