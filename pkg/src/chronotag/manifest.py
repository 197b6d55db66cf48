"""Run manifest: config digest, per-stage wall clock, artifact digests.

Artifacts split into two maps: ``artifacts`` carries content digests that are
stable across re-runs with the same config and seeds; ``volatile`` lists
outputs containing timing data (training logs), recorded but exempt from the
determinism contract.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__


def digest_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    config_digest: str
    tool_version: str = __version__
    stages: dict[str, float] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    volatile: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load_or_create(cls, out_dir: Path, config_digest: str) -> "RunManifest":
        path = out_dir / "manifest.json"
        if path.exists():
            data = json.loads(path.read_text(encoding="utf-8"))
            manifest = cls(
                config_digest=data.get("config_digest", config_digest),
                tool_version=data.get("tool_version", __version__),
                stages=dict(data.get("stages", {})),
                artifacts=dict(data.get("artifacts", {})),
                volatile=dict(data.get("volatile", {})),
            )
            if manifest.config_digest != config_digest:
                # a config change invalidates previous bookkeeping
                return cls(config_digest=config_digest)
            return manifest
        return cls(config_digest=config_digest)

    def record_stage(self, name: str, seconds: float) -> None:
        self.stages[name] = seconds

    def record_artifact(self, out_dir: Path, path: Path, volatile: bool = False) -> None:
        rel = str(path.relative_to(out_dir))
        target = self.volatile if volatile else self.artifacts
        target[rel] = digest_file(path)

    def save(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        payload = {
            "tool_version": self.tool_version,
            "config_digest": self.config_digest,
            "stages": self.stages,
            "artifacts": dict(sorted(self.artifacts.items())),
            "volatile": dict(sorted(self.volatile.items())),
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path
