"""Run manifests: what ran, with which inputs, producing which bytes.

A manifest is written with status "started" before any output file and
rewritten with status "finished" plus per-output SHA-256 checksums at the
end, so an interrupted run is distinguishable from a completed one.
Re-running with the same config hash and master seed reproduces the listed
CSV files byte for byte.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional

__all__ = ["RunManifest", "sha256_file"]

_TOOL = "rateloss"


@dataclass
class RunManifest:
    experiment: str
    seed: int
    config_sha256: str
    threads: int
    tool_version: str
    flags: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    started_utc: str = ""
    finished_utc: Optional[str] = None
    status: str = "started"

    def start(self, path: Path) -> None:
        self.started_utc = _now()
        self.status = "started"
        path.write_text(self._render(), encoding="utf-8")

    def finalize(self, path: Path, output_files: Dict[str, Path]) -> None:
        self.outputs = {
            name: "sha256:" + sha256_file(p) for name, p in sorted(output_files.items())
        }
        self.finished_utc = _now()
        self.status = "finished"
        path.write_text(self._render(), encoding="utf-8")

    def _render(self) -> str:
        lines = [
            "[run]",
            f'tool = "{_TOOL}"',
            f'version = "{self.tool_version}"',
            f'experiment = "{self.experiment}"',
            f'status = "{self.status}"',
            f"seed = {self.seed}",
            f"threads = {self.threads}",
            f'config_sha256 = "{self.config_sha256}"',
            f'started_utc = "{self.started_utc}"',
        ]
        if self.finished_utc:
            lines.append(f'finished_utc = "{self.finished_utc}"')
        lines.append("")
        lines.append("[flags]")
        for key, val in sorted(self.flags.items()):
            lines.append(f'{key} = "{val}"')
        lines.append("")
        lines.append("[outputs]")
        for name, digest in sorted(self.outputs.items()):
            lines.append(f'"{name}" = "{digest}"')
        return "\n".join(lines) + "\n"


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
