"""Run manifests and atomic file writes.

Every data-producing command records its command line, resolved config,
seeds, backend kind, and transcript path, so a run can be reproduced
byte-identically from the manifest plus a recorded transcript. Manifests
(and all CLI outputs) land via temp-file-then-rename so a crash never
leaves a partial file.
"""

from __future__ import annotations

import json
import os
import tempfile
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field


@contextmanager
def atomic_path(path):
    """Yield a temp path in the target directory; rename over `path` on
    success, discard on failure."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


@dataclass
class RunManifest:
    command_line: str
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    backend: str | None = None
    transcript: str | None = None
    version: str = ""
    duration_seconds: float = 0.0

    def write(self, path) -> None:
        with atomic_path(path) as tmp:
            with open(tmp, "w", encoding="utf-8") as handle:
                json.dump(asdict(self), handle, indent=2, sort_keys=True)
                handle.write("\n")


def load_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)
