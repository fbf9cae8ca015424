"""
On-disk artifacts: atomic writes, content hashes, the stage cache and the
run manifest.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict

from errors import MissingArtifactError

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1


def atomic_write_bytes(path, data):
    """Write to a temp file in the same directory, then rename over path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text):
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj):
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(*parts):
    """
    SHA-256 over JSON-serializable parts.

    Returns:
        str: Hex digest
    """
    h = hashlib.sha256()
    for part in parts:
        h.update(canonical_json(part).encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def require(path, what="artifact"):
    """Raise MissingArtifactError unless path exists."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, what)
    return path


def _key_path(path):
    path = Path(path)
    return path.with_name(path.name + ".key")


def is_cached(path, key):
    """True if path exists and was produced under the same cache key."""
    path = Path(path)
    kp = _key_path(path)
    return path.exists() and kp.exists() and kp.read_text(encoding="utf-8").strip() == key


def mark_cached(path, key):
    atomic_write_text(_key_path(path), key + "\n")


@dataclass
class RunManifest:
    """
    Record of one command or pipeline run.

    Args:
        config_hash (str): Hash of the resolved configuration
        seed (int): Master seed
        artifacts (dict): Artifact name -> path
        wall_clock_seconds (float): Elapsed time
        version (int): Manifest format version
    """
    config_hash: str
    seed: int
    artifacts: Dict[str, str] = field(default_factory=dict)
    wall_clock_seconds: float = 0.0
    version: int = MANIFEST_VERSION

    def add(self, name, path):
        self.artifacts[name] = str(path)

    def missing(self):
        return [name for name, p in self.artifacts.items() if not Path(p).exists()]

    def save(self, path):
        missing = self.missing()
        if missing:
            raise MissingArtifactError(", ".join(missing), "manifest artifacts")
        return write_json(path, asdict(self))

    @classmethod
    def load(cls, path):
        with open(require(path, "manifest"), "r", encoding="utf-8") as f:
            return cls(**json.load(f))
