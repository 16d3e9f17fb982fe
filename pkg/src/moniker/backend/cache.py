"""Content-addressed on-disk score cache.

One JSON file per (backend identity, prompt, continuation), stored under a
two-character fan-out directory. Writes go through a temporary file and
``os.replace`` so concurrent readers never see a partial entry.
"""

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path

logger = logging.getLogger(__name__)


def cache_key(identity: str, prompt: str, continuation: str) -> str:
    prompt_hash = hashlib.sha256(prompt.encode()).hexdigest()
    material = json.dumps([identity, prompt_hash, continuation])
    return hashlib.sha256(material.encode()).hexdigest()


class ScoreCache:
    """Directory of cached raw scores."""

    def __init__(self, directory: Path) -> None:
        self.directory = directory
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(
        self, identity: str, prompt: str, continuation: str
    ) -> tuple[float, bool] | None:
        """Cached (score, normalized), or None on a miss or unreadable entry."""
        path = self._path(cache_key(identity, prompt, continuation))
        if not path.exists():
            return None
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            return float(data["score"]), bool(data["normalized"])
        except (OSError, ValueError, KeyError) as e:
            logger.warning(f"Ignoring unreadable cache entry {path}: {e}")
            return None

    def put(
        self,
        identity: str,
        prompt: str,
        continuation: str,
        score: float,
        normalized: bool,
    ) -> None:
        path = self._path(cache_key(identity, prompt, continuation))
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = json.dumps(
            {"continuation": continuation, "score": score, "normalized": normalized}
        )
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(entry)
            os.replace(tmp, path)
        except OSError:
            Path(tmp).unlink(missing_ok=True)
            raise
