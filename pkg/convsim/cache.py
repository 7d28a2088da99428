"""
On-disk response cache keyed by prompt hash and provider identity
"""

import hashlib
import json
import logging
import threading
from pathlib import Path
from typing import Dict, Optional

from .config import cache_dir, read_json, write_json
from .session import ProviderConfig

logger = logging.getLogger(__name__)

LOCK_STRIPES = 64


class ResponseCache:
    """
    Raw provider responses stored as one JSON file per key.

    Writes are atomic; callers hold lock(key) around check-then-call so
    concurrent workers never issue the same request twice.
    """

    def __init__(self, root: Optional[Path] = None, enabled: bool = True):
        self.root = Path(root) if root is not None else cache_dir() / 'responses'
        self.enabled = enabled
        self.hits = 0
        self._locks = tuple(threading.Lock() for _ in range(LOCK_STRIPES))

    @staticmethod
    def key(prompt_hash: str, cfg: ProviderConfig) -> str:
        material = json.dumps({'prompt': prompt_hash, 'provider': cfg.identity()}, sort_keys=True)
        return hashlib.sha256(material.encode('utf-8')).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def lock(self, key: str) -> threading.Lock:
        """Lock for a key; keys share a fixed pool of stripes by hash prefix"""
        return self._locks[int(key[:8], 16) % LOCK_STRIPES]

    def get(self, key: str) -> Optional[Dict]:
        """Cached entry (raw text plus metadata), or None on miss or when disabled"""
        if not self.enabled:
            return None
        path = self._path(key)
        if not path.is_file():
            return None
        try:
            entry = read_json(path)
        except (OSError, ValueError) as e:
            logger.warning("Ignoring unreadable cache entry %s: %s", path, e)
            return None
        self.hits += 1
        return entry

    def put(self, key: str, raw: str, **meta) -> None:
        if not self.enabled:
            return
        write_json(self._path(key), {'key': key, 'raw': raw, **meta})
