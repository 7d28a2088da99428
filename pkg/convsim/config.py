"""
Package-level configuration: environment variables and bundled data files
"""

import json
import os
import threading
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional

CACHE_DIR_ENV = 'CONVSIM_CACHE_DIR'
DEFAULT_CACHE_DIR = Path.home() / '.cache' / 'convsim'

PACKAGE_DIR = Path(__file__).resolve().parent
DATA_DIR = PACKAGE_DIR / 'data'
TEMPLATE_DIR = PACKAGE_DIR / 'templates'


def cache_dir(override: Optional[str] = None) -> Path:
    """
    Resolve the cache root.

    Args:
        override: Explicit directory (wins over the environment)

    Returns:
        CONVSIM_CACHE_DIR if set, else ~/.cache/convsim
    """
    if override:
        return Path(override).expanduser()
    env = os.environ.get(CACHE_DIR_ENV)
    if env:
        return Path(env).expanduser()
    return DEFAULT_CACHE_DIR


@lru_cache(maxsize=None)
def load_data(name: str) -> Any:
    """Load a bundled JSON data file by name (e.g. 'facets.json')"""
    with open(DATA_DIR / name, 'r', encoding='utf-8') as f:
        return json.load(f)


def read_json(path) -> Any:
    """Read a UTF-8 JSON file"""
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def write_json(path, data: Any) -> None:
    """Write JSON atomically (temp file + rename)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    with open(tmp, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, ensure_ascii=False)
        f.write('\n')
    os.replace(tmp, path)
