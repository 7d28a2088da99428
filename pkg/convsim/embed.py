"""
Sentence embeddings and cosine similarity.

Three backends sit behind one config: a deterministic hash stub (tests and
offline runs), a local sentence-transformers model and a remote
OpenAI-compatible embeddings endpoint.
"""

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import requests

from .config import cache_dir
from .exceptions import ConfigurationError, InputError, ProviderError, UndefinedSimilarityError

logger = logging.getLogger(__name__)

try:
    from sentence_transformers import SentenceTransformer

    TRANSFORMERS_AVAILABLE = True
except ImportError:
    SentenceTransformer = None  # type: ignore[assignment, misc]
    TRANSFORMERS_AVAILABLE = False
    logger.debug("sentence-transformers not installed; local embedding backend unavailable")

BACKEND_STUB = 'stub'
BACKEND_LOCAL = 'sentence-transformers'
BACKEND_REMOTE = 'remote'
BACKENDS = (BACKEND_STUB, BACKEND_LOCAL, BACKEND_REMOTE)

STUB_DIMENSION = 64


@dataclass(frozen=True)
class EmbeddingConfig:
    """
    Which embedding model to use and how to reach it.

    stub_vectors pins exact vectors for given texts under the stub backend;
    every other text gets its hash vector.
    """
    backend: str = BACKEND_STUB
    model_id: str = 'stub'
    dimension: int = STUB_DIMENSION
    endpoint: Optional[str] = None
    credential_env: Optional[str] = None
    timeout: float = 60.0
    batch_size: int = 64
    use_cache: bool = True
    stub_vectors: Mapping[str, Tuple[float, ...]] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ConfigurationError(f"Unknown embedding backend: {self.backend}")
        if self.dimension < 1:
            raise ConfigurationError(f"Embedding dimension must be >= 1 (got {self.dimension})")
        if self.backend == BACKEND_REMOTE and not self.endpoint:
            raise ConfigurationError("Remote embedding backend needs an endpoint")
        for text, vector in self.stub_vectors.items():
            if len(vector) != self.dimension:
                raise ConfigurationError(
                    f"Pinned vector for {text!r} has {len(vector)} entries, expected {self.dimension}")

    def to_dict(self) -> Dict:
        result: Dict[str, Any] = {
            'backend': self.backend,
            'modelId': self.model_id,
            'dimension': self.dimension,
        }
        if self.endpoint:
            result['endpoint'] = self.endpoint
        if self.credential_env:
            result['credentialEnv'] = self.credential_env
        if not self.use_cache:
            result['useCache'] = False
        return result

    @classmethod
    def from_dict(cls, data: Optional[Dict]) -> 'EmbeddingConfig':
        data = data or {}
        return cls(
            backend=data.get('backend', BACKEND_STUB),
            model_id=data.get('modelId', 'stub'),
            dimension=data.get('dimension', STUB_DIMENSION),
            endpoint=data.get('endpoint'),
            credential_env=data.get('credentialEnv'),
            timeout=data.get('timeout', 60.0),
            batch_size=data.get('batchSize', 64),
            use_cache=data.get('useCache', True),
            stub_vectors={k: tuple(v) for k, v in (data.get('stubVectors') or {}).items()},
        )


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-length vector tagged with the model that produced it"""
    values: Tuple[float, ...]
    model_id: str

    def __post_init__(self):
        if not self.values:
            raise InputError("Embedding vector is empty")
        if not np.all(np.isfinite(self.values)):
            raise InputError("Embedding vector has non-finite entries")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @property
    def dimension(self) -> int:
        return len(self.values)


def _digest(model_id: str, text: str) -> str:
    return hashlib.sha256(f"{model_id}\n{text}".encode('utf-8')).hexdigest()


def stub_vector(text: str, cfg: EmbeddingConfig) -> np.ndarray:
    """Unit vector seeded by the text hash; identical across processes"""
    pinned = cfg.stub_vectors.get(text)
    if pinned is not None:
        return np.asarray(pinned, dtype=float)
    seed = int(_digest(cfg.model_id, text)[:16], 16)
    vector = np.random.default_rng(seed).standard_normal(cfg.dimension)
    return vector / np.linalg.norm(vector)


class EmbeddingCache:
    """
    On-disk vectors: one .npy file per (model, text digest) plus an
    index.jsonl listing what is stored.
    """

    def __init__(self, root: Optional[Path] = None):
        self.root = Path(root) if root is not None else cache_dir() / 'embeddings'
        self.hits = 0
        self._lock = threading.Lock()

    def _dir(self, model_id: str) -> Path:
        return self.root / hashlib.sha256(model_id.encode('utf-8')).hexdigest()[:16]

    def get(self, model_id: str, digest: str) -> Optional[np.ndarray]:
        path = self._dir(model_id) / f"{digest}.npy"
        if not path.is_file():
            return None
        try:
            vector = np.load(path)
        except (OSError, ValueError) as e:
            logger.warning("Ignoring unreadable embedding %s: %s", path, e)
            return None
        self.hits += 1
        return vector

    def put(self, model_id: str, digest: str, vector: np.ndarray, text: str) -> None:
        directory = self._dir(model_id)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{digest}.npy"
        tmp = directory / f".{digest}.{os.getpid()}.{threading.get_ident()}.npy"
        np.save(tmp, vector)
        os.replace(tmp, path)
        line = json.dumps({'digest': digest, 'modelId': model_id, 'text': text[:80]}, ensure_ascii=False)
        with self._lock:
            with open(directory / 'index.jsonl', 'a', encoding='utf-8') as f:
                f.write(line + '\n')


class Embedder:
    """
    Embeds texts with one config, caching real-model vectors on disk.

    Example:
        >>> embedder = Embedder(EmbeddingConfig())
        >>> a, b = embedder.embed(['vegan bakery', 'food truck'])
        >>> cosine_similarity(a, b)
    """

    def __init__(self, cfg: Optional[EmbeddingConfig] = None, cache: Optional[EmbeddingCache] = None,
                 http: Optional[requests.Session] = None):
        self.cfg = cfg or EmbeddingConfig()
        self.cache = cache
        if self.cache is None and self.cfg.use_cache and self.cfg.backend != BACKEND_STUB:
            self.cache = EmbeddingCache()
        self._http = http
        self._model = None
        self._model_lock = threading.Lock()

    def _local_model(self):
        if not TRANSFORMERS_AVAILABLE:
            raise ProviderError("sentence-transformers is not installed (pip install convsim[embeddings])",
                                provider=self.cfg.model_id)
        with self._model_lock:
            if self._model is None:
                logger.info("Loading sentence-transformers model %s", self.cfg.model_id)
                try:
                    self._model = SentenceTransformer(self.cfg.model_id)
                except Exception as e:
                    raise ProviderError(f"Cannot load embedding model {self.cfg.model_id}: {e}",
                                        provider=self.cfg.model_id)
            return self._model

    def _remote(self, texts: List[str]) -> List[List[float]]:
        cfg = self.cfg
        if self._http is None:
            self._http = requests.Session()
        headers = {'Content-Type': 'application/json'}
        if cfg.credential_env:
            key = os.environ.get(cfg.credential_env)
            if not key:
                raise ConfigurationError(f"Credential for embeddings missing: set {cfg.credential_env}")
            headers['Authorization'] = f'Bearer {key}'
        url = f"{cfg.endpoint.rstrip('/')}/embeddings"  # type: ignore[union-attr]
        try:
            response = self._http.post(url, json={'model': cfg.model_id, 'input': texts},
                                       headers=headers, timeout=cfg.timeout)
        except requests.exceptions.RequestException as e:
            raise ProviderError(f"Embedding request failed: {e}", provider=cfg.model_id)
        if response.status_code >= 400:
            raise ProviderError(f"HTTP {response.status_code} from embeddings endpoint: {response.text[:200]}",
                                status=response.status_code, provider=cfg.model_id)
        try:
            data = sorted(response.json()['data'], key=lambda d: d.get('index', 0))
            return [d['embedding'] for d in data]
        except (ValueError, KeyError, TypeError) as e:
            raise ProviderError(f"Unexpected embeddings response: {e}", provider=cfg.model_id)

    def _compute(self, texts: List[str]) -> List[np.ndarray]:
        backend = self.cfg.backend
        if backend == BACKEND_STUB:
            return [stub_vector(t, self.cfg) for t in texts]
        vectors: List[np.ndarray] = []
        for start in range(0, len(texts), self.cfg.batch_size):
            batch = texts[start:start + self.cfg.batch_size]
            if backend == BACKEND_LOCAL:
                encoded = self._local_model().encode(batch, convert_to_numpy=True)
                vectors.extend(np.asarray(v, dtype=float) for v in encoded)
            else:
                vectors.extend(np.asarray(v, dtype=float) for v in self._remote(batch))
        for vector in vectors:
            if vector.shape != (self.cfg.dimension,):
                raise ProviderError(
                    f"Model {self.cfg.model_id} returned dimension {vector.shape[-1]}, "
                    f"config declares {self.cfg.dimension}", provider=self.cfg.model_id)
        return vectors

    def embed(self, texts: Sequence[str]) -> List[EmbeddingVector]:
        """
        Embed texts, one vector per text in input order.

        Raises:
            InputError: A text is empty
            ProviderError: Backend unavailable or returned bad vectors
        """
        for i, text in enumerate(texts):
            if not isinstance(text, str) or not text.strip():
                raise InputError(f"Text {i} is empty")

        model_id = self.cfg.model_id
        found: Dict[int, np.ndarray] = {}
        pending: List[int] = []
        for i, text in enumerate(texts):
            cached = self.cache.get(model_id, _digest(model_id, text)) if self.cache else None
            if cached is not None:
                found[i] = cached
            else:
                pending.append(i)

        unique = list(dict.fromkeys(texts[i] for i in pending))
        if unique:
            logger.debug("Embedding %d texts with %s", len(unique), model_id)
            computed = dict(zip(unique, self._compute(unique)))
            for text, vector in computed.items():
                if self.cache is not None:
                    self.cache.put(model_id, _digest(model_id, text), vector, text)
            for i in pending:
                found[i] = computed[texts[i]]

        return [EmbeddingVector(tuple(float(x) for x in found[i]), model_id) for i in range(len(texts))]


_embedders: Dict[EmbeddingConfig, Embedder] = {}
_embedders_lock = threading.Lock()


def _embedder(cfg: EmbeddingConfig) -> Embedder:
    with _embedders_lock:
        embedder = _embedders.get(cfg)
        if embedder is None or embedder.cfg.stub_vectors != cfg.stub_vectors:
            embedder = Embedder(cfg)
            _embedders[cfg] = embedder
        return embedder


def embed_sentences(texts: Sequence[str], model: Optional[EmbeddingConfig] = None) -> List[EmbeddingVector]:
    """
    Embed texts with the given config (stub when None).

    Raises:
        InputError: A text is empty
        ProviderError: Backend unavailable
    """
    cfg = model or EmbeddingConfig()
    if cfg.backend == BACKEND_STUB:
        return Embedder(cfg).embed(texts)
    return _embedder(cfg).embed(texts)


VectorLike = Union[EmbeddingVector, Sequence[float], np.ndarray]


def _as_array(v: VectorLike) -> np.ndarray:
    if isinstance(v, EmbeddingVector):
        return v.array
    return np.asarray(v, dtype=float)


def cosine_similarity(a: VectorLike, b: VectorLike) -> float:
    """
    dot(a, b) / (|a| |b|), clipped to [-1, 1].

    Raises:
        InputError: Dimensions differ
        UndefinedSimilarityError: Either vector is all zeros
    """
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise InputError(f"Dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise UndefinedSimilarityError("Cosine similarity undefined for a zero vector")
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def similarity_matrix(vectors: Sequence[VectorLike]) -> np.ndarray:
    """Pairwise cosine similarities as an n x n matrix"""
    matrix = np.vstack([_as_array(v) for v in vectors])
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0):
        raise UndefinedSimilarityError("Cosine similarity undefined for a zero vector")
    unit = matrix / norms[:, None]
    return np.clip(unit @ unit.T, -1.0, 1.0)
