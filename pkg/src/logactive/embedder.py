"""Message embeddings: remote embeddings endpoint with disk cache, or a local
signed feature-hashing projection that needs no network."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

import httpx
import numpy as np

from .errors import DimensionMismatch, InputError, RemoteUnavailable

logger = logging.getLogger(__name__)

REMOTE = "remote"
LOCAL_HASH = "local-hash"
EMBED_KEY_ENV = "LOGACTIVE_EMBED_API_KEY"

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+")


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    record_id: int
    source: str


@dataclass(frozen=True)
class EmbedderConfig:
    mode: str = LOCAL_HASH
    dimension: int = 64
    model_name: str = "text-embedding-ada-002"
    endpoint: Optional[str] = None
    batch_size: int = 64
    seed: int = 0
    normalize: bool = False  # remote vectors only; local vectors are always unit norm
    max_retries: int = 4
    backoff_base: float = 0.5
    max_parallel: int = 2
    timeout: float = 30.0
    api_key_env: str = EMBED_KEY_ENV
    cache_path: Optional[str] = None

    def __post_init__(self):
        if self.mode not in (REMOTE, LOCAL_HASH):
            raise InputError(f"unknown embedder mode {self.mode!r}")
        if self.dimension <= 0:
            raise InputError("embedding dimension must be positive")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")

    @classmethod
    def from_flag(cls, flag: str, **overrides) -> "EmbedderConfig":
        """Parse ``remote`` or ``hash:<dim>`` as used by the CLI."""
        if flag == "remote":
            return cls(mode=REMOTE, dimension=overrides.pop("dimension", 1536), **overrides)
        if flag.startswith("hash"):
            _, _, dim = flag.partition(":")
            if dim:
                overrides["dimension"] = int(dim)
            return cls(mode=LOCAL_HASH, **overrides)
        raise InputError(f"bad --embedder value {flag!r}")


def l2_normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return v.copy()
    return v / norm


def tokenize(message: str) -> list:
    return _TOKEN_RE.findall(message)


@lru_cache(maxsize=1 << 16)
def _token_hash(token: str, seed: int) -> int:
    key = seed.to_bytes(8, "little", signed=True)
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest(), "little")


def token_slot(token: str, d: int, seed: int):
    """Bucket index and sign for one token under the seeded hash."""
    h = _token_hash(token, seed)
    return h % d, (1.0 if (h >> 63) == 0 else -1.0)


def hash_projection_embed(message: str, d: int, seed: int = 0, record_id: int = -1) -> EmbeddingVector:
    if d < 2:
        raise InputError("hash embedding dimension must be >= 2")
    v = np.zeros(d, dtype=np.float64)
    for tok in tokenize(message):
        idx, sign = token_slot(tok, d, seed)
        v[idx] += sign
    return EmbeddingVector(l2_normalize(v), record_id, LOCAL_HASH)


# --------------------------------------------------------------------------
# remote embeddings
# --------------------------------------------------------------------------

class EmbeddingCache:
    """Append-only JSONL cache of ``{"key", "vector"}`` rows keyed by content hash."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self._data = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        row = json.loads(line)
                        self._data[row["key"]] = row["vector"]

    @staticmethod
    def key(model_name: str, message: str) -> str:
        return hashlib.sha256(f"{model_name}\0{message}".encode("utf-8")).hexdigest()

    def get(self, key):
        return self._data.get(key)

    def __contains__(self, key):
        return key in self._data

    def __len__(self):
        return len(self._data)

    def put_many(self, items) -> None:
        with self._lock:
            fresh = [(k, v) for k, v in items if k not in self._data]
            for k, v in fresh:
                self._data[k] = v
            if self.path and fresh:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    for k, v in fresh:
                        fh.write(json.dumps({"key": k, "vector": v}) + "\n")


class RemoteEmbeddingClient:
    """Thin client for an OpenAI-style ``/embeddings`` endpoint."""

    def __init__(self, config: EmbedderConfig, transport: Optional[httpx.BaseTransport] = None,
                 sleep: Callable[[float], None] = time.sleep, api_key: Optional[str] = None):
        if not config.endpoint:
            raise InputError("remote embedder needs an endpoint URL")
        key = api_key or os.environ.get(config.api_key_env)
        if not key:
            raise InputError(f"remote embedder needs credentials in ${config.api_key_env}")
        self.config = config
        self.sleep = sleep
        self.calls = 0
        self._lock = threading.Lock()
        self._http = httpx.Client(
            transport=transport, timeout=config.timeout,
            headers={"Authorization": f"Bearer {key}"},
        )

    def embed(self, texts: Sequence[str]) -> list:
        cfg = self.config
        payload = {"model": cfg.model_name, "input": list(texts)}
        last = None
        for attempt in range(cfg.max_retries + 1):
            with self._lock:
                self.calls += 1
            try:
                resp = self._http.post(cfg.endpoint, json=payload)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                else:
                    resp.raise_for_status()
                    return self._parse(resp.json(), len(texts))
            except httpx.TransportError as exc:
                last = repr(exc)
            except httpx.HTTPStatusError as exc:
                raise RemoteUnavailable(f"embedding request rejected: {exc}") from exc
            if attempt < cfg.max_retries:
                self.sleep(cfg.backoff_base * (2 ** attempt))
        raise RemoteUnavailable(f"embedding endpoint failed after {cfg.max_retries + 1} attempts: {last}")

    def _parse(self, body: dict, n: int) -> list:
        data = sorted(body["data"], key=lambda row: row.get("index", 0))
        if len(data) != n:
            raise RemoteUnavailable(f"expected {n} embeddings, got {len(data)}")
        out = []
        for row in data:
            vec = [float(x) for x in row["embedding"]]
            if len(vec) != self.config.dimension:
                raise DimensionMismatch(f"endpoint returned dimension {len(vec)}, expected {self.config.dimension}")
            out.append(vec)
        return out


def embed_batch(messages: Sequence[str], config: EmbedderConfig, cache: Optional[EmbeddingCache] = None,
                client: Optional[RemoteEmbeddingClient] = None, record_ids: Optional[Sequence[int]] = None) -> list:
    """Embed ``messages`` in order, one :class:`EmbeddingVector` each."""
    if not messages:
        raise InputError("embed_batch needs at least one message")
    ids = list(record_ids) if record_ids is not None else list(range(len(messages)))
    if config.mode == LOCAL_HASH:
        return [hash_projection_embed(m, config.dimension, config.seed, i) for m, i in zip(messages, ids)]

    if cache is None:
        cache = EmbeddingCache(config.cache_path)
    if client is None:
        client = RemoteEmbeddingClient(config)
    keys = [EmbeddingCache.key(config.model_name, m) for m in messages]
    missing = []
    seen = set()
    for k, m in zip(keys, messages):
        if k not in cache and k not in seen:
            seen.add(k)
            missing.append((k, m))
    batches = [missing[i:i + config.batch_size] for i in range(0, len(missing), config.batch_size)]

    def run(batch):
        return list(zip((k for k, _ in batch), client.embed([m for _, m in batch])))

    fetched = []
    if batches:
        with ThreadPoolExecutor(max_workers=max(1, config.max_parallel)) as pool:
            for result in pool.map(run, batches):
                fetched.extend(result)
    # all batches succeeded; only now persist
    cache.put_many(fetched)
    out = []
    for k, i in zip(keys, ids):
        v = np.asarray(cache.get(k), dtype=np.float64)
        out.append(EmbeddingVector(l2_normalize(v) if config.normalize else v, i, REMOTE))
    return out


def embedding_matrix(vectors: Sequence[EmbeddingVector]) -> np.ndarray:
    mat = np.vstack([v.values for v in vectors])
    if not np.all(np.isfinite(mat)):
        raise InputError("non-finite embedding values")
    return mat


def save_embeddings(path, ids, matrix) -> None:
    np.savez(path, ids=np.asarray(ids, dtype=np.int64), vectors=np.asarray(matrix, dtype=np.float64))


def load_embeddings(path):
    with np.load(path) as data:
        return data["ids"], data["vectors"]
