"""Text atoms, embedding providers (offline hashing + HTTP), disk cache and cosine similarity."""

from __future__ import annotations

import hashlib
import logging
import os
import re
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np
import requests

logger = logging.getLogger(__name__)

MIN_ATOM_CHARS = 20
DEFAULT_DIM = 384

_ABBREVIATIONS = ("e.g.", "i.e.", "et al.", "etc.", "vs.", "cf.", "fig.", "eq.", "no.", "vol.", "approx.")
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
# terminator, then whitespace and an uppercase letter / digit / opening quote
_SPLIT_RE = re.compile(r"(?<=[.!?])[\"')\]]?\s+(?=[\"'(\[]?[A-Z0-9])")


class EmbeddingError(RuntimeError):
    def __init__(self, message: str, indices: Sequence[int] = ()):
        super().__init__(message)
        self.indices = list(indices)


@dataclass(frozen=True)
class TextAtom:
    source_id: int | str
    text: str


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def split_atoms(text: str, source_id, min_chars: int = MIN_ATOM_CHARS) -> list[TextAtom]:
    """Sentence-level atoms; fragments shorter than ``min_chars`` merge into the previous atom."""
    text = " ".join((text or "").split())
    if not text:
        return []
    pieces = []
    start = 0
    for m in _SPLIT_RE.finditer(text):
        candidate = text[start : m.start()].rstrip()
        lowered = candidate.lower()
        if any(lowered.endswith(abbr) for abbr in _ABBREVIATIONS):
            continue
        if re.search(r"(?:^|\s)[A-Z]\.$", candidate):
            continue  # initial such as "J. Smith"
        pieces.append(candidate)
        start = m.end()
    pieces.append(text[start:].strip())

    atoms: list[str] = []
    for piece in pieces:
        if not piece:
            continue
        if atoms and len(piece) < min_chars:
            atoms[-1] = f"{atoms[-1]} {piece}"
        else:
            atoms.append(piece)
    return [TextAtom(source_id, a) for a in atoms]


class EmbeddingProvider(Protocol):
    provider_id: str
    model_id: str
    dimension: int

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray: ...


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if np.any(norms == 0):
        bad = np.nonzero(norms.ravel() == 0)[0]
        raise EmbeddingError("zero-norm embedding", bad.tolist())
    return mat / norms


class HashingEmbedder:
    """Seeded signed feature hashing of lowercased word tokens. Deterministic, offline."""

    provider_id = "offline-hash"

    def __init__(self, dimension: int = DEFAULT_DIM, seed: int = 0):
        self.dimension = dimension
        self.seed = seed
        self.model_id = f"hash-{dimension}-s{seed}"
        self._key = seed.to_bytes(8, "little", signed=True)

    def _slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest()
        value = int.from_bytes(digest, "little")
        return value % self.dimension, 1.0 if (value >> 63) & 1 else -1.0

    def token_vectors(self, text: str) -> np.ndarray:
        """One unit vector per token (used by the token-level scorer)."""
        tokens = tokenize(text)
        out = np.zeros((len(tokens), self.dimension))
        for i, tok in enumerate(tokens):
            slot, sign = self._slot(tok)
            out[i, slot] = sign
        return out

    def _vector(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        tokens = tokenize(text) or [text]
        for tok in tokens:
            slot, sign = self._slot(tok)
            vec[slot] += sign
        if not vec.any():
            # tokens cancelled exactly; fall back to the whole-string slot
            slot, sign = self._slot("\x00" + text)
            vec[slot] = sign
        return vec

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension))
        return _unit_rows(np.vstack([self._vector(t) for t in texts]))


class HTTPEmbedder:
    """Client for an embedding endpoint: POST {"model", "input": [str]} -> vectors in order.

    Accepts a bare list of vectors, {"embeddings": [...]}, or the OpenAI-style
    {"data": [{"index", "embedding"}]} response.
    """

    provider_id = "http"

    def __init__(
        self,
        endpoint: str,
        model_id: str,
        dimension: Optional[int] = None,
        api_key: Optional[str] = None,
        batch_size: int = 64,
        max_concurrency: int = 4,
        retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 60.0,
        session: Optional[requests.Session] = None,
    ):
        self.endpoint = endpoint
        self.model_id = model_id
        self.dimension = dimension or 0
        self.api_key = api_key or os.environ.get("BIBLIOMAP_EMBEDDING_KEY")
        self.batch_size = batch_size
        self.max_concurrency = max_concurrency
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()

    def _post(self, texts: list[str]) -> list[list[float]]:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        resp = self.session.post(
            self.endpoint, json={"model": self.model_id, "input": texts}, headers=headers,
            timeout=self.timeout,
        )
        resp.raise_for_status()
        body = resp.json()
        if isinstance(body, dict) and "data" in body:
            items = sorted(body["data"], key=lambda d: d.get("index", 0))
            vectors = [d["embedding"] for d in items]
        elif isinstance(body, dict):
            vectors = body["embeddings"]
        else:
            vectors = body
        if len(vectors) != len(texts):
            raise ValueError(f"expected {len(texts)} vectors, got {len(vectors)}")
        return vectors

    def _batch(self, start: int, texts: list[str]) -> np.ndarray:
        for attempt in range(self.retries + 1):
            try:
                return np.asarray(self._post(texts), dtype=np.float64)
            except (requests.RequestException, ValueError, KeyError) as exc:
                if attempt == self.retries:
                    raise EmbeddingError(
                        f"embedding request failed: {exc}", range(start, start + len(texts))
                    ) from exc
                time.sleep(self.backoff * 2**attempt)
        raise AssertionError("unreachable")

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        if not texts:
            return np.zeros((0, self.dimension))
        starts = range(0, len(texts), self.batch_size)
        with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
            parts = list(pool.map(lambda s: self._batch(s, texts[s : s + self.batch_size]), starts))
        mat = np.vstack(parts)
        if self.dimension and mat.shape[1] != self.dimension:
            raise EmbeddingError(f"dimension {mat.shape[1]} != expected {self.dimension}")
        self.dimension = mat.shape[1]
        return _unit_rows(mat)


class CachedEmbedder:
    """Disk cache keyed by (provider id, model id, content digest); one .npy per text."""

    def __init__(self, inner: EmbeddingProvider, cache_dir):
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @property
    def provider_id(self) -> str:
        return self.inner.provider_id

    @property
    def model_id(self) -> str:
        return self.inner.model_id

    @property
    def dimension(self) -> int:
        return self.inner.dimension

    def __getattr__(self, name):
        # token_vectors and friends pass through
        return getattr(self.inner, name)

    def _path(self, text: str) -> Path:
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        safe = re.sub(r"[^\w.-]", "_", f"{self.inner.provider_id}/{self.inner.model_id}")
        return self.cache_dir / safe / digest[:2] / f"{digest}.npy"

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        rows: list[Optional[np.ndarray]] = [None] * len(texts)
        todo: dict[str, list[int]] = {}
        for i, t in enumerate(texts):
            path = self._path(t)
            if path.exists():
                rows[i] = np.load(path)
                self.hits += 1
            else:
                todo.setdefault(t, []).append(i)
        if todo:
            fresh = self.inner.embed_texts(list(todo))
            self.misses += len(todo)
            with self._lock:
                for (t, idxs), vec in zip(todo.items(), fresh):
                    path = self._path(t)
                    path.parent.mkdir(parents=True, exist_ok=True)
                    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
                    with os.fdopen(fd, "wb") as fh:
                        np.save(fh, vec)
                    os.replace(tmp, path)
                    for i in idxs:
                        rows[i] = vec
        if not rows:
            return np.zeros((0, self.dimension))
        return np.vstack(rows)


def embed(atoms: Sequence[TextAtom], provider: EmbeddingProvider) -> np.ndarray:
    """Unit-norm vector per atom, row-aligned with ``atoms``."""
    return provider.embed_texts([a.text for a in atoms])


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.clip(a @ b, -1.0, 1.0))


def pairwise_similarity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """values[u, v] = cosine(a[u], b[v]) for unit-norm rows."""
    a, b = np.atleast_2d(np.asarray(a, float)), np.atleast_2d(np.asarray(b, float))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty embedding list")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return np.clip(a @ b.T, -1.0, 1.0)
