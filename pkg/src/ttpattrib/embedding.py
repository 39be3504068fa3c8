"""Embedding providers, the on-disk vector cache, and taxonomy embedding.

Two provider kinds ship by default. ``local-hash`` is a deterministic
feature-hashing embedder that needs no network and gives the test suite
and synthetic experiments a fixed-point. ``remote`` talks to any
OpenAI-compatible endpoint: POST ``{"model": ..., "input": [texts]}``,
reply ``{"data": [{"embedding": [...]}, ...]}`` in request order.

Cached vectors are keyed by (provider fingerprint, sha256 of the text) so
switching models or dimensions can never serve stale vectors.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyTextError,
    GenerationFailureError,
    ProviderUnavailableError,
    ValidationError,
    ZeroNormError,
)
from .taxonomy import Taxonomy, TechniqueId

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z0-9]+")

PROVIDER_KINDS = ("local-hash", "remote", "local-template")


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "local-hash"
    model_id: str = "hash-v1"
    dim: int = 512
    endpoint: str | None = None
    api_key_env: str | None = None
    max_retries: int = 3
    backoff_seconds: float = 1.0
    timeout_seconds: float = 30.0
    max_input_chars: int = 60_000

    def __post_init__(self) -> None:
        if self.kind not in PROVIDER_KINDS:
            raise ValidationError(f"unknown provider kind: {self.kind!r}")
        if self.dim < 1:
            raise ValidationError(f"embedding dim must be >= 1, got {self.dim}")
        if self.kind == "remote" and not self.endpoint:
            raise ValidationError("remote provider requires an endpoint URL")

    @property
    def fingerprint(self) -> str:
        return f"{self.kind}:{self.model_id}:d{self.dim}"


class EmbeddingProvider(Protocol):
    config: ProviderConfig

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class LocalHashProvider:
    """Feature-hashing embedder: signed token buckets, L2-normalized.

    Identical text always maps to identical float32 bytes, on any
    platform, which is what the determinism checks lean on.
    """

    def __init__(self, config: ProviderConfig):
        self.config = config
        self.call_count = 0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        self.call_count += 1
        out = np.empty((len(texts), self.config.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            out[i] = self._embed_one(text)
        return out

    def _embed_one(self, text: str) -> np.ndarray:
        tokens = _TOKEN_RE.findall(text.lower())
        if not tokens:
            raise EmptyTextError(f"no tokens to embed in text: {text[:40]!r}")
        vec = np.zeros(self.config.dim, dtype=np.float64)
        for token in tokens:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=16).digest()
            bucket = int.from_bytes(digest[:8], "little") % self.config.dim
            sign = 1.0 if digest[8] % 2 == 0 else -1.0
            vec[bucket] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ZeroNormError(f"all token buckets cancelled for text: {text[:40]!r}")
        return (vec / norm).astype(np.float32)


class RemoteProvider:
    """OpenAI-compatible embeddings client with retry and backoff."""

    def __init__(self, config: ProviderConfig, session=None):
        import requests

        self.config = config
        self.call_count = 0
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        for text in texts:
            if not text.strip():
                raise EmptyTextError("cannot embed empty text")
        payload = {"model": self.config.model_id, "input": list(texts)}
        body = self._post_with_retry(payload)
        try:
            rows = [item["embedding"] for item in body["data"]]
        except (KeyError, TypeError) as exc:
            raise ProviderUnavailableError(f"malformed embedding response: {exc}") from exc
        if len(rows) != len(texts):
            raise ProviderUnavailableError(
                f"provider returned {len(rows)} vectors for {len(texts)} inputs"
            )
        arr = np.asarray(rows, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[1] != self.config.dim:
            raise DimensionMismatchError(
                f"expected dim {self.config.dim}, got shape {arr.shape}"
            )
        return arr

    def _post_with_retry(self, payload: dict) -> dict:
        import requests

        self.call_count += 1
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff_seconds * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(
                    self.config.endpoint,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.config.timeout_seconds,
                )
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("embedding request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code == 200:
                return resp.json()
            if resp.status_code in (429, 500, 502, 503, 504):
                last_error = ProviderUnavailableError(
                    f"provider returned {resp.status_code}"
                )
                logger.warning("embedding request got %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            raise ProviderUnavailableError(
                f"provider returned {resp.status_code}: {resp.text[:200]}"
            )
        raise ProviderUnavailableError(f"provider unreachable after retries: {last_error}")


def make_provider(config: ProviderConfig) -> EmbeddingProvider:
    if config.kind == "local-hash":
        return LocalHashProvider(config)
    if config.kind == "remote":
        return RemoteProvider(config)
    raise ValidationError(f"no embedding provider for kind {config.kind!r}")


def embed_text(provider: EmbeddingProvider, text: str) -> np.ndarray:
    """Embed a single text; convenience over the batch interface."""
    return provider.embed([text])[0]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cosine over shapes {a.shape} and {b.shape}")
    av = a.astype(np.float64)
    bv = b.astype(np.float64)
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("cosine undefined for a zero-norm vector")
    return float(np.dot(av, bv) / (na * nb))


_FPR_SAFE_RE = re.compile(r"[^A-Za-z0-9._-]+")


class VectorCache:
    """Content-addressed float32 vector store.

    Layout: ``root/<fingerprint>/<sha256(text)>.vec`` where each file is a
    little-endian uint32 dimension prefix followed by the raw float32
    payload. Writes are atomic (tmp file + rename).
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()

    def _path(self, fingerprint: str, text: str) -> Path:
        safe = _FPR_SAFE_RE.sub("_", fingerprint)
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return self.root / safe / f"{digest}.vec"

    def get(self, fingerprint: str, text: str) -> np.ndarray | None:
        path = self._path(fingerprint, text)
        if not path.is_file():
            return None
        raw = path.read_bytes()
        if len(raw) < 4 or (len(raw) - 4) % 4 != 0:
            raise ValidationError(f"corrupt cache entry: {path}")
        (dim,) = struct.unpack_from("<I", raw, 0)
        vec = np.frombuffer(raw, dtype="<f4", offset=4)
        if vec.shape[0] != dim:
            raise ValidationError(f"corrupt cache entry: {path}")
        return vec.copy()

    def put(self, fingerprint: str, text: str, vec: np.ndarray) -> None:
        if vec.ndim != 1:
            raise ValidationError(f"cache stores 1-d vectors, got shape {vec.shape}")
        path = self._path(fingerprint, text)
        payload = struct.pack("<I", vec.shape[0]) + np.ascontiguousarray(vec, dtype="<f4").tobytes()
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(payload)
            tmp.replace(path)


class CachingProvider:
    """Wrap any provider with the vector cache, preserving input order."""

    def __init__(self, inner: EmbeddingProvider, cache: VectorCache):
        self.inner = inner
        self.cache = cache

    @property
    def config(self) -> ProviderConfig:
        return self.inner.config

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        fpr = self.inner.config.fingerprint
        out: list[np.ndarray | None] = []
        misses: list[int] = []
        for i, text in enumerate(texts):
            hit = self.cache.get(fpr, text)
            out.append(hit)
            if hit is None:
                misses.append(i)
        if misses:
            fresh = self.inner.embed([texts[i] for i in misses])
            for row, i in enumerate(misses):
                self.cache.put(fpr, texts[i], fresh[row])
                out[i] = fresh[row]
        return np.stack(out)  # type: ignore[arg-type]


PassageGenerator = Callable[[str], str]


def hyde_augment(
    definition_vec: np.ndarray,
    name: str,
    definition: str,
    provider: EmbeddingProvider,
    generator: PassageGenerator,
    n_passages: int,
) -> tuple[np.ndarray, bool]:
    """Blend a definition vector with n generated-passage vectors.

    The generator is prompted once per passage; the mean of definition and
    passage vectors is renormalized. On generation failure we fall back to
    the plain definition vector and report it via the flag.
    """
    if n_passages < 1:
        raise ValidationError(f"n_passages must be >= 1, got {n_passages}")
    prompt = (
        "Write a short incident-report paragraph describing an attacker "
        f"using technique {name}: {definition}"
    )
    passages = []
    try:
        for _ in range(n_passages):
            passage = generator(prompt)
            if not passage or not passage.strip():
                raise GenerationFailureError(f"empty passage for {name!r}")
            passages.append(passage)
    except GenerationFailureError as exc:
        logger.warning("passage generation failed for %r: %s", name, exc)
        return definition_vec, True
    vecs = provider.embed(passages).astype(np.float64)
    stacked = np.vstack([definition_vec.astype(np.float64), vecs])
    mean = stacked.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        raise ZeroNormError(f"augmented vector for {name!r} has zero norm")
    return (mean / norm).astype(np.float32), False


@dataclass(frozen=True)
class EmbeddedTaxonomy:
    """Dense matrix of technique vectors in taxonomy ordering."""

    ids: tuple[TechniqueId, ...]
    matrix: np.ndarray
    fingerprint: str
    fallback_ids: tuple[TechniqueId, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.matrix.shape[0] != len(self.ids):
            raise DimensionMismatchError(
                f"{len(self.ids)} ids vs matrix rows {self.matrix.shape[0]}"
            )

    def vector(self, tid: TechniqueId) -> np.ndarray:
        try:
            row = self.ids.index(tid)
        except ValueError:
            raise ValidationError(f"technique not embedded: {tid}") from None
        return self.matrix[row]


def technique_text(tid: TechniqueId, name: str, definition: str, include_id: bool = True) -> str:
    if include_id:
        return f"{tid.canonical} {name}: {definition}"
    return f"{name}: {definition}"


def embed_taxonomy(
    tax: Taxonomy,
    provider: EmbeddingProvider,
    include_id: bool = True,
    hyde_generator: PassageGenerator | None = None,
    hyde_passages: int = 3,
) -> EmbeddedTaxonomy:
    """Embed every live technique; optionally augment with HyDE passages."""
    texts = []
    for tid in tax.ordering:
        rec = tax.records[tid]
        texts.append(technique_text(tid, rec.name, rec.definition, include_id))
    matrix = provider.embed(texts).astype(np.float32)
    fingerprint = provider.config.fingerprint
    fallbacks: list[TechniqueId] = []
    if hyde_generator is not None:
        fingerprint += f"|hyde={hyde_passages}"
        rows = []
        for i, tid in enumerate(tax.ordering):
            rec = tax.records[tid]
            vec, fell_back = hyde_augment(
                matrix[i], rec.name, rec.definition, provider, hyde_generator, hyde_passages
            )
            rows.append(vec)
            if fell_back:
                fallbacks.append(tid)
        matrix = np.stack(rows)
    return EmbeddedTaxonomy(
        ids=tax.ordering,
        matrix=matrix,
        fingerprint=f"{fingerprint}|tax={tax.fingerprint()}",
        fallback_ids=tuple(fallbacks),
    )


def save_embedded_taxonomy(emb: EmbeddedTaxonomy, meta_path: str | Path) -> None:
    """Write metadata JSON next to a raw little-endian float32 matrix file."""
    meta_path = Path(meta_path)
    matrix_path = meta_path.with_suffix(".f32")
    meta = {
        "format_version": 1,
        "ids": [tid.canonical for tid in emb.ids],
        "dim": int(emb.matrix.shape[1]),
        "fingerprint": emb.fingerprint,
        "fallback_ids": [tid.canonical for tid in emb.fallback_ids],
        "matrix_file": matrix_path.name,
    }
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    matrix_path.write_bytes(np.ascontiguousarray(emb.matrix, dtype="<f4").tobytes())
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_embedded_taxonomy(meta_path: str | Path) -> EmbeddedTaxonomy:
    from .taxonomy import parse_technique_id

    meta_path = Path(meta_path)
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("format_version") != 1:
        raise ValidationError(f"unsupported embedding file version in {meta_path}")
    ids = tuple(parse_technique_id(s) for s in meta["ids"])
    raw = (meta_path.parent / meta["matrix_file"]).read_bytes()
    matrix = np.frombuffer(raw, dtype="<f4").reshape(len(ids), meta["dim"]).copy()
    return EmbeddedTaxonomy(
        ids=ids,
        matrix=matrix,
        fingerprint=meta["fingerprint"],
        fallback_ids=tuple(parse_technique_id(s) for s in meta["fallback_ids"]),
    )
