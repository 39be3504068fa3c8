"""Technique tagging by nearest-neighbor search over embedded definitions.

Each document is cut into non-overlapping k-line chunks; every chunk is
embedded and assigned the technique whose definition vector has the
highest cosine similarity. Ties break toward the lexicographically
smallest technique ID so results never depend on matrix row order.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Chunk, Document, chunk_document
from .embedding import EmbeddedTaxonomy, EmbeddingProvider
from .errors import ValidationError
from .taxonomy import TechniqueId

logger = logging.getLogger(__name__)

# Similarities this close to the maximum count as tied. Wide enough to
# absorb summation-order rounding (matmul vs per-row dot), far below any
# gap a genuinely different definition produces.
TIE_EPS = 1e-9


@dataclass(frozen=True)
class ChunkTag:
    doc_id: str
    chunk_index: int
    text: str
    ttp: TechniqueId | None
    name: str | None
    similarity: float
    runner_up: TechniqueId | None


@dataclass(frozen=True)
class IdentifyConfig:
    window_lines: int = 3
    min_similarity: float | None = None
    collapse_subtechniques: bool = False


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    m = matrix.astype(np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValidationError("taxonomy matrix contains a zero row")
    return m / norms


def tag_chunks(
    chunks: Sequence[Chunk],
    emb: EmbeddedTaxonomy,
    provider: EmbeddingProvider,
    names: dict[TechniqueId, str],
    config: IdentifyConfig,
) -> list[ChunkTag]:
    if not chunks:
        return []
    tax_rows = _normalize_rows(emb.matrix)
    chunk_vecs = provider.embed([c.text for c in chunks]).astype(np.float64)
    norms = np.linalg.norm(chunk_vecs, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValidationError("chunk embedding has zero norm")
    chunk_vecs = chunk_vecs / norms
    sims = chunk_vecs @ tax_rows.T

    tags = []
    for i, chunk in enumerate(chunks):
        row = sims[i]
        best = float(row.max())
        winner = tie_break([emb.ids[j] for j in np.flatnonzero(row >= best - TIE_EPS)])
        others = row.copy()
        others[emb.ids.index(winner)] = -np.inf
        runner_up = emb.ids[int(others.argmax())] if len(emb.ids) > 1 else None
        if config.min_similarity is not None and best < config.min_similarity:
            tags.append(ChunkTag(chunk.doc_id, chunk.index, chunk.text,
                                 None, None, best, runner_up))
            continue
        tags.append(ChunkTag(chunk.doc_id, chunk.index, chunk.text,
                             winner, names.get(winner), best, runner_up))
    return tags


def identify_ve(
    doc: Document,
    emb: EmbeddedTaxonomy,
    provider: EmbeddingProvider,
    names: dict[TechniqueId, str],
    config: IdentifyConfig | None = None,
) -> list[ChunkTag]:
    """Tag every chunk of one document with its nearest technique."""
    config = config or IdentifyConfig()
    chunks = chunk_document(doc, config.window_lines)
    return tag_chunks(chunks, emb, provider, names, config)


def tags_to_counts(tags: Sequence[ChunkTag], collapse_subtechniques: bool = False) -> Counter:
    """Aggregate chunk tags into technique multiplicities for attribution."""
    counts: Counter = Counter()
    for tag in tags:
        if tag.ttp is None:
            continue
        tid = tag.ttp.technique_level() if collapse_subtechniques else tag.ttp
        counts[tid] += 1
    return counts


def aggregate_actor(counts_per_doc: Sequence[Counter]) -> Counter:
    """Pointwise sum of per-document counts; input order cannot matter."""
    total: Counter = Counter()
    for counts in counts_per_doc:
        total.update(counts)
    return total


def tie_break(candidates: Sequence[TechniqueId]) -> TechniqueId:
    """Resolve an argmax tie to the lexicographically smallest canonical ID."""
    if not candidates:
        raise ValidationError("tie_break needs at least one candidate")
    return min(candidates)


def identify_brute_force(
    doc: Document,
    emb: EmbeddedTaxonomy,
    provider: EmbeddingProvider,
    config: IdentifyConfig | None = None,
) -> list[TechniqueId]:
    """Reference tagger: python-loop cosine argmax, one chunk at a time.

    Exists to cross-check the vectorized path on small inputs; quadratic
    and unbatched on purpose.
    """
    config = config or IdentifyConfig()
    chunks = chunk_document(doc, config.window_lines)
    out = []
    for chunk in chunks:
        vec = provider.embed([chunk.text])[0].astype(np.float64)
        vec = vec / float(np.linalg.norm(vec))
        sims = []
        for j, tid in enumerate(emb.ids):
            row = emb.matrix[j].astype(np.float64)
            sims.append((float(np.dot(vec, row / np.linalg.norm(row))), tid))
        best = max(s for s, _ in sims)
        out.append(tie_break([tid for s, tid in sims if s >= best - TIE_EPS]))
    return out


def write_tags_jsonl(tags: Sequence[ChunkTag], path: str | Path) -> None:
    """One JSON object per chunk, stable key order, byte-deterministic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for tag in tags:
            fh.write(json.dumps({
                "doc_id": tag.doc_id,
                "chunk_index": tag.chunk_index,
                "ttp": tag.ttp.canonical if tag.ttp else None,
                "name": tag.name,
                "similarity": round(tag.similarity, 9),
                "runner_up": tag.runner_up.canonical if tag.runner_up else None,
            }, sort_keys=True) + "\n")


def read_tags_jsonl(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
