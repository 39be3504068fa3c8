"""Actor attribution: weight matrix training, priors, and Bayes scoring.

Each actor row holds the smoothed relative frequency of every technique
in that actor's training documents: row[j] = (count_j + alpha) /
(total + alpha * n). With alpha = 0 (the default) a row is exactly the
empirical distribution; either way live rows sum to 1.

Scoring a query: normalize its technique counts to a distribution y,
then score(actor) = prior(actor) * sum_j y_j * W[actor][j]. Actors are
ranked by descending score, ties toward the smaller actor name.
"""
from __future__ import annotations

import csv
import json
import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import Document
from .errors import DataError, ValidationError
from .taxonomy import TechniqueId, parse_technique_id

logger = logging.getLogger(__name__)

MATRIX_FORMAT_VERSION = 1

DocTagger = Callable[[Document], Counter]


@dataclass(frozen=True)
class WeightMatrix:
    actors: tuple[str, ...]
    ttp_order: tuple[TechniqueId, ...]
    values: np.ndarray
    smoothing: float
    taxonomy_fingerprint: str
    zero_rows: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.actors), len(self.ttp_order)):
            raise ValidationError(
                f"matrix shape {self.values.shape} does not match "
                f"{len(self.actors)} actors x {len(self.ttp_order)} techniques"
            )
        if self.values.dtype != np.float64:
            raise ValidationError(f"matrix must be float64, got {self.values.dtype}")

    def row(self, actor: str) -> np.ndarray:
        try:
            i = self.actors.index(actor)
        except ValueError:
            raise ValidationError(f"unknown actor: {actor}") from None
        return self.values[i]

    def column_index(self) -> dict[TechniqueId, int]:
        return {tid: j for j, tid in enumerate(self.ttp_order)}


def train_weight_matrix(
    train_docs: Mapping[str, Sequence[Document]],
    tagger: DocTagger,
    alpha: float = 0.0,
    ttp_order: Sequence[TechniqueId] | None = None,
    taxonomy_fingerprint: str = "",
) -> WeightMatrix:
    """Count techniques per actor over training docs and row-normalize.

    Actors whose documents produced no tags at all get a zero row (and a
    warning) rather than failing the whole run when alpha = 0.
    """
    if alpha < 0:
        raise ValidationError(f"smoothing alpha must be >= 0, got {alpha}")
    if not train_docs:
        raise DataError("no training documents")

    actor_counts: dict[str, Counter] = {}
    for actor in sorted(train_docs):
        merged: Counter = Counter()
        for doc in train_docs[actor]:
            merged.update(tagger(doc))
        actor_counts[actor] = merged

    if ttp_order is None:
        seen = set()
        for counts in actor_counts.values():
            seen.update(counts)
        ttp_order = tuple(sorted(seen))
    else:
        ttp_order = tuple(ttp_order)
    if not ttp_order:
        raise DataError("training produced no techniques to index")

    actors = tuple(sorted(actor_counts))
    n = len(ttp_order)
    col = {tid: j for j, tid in enumerate(ttp_order)}
    values = np.zeros((len(actors), n), dtype=np.float64)
    zero_rows = []
    for i, actor in enumerate(actors):
        counts = actor_counts[actor]
        dropped = [tid for tid in counts if tid not in col]
        if dropped:
            logger.warning("actor %s: %d techniques outside index dropped", actor, len(dropped))
        raw = np.zeros(n, dtype=np.float64)
        for tid, c in counts.items():
            if tid in col:
                raw[col[tid]] = float(c)
        total = raw.sum()
        denom = total + alpha * n
        if denom == 0.0:
            zero_rows.append(actor)
            warnings.warn(f"actor {actor!r} has no tagged techniques; row left at zero")
            continue
        values[i] = (raw + alpha) / denom

    return WeightMatrix(
        actors=actors,
        ttp_order=ttp_order,
        values=values,
        smoothing=alpha,
        taxonomy_fingerprint=taxonomy_fingerprint,
        zero_rows=tuple(zero_rows),
    )


@dataclass(frozen=True)
class Prior:
    actors: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        if self.weights.shape != (len(self.actors),):
            raise ValidationError("prior weights must align with actors")
        if np.any(self.weights < 0):
            raise ValidationError("prior weights must be non-negative")
        total = float(self.weights.sum())
        if total <= 0:
            raise ValidationError("prior weights must sum to a positive value")

    @staticmethod
    def uniform(actors: Sequence[str]) -> "Prior":
        actors = tuple(actors)
        return Prior(actors=actors, weights=np.full(len(actors), 1.0 / len(actors)))

    @staticmethod
    def from_counts(doc_counts: Mapping[str, int]) -> "Prior":
        actors = tuple(sorted(doc_counts))
        raw = np.array([float(doc_counts[a]) for a in actors], dtype=np.float64)
        if raw.sum() <= 0:
            raise ValidationError("document counts must sum to a positive value")
        return Prior(actors=actors, weights=raw / raw.sum())

    @staticmethod
    def from_csv(path: str | Path) -> "Prior":
        rows: dict[str, float] = {}
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["actor", "weight"]:
                raise DataError(f"{path}: expected header actor,weight")
            for row in reader:
                actor = row["actor"].strip()
                if actor in rows:
                    raise DataError(f"{path}: duplicate actor {actor!r}")
                rows[actor] = float(row["weight"])
        actors = tuple(sorted(rows))
        raw = np.array([rows[a] for a in actors], dtype=np.float64)
        total = float(raw.sum())
        if abs(total - 1.0) > 1e-9:
            logger.warning("prior weights sum to %.6f; renormalizing", total)
        prior = Prior(actors=actors, weights=raw / total)
        return prior

    def vector_for(self, actors: Sequence[str]) -> np.ndarray:
        if tuple(actors) != self.actors:
            missing = set(actors) - set(self.actors)
            extra = set(self.actors) - set(actors)
            raise ValidationError(
                f"prior actors do not match matrix actors "
                f"(missing={sorted(missing)}, extra={sorted(extra)})"
            )
        return self.weights


def fit_expert_prior(doc_counts: Mapping[str, int]) -> Prior:
    """Prior proportional to per-actor document counts in the training set."""
    return Prior.from_counts(doc_counts)


@dataclass(frozen=True)
class AttributionResult:
    ranked: tuple[tuple[str, float], ...]
    prior_only: bool = False
    dropped_ttps: tuple[TechniqueId, ...] = field(default=())

    @property
    def top(self) -> str:
        return self.ranked[0][0]

    def rank_of(self, actor: str) -> int:
        for i, (name, _) in enumerate(self.ranked):
            if name == actor:
                return i + 1
        raise ValidationError(f"actor not in ranking: {actor}")

    def scores(self) -> dict[str, float]:
        return dict(self.ranked)


def attribute(
    counts: Mapping[TechniqueId, int],
    matrix: WeightMatrix,
    prior: Prior | None = None,
) -> AttributionResult:
    """Score every actor against a technique-count query.

    Counts outside the matrix index are dropped with a warning. An empty
    query degenerates to the prior alone (uniform scores without one).
    """
    col = matrix.column_index()
    dropped = tuple(sorted(tid for tid in counts if tid not in col))
    if dropped:
        logger.warning("%d query techniques outside matrix index dropped", len(dropped))
    kept = {tid: c for tid, c in counts.items() if tid in col}
    for tid, c in kept.items():
        if c < 0:
            raise ValidationError(f"negative count for {tid}: {c}")

    prior_vec = prior.vector_for(matrix.actors) if prior is not None else None
    total = float(sum(kept.values()))
    prior_only = total == 0.0
    if prior_only:
        base = prior_vec if prior_vec is not None else np.full(
            len(matrix.actors), 1.0 / len(matrix.actors)
        )
        scores = base.astype(np.float64)
    else:
        y = np.zeros(len(matrix.ttp_order), dtype=np.float64)
        for tid, c in kept.items():
            y[col[tid]] = float(c) / total
        scores = matrix.values @ y
        if prior_vec is not None:
            scores = scores * prior_vec

    ranked = sorted(zip(matrix.actors, scores.tolist()), key=lambda kv: (-kv[1], kv[0]))
    return AttributionResult(ranked=tuple(ranked), prior_only=prior_only, dropped_ttps=dropped)


def attribute_brute_force(
    counts: Mapping[TechniqueId, int],
    matrix: WeightMatrix,
    prior: Prior | None = None,
) -> list[tuple[str, float]]:
    """Reference scorer: explicit python loops, no numpy matmul."""
    col = matrix.column_index()
    kept = {tid: c for tid, c in counts.items() if tid in col}
    total = sum(kept.values())
    out = []
    for i, actor in enumerate(matrix.actors):
        if total == 0:
            score = 1.0 / len(matrix.actors)
        else:
            score = 0.0
            for tid, c in kept.items():
                score += (c / total) * float(matrix.values[i, col[tid]])
        if prior is not None:
            p = float(prior.vector_for(matrix.actors)[i])
            score = p if total == 0 else score * p
        out.append((actor, score))
    out.sort(key=lambda kv: (-kv[1], kv[0]))
    return out


def rank_of_true(result: AttributionResult, true_actor: str) -> int:
    return result.rank_of(true_actor)


def select_best_matrix(
    matrices: Sequence[WeightMatrix],
    val_ranks: Sequence[Sequence[int]],
    mode: str = "min-rank",
) -> tuple[int, WeightMatrix]:
    """Pick the fold whose matrix ranked true actors best on validation.

    min-rank takes the lowest mean validation rank; max-rank is available
    for ablations. Ties go to the earliest fold.
    """
    if mode not in ("min-rank", "max-rank"):
        raise ValidationError(f"unknown selection mode: {mode!r}")
    if len(matrices) != len(val_ranks):
        raise ValidationError("one rank list per matrix required")
    if not matrices:
        raise ValidationError("no matrices to select from")
    means = []
    for i, ranks in enumerate(val_ranks):
        if not ranks:
            raise ValidationError(f"fold {i} has an empty validation rank list")
        means.append(sum(ranks) / len(ranks))
    if mode == "min-rank":
        best = min(range(len(means)), key=lambda i: (means[i], i))
    else:
        best = max(range(len(means)), key=lambda i: (means[i], -i))
    return best, matrices[best]


def save_matrix(matrix: WeightMatrix, path: str | Path) -> None:
    """JSON with full-precision float64 values; byte-deterministic."""
    path = Path(path)
    payload = {
        "format_version": MATRIX_FORMAT_VERSION,
        "actors": list(matrix.actors),
        "ttp_order": [tid.canonical for tid in matrix.ttp_order],
        "alpha": matrix.smoothing,
        "taxonomy_fingerprint": matrix.taxonomy_fingerprint,
        "zero_rows": list(matrix.zero_rows),
        "values": [[float(v) for v in row] for row in matrix.values],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_matrix(path: str | Path) -> WeightMatrix:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format_version") != MATRIX_FORMAT_VERSION:
        raise DataError(f"unsupported matrix format version in {path}")
    return WeightMatrix(
        actors=tuple(payload["actors"]),
        ttp_order=tuple(parse_technique_id(s) for s in payload["ttp_order"]),
        values=np.array(payload["values"], dtype=np.float64),
        smoothing=float(payload["alpha"]),
        taxonomy_fingerprint=payload["taxonomy_fingerprint"],
        zero_rows=tuple(payload["zero_rows"]),
    )
