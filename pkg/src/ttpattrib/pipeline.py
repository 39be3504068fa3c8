"""End-to-end experiment runner: tag once, split, train, rank, report.

Every document is tagged exactly once and its technique counts memoized;
fold training and evaluation reuse those counts instead of re-embedding.
Artifacts (tag stream, best matrix, rank tables, per-actor comparison)
are written with stable ordering so same-seed runs are byte-identical.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .attribution import (
    Prior,
    WeightMatrix,
    attribute,
    fit_expert_prior,
    save_matrix,
    select_best_matrix,
    train_weight_matrix,
)
from .corpus import Corpus, FoldSet, docs_by_actor, make_splits
from .embedding import EmbeddedTaxonomy, EmbeddingProvider, PassageGenerator, embed_taxonomy
from .errors import ValidationError
from .identify import ChunkTag, IdentifyConfig, identify_ve, tags_to_counts, write_tags_jsonl
from .metrics import (
    ConditionResult,
    SetComparison,
    compare_sets,
    write_comparison_csv,
    write_rank_table,
)
from .taxonomy import Taxonomy, TechniqueId

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    window_lines: int = 3
    min_similarity: float | None = None
    collapse_subtechniques: bool = False
    include_id: bool = True
    hyde_passages: int = 0
    alpha: float = 0.0
    n_folds: int = 10
    seed: int = 13
    stratified: bool = True
    selection: str = "min-rank"


@dataclass(frozen=True)
class FoldOutcome:
    fold: int
    matrix: WeightMatrix
    val_ranks: tuple[int, ...]
    test_ranks_uniform: tuple[int, ...]
    test_ranks_expert: tuple[int, ...]


@dataclass(frozen=True)
class ExperimentReport:
    n_actors: int
    fold_set: FoldSet
    outcomes: tuple[FoldOutcome, ...]
    best_fold: int
    best_matrix: WeightMatrix
    conditions: tuple[ConditionResult, ...]
    per_actor: Mapping[str, SetComparison]
    tags: tuple[ChunkTag, ...]
    doc_counts: Mapping[str, Counter] = field(default_factory=dict)

    def condition(self, label: str) -> ConditionResult:
        for cond in self.conditions:
            if cond.label == label:
                return cond
        raise ValidationError(f"no condition labeled {label!r}")


def tag_corpus(
    corpus: Corpus,
    emb: EmbeddedTaxonomy,
    provider: EmbeddingProvider,
    tax: Taxonomy,
    identify_cfg: IdentifyConfig,
) -> tuple[list[ChunkTag], dict[str, Counter]]:
    """Tag every document once; return the tag stream and per-doc counts."""
    names = {tid: tax.records[tid].name for tid in tax.ordering}
    all_tags: list[ChunkTag] = []
    counts: dict[str, Counter] = {}
    for doc in sorted(corpus.all_documents(), key=lambda d: d.doc_id):
        tags = identify_ve(doc, emb, provider, names, identify_cfg)
        all_tags.extend(tags)
        counts[doc.doc_id] = tags_to_counts(tags, identify_cfg.collapse_subtechniques)
    return all_tags, counts


def _mean(xs: Sequence[int]) -> float:
    return sum(xs) / len(xs)


def _ranks_for(
    corpus: Corpus,
    doc_ids: Sequence[str],
    doc_counts: Mapping[str, Counter],
    matrix: WeightMatrix,
    prior: Prior | None,
) -> tuple[int, ...]:
    index = corpus.doc_index()
    ranks = []
    for doc_id in doc_ids:
        actor = index[doc_id].actor
        result = attribute(doc_counts[doc_id], matrix, prior)
        if actor not in matrix.actors:
            logger.warning("true actor %s missing from matrix; scoring worst rank", actor)
            ranks.append(len(matrix.actors) + 1)
            continue
        ranks.append(result.rank_of(actor))
    return tuple(ranks)


def run_experiment(
    corpus: Corpus,
    tax: Taxonomy,
    provider: EmbeddingProvider,
    cfg: ExperimentConfig = ExperimentConfig(),
    hyde_generator: PassageGenerator | None = None,
    out_dir: str | Path | None = None,
) -> ExperimentReport:
    identify_cfg = IdentifyConfig(
        window_lines=cfg.window_lines,
        min_similarity=cfg.min_similarity,
        collapse_subtechniques=cfg.collapse_subtechniques,
    )
    if cfg.hyde_passages and hyde_generator is None:
        raise ValidationError("hyde_passages > 0 requires a passage generator")
    emb = embed_taxonomy(
        tax,
        provider,
        include_id=cfg.include_id,
        hyde_generator=hyde_generator if cfg.hyde_passages else None,
        hyde_passages=cfg.hyde_passages or 1,
    )
    tags, doc_counts = tag_corpus(corpus, emb, provider, tax, identify_cfg)

    fold_set = make_splits(corpus, seed=cfg.seed, stratified=cfg.stratified,
                           n_folds=cfg.n_folds)
    fingerprint = tax.fingerprint()
    # one column per live technique so fold matrices share an index and
    # no test-document counts get dropped
    if cfg.collapse_subtechniques:
        ttp_order = tuple(sorted({tid.technique_level() for tid in tax.ordering}))
    else:
        ttp_order = tax.ordering
    outcomes = []
    for f, fold in enumerate(fold_set.folds):
        grouped = docs_by_actor(corpus, fold.train)
        matrix = train_weight_matrix(
            grouped,
            tagger=lambda doc: doc_counts[doc.doc_id],
            alpha=cfg.alpha,
            ttp_order=ttp_order,
            taxonomy_fingerprint=fingerprint,
        )
        uniform = Prior.uniform(matrix.actors)
        expert = fit_expert_prior({a: len(ds) for a, ds in grouped.items()})
        outcomes.append(FoldOutcome(
            fold=f,
            matrix=matrix,
            val_ranks=_ranks_for(corpus, fold.validation, doc_counts, matrix, None),
            test_ranks_uniform=_ranks_for(corpus, fold.test, doc_counts, matrix, uniform),
            test_ranks_expert=_ranks_for(corpus, fold.test, doc_counts, matrix, expert),
        ))

    best_fold, best_matrix = select_best_matrix(
        [o.matrix for o in outcomes],
        [o.val_ranks for o in outcomes],
        mode=cfg.selection,
    )

    hyde_suffix = " + HyDE" if cfg.hyde_passages else ""
    conditions = (
        ConditionResult(
            label=f"Uniform prior{hyde_suffix}",
            fold_means=tuple(_mean(o.test_ranks_uniform) for o in outcomes),
        ),
        ConditionResult(
            label=f"Expert prior{hyde_suffix}",
            fold_means=tuple(_mean(o.test_ranks_expert) for o in outcomes),
        ),
    )

    per_actor = {}
    for actor in corpus.actors:
        predicted: set[TechniqueId] = set()
        for doc in corpus.docs[actor]:
            predicted.update(doc_counts[doc.doc_id])
        per_actor[actor] = compare_sets(corpus.truth.for_actor(actor), frozenset(predicted))

    report = ExperimentReport(
        n_actors=len(corpus.actors),
        fold_set=fold_set,
        outcomes=tuple(outcomes),
        best_fold=best_fold,
        best_matrix=best_matrix,
        conditions=conditions,
        per_actor=per_actor,
        tags=tuple(tags),
        doc_counts=doc_counts,
    )
    if out_dir is not None:
        write_artifacts(report, out_dir)
    return report


def write_artifacts(report: ExperimentReport, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "tags": out_dir / "tags.jsonl",
        "matrix": out_dir / "matrix.json",
        "report_txt": out_dir / "report.txt",
        "report_csv": out_dir / "report.csv",
        "comparison": out_dir / "comparison.csv",
    }
    ordered = sorted(report.tags, key=lambda t: (t.doc_id, t.chunk_index))
    write_tags_jsonl(ordered, paths["tags"])
    save_matrix(report.best_matrix, paths["matrix"])
    write_rank_table(report.conditions, report.n_actors,
                     paths["report_txt"], paths["report_csv"])
    write_comparison_csv(report.per_actor, paths["comparison"])
    logger.info("artifacts written to %s", out_dir)
    return paths
