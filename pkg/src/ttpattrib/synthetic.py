"""Synthetic corpus with known answers for end-to-end oracle checks.

Every actor gets a pairwise-disjoint technique signature drawn from a
globally disjoint invented vocabulary, and every document line quotes
definition words verbatim. With k = lines_per_ttp, each chunk is exactly
one technique's definition, so the correct tag and the correct actor are
known by construction rather than by judgment.
"""
from __future__ import annotations

import hashlib
import itertools
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .corpus import Corpus, Document, GroundTruth
from .errors import ValidationError
from .taxonomy import Taxonomy, TechniqueId, TtpRecord, build_taxonomy

logger = logging.getLogger(__name__)

_SYLLABLES = (
    "ba", "ce", "di", "fo", "gu", "ha", "je", "ki",
    "lo", "mu", "na", "pe", "ri", "so", "tu", "vy",
)


@dataclass(frozen=True)
class SyntheticSpec:
    n_actors: int = 8
    ttps_per_actor: int = 10
    docs_per_actor: int = 6
    ttps_per_doc: int = 5
    lines_per_ttp: int = 3
    words_per_line: int = 4
    name_words: int = 2
    seed: int = 13

    def __post_init__(self) -> None:
        if self.n_actors < 2:
            raise ValidationError("need at least 2 actors")
        if self.ttps_per_doc > self.ttps_per_actor:
            raise ValidationError("ttps_per_doc cannot exceed ttps_per_actor")
        if min(self.ttps_per_actor, self.docs_per_actor, self.ttps_per_doc,
               self.lines_per_ttp, self.words_per_line, self.name_words) < 1:
            raise ValidationError("all size parameters must be >= 1")

    @property
    def def_words(self) -> int:
        return self.lines_per_ttp * self.words_per_line

    @property
    def total_ttps(self) -> int:
        return self.n_actors * self.ttps_per_actor


@dataclass(frozen=True)
class SyntheticData:
    spec: SyntheticSpec
    taxonomy: Taxonomy
    corpus: Corpus
    signatures: Mapping[str, tuple[TechniqueId, ...]]
    chunk_truth: Mapping[tuple[str, int], TechniqueId]
    vocabulary: tuple[str, ...]


def _word_pool(spec: SyntheticSpec, rng: random.Random) -> list[str]:
    words = ["".join(parts) for parts in itertools.product(_SYLLABLES, repeat=3)]
    needed = spec.total_ttps * (spec.def_words + spec.name_words)
    if needed > len(words):
        raise ValidationError(
            f"vocabulary exhausted: need {needed} words, have {len(words)}"
        )
    return rng.sample(words, needed)


def make_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> SyntheticData:
    rng = random.Random(spec.seed)
    pool = _word_pool(spec, rng)

    records = []
    definitions: dict[TechniqueId, list[str]] = {}
    cursor = 0
    for idx in range(spec.total_ttps):
        tid = TechniqueId(base=f"T{1000 + idx}", sub=None)
        name = " ".join(pool[cursor:cursor + spec.name_words])
        cursor += spec.name_words
        def_tokens = pool[cursor:cursor + spec.def_words]
        cursor += spec.def_words
        records.append(TtpRecord(id=tid, name=name, definition=" ".join(def_tokens)))
        definitions[tid] = def_tokens
    tax = build_taxonomy(records)

    actors = tuple(f"actor{str(i).zfill(2)}" for i in range(spec.n_actors))
    signatures = {
        actor: tuple(records[i * spec.ttps_per_actor + j].id
                     for j in range(spec.ttps_per_actor))
        for i, actor in enumerate(actors)
    }

    docs: dict[str, tuple[Document, ...]] = {}
    chunk_truth: dict[tuple[str, int], TechniqueId] = {}
    for actor in actors:
        actor_docs = []
        for d in range(spec.docs_per_actor):
            doc_id = f"{actor}-doc{str(d).zfill(2)}"
            chosen = rng.sample(signatures[actor], spec.ttps_per_doc)
            lines = []
            for chunk_index, tid in enumerate(chosen):
                tokens = definitions[tid]
                for li in range(spec.lines_per_ttp):
                    start = li * spec.words_per_line
                    lines.append(" ".join(tokens[start:start + spec.words_per_line]))
                chunk_truth[(doc_id, chunk_index)] = tid
            actor_docs.append(Document(actor=actor, doc_id=doc_id, lines=tuple(lines)))
        docs[actor] = tuple(actor_docs)

    truth = GroundTruth(by_actor={a: frozenset(signatures[a]) for a in actors})
    corpus = Corpus(actors=actors, docs=docs, truth=truth)
    return SyntheticData(
        spec=spec,
        taxonomy=tax,
        corpus=corpus,
        signatures=signatures,
        chunk_truth=chunk_truth,
        vocabulary=tuple(pool),
    )


def inject_token_noise(corpus: Corpus, fraction: float, seed: int,
                       vocabulary: tuple[str, ...]) -> Corpus:
    """Replace round(fraction * n_tokens) word positions per document.

    Replacement words come from the full synthetic vocabulary; the seed
    is derived per document so corruption is order-independent.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValidationError(f"noise fraction must be in [0, 1], got {fraction}")
    noisy: dict[str, tuple[Document, ...]] = {}
    for actor in corpus.actors:
        out_docs = []
        for doc in corpus.docs[actor]:
            rng = random.Random(_derive(seed, doc.doc_id))
            grid = [line.split(" ") for line in doc.lines]
            positions = [(r, c) for r, row in enumerate(grid) for c in range(len(row))]
            n_swap = round(fraction * len(positions))
            for r, c in rng.sample(positions, n_swap):
                grid[r][c] = rng.choice(vocabulary)
            out_docs.append(Document(
                actor=actor,
                doc_id=doc.doc_id,
                lines=tuple(" ".join(row) for row in grid),
            ))
        noisy[actor] = tuple(out_docs)
    return Corpus(actors=corpus.actors, docs=noisy, truth=corpus.truth)


def _derive(seed: int, tag: str) -> int:
    digest = hashlib.sha256(f"{seed}|{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


_CONFIG_TEMPLATE = """[paths]
taxonomy = "taxonomy.csv"
manifest = "manifest.csv"
truth = "truth.csv"
output_dir = "out"

[provider]
kind = "local-hash"
model_id = "hash-v1"
dim = 512

[identify]
window_lines = {k}

[train]
alpha = 0.0
n_folds = 10
seed = {seed}

[evaluate]
selection = "min-rank"
"""


def write_synthetic_workspace(data: SyntheticData, root: str | Path) -> Path:
    """Materialize taxonomy, manifest, truth, documents, and a config file."""
    root = Path(root)
    (root / "docs").mkdir(parents=True, exist_ok=True)

    tax_lines = ["id,name,definition,deprecated,merged_into,parent"]
    for tid in data.taxonomy.ordering:
        rec = data.taxonomy.records[tid]
        tax_lines.append(f"{tid.canonical},{rec.name},{rec.definition},,,")
    (root / "taxonomy.csv").write_text("\n".join(tax_lines) + "\n", encoding="utf-8")

    manifest_lines = ["actor,doc_id,path"]
    for actor in data.corpus.actors:
        for doc in data.corpus.docs[actor]:
            rel = f"docs/{doc.doc_id}.txt"
            (root / rel).write_text("\n".join(doc.lines) + "\n", encoding="utf-8")
            manifest_lines.append(f"{actor},{doc.doc_id},{rel}")
    (root / "manifest.csv").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")

    truth_lines = ["actor,technique_id"]
    for actor in data.corpus.actors:
        for tid in sorted(data.corpus.truth.for_actor(actor)):
            truth_lines.append(f"{actor},{tid.canonical}")
    (root / "truth.csv").write_text("\n".join(truth_lines) + "\n", encoding="utf-8")

    (root / "config.toml").write_text(
        _CONFIG_TEMPLATE.format(k=data.spec.lines_per_ttp, seed=data.spec.seed),
        encoding="utf-8",
    )
    logger.info("synthetic workspace written to %s", root)
    return root
