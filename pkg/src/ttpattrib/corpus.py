"""Per-actor document sets, ground-truth labels, chunking, and fold splits.

Manifest CSV: ``actor,doc_id,path`` (paths relative to the manifest file).
Ground truth CSV: ``actor,technique_id``. Document files are plain UTF-8
text, one report per file; conversion from HTML/PDF happens upstream.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import CorpusFormatError, EmptyDocumentError, ValidationError
from .taxonomy import Taxonomy, TechniqueId, parse_technique_id

logger = logging.getLogger(__name__)

_WS_RE = re.compile(r"\s+")
_CTRL_RE = re.compile(r"[\x00-\x08\x0b-\x1f\x7f]")


@dataclass(frozen=True)
class Document:
    actor: str
    doc_id: str
    lines: tuple[str, ...]

    @property
    def text(self) -> str:
        return "\n".join(self.lines)


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    text: str


@dataclass(frozen=True)
class GroundTruth:
    by_actor: Mapping[str, frozenset[TechniqueId]]

    def for_actor(self, actor: str) -> frozenset[TechniqueId]:
        return self.by_actor.get(actor, frozenset())


@dataclass(frozen=True)
class Corpus:
    actors: tuple[str, ...]
    docs: Mapping[str, tuple[Document, ...]]
    truth: GroundTruth

    def all_documents(self) -> list[Document]:
        return [d for actor in self.actors for d in self.docs[actor]]

    def document(self, doc_id: str) -> Document:
        doc = self.doc_index().get(doc_id)
        if doc is None:
            raise ValidationError(f"unknown doc_id: {doc_id}")
        return doc

    def doc_index(self) -> dict[str, Document]:
        return {d.doc_id: d for d in self.all_documents()}

    @property
    def total_docs(self) -> int:
        return sum(len(v) for v in self.docs.values())


@dataclass(frozen=True)
class Fold:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]


@dataclass(frozen=True)
class FoldSet:
    folds: tuple[Fold, ...]
    seed: int
    stratified: bool = True


def normalize_lines(raw: str) -> tuple[str, ...]:
    """Strip control characters, collapse whitespace runs, drop blank lines."""
    out = []
    for line in raw.splitlines():
        line = _CTRL_RE.sub(" ", line)
        line = _WS_RE.sub(" ", line).strip()
        if line:
            out.append(line)
    return tuple(out)


def load_corpus(manifest_path: str | Path, truth_path: str | Path, tax: Taxonomy) -> Corpus:
    """Load documents and ground truth, normalizing and validating both.

    Truth IDs are stored after the deprecated remap, so a label naming a
    merged technique counts toward its live target.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise CorpusFormatError(f"manifest not found: {manifest_path}")
    base = manifest_path.parent

    docs: dict[str, list[Document]] = {}
    seen_ids: set[str] = set()
    with manifest_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["actor", "doc_id", "path"]:
            raise CorpusFormatError(f"{manifest_path}: expected header actor,doc_id,path")
        for line_no, row in enumerate(reader, start=2):
            actor = row["actor"].strip()
            doc_id = row["doc_id"].strip()
            if not actor or not doc_id:
                raise CorpusFormatError(f"{manifest_path} line {line_no}: blank actor or doc_id")
            if doc_id in seen_ids:
                raise CorpusFormatError(f"duplicate doc_id {doc_id!r}")
            seen_ids.add(doc_id)
            doc_path = base / row["path"].strip()
            if not doc_path.is_file():
                raise CorpusFormatError(f"missing-file: {doc_path} (doc {doc_id})")
            lines = normalize_lines(doc_path.read_text(encoding="utf-8"))
            if not lines:
                raise EmptyDocumentError(f"empty-document: {doc_path} (doc {doc_id})")
            docs.setdefault(actor, []).append(Document(actor=actor, doc_id=doc_id, lines=lines))

    if len(docs) < 2:
        raise CorpusFormatError(f"corpus needs at least 2 actors, got {len(docs)}")

    truth = _load_truth(Path(truth_path), tax)
    actors = tuple(sorted(docs))
    logger.info("loaded corpus: %d actors, %d documents", len(actors),
                sum(len(v) for v in docs.values()))
    return Corpus(
        actors=actors,
        docs={a: tuple(docs[a]) for a in actors},
        truth=truth,
    )


def _load_truth(truth_path: Path, tax: Taxonomy) -> GroundTruth:
    if not truth_path.is_file():
        raise CorpusFormatError(f"truth file not found: {truth_path}")
    by_actor: dict[str, set[TechniqueId]] = {}
    with truth_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["actor", "technique_id"]:
            raise CorpusFormatError(f"{truth_path}: expected header actor,technique_id")
        for line_no, row in enumerate(reader, start=2):
            actor = row["actor"].strip()
            tid = parse_technique_id(row["technique_id"])
            resolved = tax.resolve(tid)
            if resolved is None:
                raise CorpusFormatError(
                    f"unknown-truth-id: {tid} for {actor} ({truth_path} line {line_no})"
                )
            by_actor.setdefault(actor, set()).add(resolved)
    return GroundTruth(by_actor={a: frozenset(s) for a, s in by_actor.items()})


def chunk_document(doc: Document, k: int) -> list[Chunk]:
    """Partition a document into ceil(len/k) non-overlapping k-line chunks."""
    if k < 1:
        raise ValidationError(f"window size k must be >= 1, got {k}")
    chunks = []
    for i in range(0, len(doc.lines), k):
        chunks.append(Chunk(doc_id=doc.doc_id, index=i // k,
                            text="\n".join(doc.lines[i:i + k])))
    return chunks


def _derive_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _split_counts(n: int) -> tuple[int, int, int]:
    n_train = math.floor(0.7 * n)
    n_val = math.floor(0.2 * n)
    return n_train, n_val, n - n_train - n_val


def make_splits(corpus: Corpus, seed: int, stratified: bool = True, n_folds: int = 10) -> FoldSet:
    """Draw independent 70/20/10 splits, stratified per actor by default.

    Stratification keeps every actor represented in every train set; it
    needs at least 3 documents per actor, otherwise we fall back to a
    global split with a warning.
    """
    if corpus.total_docs < 10:
        raise CorpusFormatError(
            f"too-few-documents: need >= 10 to split, got {corpus.total_docs}"
        )
    if stratified and any(len(corpus.docs[a]) < 3 for a in corpus.actors):
        thin = [a for a in corpus.actors if len(corpus.docs[a]) < 3]
        logger.warning("actors with <3 docs (%s); falling back to global split", thin)
        stratified = False

    folds = []
    for f in range(n_folds):
        if stratified:
            train: list[str] = []
            val: list[str] = []
            test: list[str] = []
            for actor in corpus.actors:
                ids = sorted(d.doc_id for d in corpus.docs[actor])
                random.Random(_derive_seed(seed, f, actor)).shuffle(ids)
                n_train, n_val, _ = _split_counts(len(ids))
                train.extend(ids[:n_train])
                val.extend(ids[n_train:n_train + n_val])
                test.extend(ids[n_train + n_val:])
        else:
            ids = sorted(d.doc_id for d in corpus.all_documents())
            random.Random(_derive_seed(seed, f)).shuffle(ids)
            n_train, n_val, _ = _split_counts(len(ids))
            train = ids[:n_train]
            val = ids[n_train:n_train + n_val]
            test = ids[n_train + n_val:]
        folds.append(Fold(train=tuple(train), validation=tuple(val), test=tuple(test)))
    return FoldSet(folds=tuple(folds), seed=seed, stratified=stratified)


def docs_by_actor(corpus: Corpus, doc_ids: Sequence[str]) -> dict[str, list[Document]]:
    """Group a fold's doc ids back into per-actor document lists."""
    index = corpus.doc_index()
    grouped: dict[str, list[Document]] = {}
    for doc_id in doc_ids:
        doc = index.get(doc_id)
        if doc is None:
            raise ValidationError(f"unknown doc_id in split: {doc_id}")
        grouped.setdefault(doc.actor, []).append(doc)
    return grouped
