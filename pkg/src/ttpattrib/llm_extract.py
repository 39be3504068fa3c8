"""Prompted technique extraction and the bracketed-list reply parser.

The prompt template lives in package data with ``{apt_name}`` and
``{document}`` placeholders. Model replies are expected one entry per
line, e.g. ``['T1083','File and Directory Discovery']``; a detached
sub-technique token (``['T1588','.002','Obtain Capabilities: Tool']``)
merges into the ID. Every parsed entry is classified against the
taxonomy so hallucinated IDs are measurable rather than silent.
"""
from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from .corpus import Document
from .errors import (
    AllLinesUnparseableError,
    GenerationFailureError,
    MalformedTechniqueIdError,
    ValidationError,
)
from .taxonomy import (
    DEPRECATED_MERGED,
    VALID,
    HallucinationVerdict,
    Taxonomy,
    TechniqueId,
    classify_prediction,
    parse_technique_id,
)

logger = logging.getLogger(__name__)

ReplyGenerator = Callable[[str], str]

COUNT_POLICIES = ("drop-unknown", "include-unknown")

_SUB_TOKEN_RE = re.compile(r"\.(\d{3})")


@dataclass(frozen=True)
class PromptTemplate:
    text: str

    def __post_init__(self) -> None:
        for placeholder in ("{apt_name}", "{document}"):
            n = self.text.count(placeholder)
            if n != 1:
                raise ValidationError(
                    f"template must contain {placeholder} exactly once, found {n}"
                )

    def fill(self, apt_name: str, document: str) -> str:
        # .replace, not .format: report text may contain literal braces
        return self.text.replace("{apt_name}", apt_name).replace("{document}", document)


def load_default_template() -> PromptTemplate:
    text = resources.files("ttpattrib.data").joinpath("ttp_extraction_prompt.txt").read_text(
        encoding="utf-8"
    )
    return PromptTemplate(text=text)


def load_template(path: str | Path) -> PromptTemplate:
    return PromptTemplate(text=Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class ExtractedEntry:
    raw_line: str
    ttp: TechniqueId
    name: str


@dataclass(frozen=True)
class Extraction:
    entries: tuple[ExtractedEntry, ...]
    failed_lines: tuple[str, ...] = field(default=())

    @property
    def parse_failure_rate(self) -> float:
        total = len(self.entries) + len(self.failed_lines)
        return len(self.failed_lines) / total if total else 0.0


@dataclass(frozen=True)
class ClassifiedEntry:
    entry: ExtractedEntry
    verdict: HallucinationVerdict


def _split_tokens(line: str) -> list[str]:
    """Split on commas outside quotes; strip whitespace and quote pairs."""
    tokens: list[str] = []
    buf: list[str] = []
    quote: str | None = None
    for ch in line:
        if quote:
            buf.append(ch)
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
            buf.append(ch)
        elif ch == ",":
            tokens.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    tokens.append("".join(buf))
    out = []
    for tok in tokens:
        tok = tok.strip()
        if len(tok) >= 2 and tok[0] == tok[-1] and tok[0] in "'\"":
            tok = tok[1:-1].strip()
        if tok:
            out.append(tok)
    return out


def parse_reply_line(line: str) -> ExtractedEntry:
    raw = line
    line = line.strip().rstrip(",").strip()
    if line.startswith("[") and line.endswith("]"):
        line = line[1:-1]
    tokens = _split_tokens(line)
    if not tokens:
        raise MalformedTechniqueIdError(f"no tokens in line: {raw!r}")
    tid = parse_technique_id(tokens[0])
    rest = tokens[1:]
    if rest and tid.sub is None:
        m = _SUB_TOKEN_RE.fullmatch(rest[0])
        if m:
            tid = TechniqueId(base=tid.base, sub=m.group(1))
            rest = rest[1:]
    name = ", ".join(rest)
    return ExtractedEntry(raw_line=raw, ttp=tid, name=name)


def parse_reply(reply: str) -> Extraction:
    """Parse a model reply line by line; junk lines are recorded, not fatal."""
    entries = []
    failures = []
    for line in reply.splitlines():
        if not line.strip():
            continue
        try:
            entries.append(parse_reply_line(line))
        except MalformedTechniqueIdError:
            failures.append(line)
    return Extraction(entries=tuple(entries), failed_lines=tuple(failures))


def render_line(tid: TechniqueId, name: str) -> str:
    """Inverse of parse_reply_line for the formats the prompt asks for."""
    if tid.sub is not None:
        return f"['{tid.base}','.{tid.sub}','{name}']"
    return f"['{tid.base}','{name}']"


def classify_extraction(extraction: Extraction, tax: Taxonomy) -> list[ClassifiedEntry]:
    return [
        ClassifiedEntry(entry=e, verdict=classify_prediction(tax, e.ttp, e.name))
        for e in extraction.entries
    ]


def extraction_to_counts(
    classified: Sequence[ClassifiedEntry],
    policy: str = "drop-unknown",
) -> Counter:
    """Turn classified entries into technique multiplicities.

    Valid entries count as-is; deprecated IDs count toward their merge
    target. Everything else is dropped unless policy=include-unknown,
    which keeps the IDs exactly as parsed.
    """
    if policy not in COUNT_POLICIES:
        raise ValidationError(f"unknown count policy: {policy!r}")
    counts: Counter = Counter()
    for item in classified:
        verdict = item.verdict
        if verdict.category == VALID:
            counts[item.entry.ttp] += 1
        elif verdict.category == DEPRECATED_MERGED and verdict.resolved_id is not None:
            counts[verdict.resolved_id] += 1
        elif policy == "include-unknown":
            counts[item.entry.ttp] += 1
    return counts


def _split_document(doc: Document, budget: int) -> list[str]:
    """Cut an oversized document at line boundaries into <= budget pieces."""
    pieces = []
    current: list[str] = []
    size = 0
    for line in doc.lines:
        extra = len(line) + (1 if current else 0)
        if current and size + extra > budget:
            pieces.append("\n".join(current))
            current, size = [], 0
            extra = len(line)
        current.append(line)
        size += extra
    if current:
        pieces.append("\n".join(current))
    return pieces


def identify_llm(
    doc: Document,
    apt_name: str,
    template: PromptTemplate,
    tax: Taxonomy,
    generator: ReplyGenerator,
    max_input_chars: int = 60_000,
    audit_path: str | Path | None = None,
) -> list[ClassifiedEntry]:
    """Prompt the generator for one document and classify every entry.

    Documents longer than the input budget are split at line boundaries
    and the per-piece extractions concatenated.
    """
    overhead = len(template.fill(apt_name, ""))
    budget = max(max_input_chars - overhead, 1)
    pieces = _split_document(doc, budget) if len(doc.text) > budget else [doc.text]

    all_entries: list[ExtractedEntry] = []
    all_failures: list[str] = []
    audit_rows = []
    for piece in pieces:
        prompt = template.fill(apt_name, piece)
        try:
            reply = generator(prompt)
        except Exception as exc:
            raise GenerationFailureError(f"generator failed for {doc.doc_id}: {exc}") from exc
        extraction = parse_reply(reply)
        all_entries.extend(extraction.entries)
        all_failures.extend(extraction.failed_lines)
        audit_rows.append({
            "doc_id": doc.doc_id,
            "request_fingerprint": hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16],
            "reply": reply,
        })

    merged = Extraction(entries=tuple(all_entries), failed_lines=tuple(all_failures))
    if all_failures and not all_entries:
        err = AllLinesUnparseableError(
            f"no parseable lines in reply for {doc.doc_id} "
            f"({len(all_failures)} lines rejected)"
        )
        err.extraction = merged
        raise err

    if audit_path is not None:
        audit_path = Path(audit_path)
        audit_path.parent.mkdir(parents=True, exist_ok=True)
        with audit_path.open("a", encoding="utf-8", newline="\n") as fh:
            for row in audit_rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    return classify_extraction(merged, tax)
