"""Technique taxonomy: ID grammar, validated records, and prediction auditing.

The taxonomy file is a UTF-8 CSV with header
``id,name,definition,deprecated,merged_into,parent`` (empty string for absent
optionals, RFC 4180 quoting for definitions containing commas). Deprecated
records stay in ``records`` so predictions can be remapped, but only live
records appear in ``ordering``, which fixes the column order used by every
downstream count vector and weight matrix.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .errors import MalformedTechniqueIdError, TaxonomyFormatError

logger = logging.getLogger(__name__)

_ID_RE = re.compile(r"[Tt](\d{4})(?:\.(\d{3}))?")

VALID = "valid"
DEPRECATED_MERGED = "deprecated-merged"
NAME_ID_MISMATCH = "name-id-mismatch"
FABRICATED_SUBTECHNIQUE = "fabricated-subtechnique"
UNKNOWN_ID = "unknown-id"

HALLUCINATION_CATEGORIES = (
    DEPRECATED_MERGED,
    NAME_ID_MISMATCH,
    FABRICATED_SUBTECHNIQUE,
    UNKNOWN_ID,
)


@dataclass(frozen=True)
class TechniqueId:
    """A technique code like T1087, optionally with a .NNN sub-technique part."""

    base: str
    sub: str | None = None

    @property
    def canonical(self) -> str:
        return self.base if self.sub is None else f"{self.base}.{self.sub}"

    @property
    def parent(self) -> "TechniqueId | None":
        return TechniqueId(self.base) if self.sub is not None else None

    def technique_level(self) -> "TechniqueId":
        """Collapse a sub-technique to its base technique."""
        return TechniqueId(self.base)

    def __lt__(self, other: "TechniqueId") -> bool:
        return self.canonical < other.canonical

    def __str__(self) -> str:
        return self.canonical


def parse_technique_id(text: str) -> TechniqueId:
    """Parse a raw token into a TechniqueId.

    Tolerates a lowercase ``t`` and surrounding quotes/whitespace; anything
    else (missing prefix, wrong digit count, non-numeric sub) is rejected.
    """
    token = text.strip().strip("'\"").strip()
    m = _ID_RE.fullmatch(token)
    if m is None:
        raise MalformedTechniqueIdError(f"not a technique ID: {text!r}")
    return TechniqueId(base=f"T{m.group(1)}", sub=m.group(2))


@dataclass(frozen=True)
class TtpRecord:
    id: TechniqueId
    name: str
    definition: str
    deprecated: bool = False
    merged_into: TechniqueId | None = None
    parent: TechniqueId | None = None


@dataclass(frozen=True)
class HallucinationVerdict:
    category: str
    resolved_id: TechniqueId | None = None

    @property
    def is_valid(self) -> bool:
        return self.category == VALID


@dataclass(frozen=True)
class Taxonomy:
    """Validated technique records plus the canonical column ordering."""

    records: Mapping[TechniqueId, TtpRecord]
    ordering: tuple[TechniqueId, ...]

    def __contains__(self, tid: TechniqueId) -> bool:
        return tid in self.records

    def get(self, tid: TechniqueId) -> TtpRecord | None:
        return self.records.get(tid)

    def name_of(self, tid: TechniqueId) -> str | None:
        rec = self.records.get(tid)
        return rec.name if rec is not None else None

    def resolve(self, tid: TechniqueId) -> TechniqueId | None:
        """Map an ID to the live record it stands for, or None.

        Deprecated records resolve through ``merged_into``; IDs absent from
        the records resolve to None.
        """
        rec = self.records.get(tid)
        if rec is None:
            return None
        if not rec.deprecated:
            return tid
        if rec.merged_into is not None and rec.merged_into in self.records:
            target = self.records[rec.merged_into]
            if not target.deprecated:
                return rec.merged_into
        return None

    def fingerprint(self) -> str:
        """Stable digest of the live ID/name axis, for drift detection."""
        h = hashlib.sha256()
        for tid in self.ordering:
            h.update(tid.canonical.encode("utf-8"))
            h.update(b"\x1f")
            h.update(self.records[tid].name.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def _parse_bool(raw: str, field: str, line: int) -> bool:
    v = raw.strip().lower()
    if v in ("", "0", "false", "no"):
        return False
    if v in ("1", "true", "yes"):
        return True
    raise TaxonomyFormatError(f"line {line}: bad boolean {raw!r} in column {field}")


_HEADER = ["id", "name", "definition", "deprecated", "merged_into", "parent"]


def build_taxonomy(records: Iterable[TtpRecord]) -> Taxonomy:
    """Validate records and derive the canonical ordering."""
    by_id: dict[TechniqueId, TtpRecord] = {}
    for rec in records:
        if rec.id in by_id:
            raise TaxonomyFormatError(f"duplicate-id: {rec.id}")
        by_id[rec.id] = rec

    for rec in by_id.values():
        if rec.id.sub is not None and rec.id.parent not in by_id:
            raise TaxonomyFormatError(f"dangling-parent: {rec.id} has no {rec.id.parent}")
        if rec.parent is not None and rec.parent != rec.id.parent:
            raise TaxonomyFormatError(
                f"parent column {rec.parent} disagrees with ID {rec.id}"
            )
        if not rec.deprecated and not rec.definition.strip():
            raise TaxonomyFormatError(f"empty-definition: {rec.id}")
        if rec.merged_into is not None:
            target = by_id.get(rec.merged_into)
            if target is None or target.deprecated:
                raise TaxonomyFormatError(
                    f"dangling-merge: {rec.id} merges into {rec.merged_into}"
                )

    ordering = tuple(
        sorted((tid for tid, rec in by_id.items() if not rec.deprecated),
               key=lambda t: t.canonical)
    )
    return Taxonomy(records=by_id, ordering=ordering)


def load_taxonomy(path: str | Path) -> Taxonomy:
    """Load and validate a taxonomy CSV."""
    path = Path(path)
    if not path.is_file():
        raise TaxonomyFormatError(f"taxonomy file not found: {path}")

    records: list[TtpRecord] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != _HEADER:
            raise TaxonomyFormatError(
                f"{path}: expected header {','.join(_HEADER)}, got {reader.fieldnames}"
            )
        for line_no, row in enumerate(reader, start=2):
            try:
                tid = parse_technique_id(row["id"])
                merged = row["merged_into"].strip()
                parent = row["parent"].strip()
                records.append(
                    TtpRecord(
                        id=tid,
                        name=row["name"].strip(),
                        definition=row["definition"].strip(),
                        deprecated=_parse_bool(row["deprecated"], "deprecated", line_no),
                        merged_into=parse_technique_id(merged) if merged else None,
                        parent=parse_technique_id(parent) if parent else None,
                    )
                )
            except MalformedTechniqueIdError as exc:
                raise TaxonomyFormatError(f"{path} line {line_no}: {exc}") from exc

    tax = build_taxonomy(records)
    logger.info("loaded taxonomy %s: %d records, %d live", path, len(tax.records),
                len(tax.ordering))
    return tax


_PUNCT_RE = re.compile(r"[^a-z0-9]+")


def normalize_name(name: str) -> str:
    """Lowercase and strip punctuation so quoting variants compare equal."""
    return " ".join(_PUNCT_RE.split(name.lower())).strip()


def classify_prediction(tax: Taxonomy, tid: TechniqueId, name: str) -> HallucinationVerdict:
    """Audit a predicted (ID, name) pair against the taxonomy.

    Total over parsed IDs: every pair maps to exactly one category.
    """
    wanted = normalize_name(name)
    rec = tax.records.get(tid)
    if rec is not None:
        if rec.deprecated:
            resolved = tax.resolve(tid)
            return HallucinationVerdict(DEPRECATED_MERGED, resolved_id=resolved)
        if wanted and wanted in _accepted_names(tax, tid, rec):
            return HallucinationVerdict(VALID)
        if _name_exists(tax, wanted, exclude=tid):
            return HallucinationVerdict(NAME_ID_MISMATCH)
        return HallucinationVerdict(UNKNOWN_ID)

    if tid.sub is not None and tid.parent in tax.records:
        return HallucinationVerdict(FABRICATED_SUBTECHNIQUE)
    if _name_exists(tax, wanted):
        return HallucinationVerdict(NAME_ID_MISMATCH)
    return HallucinationVerdict(UNKNOWN_ID)


def _accepted_names(tax: Taxonomy, tid: TechniqueId, rec: TtpRecord) -> set[str]:
    """Normalized spellings that count as this record's name.

    Sub-techniques are commonly written in the display form
    ``Parent Name: Sub Name``, so that composite is accepted too.
    """
    names = {normalize_name(rec.name)}
    if tid.sub is not None:
        parent = tax.records.get(tid.parent)
        if parent is not None:
            names.add(normalize_name(f"{parent.name} {rec.name}"))
    return names


def _name_exists(tax: Taxonomy, wanted: str, exclude: TechniqueId | None = None) -> bool:
    if not wanted:
        return False
    for tid, rec in tax.records.items():
        if tid != exclude and wanted in _accepted_names(tax, tid, rec):
            return True
    return False


def convert_stix_bundle(bundle_path: str | Path, out_csv: str | Path) -> int:
    """Optional ingest path: flatten a STIX 2.1 bundle into the taxonomy CSV.

    Attack-pattern objects become rows; revoked/deprecated flags carry over,
    and ``revoked-by`` relationships between attack patterns populate
    ``merged_into``. Returns the number of rows written.
    """
    bundle_path = Path(bundle_path)
    try:
        bundle = json.loads(bundle_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise TaxonomyFormatError(f"cannot read STIX bundle {bundle_path}: {exc}") from exc

    objects = bundle.get("objects", [])
    ext_id: dict[str, str] = {}
    patterns: dict[str, dict] = {}
    for obj in objects:
        if obj.get("type") != "attack-pattern":
            continue
        for ref in obj.get("external_references", []):
            if ref.get("source_name") == "mitre-attack" and ref.get("external_id"):
                ext_id[obj["id"]] = ref["external_id"]
                patterns[obj["id"]] = obj
                break

    revoked_by: dict[str, str] = {}
    for obj in objects:
        if obj.get("type") == "relationship" and obj.get("relationship_type") == "revoked-by":
            if obj.get("source_ref") in patterns and obj.get("target_ref") in patterns:
                revoked_by[obj["source_ref"]] = obj["target_ref"]

    rows = []
    for stix_id, obj in patterns.items():
        code = ext_id[stix_id]
        try:
            tid = parse_technique_id(code)
        except MalformedTechniqueIdError:
            logger.warning("skipping non-technique external_id %s", code)
            continue
        deprecated = bool(obj.get("revoked") or obj.get("x_mitre_deprecated"))
        merged = ext_id.get(revoked_by.get(stix_id, ""), "")
        rows.append(
            {
                "id": tid.canonical,
                "name": obj.get("name", ""),
                "definition": obj.get("description", "").strip(),
                "deprecated": "true" if deprecated else "false",
                "merged_into": merged,
                "parent": tid.parent.canonical if tid.sub is not None else "",
            }
        )

    rows.sort(key=lambda r: r["id"])
    out_csv = Path(out_csv)
    with out_csv.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=_HEADER)
        writer.writeheader()
        writer.writerows(rows)
    logger.info("wrote %d taxonomy rows to %s", len(rows), out_csv)
    return len(rows)
