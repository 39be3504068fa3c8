"""HTTP API over the tagging and attribution pipeline.

Endpoints: POST /identify tags raw text (nearest-neighbor by default,
prompted extraction when a remote generator is configured); POST
/attribute ranks actors for explicit counts or raw text, returning a
per-actor score decomposition; GET /actors, /taxonomy, /matrix/meta
describe the loaded model; PUT /session/prior stores a per-session
prior keyed by the X-Session-Id header. Validation failures return 400
with field-level messages; provider outages return 503.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Literal, Mapping

import numpy as np
from fastapi import FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .attribution import Prior, WeightMatrix, attribute, load_matrix
from .config import AppConfig
from .corpus import Chunk, Document
from .embedding import EmbeddedTaxonomy, EmbeddingProvider, embed_taxonomy, make_provider
from .errors import PipelineError, ProviderError, ValidationError
from .generation import TextGenerator, make_generator
from .identify import IdentifyConfig, tag_chunks
from .llm_extract import (
    PromptTemplate,
    extraction_to_counts,
    identify_llm,
    load_default_template,
)
from .metrics import hallucination_rate
from .taxonomy import Taxonomy, TechniqueId, load_taxonomy, parse_technique_id

logger = logging.getLogger(__name__)


@dataclass
class ServerState:
    tax: Taxonomy
    emb: EmbeddedTaxonomy
    provider: EmbeddingProvider
    matrix: WeightMatrix
    window_lines: int = 3
    min_similarity: float | None = None
    generator: TextGenerator | None = None  # enables method=llm on /identify
    template: PromptTemplate | None = None
    session_priors: dict[str, Prior] = dc_field(default_factory=dict)
    lock: threading.Lock = dc_field(default_factory=threading.Lock)

    @property
    def names(self) -> dict[TechniqueId, str]:
        return {tid: self.tax.records[tid].name for tid in self.tax.ordering}


def build_state(cfg: AppConfig, matrix_path: str | Path) -> ServerState:
    tax = load_taxonomy(cfg.resolve(cfg.paths.taxonomy))
    provider = make_provider(cfg.provider)
    emb = embed_taxonomy(tax, provider, include_id=cfg.identify.include_id)
    matrix = load_matrix(matrix_path)
    if matrix.taxonomy_fingerprint and matrix.taxonomy_fingerprint != tax.fingerprint():
        logger.warning("matrix was trained against a different taxonomy fingerprint")
    generator = template = None
    if cfg.generation.kind == "remote":
        generator = make_generator(cfg.generation)
        template = load_default_template()
    return ServerState(
        tax=tax,
        emb=emb,
        provider=provider,
        matrix=matrix,
        window_lines=cfg.identify.window_lines,
        min_similarity=cfg.identify.min_similarity,
        generator=generator,
        template=template,
    )


class IdentifyRequest(BaseModel):
    text: str = Field(min_length=1)
    method: Literal["ve", "llm"] = "ve"
    window_lines: int | None = Field(default=None, ge=1)
    actor_hint: str | None = None  # llm prompt subject when the actor is unknown


class AttributeRequest(BaseModel):
    counts: dict[str, int] | None = None
    text: str | None = None
    prior: dict[str, float] | None = None
    use_session_prior: bool = False
    top_terms: int = Field(default=3, ge=0, le=20)


class PriorRequest(BaseModel):
    weights: dict[str, float]


def _chunk_text(text: str, k: int) -> list[Chunk]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValidationError("text contains no non-blank lines")
    return [
        Chunk(doc_id="request", index=i // k, text="\n".join(lines[i:i + k]))
        for i in range(0, len(lines), k)
    ]


def _counts_from_text(state: ServerState, text: str) -> dict[TechniqueId, int]:
    chunks = _chunk_text(text, state.window_lines)
    tags = tag_chunks(
        chunks, state.emb, state.provider, state.names,
        IdentifyConfig(window_lines=state.window_lines, min_similarity=state.min_similarity),
    )
    out: dict[TechniqueId, int] = {}
    for tag in tags:
        if tag.ttp is not None:
            out[tag.ttp] = out.get(tag.ttp, 0) + 1
    return out


def _decompose(state: ServerState, counts: Mapping[TechniqueId, int], top: int) -> dict[str, list[dict]]:
    """Top contributing y_j * W[actor][j] terms per actor."""
    col = state.matrix.column_index()
    kept = {tid: c for tid, c in counts.items() if tid in col}
    total = sum(kept.values())
    if total == 0 or top == 0:
        return {actor: [] for actor in state.matrix.actors}
    y = np.zeros(len(state.matrix.ttp_order), dtype=np.float64)
    for tid, c in kept.items():
        y[col[tid]] = c / total
    out = {}
    for i, actor in enumerate(state.matrix.actors):
        terms = y * state.matrix.values[i]
        order = np.argsort(-terms)
        rows = []
        for j in order[:top]:
            if terms[j] <= 0:
                break
            rows.append({
                "ttp": state.matrix.ttp_order[j].canonical,
                "weight": float(state.matrix.values[i, j]),
                "share": float(y[j]),
                "term": float(terms[j]),
            })
        out[actor] = rows
    return out


def _identify_llm(state: ServerState, req: IdentifyRequest) -> dict:
    if state.generator is None or state.template is None:
        raise ValidationError(
            "llm identification is not configured; the server needs a remote "
            "[generation] provider"
        )
    lines = tuple(ln.strip() for ln in req.text.splitlines() if ln.strip())
    if not lines:
        raise ValidationError("text contains no non-blank lines")
    doc = Document(actor="request", doc_id="request", lines=lines)
    classified = identify_llm(
        doc, req.actor_hint or "the threat actor in this report",
        state.template, state.tax, state.generator,
    )
    counts = extraction_to_counts(classified)
    verdicts = [item.verdict for item in classified]
    return {
        "method": "llm",
        "entries": [
            {"ttp": item.entry.ttp.canonical, "name": item.entry.name,
             "category": item.verdict.category}
            for item in classified
        ],
        "counts": {t.canonical: c for t, c in sorted(counts.items())},
        "hallucination_rate": hallucination_rate(verdicts) if verdicts else None,
    }


def create_app(state: ServerState, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="ttpattrib", version="0.1.0")

    @app.exception_handler(RequestValidationError)
    async def on_validation(_: Request, exc: RequestValidationError):
        errors = [
            {"field": ".".join(str(p) for p in e["loc"] if p != "body"), "message": e["msg"]}
            for e in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"errors": errors})

    @app.exception_handler(ProviderError)
    async def on_provider(_: Request, exc: ProviderError):
        return JSONResponse(status_code=503, content={"error": str(exc)})

    @app.exception_handler(PipelineError)
    async def on_pipeline(_: Request, exc: PipelineError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/actors")
    def actors():
        return {"actors": list(state.matrix.actors)}

    @app.get("/taxonomy")
    def taxonomy():
        return {
            "fingerprint": state.tax.fingerprint(),
            "techniques": [
                {"id": tid.canonical, "name": state.tax.records[tid].name}
                for tid in state.tax.ordering
            ],
        }

    @app.get("/matrix/meta")
    def matrix_meta():
        return {
            "actors": list(state.matrix.actors),
            "n_techniques": len(state.matrix.ttp_order),
            "alpha": state.matrix.smoothing,
            "taxonomy_fingerprint": state.matrix.taxonomy_fingerprint,
            "zero_rows": list(state.matrix.zero_rows),
        }

    @app.post("/identify")
    def identify(req: IdentifyRequest):
        if req.method == "llm":
            return _identify_llm(state, req)
        k = req.window_lines or state.window_lines
        chunks = _chunk_text(req.text, k)
        tags = tag_chunks(
            chunks, state.emb, state.provider, state.names,
            IdentifyConfig(window_lines=k, min_similarity=state.min_similarity),
        )
        counts: dict[TechniqueId, int] = {}
        for t in tags:
            if t.ttp is not None:
                counts[t.ttp] = counts.get(t.ttp, 0) + 1
        return {
            "method": "ve",
            "tags": [
                {
                    "chunk_index": t.chunk_index,
                    "text": t.text,
                    "ttp": t.ttp.canonical if t.ttp else None,
                    "name": t.name,
                    "similarity": t.similarity,
                    "runner_up": t.runner_up.canonical if t.runner_up else None,
                }
                for t in tags
            ],
            "counts": {t.canonical: c for t, c in sorted(counts.items())},
        }

    @app.post("/attribute")
    def attribute_endpoint(
        req: AttributeRequest,
        x_session_id: str = Header(default="default"),
    ):
        if (req.counts is None) == (req.text is None):
            raise ValidationError("provide exactly one of counts or text")
        if req.counts is not None:
            counts = {parse_technique_id(k): v for k, v in req.counts.items()}
            for tid, v in counts.items():
                if v < 0:
                    raise ValidationError(f"negative count for {tid}")
        else:
            counts = _counts_from_text(state, req.text)

        prior = None
        if req.prior is not None and req.use_session_prior:
            raise ValidationError("provide either an inline prior or use_session_prior")
        if req.prior is not None:
            prior = _prior_from_weights(state.matrix.actors, req.prior)
        elif req.use_session_prior:
            with state.lock:
                prior = state.session_priors.get(x_session_id)
            if prior is None:
                raise ValidationError(f"no prior stored for session {x_session_id!r}")

        result = attribute(counts, state.matrix, prior)
        return {
            "ranking": [
                {"rank": i + 1, "actor": actor, "score": score}
                for i, (actor, score) in enumerate(result.ranked)
            ],
            "prior_only": result.prior_only,
            "dropped_ttps": [t.canonical for t in result.dropped_ttps],
            "counts": {t.canonical: c for t, c in sorted(counts.items())},
            "decomposition": _decompose(state, counts, req.top_terms),
        }

    @app.put("/session/prior")
    def put_prior(req: PriorRequest, x_session_id: str = Header(default="default")):
        prior = _prior_from_weights(state.matrix.actors, req.weights)
        with state.lock:
            state.session_priors[x_session_id] = prior
        return {
            "session": x_session_id,
            "prior": {a: float(w) for a, w in zip(prior.actors, prior.weights)},
        }

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def _prior_from_weights(actors: tuple[str, ...], weights: Mapping[str, float]) -> Prior:
    unknown = set(weights) - set(actors)
    if unknown:
        raise ValidationError(f"prior names unknown actors: {sorted(unknown)}")
    missing = set(actors) - set(weights)
    if missing:
        raise ValidationError(f"prior missing actors: {sorted(missing)}")
    raw = np.array([float(weights[a]) for a in actors], dtype=np.float64)
    if np.any(raw < 0):
        raise ValidationError("prior weights must be non-negative")
    total = float(raw.sum())
    if total <= 0:
        raise ValidationError("prior weights must sum to a positive value")
    return Prior(actors=tuple(actors), weights=raw / total)
