"""Command-line entry point.

Subcommands follow the pipeline stages: ingest, embed, identify, train,
attribute, evaluate, serve. Every command reads a TOML config; a handful
of flags override config values. Exit codes: 0 success, 2 validation
error, 3 provider error, 4 data error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from .attribution import Prior, attribute, load_matrix, save_matrix
from .config import AppConfig, load_config
from .corpus import load_corpus
from .embedding import (
    CachingProvider,
    VectorCache,
    embed_taxonomy,
    make_provider,
    save_embedded_taxonomy,
)
from .errors import PipelineError, ValidationError
from .generation import make_generator
from .identify import IdentifyConfig, identify_ve, tags_to_counts, write_tags_jsonl
from .llm_extract import (
    COUNT_POLICIES,
    extraction_to_counts,
    identify_llm,
    load_default_template,
)
from .metrics import format_rank_table, hallucination_rate
from .pipeline import ExperimentConfig, run_experiment, tag_corpus
from .taxonomy import convert_stix_bundle, load_taxonomy, parse_technique_id

logger = logging.getLogger(__name__)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="TOML config file")
    p.add_argument("--verbose", action="store_true", help="debug logging")


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--n-folds", type=int, default=None)
    p.add_argument("--window-lines", type=int, default=None)
    p.add_argument("--selection", choices=["min-rank", "max-rank"], default=None)
    p.add_argument("--output-dir", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttp-attrib",
        description="Tag incident reports with techniques and attribute them to actors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate inputs; optionally convert a STIX bundle")
    _add_common(p)
    p.add_argument("--stix", default=None, help="STIX 2.1 bundle to convert to taxonomy CSV")

    p = sub.add_parser("embed", help="embed the taxonomy and save vectors")
    _add_common(p)
    p.add_argument("--out", default=None, help="metadata JSON path (default out/embeddings.json)")

    p = sub.add_parser("identify", help="tag corpus documents with techniques")
    _add_common(p)
    _add_overrides(p)
    p.add_argument("--doc-id", default=None, help="tag a single document")
    p.add_argument("--method", choices=["ve", "llm"], default="ve",
                   help="nearest-neighbor search (ve) or prompted extraction (llm)")
    p.add_argument("--count-policy", choices=list(COUNT_POLICIES), default="drop-unknown",
                   help="llm only: keep or drop entries outside the taxonomy")

    p = sub.add_parser("train", help="train fold matrices and save the best one")
    _add_common(p)
    _add_overrides(p)

    p = sub.add_parser("attribute", help="rank actors for one document")
    _add_common(p)
    p.add_argument("--matrix", required=True, help="trained matrix JSON")
    p.add_argument("--doc-id", default=None, help="document from the corpus manifest")
    p.add_argument("--counts", default=None,
                   help='inline counts JSON, e.g. {"T1059": 3, "T1083": 1}')
    p.add_argument("--prior", default=None, help="uniform | path to prior CSV")
    p.add_argument("--window-lines", type=int, default=None)

    p = sub.add_parser("evaluate", help="run the full fold experiment and write reports")
    _add_common(p)
    _add_overrides(p)

    p = sub.add_parser("serve", help="start the HTTP API")
    _add_common(p)
    p.add_argument("--matrix", required=True, help="trained matrix JSON")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui-dir", default=None, help="built UI bundle to serve at /ui")

    return parser


def _experiment_config(cfg: AppConfig, args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        window_lines=args.window_lines if args.window_lines is not None else cfg.identify.window_lines,
        min_similarity=cfg.identify.min_similarity,
        collapse_subtechniques=cfg.identify.collapse_subtechniques,
        include_id=cfg.identify.include_id,
        hyde_passages=cfg.identify.hyde_passages,
        alpha=args.alpha if args.alpha is not None else cfg.train.alpha,
        n_folds=args.n_folds if args.n_folds is not None else cfg.train.n_folds,
        seed=args.seed if args.seed is not None else cfg.train.seed,
        stratified=cfg.train.stratified,
        selection=args.selection if args.selection is not None else cfg.evaluate.selection,
    )


def _provider(cfg: AppConfig):
    provider = make_provider(cfg.provider)
    if cfg.paths.cache_dir:
        provider = CachingProvider(provider, VectorCache(cfg.resolve(cfg.paths.cache_dir)))
    return provider


def _output_dir(cfg: AppConfig, args: argparse.Namespace) -> Path:
    rel = args.output_dir if getattr(args, "output_dir", None) else cfg.paths.output_dir
    return cfg.resolve(rel)


def _load_inputs(cfg: AppConfig):
    tax = load_taxonomy(cfg.resolve(cfg.paths.taxonomy))
    corpus = load_corpus(cfg.resolve(cfg.paths.manifest), cfg.resolve(cfg.paths.truth), tax)
    return tax, corpus


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.stix:
        n = convert_stix_bundle(args.stix, cfg.resolve(cfg.paths.taxonomy))
        print(f"converted {n} techniques from {args.stix}")
    tax, corpus = _load_inputs(cfg)
    print(f"taxonomy: {len(tax.ordering)} live techniques "
          f"(fingerprint {tax.fingerprint()[:12]})")
    print(f"corpus: {len(corpus.actors)} actors, {corpus.total_docs} documents")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    tax = load_taxonomy(cfg.resolve(cfg.paths.taxonomy))
    emb = embed_taxonomy(tax, _provider(cfg), include_id=cfg.identify.include_id)
    out = Path(args.out) if args.out else cfg.resolve(cfg.paths.output_dir) / "embeddings.json"
    save_embedded_taxonomy(emb, out)
    print(f"embedded {len(emb.ids)} techniques -> {out}")
    return 0


def cmd_identify(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    tax, corpus = _load_inputs(cfg)
    if args.method == "llm":
        return _identify_llm(cfg, args, tax, corpus)
    provider = _provider(cfg)
    ex = _experiment_config(cfg, args)
    identify_cfg = IdentifyConfig(
        window_lines=ex.window_lines,
        min_similarity=ex.min_similarity,
        collapse_subtechniques=ex.collapse_subtechniques,
    )
    emb = embed_taxonomy(tax, provider, include_id=ex.include_id)
    names = {tid: tax.records[tid].name for tid in tax.ordering}
    if args.doc_id:
        tags = identify_ve(corpus.document(args.doc_id), emb, provider, names, identify_cfg)
    else:
        tags, _ = tag_corpus(corpus, emb, provider, tax, identify_cfg)
    out = _output_dir(cfg, args) / "tags.jsonl"
    write_tags_jsonl(sorted(tags, key=lambda t: (t.doc_id, t.chunk_index)), out)
    print(f"tagged {len(tags)} chunks -> {out}")
    return 0


def _identify_llm(cfg: AppConfig, args: argparse.Namespace, tax, corpus) -> int:
    if cfg.generation.kind != "remote":
        raise ValidationError(
            "llm identification needs a remote [generation] provider; "
            f"config has kind {cfg.generation.kind!r}"
        )
    generator = make_generator(cfg.generation)
    template = load_default_template()
    out_dir = _output_dir(cfg, args)
    out_dir.mkdir(parents=True, exist_ok=True)
    audit = out_dir / "llm_audit.jsonl"
    extractions = out_dir / "extractions.jsonl"

    docs = [corpus.document(args.doc_id)] if args.doc_id else list(corpus.all_documents())
    verdicts = []
    with extractions.open("w", encoding="utf-8", newline="\n") as fh:
        for doc in sorted(docs, key=lambda d: d.doc_id):
            classified = identify_llm(
                doc, doc.actor, template, tax, generator,
                max_input_chars=cfg.generation.max_input_chars,
                audit_path=audit,
            )
            counts = extraction_to_counts(classified, policy=args.count_policy)
            verdicts.extend(item.verdict for item in classified)
            fh.write(json.dumps({
                "doc_id": doc.doc_id,
                "entries": [
                    {"ttp": item.entry.ttp.canonical, "name": item.entry.name,
                     "category": item.verdict.category}
                    for item in classified
                ],
                "counts": {t.canonical: c for t, c in sorted(counts.items())},
            }, sort_keys=True) + "\n")
    print(f"extracted {len(verdicts)} entries from {len(docs)} documents -> {extractions}")
    if verdicts:
        print(f"hallucination rate: {hallucination_rate(verdicts):.4f}")
    print(f"audit log: {audit}")
    return 0


def _hyde_generator(cfg: AppConfig, ex: ExperimentConfig):
    return make_generator(cfg.generation) if ex.hyde_passages > 0 else None


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    tax, corpus = _load_inputs(cfg)
    ex = _experiment_config(cfg, args)
    report = run_experiment(corpus, tax, _provider(cfg), ex,
                            hyde_generator=_hyde_generator(cfg, ex))
    out = _output_dir(cfg, args) / "matrix.json"
    save_matrix(report.best_matrix, out)
    print(f"best fold: {report.best_fold} "
          f"(validation mean rank "
          f"{sum(report.outcomes[report.best_fold].val_ranks) / len(report.outcomes[report.best_fold].val_ranks):.3f})")
    print(f"matrix -> {out}")
    return 0


def cmd_attribute(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    matrix = load_matrix(args.matrix)
    if (args.doc_id is None) == (args.counts is None):
        raise ValidationError("provide exactly one of --doc-id or --counts")
    if args.counts:
        raw = json.loads(args.counts)
        counts = Counter({parse_technique_id(k): int(v) for k, v in raw.items()})
    else:
        tax, corpus = _load_inputs(cfg)
        provider = _provider(cfg)
        emb = embed_taxonomy(tax, provider, include_id=cfg.identify.include_id)
        names = {tid: tax.records[tid].name for tid in tax.ordering}
        k = args.window_lines if args.window_lines is not None else cfg.identify.window_lines
        tags = identify_ve(corpus.document(args.doc_id), emb, provider, names,
                           IdentifyConfig(window_lines=k,
                                          min_similarity=cfg.identify.min_similarity,
                                          collapse_subtechniques=cfg.identify.collapse_subtechniques))
        counts = tags_to_counts(tags, cfg.identify.collapse_subtechniques)

    prior = None
    if args.prior == "uniform":
        prior = Prior.uniform(matrix.actors)
    elif args.prior:
        prior = Prior.from_csv(args.prior)
    result = attribute(counts, matrix, prior)
    for rank, (actor, score) in enumerate(result.ranked, start=1):
        print(f"{rank:>3}  {actor:<24}{score:.6g}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    tax, corpus = _load_inputs(cfg)
    ex = _experiment_config(cfg, args)
    report = run_experiment(
        corpus, tax, _provider(cfg), ex,
        hyde_generator=_hyde_generator(cfg, ex),
        out_dir=_output_dir(cfg, args),
    )
    print(format_rank_table(report.conditions, report.n_actors), end="")
    print(f"best fold: {report.best_fold}")
    print(f"artifacts in {_output_dir(cfg, args)}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import build_state, create_app

    cfg = load_config(args.config)
    app = create_app(build_state(cfg, args.matrix), ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "embed": cmd_embed,
    "identify": cmd_identify,
    "train": cmd_train,
    "attribute": cmd_attribute,
    "evaluate": cmd_evaluate,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
