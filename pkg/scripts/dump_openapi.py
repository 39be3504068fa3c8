#!/usr/bin/env python3
"""Write the HTTP service's OpenAPI description to a JSON file.

Builds the app against a small in-memory synthetic state; the schema
depends only on route and model definitions, never on the data.
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from ttpattrib.attribution import train_weight_matrix
from ttpattrib.embedding import LocalHashProvider, ProviderConfig, embed_taxonomy
from ttpattrib.identify import IdentifyConfig, identify_ve, tags_to_counts
from ttpattrib.server import ServerState, create_app
from ttpattrib.synthetic import SyntheticSpec, make_synthetic


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("openapi.json"))
    args = ap.parse_args(argv)

    data = make_synthetic(SyntheticSpec(n_actors=2, ttps_per_actor=3,
                                        docs_per_actor=3, ttps_per_doc=2))
    provider = LocalHashProvider(ProviderConfig(dim=64))
    emb = embed_taxonomy(data.taxonomy, provider)
    names = {t: data.taxonomy.records[t].name for t in data.taxonomy.ordering}

    def tagger(doc):
        return tags_to_counts(identify_ve(doc, emb, provider, names, IdentifyConfig()))

    matrix = train_weight_matrix(
        data.corpus.docs, tagger,
        ttp_order=data.taxonomy.ordering,
        taxonomy_fingerprint=data.taxonomy.fingerprint(),
    )
    app = create_app(ServerState(tax=data.taxonomy, emb=emb,
                                 provider=provider, matrix=matrix))
    schema = app.openapi()
    args.out.write_text(json.dumps(schema, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
    print(f"wrote {args.out} ({len(schema['paths'])} paths)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
