#!/usr/bin/env python3
"""Generate a synthetic actor/report workspace on disk.

Writes taxonomy.csv, manifest.csv, truth.csv, docs/, and a ready-to-run
config.toml. Optionally corrupts a fraction of document tokens to make
the identification problem non-trivial.
"""
from __future__ import annotations

import argparse
from pathlib import Path

from ttpattrib.synthetic import (
    SyntheticSpec,
    inject_token_noise,
    make_synthetic,
    write_synthetic_workspace,
)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, required=True, help="workspace directory")
    ap.add_argument("--actors", type=int, default=8)
    ap.add_argument("--ttps-per-actor", type=int, default=10)
    ap.add_argument("--docs-per-actor", type=int, default=6)
    ap.add_argument("--ttps-per-doc", type=int, default=5)
    ap.add_argument("--seed", type=int, default=13)
    ap.add_argument("--noise", type=float, default=0.0,
                    help="fraction of tokens to corrupt, 0..1")
    args = ap.parse_args(argv)

    spec = SyntheticSpec(
        n_actors=args.actors,
        ttps_per_actor=args.ttps_per_actor,
        docs_per_actor=args.docs_per_actor,
        ttps_per_doc=args.ttps_per_doc,
        seed=args.seed,
    )
    data = make_synthetic(spec)
    if args.noise > 0.0:
        noisy = inject_token_noise(data.corpus, args.noise, seed=args.seed,
                                   vocabulary=data.vocabulary)
        data = type(data)(spec=data.spec, taxonomy=data.taxonomy, corpus=noisy,
                          signatures=data.signatures, chunk_truth=data.chunk_truth,
                          vocabulary=data.vocabulary)
    root = write_synthetic_workspace(data, args.out)
    print(f"workspace written to {root}")
    print(f"  actors: {len(data.corpus.actors)}")
    print(f"  documents: {data.corpus.total_docs}")
    print(f"  techniques: {len(data.taxonomy.ordering)}")
    if args.noise > 0.0:
        print(f"  token noise: {args.noise:.0%}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
