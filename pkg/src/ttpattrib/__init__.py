"""Technique tagging and threat-actor attribution for incident reports."""
from .attribution import (
    AttributionResult,
    Prior,
    WeightMatrix,
    attribute,
    fit_expert_prior,
    load_matrix,
    save_matrix,
    select_best_matrix,
    train_weight_matrix,
)
from .corpus import Chunk, Corpus, Document, Fold, FoldSet, chunk_document, load_corpus, make_splits
from .embedding import (
    CachingProvider,
    EmbeddedTaxonomy,
    LocalHashProvider,
    ProviderConfig,
    RemoteProvider,
    VectorCache,
    cosine,
    embed_taxonomy,
    embed_text,
    hyde_augment,
    make_provider,
)
from .errors import (
    DataError,
    PipelineError,
    ProviderError,
    ValidationError,
)
from .identify import (
    ChunkTag,
    IdentifyConfig,
    aggregate_actor,
    identify_ve,
    tags_to_counts,
    tie_break,
)
from .llm_extract import (
    Extraction,
    PromptTemplate,
    extraction_to_counts,
    identify_llm,
    load_default_template,
    parse_reply,
)
from .metrics import (
    FrequencyReport,
    compare_sets,
    exhaustive_baseline,
    frequency_report,
    hallucination_rate,
    jaccard,
    pearson,
    rank_summary,
    spearman,
)
from .pipeline import ExperimentConfig, ExperimentReport, run_experiment
from .taxonomy import (
    Taxonomy,
    TechniqueId,
    TtpRecord,
    classify_prediction,
    load_taxonomy,
    parse_technique_id,
)

__version__ = "0.1.0"

__all__ = [
    "AttributionResult", "Prior", "WeightMatrix", "attribute", "fit_expert_prior",
    "load_matrix", "save_matrix", "select_best_matrix", "train_weight_matrix",
    "Chunk", "Corpus", "Document", "Fold", "FoldSet", "chunk_document",
    "load_corpus", "make_splits",
    "CachingProvider", "EmbeddedTaxonomy", "LocalHashProvider", "ProviderConfig",
    "RemoteProvider", "VectorCache", "cosine", "embed_taxonomy", "embed_text",
    "hyde_augment", "make_provider",
    "DataError", "PipelineError", "ProviderError", "ValidationError",
    "ChunkTag", "IdentifyConfig", "aggregate_actor", "identify_ve",
    "tags_to_counts", "tie_break",
    "Extraction", "PromptTemplate", "extraction_to_counts", "identify_llm",
    "load_default_template", "parse_reply",
    "FrequencyReport", "compare_sets", "exhaustive_baseline", "frequency_report",
    "hallucination_rate", "jaccard", "pearson", "rank_summary", "spearman",
    "ExperimentConfig", "ExperimentReport", "run_experiment",
    "Taxonomy", "TechniqueId", "TtpRecord", "classify_prediction",
    "load_taxonomy", "parse_technique_id",
    "__version__",
]
