"""slrpipe: an automated systematic-literature-review pipeline.

Given a research topic, the pipeline expands it into a richer topic
statement, generates a fielded arXiv query, retrieves and screens
papers by embedding similarity, clusters the survivors into topics,
summarizes and aggregates per topic with citation tracking, and
assembles a compilable LaTeX review with a BibTeX bibliography —
then evaluates the result (ROUGE-1, readability, topic coherence,
stage-by-stage cosine similarity, and a document-limit sweep).
"""

from .errors import (
    AuthError,
    BackendUnavailable,
    CitationLost,
    CitationRepairWarning,
    ConfigError,
    DegenerateClusteringWarning,
    DegenerateCounts,
    DegenerateCountsWarning,
    DuplicateKey,
    EmptyAbstract,
    EmptyCompletion,
    EmptyResultWarning,
    EmptyTopic,
    ExportError,
    FallbackTextWarning,
    FeedParseError,
    InvalidLimit,
    InvalidPartition,
    MalformedQuery,
    ManifestCorrupt,
    NetworkError,
    NoPapers,
    NoWords,
    OutOfBandWarning,
    RateLimited,
    SlrPipeError,
    SlrPipeWarning,
    StageFailure,
    SweepPointWarning,
    TooFewDocuments,
    TuningFailed,
    UnboundPlaceholder,
    UndefinedCitation,
    UnexpectedBinding,
    UnknownRun,
    UnknownTemplate,
)
from .gateway import (
    CompletionRequest,
    CompletionResult,
    LlmGateway,
    MockBackend,
    PromptTemplate,
    RateLimiter,
    RemoteBackend,
    expand_with_related_terms,
    load_related_terms,
    load_template,
    render_prompt,
)
from .search import (
    Corpus,
    EmbeddingVector,
    FixtureTransport,
    HashingEmbedder,
    HttpTransport,
    PaperRecord,
    QueryOp,
    QueryTerm,
    ScoredPaper,
    bundled_feed_bytes,
    cosine_similarity,
    embed_texts,
    embedding_input,
    fetch_papers,
    filter_top_k,
    get_embedding_provider,
    parse_arxiv_query,
    parse_feed,
    serialize_query,
)
from .topics import (
    TopicCluster,
    TopicModelParams,
    TopicReport,
    build_clusters,
    build_topic_report,
    cluster_documents,
    extract_keywords,
    title_topics,
    tune_topic_count,
)
from .synthesis import (
    ExtractiveSummarizer,
    SectionDraft,
    SummaryUnit,
    aggregate_topic,
    extract_citation_keys,
    get_summarizer,
    post_edit_section,
    summarize_abstract,
    validate_citations,
)
from .document import (
    BibEntry,
    ReviewDocument,
    assemble_and_export,
    assign_citation_keys,
    generate_bibtex,
    generate_framing_sections,
    latex_escape,
    make_citation_key,
    render_review,
    validate_latex,
)
from .evaluation import (
    ReadabilityStats,
    RougeScore,
    StageSimilarityReport,
    SweepPoint,
    coherence_cv,
    fres,
    interpret_fres,
    random_baseline_document,
    rouge1,
    run_limit_sweep,
    stage_similarity_report,
    syllable_count,
)
from .pipeline import (
    PipelineConfig,
    RunManifest,
    evaluate_run,
    execute_in_memory,
    resume_run,
    run_pipeline,
    sweep_output_dir,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors and warnings
    "SlrPipeError",
    "SlrPipeWarning",
    "AuthError",
    "BackendUnavailable",
    "CitationLost",
    "CitationRepairWarning",
    "ConfigError",
    "DegenerateClusteringWarning",
    "DegenerateCounts",
    "DegenerateCountsWarning",
    "DuplicateKey",
    "EmptyAbstract",
    "EmptyCompletion",
    "EmptyResultWarning",
    "EmptyTopic",
    "ExportError",
    "FallbackTextWarning",
    "FeedParseError",
    "InvalidLimit",
    "InvalidPartition",
    "MalformedQuery",
    "ManifestCorrupt",
    "NetworkError",
    "NoPapers",
    "NoWords",
    "OutOfBandWarning",
    "RateLimited",
    "StageFailure",
    "SweepPointWarning",
    "TooFewDocuments",
    "TuningFailed",
    "UnboundPlaceholder",
    "UndefinedCitation",
    "UnexpectedBinding",
    "UnknownRun",
    "UnknownTemplate",
    # gateway
    "CompletionRequest",
    "CompletionResult",
    "LlmGateway",
    "MockBackend",
    "PromptTemplate",
    "RateLimiter",
    "RemoteBackend",
    "expand_with_related_terms",
    "load_related_terms",
    "load_template",
    "render_prompt",
    # search and screening
    "Corpus",
    "EmbeddingVector",
    "FixtureTransport",
    "HashingEmbedder",
    "HttpTransport",
    "PaperRecord",
    "QueryOp",
    "QueryTerm",
    "ScoredPaper",
    "bundled_feed_bytes",
    "cosine_similarity",
    "embed_texts",
    "embedding_input",
    "fetch_papers",
    "filter_top_k",
    "get_embedding_provider",
    "parse_arxiv_query",
    "parse_feed",
    "serialize_query",
    # topic modeling
    "TopicCluster",
    "TopicModelParams",
    "TopicReport",
    "build_clusters",
    "build_topic_report",
    "cluster_documents",
    "extract_keywords",
    "title_topics",
    "tune_topic_count",
    # summarization and synthesis
    "ExtractiveSummarizer",
    "SectionDraft",
    "SummaryUnit",
    "aggregate_topic",
    "extract_citation_keys",
    "get_summarizer",
    "post_edit_section",
    "summarize_abstract",
    "validate_citations",
    # document assembly
    "BibEntry",
    "ReviewDocument",
    "assemble_and_export",
    "assign_citation_keys",
    "generate_bibtex",
    "generate_framing_sections",
    "latex_escape",
    "make_citation_key",
    "render_review",
    "validate_latex",
    # evaluation
    "ReadabilityStats",
    "RougeScore",
    "StageSimilarityReport",
    "SweepPoint",
    "coherence_cv",
    "fres",
    "interpret_fres",
    "random_baseline_document",
    "rouge1",
    "run_limit_sweep",
    "stage_similarity_report",
    "syllable_count",
    # pipeline
    "PipelineConfig",
    "RunManifest",
    "evaluate_run",
    "execute_in_memory",
    "resume_run",
    "run_pipeline",
    "sweep_output_dir",
]
