"""ctgi: chat-driven person search at desk scale.

Library surface: embedding/ranking primitives and retrieval metrics,
positional-embedding stretching, chat backends with record/replay,
the multi-turn captioning and query-refinement pipelines, and a synthetic
attribute world with a truthful oracle backend for end-to-end verification.
"""

from .ablation import ArmResult, run_ablation, save_ablation_csv
from .captioning import (
    CaptionConfig,
    PseudoLabel,
    QATurn,
    QuestionPool,
    default_question_pool,
    enrich,
    filter_turns,
    generate_captions,
    generate_pseudo_label,
    initial_caption,
    qa_round,
    reconstruct,
)
from .chat import (
    ChatBackend,
    ChatBackendConfig,
    ChatMessage,
    ChatTranscript,
    HttpBackend,
    ReplayBackend,
    ScriptedBackend,
    YesNo,
    parse_yes_no,
)
from .errors import CtgiError
from .metrics import mean_average_precision, rank_k_accuracy
from .pe_stretch import PEMatrix, StretchSpec, load_pe, save_pe, source_position, stretch
from .refinement import (
    RefinementSession,
    SearchConfig,
    aggregate_query,
    diagnostic_questions,
    find_anchor,
    fuse_scores,
    search,
    visual_qa,
)
from .vectors import (
    Gallery,
    GalleryItem,
    Ranking,
    cosine,
    load_gallery,
    normalize,
    rank_all,
    save_gallery,
    top_k,
)
from .world import (
    DEFAULT_SCHEMA,
    AttributeSchema,
    OracleBackend,
    OracleConfig,
    World,
    generate_world,
)

__version__ = "0.1.0"

__all__ = [
    "ArmResult",
    "AttributeSchema",
    "CaptionConfig",
    "ChatBackend",
    "ChatBackendConfig",
    "ChatMessage",
    "ChatTranscript",
    "CtgiError",
    "DEFAULT_SCHEMA",
    "Gallery",
    "GalleryItem",
    "HttpBackend",
    "OracleBackend",
    "OracleConfig",
    "PEMatrix",
    "PseudoLabel",
    "QATurn",
    "QuestionPool",
    "Ranking",
    "RefinementSession",
    "ReplayBackend",
    "ScriptedBackend",
    "SearchConfig",
    "StretchSpec",
    "World",
    "YesNo",
    "aggregate_query",
    "cosine",
    "default_question_pool",
    "diagnostic_questions",
    "enrich",
    "filter_turns",
    "find_anchor",
    "fuse_scores",
    "generate_captions",
    "generate_pseudo_label",
    "generate_world",
    "initial_caption",
    "load_gallery",
    "load_pe",
    "mean_average_precision",
    "normalize",
    "parse_yes_no",
    "qa_round",
    "rank_all",
    "rank_k_accuracy",
    "reconstruct",
    "run_ablation",
    "save_ablation_csv",
    "save_gallery",
    "save_pe",
    "search",
    "source_position",
    "stretch",
    "top_k",
    "visual_qa",
]
