"""lintkit: mine Java methods, run linters over them, train issue classifiers.

The pipeline runs corpus collection -> method extraction -> static-analysis
labeling -> dataset assembly -> classification -> evaluation, with JSONL
artifacts between every stage and explicit seeds wherever randomness enters.
"""

from .corpus import (
    FixtureSearchClient,
    ProjectRecord,
    ProjectSource,
    RateLimited,
    SearchClient,
    SweepConfig,
    SweepOutcome,
    filter_seed_projects,
    sweep_api_search,
)
from .dataset import (
    DatasetManifest,
    LabeledSample,
    LabelVocabulary,
    Split,
    ThresholdConfig,
    UnknownLabelError,
    apply_equivalence,
    balance_negatives,
    build_dataset,
    frequency_filter,
    kept_labels,
    map_issues_to_methods,
    split_default,
    split_project_heldout,
)
from .evaluation import (
    BinaryReport,
    EvalDataError,
    HeadTailConfig,
    MultiLabelReport,
    binary_metrics,
    head_tail_metrics,
    head_tail_partition,
    multilabel_metrics,
    speedup_percent,
    timing_bench,
)
from .extract import (
    ExtractError,
    MethodUnit,
    extract_methods,
    extract_tree,
    locate_method,
)
from .lexer import LexError, LexToken, TokenKind, lex, roundtrip
from .lintrun import (
    IssueRecord,
    LintRun,
    RunStatus,
    Tool,
    ToolchainConfig,
    parse_infer_report,
    parse_spotbugs_report,
    run_analysis,
)
from .model import (
    BaselineModel,
    ClassifierSpec,
    ExternalBackend,
    ModelSample,
    PredictionRecord,
    Predictor,
    Task,
    decide_labels,
    predict,
    run_pipeline,
    train_baseline,
)
from .transform import (
    ALL_FORMATS,
    FormattedSample,
    InputFormat,
    apply_format,
    format_all,
    strip_comments,
    strip_javadoc,
    substitute_strings,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_FORMATS",
    "BaselineModel",
    "BinaryReport",
    "ClassifierSpec",
    "DatasetManifest",
    "EvalDataError",
    "ExternalBackend",
    "ExtractError",
    "FixtureSearchClient",
    "FormattedSample",
    "HeadTailConfig",
    "InputFormat",
    "IssueRecord",
    "LabelVocabulary",
    "LabeledSample",
    "LexError",
    "LexToken",
    "LintRun",
    "MethodUnit",
    "ModelSample",
    "MultiLabelReport",
    "PredictionRecord",
    "Predictor",
    "ProjectRecord",
    "ProjectSource",
    "RateLimited",
    "RunStatus",
    "SearchClient",
    "Split",
    "SweepConfig",
    "SweepOutcome",
    "Task",
    "ThresholdConfig",
    "Tool",
    "ToolchainConfig",
    "UnknownLabelError",
    "apply_equivalence",
    "apply_format",
    "balance_negatives",
    "binary_metrics",
    "build_dataset",
    "decide_labels",
    "extract_methods",
    "extract_tree",
    "filter_seed_projects",
    "format_all",
    "frequency_filter",
    "head_tail_metrics",
    "head_tail_partition",
    "kept_labels",
    "lex",
    "locate_method",
    "map_issues_to_methods",
    "multilabel_metrics",
    "parse_infer_report",
    "parse_spotbugs_report",
    "predict",
    "roundtrip",
    "run_analysis",
    "run_pipeline",
    "speedup_percent",
    "split_default",
    "split_project_heldout",
    "strip_comments",
    "strip_javadoc",
    "substitute_strings",
    "sweep_api_search",
    "timing_bench",
    "train_baseline",
    "__version__",
]
