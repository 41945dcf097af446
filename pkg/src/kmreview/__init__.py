"""Hybrid code review: symbolic bug-pattern detection over a rule catalog,
deterministic prompt assembly for a classification backend, and an
evaluation harness with mock backends for fully offline runs."""

from .analyzer import (
    DETECTORS,
    Finding,
    SyntaxTree,
    analyze,
    detect_error_handling,
    detect_mutable_default,
    detect_naming,
    detect_resource_leak,
    detect_unreachable,
    parse,
)
from .backend import (
    Backend,
    BackendConfig,
    FineTuneProfile,
    HttpBackend,
    ParseMode,
    Verdict,
    classify,
    mock_backend,
    parse_verdict,
)
from .corpus import (
    CodeSample,
    DatasetStats,
    Label,
    dataset_digest,
    load_dataset,
    oversample,
    split,
    stats,
    write_dataset,
)
from .evalharness import (
    ConfusionMatrix,
    EvalMetrics,
    RunRecord,
    compare_runs,
    compute_metrics,
    build_reference_report,
    relative_improvement,
    run_scenario,
    table_consistency_check,
)
from .knowledge_map import (
    Category,
    KnowledgeMap,
    Rule,
    Severity,
    default_map,
    load_map,
    render_context,
    save_map,
)
from .promptkit import (
    PromptBudget,
    PromptBundle,
    ScenarioConfig,
    ScenarioKind,
    build_prompt,
    select_exemplars,
    target_from_source,
)

__version__ = "0.1.0"
