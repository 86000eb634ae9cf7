"""Depth-of-thought difficulty scoring and curriculum construction.

The toolkit measures how many reasoning steps a teacher model spends on
each training example, buckets examples by that depth, and emits
deterministic shallow-to-deep curriculum manifests plus baseline
orderings and rank-statistics reports for validating the signal.
"""

__version__ = "0.1.0"

from .analyzer import (
    AgreementReport,
    ConfoundReport,
    cross_teacher_agreement,
    kendall_tau,
    length_confound,
    spearman,
)
from .bucketer import (
    Bucket,
    BucketReport,
    BucketSpec,
    BucketizeResult,
    OverflowRecord,
    bucketize,
    describe,
    read_buckets,
    write_buckets,
)
from .corpus import (
    CurriculumManifest,
    DoTScore,
    Example,
    Phase,
    SchedulePlan,
    Step,
    TeacherProfile,
    Trace,
    count_tokens,
    read_completions,
    read_corpus,
    read_manifest,
    read_scores,
    read_traces,
    write_completions,
    write_corpus,
    write_manifest,
    write_scores,
    write_traces,
)
from .errors import (
    AnalysisError,
    CorpusError,
    HarvestError,
    ParameterError,
    ScheduleError,
    ScoringError,
    SegmentationError,
    StepladderError,
)
from .harvester import (
    DEFAULT_TEMPLATE,
    HarvestFailure,
    HarvestJob,
    HarvestResult,
    PromptTemplate,
    harvest,
)
from .scheduler import (
    BASELINE_KINDS,
    baseline_order,
    build_curriculum,
    filter_by_depth,
    phase_weights,
)
from .scorer import aggregate_self_consistency, score, score_corpus
from .segmenter import (
    DEFAULT_RULES,
    SegmentationRules,
    audit_sample,
    segment,
    trace_from_text,
)

__all__ = [
    "__version__",
    "AgreementReport", "ConfoundReport", "cross_teacher_agreement",
    "kendall_tau", "length_confound", "spearman",
    "Bucket", "BucketReport", "BucketSpec", "BucketizeResult",
    "OverflowRecord", "bucketize", "describe", "read_buckets", "write_buckets",
    "CurriculumManifest", "DoTScore", "Example", "Phase", "SchedulePlan",
    "Step", "TeacherProfile", "Trace", "count_tokens",
    "read_completions", "read_corpus", "read_manifest", "read_scores",
    "read_traces", "write_completions", "write_corpus", "write_manifest",
    "write_scores", "write_traces",
    "AnalysisError", "CorpusError", "HarvestError", "ParameterError",
    "ScheduleError", "ScoringError", "SegmentationError", "StepladderError",
    "DEFAULT_TEMPLATE", "HarvestFailure", "HarvestJob", "HarvestResult",
    "PromptTemplate", "harvest",
    "BASELINE_KINDS", "baseline_order", "build_curriculum",
    "filter_by_depth", "phase_weights",
    "aggregate_self_consistency", "score", "score_corpus",
    "DEFAULT_RULES", "SegmentationRules", "audit_sample", "segment",
    "trace_from_text",
]
