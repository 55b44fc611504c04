"""Detection of subtle, spatially localized emerging events in text streams."""

from .assign import AssignedDocument, assign_corpus_window, assign_document, write_assignments_csv
from .contrastive import combine_topics, fit_detection_window, init_assignments, refit_foreground
from .corpus import (
    Corpus,
    CorpusError,
    Document,
    LocationTable,
    RawRecord,
    Vocabulary,
    build_vocabulary,
    encode_records,
    load_corpus,
    neighbor_order,
    read_records,
    tokenize,
)
from .evaluation import (
    MetricReport,
    TrialSummary,
    calibrate_threshold,
    detection_metrics,
    hellinger,
    jaccard_overlap,
    null_day_scores,
    summarize_trial,
)
from .lda import (
    GibbsState,
    TopicSet,
    audit_counts,
    estimate_phi,
    estimate_theta,
    fit_lda,
    read_topics_csv,
    write_topics_csv,
)
from .scan import (
    BaselineCube,
    CountCube,
    DetectionResult,
    SpaceTimeRegion,
    build_baseline_cube,
    build_count_cube,
    ebp_score,
    randomization_test,
    scan_all,
    top_score,
)
from .simulate import (
    BackgroundModel,
    EventGroundTruth,
    InjectionSpec,
    PipelineConfig,
    TrialRecord,
    hold_out_category,
    inject_event,
    prepare_background,
    run_trial,
)

__version__ = "0.1.0"

__all__ = [
    "AssignedDocument",
    "BackgroundModel",
    "BaselineCube",
    "Corpus",
    "CorpusError",
    "CountCube",
    "DetectionResult",
    "Document",
    "EventGroundTruth",
    "GibbsState",
    "InjectionSpec",
    "LocationTable",
    "MetricReport",
    "PipelineConfig",
    "RawRecord",
    "SpaceTimeRegion",
    "TopicSet",
    "TrialRecord",
    "TrialSummary",
    "Vocabulary",
    "assign_corpus_window",
    "assign_document",
    "audit_counts",
    "build_baseline_cube",
    "build_count_cube",
    "build_vocabulary",
    "calibrate_threshold",
    "combine_topics",
    "detection_metrics",
    "ebp_score",
    "encode_records",
    "estimate_phi",
    "estimate_theta",
    "fit_detection_window",
    "fit_lda",
    "hellinger",
    "hold_out_category",
    "init_assignments",
    "inject_event",
    "jaccard_overlap",
    "load_corpus",
    "neighbor_order",
    "null_day_scores",
    "prepare_background",
    "randomization_test",
    "read_records",
    "read_topics_csv",
    "refit_foreground",
    "run_trial",
    "scan_all",
    "summarize_trial",
    "tokenize",
    "top_score",
    "write_assignments_csv",
    "write_topics_csv",
]
