"""Instance-level gap evaluation between paired real/synthetic detection
datasets: registration, matching, per-instance performance extraction,
and the cross-validation report."""

from .baselines import PrCurvePoint, average_precision, pr_curve
from .errors import (
    DegenerateSampleError,
    IncompleteResultsError,
    InputValidationError,
    IpdKitError,
    LoadError,
    NoInstancesError,
    ParseError,
    UndefinedApError,
)
from .geometry import (
    AffineTransform2D,
    BBox,
    Point2,
    apply_affine,
    bbox_center,
    compose,
    fit_affine_3pt,
    iou,
)
from .ingestion import (
    DatasetManifest,
    ImageLabels,
    ManifestEntry,
    load_dataset,
    merge_pairings,
    pair_datasets,
    parse_label_file,
    parse_label_text,
    read_report,
    serialize_labels,
    write_ipd_report,
    write_report,
)
from .matching import (
    InstancePairing,
    assignment_min_cost,
    default_gate_distance,
    match_instances,
)
from .metric import (
    CrossValCell,
    IouTable,
    IpdResult,
    PerfRecord,
    closest_domain,
    cross_validation,
    evaluate_pair,
    iou_table,
    ipd,
    performance_value,
)
from .registration import (
    RegistrationConfig,
    RegistrationResult,
    fallback_translation,
    register,
    registration_score,
)
from .scenegen import (
    DetectorProfile,
    SceneIous,
    SceneSpec,
    emit_dataset,
    generate_scene_pair,
    oracle_ipd,
    perturb_box_to_target_iou,
    pooled_oracle_ipd,
    random_affine,
)

__version__ = "0.1.0"

__all__ = [
    "AffineTransform2D",
    "BBox",
    "CrossValCell",
    "DatasetManifest",
    "DegenerateSampleError",
    "DetectorProfile",
    "ImageLabels",
    "IncompleteResultsError",
    "InputValidationError",
    "InstancePairing",
    "IouTable",
    "IpdKitError",
    "IpdResult",
    "LoadError",
    "ManifestEntry",
    "NoInstancesError",
    "ParseError",
    "PerfRecord",
    "Point2",
    "PrCurvePoint",
    "RegistrationConfig",
    "RegistrationResult",
    "SceneIous",
    "SceneSpec",
    "UndefinedApError",
    "apply_affine",
    "assignment_min_cost",
    "average_precision",
    "bbox_center",
    "closest_domain",
    "compose",
    "cross_validation",
    "default_gate_distance",
    "emit_dataset",
    "evaluate_pair",
    "fallback_translation",
    "fit_affine_3pt",
    "generate_scene_pair",
    "iou",
    "iou_table",
    "ipd",
    "load_dataset",
    "match_instances",
    "merge_pairings",
    "oracle_ipd",
    "pair_datasets",
    "parse_label_file",
    "parse_label_text",
    "performance_value",
    "perturb_box_to_target_iou",
    "pooled_oracle_ipd",
    "pr_curve",
    "random_affine",
    "read_report",
    "register",
    "registration_score",
    "serialize_labels",
    "write_ipd_report",
    "write_report",
]
