"""Instance Performance Difference: per-instance detection quality compared
across paired real/synthetic images.

A GT box's performance value is the best IOU any predicted box achieves
against it. IPD is the mean absolute difference of these values over
matched real/synth instance pairs. cross_validation arranges IPDs into
the train-domain x domain-pair matrix used for dataset comparison.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import math

import numpy as np

from .errors import IncompleteResultsError, InputValidationError, NoInstancesError
from .geometry import BBox, iou
from .matching import InstancePairing

if TYPE_CHECKING:
    from .ingestion import ImageLabels


@dataclass(frozen=True, eq=False)
class IouTable:
    """IOU of every GT box (rows) against every predicted box (columns)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InputValidationError("IouTable values must be 2D")
        if v.size and (not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0):
            raise InputValidationError("IOU entries must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def gt_count(self) -> int:
        return self.values.shape[0]

    @property
    def pred_count(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PerfRecord:
    """Performance values of one matched instance pair."""

    dataset_pair_id: str
    image_id: str
    real_index: int
    synth_index: int
    p_real: float
    p_synth: float

    def __post_init__(self):
        for name in ("p_real", "p_synth"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise InputValidationError(f"{name} must lie in [0, 1], got {v!r}")
        if self.real_index < 0 or self.synth_index < 0:
            raise InputValidationError("instance indices must be non-negative")


@dataclass(frozen=True)
class IpdResult:
    """Aggregate IPD plus the per-image contributions it decomposes into.

    per_image_breakdown rows are (image_id, mean |p_real - p_synth| within
    that image, matched pair count); ipd is their pair-count-weighted mean.
    """

    ipd: float
    instance_count: int
    unmatched_real_total: int
    unmatched_synth_total: int
    per_image_breakdown: tuple[tuple[str, float, int], ...] = ()

    def __post_init__(self):
        if not (math.isfinite(self.ipd) and 0.0 <= self.ipd <= 1.0):
            raise InputValidationError("ipd must lie in [0, 1]")
        if self.instance_count < 0 or self.unmatched_real_total < 0 or self.unmatched_synth_total < 0:
            raise InputValidationError("counts must be non-negative")
        if self.per_image_breakdown:
            counts = [c for _, _, c in self.per_image_breakdown]
            if any(c <= 0 for c in counts):
                raise InputValidationError("breakdown pair counts must be positive")
            if sum(counts) != self.instance_count:
                raise InputValidationError("breakdown counts must sum to instance_count")
            weighted = sum(v * c for _, v, c in self.per_image_breakdown) / self.instance_count
            if abs(weighted - self.ipd) > 1e-9:
                raise InputValidationError("breakdown does not average to ipd")


@dataclass(frozen=True)
class CrossValCell:
    """One cell of the cross-validation matrix; ipd is None exactly when
    the evaluated pair does not involve the training domain."""

    train_domain: str
    eval_pair: tuple[str, str]
    ipd: float | None

    def __post_init__(self):
        involved = self.train_domain in self.eval_pair
        if involved and self.ipd is None:
            raise InputValidationError(
                f"cell ({self.train_domain}, {self.eval_pair}) requires an ipd value"
            )
        if not involved and self.ipd is not None:
            raise InputValidationError(
                f"cell ({self.train_domain}, {self.eval_pair}) must be blank"
            )
        if self.ipd is not None and not (math.isfinite(self.ipd) and self.ipd >= 0.0):
            raise InputValidationError("ipd must be finite and non-negative")


def iou_table(gt: Sequence[BBox], pred: Sequence[BBox]) -> IouTable:
    """Pairwise IOU table; either side may be empty."""
    values = np.zeros((len(gt), len(pred)), dtype=np.float64)
    for i, g in enumerate(gt):
        for j, p in enumerate(pred):
            values[i, j] = iou(g, p)
    return IouTable(values)


def performance_value(table: IouTable, gt_index: int) -> float:
    """Best IOU achieved against GT row gt_index; 0 when nothing was
    predicted at all."""
    if not 0 <= gt_index < table.gt_count:
        raise InputValidationError(
            f"gt_index {gt_index} out of range for {table.gt_count} GT boxes"
        )
    if table.pred_count == 0:
        return 0.0
    return float(table.values[gt_index].max())


def ipd(
    records: Sequence[PerfRecord],
    *,
    unmatched_real_total: int = 0,
    unmatched_synth_total: int = 0,
) -> IpdResult:
    """Mean absolute difference of performance values over all records.

    Empty input raises: zero matched pairs means the upstream
    registration/matching produced nothing to compare, not a gap of 0.
    """
    if not records:
        raise NoInstancesError("no matched instance pairs to aggregate")
    by_image: dict[str, list[float]] = {}
    total = 0.0
    for rec in records:
        diff = abs(rec.p_real - rec.p_synth)
        total += diff
        by_image.setdefault(rec.image_id, []).append(diff)
    breakdown = tuple(
        (image_id, float(np.mean(diffs)), len(diffs)) for image_id, diffs in by_image.items()
    )
    return IpdResult(
        ipd=total / len(records),
        instance_count=len(records),
        unmatched_real_total=unmatched_real_total,
        unmatched_synth_total=unmatched_synth_total,
        per_image_breakdown=breakdown,
    )


def _surviving_predictions(boxes: Iterable[BBox], conf_threshold: float) -> list[BBox]:
    return [b for b in boxes if b.confidence is not None and b.confidence >= conf_threshold]


def evaluate_pair(
    real_labels: Sequence["ImageLabels"],
    synth_labels: Sequence["ImageLabels"],
    pairings: Sequence[InstancePairing],
    conf_threshold: float,
    dataset_pair_id: str = "",
) -> IpdResult:
    """Run the per-image performance extraction over aligned image pairs.

    The three sequences are index-aligned: element i describes the same
    real/synth image pair. Predictions below conf_threshold are dropped
    before the IOU tables are built. Records are accumulated image by
    image, within an image by real instance index.
    """
    if not (len(real_labels) == len(synth_labels) == len(pairings)):
        raise InputValidationError(
            "real_labels, synth_labels and pairings must have equal lengths "
            f"(got {len(real_labels)}, {len(synth_labels)}, {len(pairings)})"
        )
    if not (math.isfinite(conf_threshold) and 0.0 <= conf_threshold <= 1.0):
        raise InputValidationError("conf_threshold must lie in [0, 1]")

    records: list[PerfRecord] = []
    unmatched_real = 0
    unmatched_synth = 0
    for real, synth, pairing in zip(real_labels, synth_labels, pairings):
        table_r = iou_table(real.gt_boxes, _surviving_predictions(real.pred_boxes, conf_threshold))
        table_s = iou_table(synth.gt_boxes, _surviving_predictions(synth.pred_boxes, conf_threshold))
        for r_idx, s_idx, _ in sorted(pairing.pairs):
            if r_idx >= table_r.gt_count or s_idx >= table_s.gt_count:
                raise InputValidationError(
                    f"pairing for image {real.image_id!r} references instance "
                    f"({r_idx}, {s_idx}) beyond the labeled boxes"
                )
            records.append(
                PerfRecord(
                    dataset_pair_id=dataset_pair_id,
                    image_id=real.image_id,
                    real_index=r_idx,
                    synth_index=s_idx,
                    p_real=performance_value(table_r, r_idx),
                    p_synth=performance_value(table_s, s_idx),
                )
            )
        unmatched_real += len(pairing.unmatched_real)
        unmatched_synth += len(pairing.unmatched_synth)
    return ipd(
        records,
        unmatched_real_total=unmatched_real,
        unmatched_synth_total=unmatched_synth,
    )


def domain_pairs(domains: Sequence[str]) -> list[tuple[str, str]]:
    """Column order of the cross-validation matrix: all unordered domain
    pairs, later-listed domains first. For three domains this puts the
    blank cells on the diagonal."""
    return list(reversed(list(itertools.combinations(domains, 2))))


def _normalize_results(
    results: Mapping,
) -> dict[tuple[str, frozenset], float]:
    normalized: dict[tuple[str, frozenset], float] = {}
    for (train, pair), value in results.items():
        key = (train, frozenset(pair))
        v = value.ipd if isinstance(value, IpdResult) else float(value)
        if key in normalized and normalized[key] != v:
            raise InputValidationError(
                f"conflicting results for train={train!r}, pair={tuple(pair)!r}"
            )
        normalized[key] = v
    return normalized


def cross_validation(
    domains: Sequence[str],
    results: Mapping,
) -> list[list[CrossValCell]]:
    """Build the matrix of per-training-domain IPDs.

    results maps (train_domain, (domain_a, domain_b)) to an IpdResult or a
    bare ipd value; pair order inside keys does not matter. Every cell
    whose pair involves the training domain must be present.
    """
    if len(domains) < 2:
        raise InputValidationError("cross_validation requires at least 2 domains")
    if len(set(domains)) != len(domains):
        raise InputValidationError("domain names must be unique")
    pairs = domain_pairs(domains)
    normalized = _normalize_results(results)

    missing = [
        (train, pair)
        for train in domains
        for pair in pairs
        if train in pair and (train, frozenset(pair)) not in normalized
    ]
    if missing:
        desc = ", ".join(f"train={t!r} pair={p!r}" for t, p in missing)
        raise IncompleteResultsError(f"missing cross-validation cells: {desc}")

    matrix: list[list[CrossValCell]] = []
    for train in domains:
        row = [
            CrossValCell(
                train_domain=train,
                eval_pair=pair,
                ipd=normalized[(train, frozenset(pair))] if train in pair else None,
            )
            for pair in pairs
        ]
        matrix.append(row)
    return matrix


def closest_domain(row: Sequence[CrossValCell], reference: str) -> str:
    """Among this row's filled cells whose pair contains `reference`,
    return the other pair member with the smallest IPD (ties broken by
    name)."""
    candidates: list[tuple[float, str]] = []
    for cell in row:
        if cell.ipd is None or reference not in cell.eval_pair:
            continue
        others = [d for d in cell.eval_pair if d != reference]
        if len(others) != 1:
            continue
        candidates.append((cell.ipd, others[0]))
    if not candidates:
        raise InputValidationError(
            f"no filled cells involving {reference!r} in this row"
        )
    candidates.sort()
    return candidates[0][1]
