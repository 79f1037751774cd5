"""Dataset I/O: label files, JSON manifests, pairing, and report output.

Label files are plain text, one box per line:

    class_id cx cy w h [confidence]

Five fields mark a GT box, six a prediction. A manifest is one JSON
document describing a dataset's images and the real<->synth pairing.
Loading is atomic: the first bad line or missing file aborts the whole
dataset with a located error.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    InputValidationError,
    LoadError,
    ParseError,
)
from .geometry import BBox
from .metric import CrossValCell, IpdResult

_COORDINATE_MODES = ("normalized", "pixel")


@dataclass(frozen=True)
class ImageLabels:
    """All labels of one image, in pixel units.

    Box centers may overhang the frame by 10% on each side; GT boxes must
    not carry a confidence, predictions must.
    """

    image_id: str
    width_px: int
    height_px: int
    gt_boxes: tuple[BBox, ...]
    pred_boxes: tuple[BBox, ...]

    def __post_init__(self):
        if not self.image_id:
            raise InputValidationError("image_id must be non-empty")
        if self.width_px <= 0 or self.height_px <= 0:
            raise InputValidationError("image dimensions must be positive")
        object.__setattr__(self, "gt_boxes", tuple(self.gt_boxes))
        object.__setattr__(self, "pred_boxes", tuple(self.pred_boxes))
        for b in self.gt_boxes:
            if b.confidence is not None:
                raise InputValidationError(
                    f"GT box in image {self.image_id!r} carries a confidence"
                )
        for b in self.pred_boxes:
            if b.confidence is None:
                raise InputValidationError(
                    f"prediction in image {self.image_id!r} lacks a confidence"
                )
        for b in self.gt_boxes + self.pred_boxes:
            if not (-0.1 * self.width_px <= b.cx <= 1.1 * self.width_px) or not (
                -0.1 * self.height_px <= b.cy <= 1.1 * self.height_px
            ):
                raise InputValidationError(
                    f"box center ({b.cx}, {b.cy}) falls outside the expanded "
                    f"frame of image {self.image_id!r}"
                )


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    gt_label_path: str
    pred_label_path: str
    width_px: int
    height_px: int

    def __post_init__(self):
        if not self.image_id:
            raise InputValidationError("manifest entry needs an image_id")
        if self.width_px <= 0 or self.height_px <= 0:
            raise InputValidationError(
                f"entry {self.image_id!r}: image dimensions must be positive"
            )


@dataclass(frozen=True)
class DatasetManifest:
    """One dataset: its images plus (optionally) the real<->synth pairing.

    A manifest declares one side of a pair, so only one pairing column can
    be checked against its own entries; the check requires that at least
    one column resolves completely. The other column is validated against
    the partner dataset in pair_datasets.
    """

    dataset_id: str
    coordinate_mode: str
    entries: tuple[ManifestEntry, ...]
    pairing: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.dataset_id:
            raise InputValidationError("dataset_id must be non-empty")
        if self.coordinate_mode not in _COORDINATE_MODES:
            raise InputValidationError(
                f"coordinate_mode must be one of {_COORDINATE_MODES}, "
                f"got {self.coordinate_mode!r}"
            )
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(
            self, "pairing", tuple((str(a), str(b)) for a, b in self.pairing)
        )
        ids = [e.image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise InputValidationError(f"duplicate image_id {dup!r} in manifest entries")
        if self.pairing:
            real_ids = [a for a, _ in self.pairing]
            synth_ids = [b for _, b in self.pairing]
            for side, col in (("real", real_ids), ("synth", synth_ids)):
                if len(set(col)) != len(col):
                    dup = next(i for i in col if col.count(i) > 1)
                    raise InputValidationError(
                        f"image_id {dup!r} appears twice on the {side} side of the pairing"
                    )
            declared = set(ids)
            missing_real = [i for i in real_ids if i not in declared]
            missing_synth = [i for i in synth_ids if i not in declared]
            if missing_real and missing_synth:
                # neither column resolves locally; report the closer one
                col = missing_real if len(missing_real) <= len(missing_synth) else missing_synth
                raise InputValidationError(
                    f"pairing references unknown image_id {col[0]!r}"
                )

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(str(e), source="<manifest>", line_no=e.lineno) from e
        if not isinstance(doc, dict):
            raise InputValidationError("manifest JSON must be an object")
        try:
            entries = tuple(
                ManifestEntry(
                    image_id=str(e["image_id"]),
                    gt_label_path=str(e["gt_label_path"]),
                    pred_label_path=str(e["pred_label_path"]),
                    width_px=int(e["width_px"]),
                    height_px=int(e["height_px"]),
                )
                for e in doc.get("entries", [])
            )
            pairing = tuple((str(a), str(b)) for a, b in doc.get("pairing", []))
            return cls(
                dataset_id=str(doc["dataset_id"]),
                coordinate_mode=str(doc["coordinate_mode"]),
                entries=entries,
                pairing=pairing,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputValidationError(f"malformed manifest: {e}") from e

    def to_json(self) -> str:
        doc = {
            "dataset_id": self.dataset_id,
            "coordinate_mode": self.coordinate_mode,
            "entries": [
                {
                    "image_id": e.image_id,
                    "gt_label_path": e.gt_label_path,
                    "pred_label_path": e.pred_label_path,
                    "width_px": e.width_px,
                    "height_px": e.height_px,
                }
                for e in self.entries
            ],
            "pairing": [list(p) for p in self.pairing],
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def parse_label_text(
    text: str,
    coordinate_mode: str,
    image_dims: tuple[int, int],
    source: str = "<string>",
) -> list[BBox]:
    """Parse label lines into pixel-unit boxes.

    Blank lines and `#` comments are skipped. In normalized mode cx/w are
    scaled by the image width and cy/h by the height.
    """
    if coordinate_mode not in _COORDINATE_MODES:
        raise InputValidationError(
            f"coordinate_mode must be one of {_COORDINATE_MODES}, got {coordinate_mode!r}"
        )
    width, height = image_dims
    if width <= 0 or height <= 0:
        raise InputValidationError("image_dims must be positive")

    boxes: list[BBox] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) not in (5, 6):
            raise ParseError(
                f"expected 5 or 6 fields, got {len(fields)}",
                source=source,
                line_no=line_no,
            )
        try:
            class_id = int(fields[0])
        except ValueError:
            raise ParseError(
                f"class_id must be an integer, got {fields[0]!r}",
                source=source,
                line_no=line_no,
            ) from None
        try:
            cx, cy, w, h = (float(v) for v in fields[1:5])
            confidence = float(fields[5]) if len(fields) == 6 else None
        except ValueError as e:
            raise ParseError(f"non-numeric field: {e}", source=source, line_no=line_no) from None
        if coordinate_mode == "normalized":
            cx, w = cx * width, w * width
            cy, h = cy * height, h * height
        if not all(math.isfinite(v) for v in (cx, cy, w, h)):
            raise ParseError("coordinates must be finite", source=source, line_no=line_no)
        if w <= 0 or h <= 0:
            raise ParseError(
                f"box width/height must be positive, got w={w}, h={h}",
                source=source,
                line_no=line_no,
            )
        if confidence is not None and not (0.0 <= confidence <= 1.0):
            raise ParseError(
                f"confidence must lie in [0, 1], got {confidence}",
                source=source,
                line_no=line_no,
            )
        try:
            boxes.append(BBox(cx=cx, cy=cy, w=w, h=h, confidence=confidence, class_id=class_id))
        except InputValidationError as e:
            raise ParseError(str(e), source=source, line_no=line_no) from None
    return boxes


def parse_label_file(
    path: str | Path,
    coordinate_mode: str,
    image_dims: tuple[int, int],
) -> list[BBox]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise LoadError(f"cannot read label file {p}: {e}") from e
    return parse_label_text(text, coordinate_mode, image_dims, source=str(p))


def serialize_labels(boxes: Sequence[BBox], coordinate_mode: str, image_dims: tuple[int, int]) -> str:
    """Inverse of parse_label_text, used by the scene generator."""
    if coordinate_mode not in _COORDINATE_MODES:
        raise InputValidationError(
            f"coordinate_mode must be one of {_COORDINATE_MODES}, got {coordinate_mode!r}"
        )
    width, height = image_dims
    lines = []
    for b in boxes:
        cx, cy, w, h = b.cx, b.cy, b.w, b.h
        if coordinate_mode == "normalized":
            cx, w = cx / width, w / width
            cy, h = cy / height, h / height
        parts = [str(b.class_id), repr(cx), repr(cy), repr(w), repr(h)]
        if b.confidence is not None:
            parts.append(repr(b.confidence))
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def load_dataset(
    manifest: DatasetManifest | str | Path,
    base_dir: str | Path | None = None,
) -> tuple[list[ImageLabels], tuple[tuple[str, str], ...]]:
    """Load and validate every image of a dataset, atomically.

    `manifest` may be a parsed DatasetManifest or a path to its JSON file;
    relative label paths are resolved against the manifest's directory
    (or base_dir).
    """
    if isinstance(manifest, (str, Path)):
        mpath = Path(manifest)
        try:
            text = mpath.read_text(encoding="utf-8")
        except OSError as e:
            raise LoadError(f"cannot read manifest {mpath}: {e}") from e
        try:
            parsed = DatasetManifest.from_json(text)
        except (ParseError, InputValidationError) as e:
            raise LoadError(f"manifest {mpath}: {e}") from e
        root = mpath.parent if base_dir is None else Path(base_dir)
    else:
        parsed = manifest
        root = Path(base_dir) if base_dir is not None else Path.cwd()

    labels: list[ImageLabels] = []
    for entry in parsed.entries:
        dims = (entry.width_px, entry.height_px)
        try:
            gt = parse_label_file(root / entry.gt_label_path, parsed.coordinate_mode, dims)
            pred = parse_label_file(root / entry.pred_label_path, parsed.coordinate_mode, dims)
            labels.append(
                ImageLabels(
                    image_id=entry.image_id,
                    width_px=entry.width_px,
                    height_px=entry.height_px,
                    gt_boxes=tuple(gt),
                    pred_boxes=tuple(pred),
                )
            )
        except (ParseError, LoadError, InputValidationError) as e:
            raise LoadError(f"entry {entry.image_id!r}: {e}") from e
    return labels, parsed.pairing


def merge_pairings(
    real_pairing: Sequence[tuple[str, str]],
    synth_pairing: Sequence[tuple[str, str]],
) -> tuple[tuple[str, str], ...]:
    """Combine the pairing tables of the two manifests; when both declare
    one they must agree (as sets)."""
    a = tuple(tuple(p) for p in real_pairing)
    b = tuple(tuple(p) for p in synth_pairing)
    if a and b:
        if set(a) != set(b):
            raise LoadError("the two manifests declare conflicting pairings")
        return a
    if a or b:
        return a or b
    raise LoadError("neither manifest declares a real<->synth pairing")


def pair_datasets(
    real_labels: Sequence[ImageLabels],
    synth_labels: Sequence[ImageLabels],
    pairing: Sequence[tuple[str, str]],
) -> list[tuple[ImageLabels, ImageLabels]]:
    """Resolve the pairing table into aligned (real, synth) label pairs."""
    if not pairing:
        raise LoadError("pairing table is empty")
    real_by_id = {lab.image_id: lab for lab in real_labels}
    synth_by_id = {lab.image_id: lab for lab in synth_labels}
    seen_real: set[str] = set()
    seen_synth: set[str] = set()
    out: list[tuple[ImageLabels, ImageLabels]] = []
    for rid, sid in pairing:
        if rid in seen_real:
            raise LoadError(f"real image {rid!r} paired twice")
        if sid in seen_synth:
            raise LoadError(f"synth image {sid!r} paired twice")
        seen_real.add(rid)
        seen_synth.add(sid)
        if rid not in real_by_id:
            raise LoadError(f"pairing references unknown real image {rid!r}")
        if sid not in synth_by_id:
            raise LoadError(f"pairing references unknown synth image {sid!r}")
        out.append((real_by_id[rid], synth_by_id[sid]))
    return out


def _pair_label(pair: tuple[str, str]) -> str:
    return f"‖{pair[0]} − {pair[1]}‖"


def _validate_matrix(matrix: Sequence[Sequence[CrossValCell]]) -> list[tuple[str, str]]:
    if not matrix or not matrix[0]:
        raise InputValidationError("cross-validation matrix is empty")
    pairs = [cell.eval_pair for cell in matrix[0]]
    trains = []
    for row in matrix:
        if [cell.eval_pair for cell in row] != pairs:
            raise InputValidationError("matrix rows disagree on column structure")
        row_trains = {cell.train_domain for cell in row}
        if len(row_trains) != 1:
            raise InputValidationError("matrix row mixes training domains")
        trains.append(next(iter(row_trains)))
    if len(set(trains)) != len(trains):
        raise InputValidationError("duplicate training-domain rows")
    return pairs


def ipd_result_to_dict(result: IpdResult) -> dict:
    return {
        "ipd": result.ipd,
        "instance_count": result.instance_count,
        "unmatched_real_total": result.unmatched_real_total,
        "unmatched_synth_total": result.unmatched_synth_total,
        "per_image_breakdown": [
            {"image_id": i, "ipd_contribution": v, "pair_count": c}
            for i, v, c in result.per_image_breakdown
        ],
    }


def ipd_result_from_dict(doc: Mapping) -> IpdResult:
    try:
        return IpdResult(
            ipd=float(doc["ipd"]),
            instance_count=int(doc["instance_count"]),
            unmatched_real_total=int(doc["unmatched_real_total"]),
            unmatched_synth_total=int(doc["unmatched_synth_total"]),
            per_image_breakdown=tuple(
                (str(r["image_id"]), float(r["ipd_contribution"]), int(r["pair_count"]))
                for r in doc.get("per_image_breakdown", [])
            ),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise InputValidationError(f"malformed IPD result document: {e}") from e


def write_report(
    matrix: Sequence[Sequence[CrossValCell]],
    results: Mapping | None = None,
    fmt: str = "markdown",
    provenance: Mapping | None = None,
) -> str:
    """Render the cross-validation matrix.

    markdown/csv show the matrix itself (markdown bolds each row's
    minimum); json additionally embeds the detailed per-cell results and
    any provenance the caller supplies, with stable key order.
    """
    pairs = _validate_matrix(matrix)
    if fmt == "markdown":
        lines = ["| Train\\Eval | " + " | ".join(_pair_label(p) for p in pairs) + " |"]
        lines.append("| --- |" + " --- |" * len(pairs))
        for row in matrix:
            filled = [c.ipd for c in row if c.ipd is not None]
            row_min = min(filled) if filled else None
            cells = []
            for cell in row:
                if cell.ipd is None:
                    cells.append("-")
                elif cell.ipd == row_min:
                    cells.append(f"**{cell.ipd:.4f}**")
                else:
                    cells.append(f"{cell.ipd:.4f}")
            lines.append(f"| {row[0].train_domain} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["Train\\Eval"] + [_pair_label(p) for p in pairs])
        for row in matrix:
            writer.writerow(
                [row[0].train_domain]
                + ["" if c.ipd is None else repr(c.ipd) for c in row]
            )
        return buf.getvalue()

    if fmt == "json":
        cells = []
        for row in matrix:
            for cell in row:
                entry: dict = {
                    "train": cell.train_domain,
                    "pair": list(cell.eval_pair),
                    "ipd": cell.ipd,
                }
                if results is not None:
                    detail = _lookup_result(results, cell.train_domain, cell.eval_pair)
                    if isinstance(detail, IpdResult):
                        entry["detail"] = ipd_result_to_dict(detail)
                cells.append(entry)
        doc = {
            "domains": [row[0].train_domain for row in matrix],
            "columns": [list(p) for p in pairs],
            "cells": cells,
            "provenance": dict(provenance) if provenance else {},
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    raise InputValidationError(f"unknown report format {fmt!r}")


def _lookup_result(results: Mapping, train: str, pair: tuple[str, str]):
    for key, value in results.items():
        k_train, k_pair = key
        if k_train == train and frozenset(k_pair) == frozenset(pair):
            return value
    return None


def read_report(text: str) -> dict:
    """Parse a JSON report back into its matrix plus raw document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(str(e), source="<report>", line_no=e.lineno) from e
    try:
        domains = list(doc["domains"])
        columns = [tuple(p) for p in doc["columns"]]
        by_key = {
            (c["train"], tuple(c["pair"])): c for c in doc["cells"]
        }
        matrix = [
            [
                CrossValCell(
                    train_domain=train,
                    eval_pair=pair,
                    ipd=by_key[(train, pair)]["ipd"],
                )
                for pair in columns
            ]
            for train in domains
        ]
    except (KeyError, TypeError, ValueError) as e:
        raise InputValidationError(f"malformed report document: {e}") from e
    return {"matrix": matrix, "document": doc}


def write_ipd_report(
    result: IpdResult,
    fmt: str = "json",
    provenance: Mapping | None = None,
) -> str:
    """Render a single dataset-pair evaluation."""
    if fmt == "json":
        doc = {
            "result": ipd_result_to_dict(result),
            "provenance": dict(provenance) if provenance else {},
        }
        return json.dumps(doc, indent=2, sort_keys=True)
    if fmt == "markdown":
        lines = [
            "| image | ipd contribution | pairs |",
            "| --- | --- | --- |",
        ]
        for image_id, value, count in result.per_image_breakdown:
            lines.append(f"| {image_id} | {value:.4f} | {count} |")
        lines.append(f"| **all** | **{result.ipd:.4f}** | {result.instance_count} |")
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["image", "ipd_contribution", "pair_count"])
        for image_id, value, count in result.per_image_breakdown:
            writer.writerow([image_id, repr(value), count])
        writer.writerow(["all", repr(result.ipd), result.instance_count])
        return buf.getvalue()
    raise InputValidationError(f"unknown report format {fmt!r}")
