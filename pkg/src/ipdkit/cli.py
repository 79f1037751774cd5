"""Command-line surface: evaluate dataset pairs, assemble cross-validation
tables, inspect registration on one pair, and generate test scenes.

Exit codes: 0 success, 2 bad input (parse/validation/load), 3 zero
matched instance pairs. All randomness flows from --seed; per image pair
a sub-seed is derived by hashing the image ids, so results do not depend
on evaluation order.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputValidationError, IpdKitError, LoadError, NoInstancesError
from .geometry import AffineTransform2D, bbox_center
from .ingestion import (
    DatasetManifest,
    ImageLabels,
    load_dataset,
    merge_pairings,
    pair_datasets,
    parse_label_file,
    write_ipd_report,
    write_report,
)
from .matching import InstancePairing, default_gate_distance, match_instances
from .metric import IpdResult, cross_validation, evaluate_pair
from .registration import RegistrationConfig, register
from .scenegen import DetectorProfile, SceneSpec, emit_dataset, random_affine


def stable_subseed(seed: int, real_id: str, synth_id: str) -> int:
    """Per-image-pair seed, independent of evaluation order."""
    digest = hashlib.sha256(f"{seed}|{real_id}|{synth_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _registration_config(args: argparse.Namespace, sub_seed: int) -> RegistrationConfig:
    return RegistrationConfig(
        max_iterations=args.max_iterations,
        early_exit_score=args.early_exit,
        rng_seed=sub_seed,
        trim_fraction=args.trim,
        real_triples_per_iteration=args.real_triples,
    )


def evaluate_dataset_pair(
    pairs: Sequence[tuple[ImageLabels, ImageLabels]],
    args: argparse.Namespace,
    dataset_pair_id: str,
) -> tuple[IpdResult, list[dict]]:
    """registration -> matching -> per-instance evaluation over all image
    pairs; returns the result plus per-pair provenance rows."""
    reals: list[ImageLabels] = []
    synths: list[ImageLabels] = []
    pairings: list[InstancePairing] = []
    per_pair: list[dict] = []
    for real, synth in pairs:
        sub_seed = stable_subseed(args.seed, real.image_id, synth.image_id)
        real_centers = [bbox_center(b) for b in real.gt_boxes]
        synth_centers = [bbox_center(b) for b in synth.gt_boxes]
        row: dict = {
            "real_image": real.image_id,
            "synth_image": synth.image_id,
            "sub_seed": sub_seed,
        }
        if not real_centers or not synth_centers:
            pairing = InstancePairing(
                pairs=(),
                unmatched_real=tuple(range(len(real_centers))),
                unmatched_synth=tuple(range(len(synth_centers))),
            )
            row.update(registration="skipped (empty side)", matched=0)
        else:
            reg = register(synth_centers, real_centers, _registration_config(args, sub_seed))
            if reg.used_fallback:
                print(
                    f"warning: pair ({real.image_id}, {synth.image_id}) has too few "
                    "points for an affine fit; fell back to centroid translation",
                    file=sys.stderr,
                )
            gate = args.gate if args.gate is not None else default_gate_distance(real.gt_boxes)
            pairing = match_instances(reg.transform, synth_centers, real_centers, gate)
            row.update(
                registration={
                    "transform": list(reg.transform.params()),
                    "score": reg.score,
                    "iterations_used": reg.iterations_used,
                    "hypothesis_count": reg.hypothesis_count,
                    "used_fallback": reg.used_fallback,
                },
                gate_distance=gate,
                matched=len(pairing.pairs),
            )
        row.update(
            unmatched_real=len(pairing.unmatched_real),
            unmatched_synth=len(pairing.unmatched_synth),
        )
        per_pair.append(row)
        reals.append(real)
        synths.append(synth)
        pairings.append(pairing)
    result = evaluate_pair(reals, synths, pairings, args.conf_threshold, dataset_pair_id)
    return result, per_pair


def _pipeline_provenance(args: argparse.Namespace) -> dict:
    return {
        "seed": args.seed,
        "conf_threshold": args.conf_threshold,
        "gate": "auto (half median GT diagonal)" if args.gate is None else args.gate,
        "registration_config": {
            "max_iterations": args.max_iterations,
            "early_exit_score": args.early_exit,
            "trim_fraction": args.trim,
            "real_triples_per_iteration": args.real_triples,
        },
    }


def _read_manifest(path: str) -> tuple[DatasetManifest, Path]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise LoadError(f"cannot read manifest {p}: {e}") from e
    try:
        return DatasetManifest.from_json(text), p.parent
    except IpdKitError as e:
        raise LoadError(f"manifest {p}: {e}") from e


def _load_pairs(
    real_manifest: str, synth_manifest: str
) -> tuple[list[tuple[ImageLabels, ImageLabels]], str]:
    real_m, real_root = _read_manifest(real_manifest)
    synth_m, synth_root = _read_manifest(synth_manifest)
    real_labels, real_pairing = load_dataset(real_m, base_dir=real_root)
    synth_labels, synth_pairing = load_dataset(synth_m, base_dir=synth_root)
    pairing = merge_pairings(real_pairing, synth_pairing)
    pairs = pair_datasets(real_labels, synth_labels, pairing)
    return pairs, f"{real_m.dataset_id}|{synth_m.dataset_id}"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_ipd(args: argparse.Namespace) -> int:
    pairs, dataset_pair_id = _load_pairs(args.real_manifest, args.synth_manifest)
    result, per_pair = evaluate_dataset_pair(pairs, args, dataset_pair_id)
    provenance = {
        "command": "ipd",
        "real_manifest": args.real_manifest,
        "synth_manifest": args.synth_manifest,
        "dataset_pair_id": dataset_pair_id,
        **_pipeline_provenance(args),
        "pairs": per_pair,
    }
    print(f"IPD {result.ipd:.6f}")
    _emit(write_ipd_report(result, fmt=args.format, provenance=provenance), args.out)
    return 0


def cmd_crossval(args: argparse.Namespace) -> int:
    p = Path(args.cells)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except OSError as e:
        raise LoadError(f"cannot read cells file {p}: {e}") from e
    except json.JSONDecodeError as e:
        raise LoadError(f"cells file {p}: {e}") from e
    try:
        domains = [str(d) for d in doc["domains"]]
        cell_docs = list(doc["cells"])
    except (KeyError, TypeError) as e:
        raise InputValidationError(f"cells file must define 'domains' and 'cells': {e}") from e

    results: dict[tuple[str, tuple[str, str]], object] = {}
    computed: list[dict] = []
    for idx, cell in enumerate(cell_docs):
        try:
            train = str(cell["train"])
            pair = tuple(str(d) for d in cell["pair"])
            if len(pair) != 2:
                raise ValueError("pair must have exactly 2 domains")
        except (KeyError, TypeError, ValueError) as e:
            raise InputValidationError(f"cell #{idx}: {e}") from e
        if "ipd" in cell:
            results[(train, pair)] = float(cell["ipd"])
        elif "real_manifest" in cell and "synth_manifest" in cell:
            pairs, pair_id = _load_pairs(cell["real_manifest"], cell["synth_manifest"])
            result, per_pair = evaluate_dataset_pair(pairs, args, pair_id)
            results[(train, pair)] = result
            computed.append(
                {"train": train, "pair": list(pair), "dataset_pair_id": pair_id, "pairs": per_pair}
            )
        else:
            raise InputValidationError(
                f"cell #{idx} needs either an 'ipd' value or manifest paths"
            )

    matrix = cross_validation(domains, results)
    provenance = {
        "command": "crossval",
        "cells_file": args.cells,
        **_pipeline_provenance(args),
        "computed_cells": computed,
    }
    _emit(write_report(matrix, results, fmt=args.format, provenance=provenance), args.out)
    return 0


def cmd_register(args: argparse.Namespace) -> int:
    if args.mode == "normalized" and (args.width is None or args.height is None):
        raise InputValidationError("--width and --height are required in normalized mode")
    dims = (args.width or 1, args.height or 1)
    real_boxes = parse_label_file(args.real, args.mode, dims)
    synth_boxes = parse_label_file(args.synth, args.mode, dims)
    real_gt = [b for b in real_boxes if b.confidence is None]
    synth_gt = [b for b in synth_boxes if b.confidence is None]
    if not real_gt or not synth_gt:
        raise InputValidationError("both label files must contain GT boxes")
    real_centers = [bbox_center(b) for b in real_gt]
    synth_centers = [bbox_center(b) for b in synth_gt]

    sub_seed = stable_subseed(args.seed, str(args.real), str(args.synth))
    reg = register(synth_centers, real_centers, _registration_config(args, sub_seed))
    if reg.used_fallback:
        print(
            "warning: too few points for an affine fit; fell back to centroid translation",
            file=sys.stderr,
        )
    gate = args.gate if args.gate is not None else default_gate_distance(real_gt)
    pairing = match_instances(reg.transform, synth_centers, real_centers, gate)

    t = reg.transform
    print(
        f"transform: a11={t.a11:.6f} a12={t.a12:.6f} a21={t.a21:.6f} "
        f"a22={t.a22:.6f} tx={t.tx:.6f} ty={t.ty:.6f}"
    )
    print(f"score: {reg.score:.6f}")
    print(
        f"iterations: {reg.iterations_used}  hypotheses: {reg.hypothesis_count}  "
        f"fallback: {'yes' if reg.used_fallback else 'no'}"
    )
    print(f"gate: {gate:.6f}")
    print("pairs (real_idx synth_idx distance):")
    for r, s, d in pairing.pairs:
        print(f"  {r} {s} {d:.6f}")
    print(f"unmatched real: {list(pairing.unmatched_real)}")
    print(f"unmatched synth: {list(pairing.unmatched_synth)}")
    return 0


def _parse_span(text: str) -> tuple[int, int]:
    parts = text.split(":")
    try:
        if len(parts) == 1:
            v = int(parts[0])
            return v, v
        if len(parts) == 2:
            lo, hi = int(parts[0]), int(parts[1])
            if lo > hi:
                raise ValueError("low > high")
            return lo, hi
    except ValueError as e:
        raise InputValidationError(f"bad instance span {text!r}: {e}") from e
    raise InputValidationError(f"bad instance span {text!r}")


def _parse_profile(text: str) -> DetectorProfile:
    parts = text.split(":")
    try:
        if len(parts) == 1:
            v = float(parts[0])
            return DetectorProfile(v, v)
        if len(parts) == 2:
            return DetectorProfile(float(parts[0]), float(parts[1]))
        if len(parts) == 3:
            return DetectorProfile(float(parts[0]), float(parts[1]), float(parts[2]))
    except (ValueError, InputValidationError) as e:
        raise InputValidationError(f"bad detector profile {text!r}: {e}") from e
    raise InputValidationError(f"bad detector profile {text!r}")


def _parse_frame(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as e:
        raise InputValidationError(f"bad frame {text!r} (expected WIDTHxHEIGHT)") from e


def _parse_transform(
    text: str, frame: tuple[int, int], rng: np.random.Generator
) -> AffineTransform2D:
    if text == "identity":
        return AffineTransform2D.identity()
    if text == "random":
        return random_affine(rng, frame)
    try:
        params = [float(v) for v in text.split(",")]
        return AffineTransform2D.from_params(params)
    except (ValueError, InputValidationError) as e:
        raise InputValidationError(
            f"bad transform {text!r} (expected 'identity', 'random' or 6 comma-separated values)"
        ) from e


def _spec_from_dict(doc: dict, index: int) -> SceneSpec:
    try:
        transform = doc.get("transform", "identity")
        if isinstance(transform, str):
            if transform != "identity":
                raise ValueError("transform string must be 'identity' in spec files")
            t = AffineTransform2D.identity()
        else:
            t = AffineTransform2D.from_params([float(v) for v in transform])

        def profile(key: str) -> DetectorProfile:
            v = doc.get(key, [0.9, 0.9])
            if isinstance(v, dict):
                return DetectorProfile(**v)
            return DetectorProfile(*[float(x) for x in v])

        return SceneSpec(
            n_instances=int(doc["n_instances"]),
            frame=tuple(doc.get("frame", (1280, 960))),
            transform=t,
            center_noise_sigma=float(doc.get("center_noise_sigma", 0.0)),
            dropout_real=float(doc.get("dropout_real", 0.0)),
            dropout_synth=float(doc.get("dropout_synth", 0.0)),
            detector_profile_real=profile("detector_profile_real"),
            detector_profile_synth=profile("detector_profile_synth"),
            rng_seed=int(doc.get("rng_seed", 0)),
        )
    except (KeyError, TypeError, ValueError, InputValidationError) as e:
        raise InputValidationError(f"scene spec #{index}: {e}") from e


def cmd_scenegen(args: argparse.Namespace) -> int:
    if args.spec_file is not None:
        p = Path(args.spec_file)
        try:
            docs = json.loads(p.read_text(encoding="utf-8"))
        except OSError as e:
            raise LoadError(f"cannot read spec file {p}: {e}") from e
        except json.JSONDecodeError as e:
            raise LoadError(f"spec file {p}: {e}") from e
        if not isinstance(docs, list):
            raise InputValidationError("spec file must hold a JSON list of scene specs")
        specs = [_spec_from_dict(d, i) for i, d in enumerate(docs)]
    else:
        frame = _parse_frame(args.frame)
        span = _parse_span(args.instances)
        master = np.random.default_rng(args.seed)
        specs = []
        for _ in range(args.scenes):
            n = int(master.integers(span[0], span[1] + 1))
            t = _parse_transform(args.transform, frame, master)
            specs.append(
                SceneSpec(
                    n_instances=n,
                    frame=frame,
                    transform=t,
                    center_noise_sigma=args.sigma,
                    dropout_real=args.dropout_real,
                    dropout_synth=args.dropout_synth,
                    detector_profile_real=_parse_profile(args.profile_real),
                    detector_profile_synth=_parse_profile(args.profile_synth),
                    rng_seed=int(master.integers(0, 2**63)),
                )
            )
    real_path, synth_path, truth_path = emit_dataset(args.out, specs)
    print(f"real manifest: {real_path}")
    print(f"synth manifest: {synth_path}")
    print(f"truth: {truth_path}")
    return 0


def _add_pipeline_flags(sp: argparse.ArgumentParser, default_format: str) -> None:
    sp.add_argument("--seed", type=int, default=0, help="master RNG seed")
    sp.add_argument("--max-iterations", type=int, default=2000, help="registration budget")
    sp.add_argument("--trim", type=float, default=0.2, help="registration trim fraction")
    sp.add_argument(
        "--early-exit",
        type=float,
        default=None,
        help="registration early-exit score (default: 0.001 x scene diagonal)",
    )
    sp.add_argument(
        "--real-triples",
        type=int,
        default=None,
        help="real triples sampled per iteration (default: auto from set size)",
    )
    sp.add_argument(
        "--gate",
        type=float,
        default=None,
        help="matching gate distance in px (default: half the median GT diagonal)",
    )
    sp.add_argument(
        "--conf-threshold",
        type=float,
        default=0.25,
        help="drop predictions below this confidence",
    )
    sp.add_argument("--format", choices=("csv", "json", "markdown"), default=default_format)
    sp.add_argument("--out", default=None, help="report path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ipdkit",
        description="Instance-level gap evaluation between paired real/synthetic detection datasets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ipd = sub.add_parser("ipd", help="evaluate one real/synth dataset pair")
    p_ipd.add_argument("real_manifest", help="path to the real dataset manifest")
    p_ipd.add_argument("synth_manifest", help="path to the synthetic dataset manifest")
    _add_pipeline_flags(p_ipd, default_format="json")
    p_ipd.set_defaults(func=cmd_ipd)

    p_cv = sub.add_parser("crossval", help="assemble the cross-validation table")
    p_cv.add_argument(
        "cells",
        help="JSON file with 'domains' and 'cells' (each cell: train, pair, and "
        "either a precomputed ipd or real/synth manifest paths)",
    )
    _add_pipeline_flags(p_cv, default_format="markdown")
    p_cv.set_defaults(func=cmd_crossval)

    p_reg = sub.add_parser("register", help="diagnose registration on one image pair")
    p_reg.add_argument("real", help="real label file (GT lines)")
    p_reg.add_argument("synth", help="synthetic label file (GT lines)")
    p_reg.add_argument("--mode", choices=("pixel", "normalized"), default="pixel")
    p_reg.add_argument("--width", type=int, default=None)
    p_reg.add_argument("--height", type=int, default=None)
    _add_pipeline_flags(p_reg, default_format="json")
    p_reg.set_defaults(func=cmd_register)

    p_gen = sub.add_parser("scenegen", help="generate paired test scenes with ground truth")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--scenes", type=int, default=1)
    p_gen.add_argument("--instances", default="30", help="count or low:high span")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--sigma", type=float, default=0.0, help="center noise sigma (px)")
    p_gen.add_argument("--dropout-real", type=float, default=0.0)
    p_gen.add_argument("--dropout-synth", type=float, default=0.0)
    p_gen.add_argument("--profile-real", default="0.9", help="low[:high[:miss_rate]]")
    p_gen.add_argument("--profile-synth", default="0.9", help="low[:high[:miss_rate]]")
    p_gen.add_argument("--frame", default="1280x960")
    p_gen.add_argument(
        "--transform",
        default="identity",
        help="'identity', 'random', or 6 comma-separated affine params",
    )
    p_gen.add_argument("--spec-file", default=None, help="JSON list of scene specs")
    p_gen.set_defaults(func=cmd_scenegen)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoInstancesError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (IpdKitError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
