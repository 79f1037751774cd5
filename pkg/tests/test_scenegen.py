"""Tests for the paired-scene generator and its ground-truth oracle."""

import json
import math

import numpy as np
import pytest

from ipdkit.errors import InputValidationError
from ipdkit.geometry import AffineTransform2D, Point2, apply_affine, iou
from ipdkit.ingestion import load_dataset, merge_pairings, pair_datasets
from ipdkit.metric import iou_table, performance_value
from ipdkit.scenegen import (
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
from helpers import random_box


class TestDetectorProfile:
    def test_target_interpolates(self):
        p = DetectorProfile(0.5, 0.9)
        assert p.target(0.0) == 0.5
        assert p.target(1.0) == pytest.approx(0.9)
        assert p.target(0.5) == pytest.approx(0.7)

    def test_validation(self):
        for low, high in ((0.0, 0.5), (0.6, 0.5), (0.5, 1.1)):
            with pytest.raises(InputValidationError):
                DetectorProfile(low, high)
        with pytest.raises(InputValidationError):
            DetectorProfile(0.5, 0.9, miss_rate=1.0)


class TestSceneSpecValidation:
    def test_rejects_bad_knobs(self):
        with pytest.raises(InputValidationError):
            SceneSpec(n_instances=-1)
        with pytest.raises(InputValidationError):
            SceneSpec(n_instances=1, dropout_real=1.0)
        with pytest.raises(InputValidationError):
            SceneSpec(n_instances=1, center_noise_sigma=-0.5)
        with pytest.raises(InputValidationError):
            SceneSpec(n_instances=1, size_range=(0.0, 5.0))
        with pytest.raises(InputValidationError):
            SceneSpec(n_instances=1, center_region=(0.5, 0.4))


class TestPerturbBoxToTargetIou:
    def test_hits_target_within_contract(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            gt = random_box(rng)
            target = float(rng.uniform(0.05, 0.999))
            moved = perturb_box_to_target_iou(gt, target, rng)
            assert abs(iou(gt, moved) - target) <= 1e-3
            assert (moved.w, moved.h) == (gt.w, gt.h)

    def test_target_one_returns_box_unchanged(self):
        rng = np.random.default_rng(1)
        gt = random_box(rng)
        assert perturb_box_to_target_iou(gt, 1.0, rng) is gt

    def test_moves_along_given_direction(self):
        rng = np.random.default_rng(2)
        gt = random_box(rng)
        moved = perturb_box_to_target_iou(gt, 0.5, rng, direction=(1.0, 0.0))
        assert moved.cx > gt.cx
        assert moved.cy == gt.cy

    def test_rejects_bad_targets(self):
        rng = np.random.default_rng(3)
        gt = random_box(rng)
        for bad in (0.0, -0.2, 1.0001):
            with pytest.raises(InputValidationError):
                perturb_box_to_target_iou(gt, bad, rng)


class TestRandomAffine:
    def test_singular_values_respect_scale_range(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            t = random_affine(rng, (1280, 960), scale_range=(0.7, 1.3))
            linear = np.array([[t.a11, t.a12], [t.a21, t.a22]])
            s = np.linalg.svd(linear, compute_uv=False)
            assert 0.7 - 1e-9 <= s.min() and s.max() <= 1.3 + 1e-9

    def test_frame_center_stays_near_center(self):
        rng = np.random.default_rng(6)
        frame = (1000, 800)
        for _ in range(20):
            t = random_affine(rng, frame, max_translation_frac=0.05)
            moved = apply_affine(t, Point2(500.0, 400.0))
            assert abs(moved.x - 500.0) <= 0.05 * frame[0] + 1e-9
            assert abs(moved.y - 400.0) <= 0.05 * frame[1] + 1e-9


def _spec(**overrides):
    base = dict(
        n_instances=20,
        frame=(1280, 960),
        center_noise_sigma=0.5,
        dropout_real=0.2,
        dropout_synth=0.2,
        detector_profile_real=DetectorProfile(0.55, 0.95, miss_rate=0.1),
        detector_profile_synth=DetectorProfile(0.5, 0.9, miss_rate=0.1),
        rng_seed=99,
    )
    base.update(overrides)
    return SceneSpec(**base)


class TestGenerateScenePair:
    def test_deterministic(self):
        spec = _spec()
        assert generate_scene_pair(spec) == generate_scene_pair(spec)

    def test_no_dropout_gives_identity_correspondence(self):
        spec = _spec(dropout_real=0.0, dropout_synth=0.0)
        real, synth, corr, ious = generate_scene_pair(spec)
        assert len(real.gt_boxes) == len(synth.gt_boxes) == 20
        assert corr == tuple((i, i) for i in range(20))

    def test_correspondence_indices_are_valid_and_increasing(self):
        real, synth, corr, ious = generate_scene_pair(_spec())
        rs = [r for r, _ in corr]
        ss = [s for _, s in corr]
        assert rs == sorted(rs) and ss == sorted(ss)
        assert all(0 <= r < len(real.gt_boxes) for r in rs)
        assert all(0 <= s < len(synth.gt_boxes) for s in ss)
        assert len(ious.real) == len(real.gt_boxes)
        assert len(ious.synth) == len(synth.gt_boxes)

    def test_realized_ious_land_in_profile_window(self):
        real, synth, corr, ious = generate_scene_pair(_spec())
        for v in ious.real:
            assert v == 0.0 or 0.55 - 1e-3 <= v <= 0.95 + 1e-3
        for v in ious.synth:
            assert v == 0.0 or 0.5 - 1e-3 <= v <= 0.9 + 1e-3

    def test_row_max_equals_realized_iou(self):
        # instances are kept far apart, so the best IOU any prediction
        # achieves against a GT box is that box's own prediction
        real, synth, corr, ious = generate_scene_pair(_spec())
        for labels, realized in ((real, ious.real), (synth, ious.synth)):
            table = iou_table(labels.gt_boxes, labels.pred_boxes)
            for i in range(len(labels.gt_boxes)):
                assert performance_value(table, i) == realized[i]

    def test_identical_profiles_pin_the_gap_near_zero(self):
        profile = DetectorProfile(0.55, 0.95, miss_rate=0.1)
        spec = _spec(detector_profile_real=profile, detector_profile_synth=profile)
        _, _, corr, ious = generate_scene_pair(spec)
        assert corr
        assert oracle_ipd(corr, ious) <= 2e-3

    def test_transform_carries_centers(self):
        t = AffineTransform2D(0.9, -0.2, 0.2, 0.9, 30.0, -12.0)
        spec = _spec(transform=t, center_noise_sigma=0.0, dropout_real=0.0, dropout_synth=0.0)
        real, synth, corr, _ = generate_scene_pair(spec)
        for r, s in corr:
            sb = synth.gt_boxes[s]
            moved = apply_affine(t, Point2(sb.cx, sb.cy))
            rb = real.gt_boxes[r]
            assert math.hypot(rb.cx - moved.x, rb.cy - moved.y) < 1e-9

    def test_empty_scene(self):
        real, synth, corr, ious = generate_scene_pair(_spec(n_instances=0))
        assert real.gt_boxes == () and synth.gt_boxes == ()
        assert corr == ()
        assert ious == SceneIous((), ())

    def test_impossible_density_raises(self):
        spec = _spec(n_instances=500, frame=(100, 100))
        with pytest.raises(InputValidationError, match="separation"):
            generate_scene_pair(spec)


class TestOracles:
    def test_oracle_ipd_hand_example(self):
        ious = SceneIous(real=(1.0, 0.5, 0.0), synth=(0.5, 0.5))
        assert oracle_ipd(((0, 0), (1, 1)), ious) == pytest.approx(0.25)

    def test_oracle_ipd_empty(self):
        assert oracle_ipd((), SceneIous((), ())) is None

    def test_pooled_oracle_weights_by_instance(self):
        a = (((0, 0),), SceneIous((1.0,), (0.0,)))  # gap 1.0, one pair
        b = (((0, 0), (1, 1)), SceneIous((0.5, 0.5), (0.5, 0.5)))  # gap 0, two pairs
        assert pooled_oracle_ipd([a, b]) == pytest.approx(1.0 / 3.0)
        assert pooled_oracle_ipd([]) is None


class TestEmitDataset:
    def test_round_trip_matches_generation(self, tmp_path):
        specs = [_spec(rng_seed=7), _spec(rng_seed=8, n_instances=12)]
        real_path, synth_path, truth_path = emit_dataset(tmp_path, specs)

        real_labels, real_pairing = load_dataset(real_path)
        synth_labels, synth_pairing = load_dataset(synth_path)
        pairing = merge_pairings(real_pairing, synth_pairing)
        pairs = pair_datasets(real_labels, synth_labels, pairing)
        assert len(pairs) == 2

        for i, spec in enumerate(specs):
            gen_real, gen_synth, _, _ = generate_scene_pair(spec, image_id=f"scene{i:04d}")
            assert pairs[i][0] == gen_real
            assert pairs[i][1] == gen_synth

    def test_truth_sidecar_is_consistent(self, tmp_path):
        specs = [_spec(rng_seed=7), _spec(rng_seed=8)]
        _, _, truth_path = emit_dataset(tmp_path, specs)
        truth = json.loads(truth_path.read_text())
        assert len(truth["scenes"]) == 2

        pooled = []
        for i, (spec, scene) in enumerate(zip(specs, truth["scenes"])):
            _, _, corr, ious = generate_scene_pair(spec, image_id=f"scene{i:04d}")
            assert [list(p) for p in corr] == scene["correspondence"]
            assert tuple(scene["real_ious"]) == ious.real
            assert scene["oracle_ipd"] == pytest.approx(oracle_ipd(corr, ious))
            pooled.append((corr, ious))
        assert truth["oracle_ipd"] == pytest.approx(pooled_oracle_ipd(pooled))

    def test_normalized_mode_round_trips(self, tmp_path):
        # dividing by the frame size and multiplying back is lossy at the
        # last bit, so normalized mode round-trips only to float round-off
        # (pixel mode, used everywhere else, is exact)
        specs = [_spec(rng_seed=3, n_instances=6)]
        real_path, _, _ = emit_dataset(tmp_path, specs, coordinate_mode="normalized")
        labels, _ = load_dataset(real_path)
        gen_real, _, _, _ = generate_scene_pair(specs[0], image_id="scene0000")
        assert len(labels[0].gt_boxes) == len(gen_real.gt_boxes)
        for loaded, generated in zip(
            labels[0].gt_boxes + labels[0].pred_boxes,
            gen_real.gt_boxes + gen_real.pred_boxes,
        ):
            for name in ("cx", "cy", "w", "h"):
                assert getattr(loaded, name) == pytest.approx(
                    getattr(generated, name), abs=1e-9
                )
            assert loaded.confidence == generated.confidence
