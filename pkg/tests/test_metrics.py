"""
Tests for masked IoU evaluation.
"""

import itertools
import json

import numpy as np
import pytest

from src.errors import SpecMismatchError
from src.grid import LabelGrid, ProbGrid, VoxelMask, argmax_labels
from src.metrics import IoUAccumulator, evaluate, evaluate_prob, format_report
from src.models import GridSpec
from tests.conftest import random_probgrid


def set_oracle(pred, gt, mask, num_classes):
    """Per-class (intersection, union) by materializing voxel sets."""
    visible = [v for v in range(len(gt)) if mask[v]]
    counts = []
    for c in range(num_classes - 1):
        p = {v for v in visible if pred[v] == c}
        g = {v for v in visible if gt[v] == c}
        counts.append((len(p & g), len(p | g)))
    return counts


@pytest.fixture
def tiny_spec():
    return GridSpec(dims=(2, 2, 1), voxel_size=0.4, num_classes=18)


class TestEvaluateExamples:
    """Test mIoU on hand-computed fixtures."""

    def test_perfect_prediction(self, tiny_spec):
        gt = LabelGrid(tiny_spec, np.array([4, 17, 4, 17]))
        report = evaluate(gt, gt, VoxelMask.full(tiny_spec))
        assert report.iou(4) == 1.0
        assert report.iou("car") == 1.0
        assert report.num_defined == 1
        assert report.miou == 1.0

    def test_two_by_two_fixture(self, tiny_spec):
        gt = LabelGrid(tiny_spec, np.array([4, 4, 17, 17]))
        pred = LabelGrid(tiny_spec, np.array([4, 17, 4, 17]))
        report = evaluate(pred, gt, VoxelMask.full(tiny_spec))
        assert report.counts[4].intersection == 1
        assert report.counts[4].union == 3
        assert report.iou(4) == pytest.approx(1 / 3)
        assert report.miou == pytest.approx(1 / 3)

    def test_masked_fixture(self, tiny_spec):
        gt = LabelGrid(tiny_spec, np.array([4, 4, 17, 17]))
        pred = LabelGrid(tiny_spec, np.array([4, 17, 4, 17]))
        mask = VoxelMask(tiny_spec, np.array([True, False, True, True]))
        assert evaluate(pred, gt, mask).iou(4) == pytest.approx(1 / 2)

    def test_free_never_scored(self, tiny_spec):
        gt = LabelGrid.free(tiny_spec)
        report = evaluate(gt, gt, VoxelMask.full(tiny_spec))
        assert len(report.per_class) == 17
        assert report.miou is None
        assert report.num_defined == 0

    def test_missing_mask_scores_every_voxel(self, tiny_spec):
        gt = LabelGrid(tiny_spec, np.array([4, 4, 17, 17]))
        pred = LabelGrid(tiny_spec, np.array([4, 17, 4, 17]))
        assert evaluate(pred, gt) == evaluate(pred, gt, VoxelMask.full(tiny_spec))

    def test_strict_zero(self, tiny_spec):
        gt = LabelGrid(tiny_spec, np.array([4, 4, 17, 17]))
        pred = LabelGrid(tiny_spec, np.array([4, 17, 4, 17]))
        report = evaluate(pred, gt, strict_zero=True)
        assert report.miou == pytest.approx((1 / 3) / 17)
        assert report.iou(0) is None

    def test_spec_mismatch(self, tiny_spec):
        other = GridSpec(dims=(2, 2, 1), voxel_size=0.2, num_classes=18)
        with pytest.raises(SpecMismatchError, match="spec mismatch"):
            evaluate(LabelGrid.free(tiny_spec), LabelGrid.free(other))
        with pytest.raises(SpecMismatchError):
            evaluate(LabelGrid.free(tiny_spec), LabelGrid.free(tiny_spec), VoxelMask.full(other))


class TestEvaluateOracle:
    """Exact agreement with per-class set counting."""

    def test_random_grids(self, small_spec, rng):
        for trial in range(200):
            pred = rng.integers(0, 5, small_spec.num_voxels)
            gt = rng.integers(0, 5, small_spec.num_voxels)
            mask = rng.random(small_spec.num_voxels) < 0.7
            report = evaluate(LabelGrid(small_spec, pred), LabelGrid(small_spec, gt), VoxelMask(small_spec, mask))
            got = [(c.intersection, c.union) for c in report.counts]
            assert got == set_oracle(pred, gt, mask, 5), f"trial {trial}: counts differ"

    def test_exhaustive_two_by_two(self):
        spec = GridSpec(dims=(2, 2, 1), voxel_size=1.0, num_classes=3)
        labelings = list(itertools.product(range(3), repeat=4))
        mask = np.array([True, True, False, True])
        for pred in labelings[::3]:
            for gt in labelings:
                report = evaluate(LabelGrid(spec, np.array(pred)), LabelGrid(spec, np.array(gt)), VoxelMask(spec, mask))
                got = [(c.intersection, c.union) for c in report.counts]
                assert got == set_oracle(pred, gt, mask, 3)


class TestEvaluateProperties:

    def test_mask_invariance(self, small_spec, rng):
        for _ in range(50):
            gt = LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels))
            pred = rng.integers(0, 5, small_spec.num_voxels)
            mask = VoxelMask(small_spec, rng.random(small_spec.num_voxels) < 0.5)
            before = evaluate(LabelGrid(small_spec, pred), gt, mask)
            mutated = pred.copy()
            hidden = ~mask.bits
            mutated[hidden] = rng.integers(0, 5, int(hidden.sum()))
            after = evaluate(LabelGrid(small_spec, mutated), gt, mask)
            assert before == after

    def test_symmetry(self, small_spec, rng):
        a = LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels))
        b = LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels))
        assert evaluate(a, b).counts == evaluate(b, a).counts

    def test_iou_range(self, small_spec, rng):
        for _ in range(20):
            a = LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels))
            b = LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels))
            report = evaluate(a, b)
            for value in report.per_class:
                assert value is None or 0.0 <= value <= 1.0
            assert report.miou is None or 0.0 <= report.miou <= 1.0


class TestEvaluateProb:

    def test_one_hot_matching(self, small_spec, rng):
        gt = LabelGrid(small_spec, rng.integers(0, 4, small_spec.num_voxels))
        assert evaluate_prob(ProbGrid.one_hot(gt), gt).miou == 1.0

    def test_uniform_is_all_zero_labels(self, small_spec, rng):
        gt = LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels))
        zeros = LabelGrid.filled(small_spec, 0)
        assert evaluate_prob(ProbGrid.uniform(small_spec), gt) == evaluate(zeros, gt)

    def test_composition(self, small_spec, rng):
        probs = random_probgrid(small_spec, rng)
        gt = LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels))
        mask = VoxelMask(small_spec, rng.random(small_spec.num_voxels) < 0.8)
        assert evaluate_prob(probs, gt, mask) == evaluate(argmax_labels(probs), gt, mask)


class TestAccumulator:
    """Test accumulating counts over several scenes."""

    def test_single_update_equals_evaluate(self, small_spec, rng):
        pred = LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels))
        gt = LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels))
        acc = IoUAccumulator(small_spec)
        acc.update(pred, gt)
        assert acc.report() == evaluate(pred, gt)

    def test_counts_add_across_frames(self, small_spec, rng):
        frames = [
            (LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels)),
             LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels)))
            for _ in range(4)
        ]
        acc = IoUAccumulator(small_spec)
        for pred, gt in frames:
            acc.update(pred, gt)
        for c in range(4):
            expected_i = sum(evaluate(p, g).counts[c].intersection for p, g in frames)
            expected_u = sum(evaluate(p, g).counts[c].union for p, g in frames)
            assert acc.report().counts[c].intersection == expected_i
            assert acc.report().counts[c].union == expected_u
        assert acc.frames == 4

    def test_merge(self, small_spec, rng):
        pairs = [
            (LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels)),
             LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels)))
            for _ in range(3)
        ]
        whole, left, right = IoUAccumulator(small_spec), IoUAccumulator(small_spec), IoUAccumulator(small_spec)
        for pred, gt in pairs:
            whole.update(pred, gt)
        left.update(*pairs[0])
        right.update(*pairs[1])
        right.update(*pairs[2])
        left.merge(right)
        assert left.report() == whole.report()

    def test_rejects_other_spec(self, small_spec):
        acc = IoUAccumulator(small_spec)
        other = GridSpec(dims=(2, 2, 2), voxel_size=1.0, num_classes=5)
        with pytest.raises(SpecMismatchError):
            acc.update(LabelGrid.free(other), LabelGrid.free(other))


class TestReportOutput:

    def test_json_fields(self, tiny_spec):
        gt = LabelGrid(tiny_spec, np.array([4, 4, 17, 17]))
        pred = LabelGrid(tiny_spec, np.array([4, 17, 4, 17]))
        data = json.loads(json.dumps(evaluate(pred, gt).to_json_dict()))
        assert set(data) >= {"miou", "per_class", "counts"}
        assert data["per_class"]["car"] == pytest.approx(1 / 3)
        assert data["per_class"]["barrier"] is None
        assert data["counts"]["car"] == {"intersection": 1, "union": 3}
        assert "free" not in data["per_class"]

    def test_table_lists_every_semantic_class(self, tiny_spec):
        gt = LabelGrid(tiny_spec, np.array([4, 4, 17, 17]))
        table = format_report(evaluate(gt, gt))
        for name in ("others", "car", "vegetation"):
            assert name in table
        assert "free" not in table.split()
