"""
Built-in verification suites run by `main.py selfcheck`.

Each suite returns a SuiteResult; the command exits 0 only when every
suite passes.
"""

import logging
import math
import time
from dataclasses import dataclass
from functools import partial
from typing import Callable, List, Optional, Tuple

import numpy as np

from .augment import ImageSet, cutout, splitmix64
from .config import get_default
from .det2occ import box_to_points, points_in_box
from .ensemble import weighted_average
from .grid import LabelGrid, ProbGrid, VoxelMask
from .head import HeadParams, ce_loss, dice_loss, gradient_check, make_toy_problem, total_loss
from .metrics import evaluate
from .models import CutoutSpec, DetectionBox, EnsembleWeights, GridSpec

logger = logging.getLogger(__name__)

SPLITMIX64_SEED0_FIRST = 0xE220A8397B1DCDAF


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str = ""
    max_rel_error: Optional[float] = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<10} {status}  {self.detail}"


def gradient_suite(quick: bool, params: Optional[HeadParams] = None) -> SuiteResult:
    tolerance = get_default("selfcheck", "tolerance")
    seeds = get_default("selfcheck", "quick_seeds" if quick else "seeds")
    entries = get_default("selfcheck", "quick_entries_per_tensor") if quick else None
    worst, where, checked = 0.0, None, 0
    for seed in range(seeds):
        problem = make_toy_problem(seed, params.config if params is not None else None)
        if params is not None:
            problem.params = params
        result = gradient_check(*problem.args(), entries_per_tensor=entries, seed=seed)
        checked += result.checked
        if result.max_rel_error >= worst:
            worst, where = result.max_rel_error, result.worst
    return SuiteResult(
        "gradients",
        worst <= tolerance,
        f"max rel err {worst:.3e} over {checked} entries, {seeds} seeds (worst {where[0]}{list(where[1])})",
        max_rel_error=worst,
    )


def loss_suite(quick: bool) -> SuiteResult:
    spec = GridSpec(dims=(2, 2, 2), voxel_size=1.0, num_classes=18)
    rng = np.random.default_rng(0)
    gt = LabelGrid(spec, rng.integers(0, 18, spec.num_voxels))
    uniform = np.zeros((spec.num_voxels, 18))
    ce_error = abs(ce_loss(uniform, gt) - math.log(18))

    one_hot = np.full((spec.num_voxels, 18), -1000.0)
    one_hot[np.arange(spec.num_voxels), gt.labels] = 0.0
    dice_error = abs(dice_loss(one_hot, gt))

    logits = rng.standard_normal((spec.num_voxels, 18))
    ce, dice = ce_loss(logits, gt), dice_loss(logits, gt)
    linear_error = max(
        abs(total_loss(logits, gt, None, a, b) - (a * ce + b * dice))
        for a, b in ((1.0, 1.0), (0.5, 2.0), (3.0, 0.0), (0.0, 1.5))
    )
    passed = ce_error <= 1e-9 and dice_error <= 1e-12 and linear_error <= 1e-12
    return SuiteResult(
        "losses", passed, f"|ce - ln 18| {ce_error:.1e}, one-hot dice {dice_error:.1e}, linearity {linear_error:.1e}"
    )


def metrics_suite(quick: bool) -> SuiteResult:
    """evaluate against per-class set counting on random 4x4x2 grids."""
    spec = GridSpec(dims=(4, 4, 2), voxel_size=1.0, num_classes=5)
    rng = np.random.default_rng(1)
    trials = 20 if quick else 200
    for trial in range(trials):
        pred = LabelGrid(spec, rng.integers(0, 5, spec.num_voxels))
        gt = LabelGrid(spec, rng.integers(0, 5, spec.num_voxels))
        mask = VoxelMask(spec, rng.random(spec.num_voxels) < 0.7)
        report = evaluate(pred, gt, mask)
        visible = [v for v in range(spec.num_voxels) if mask.bits[v]]
        for c in range(spec.num_classes - 1):
            p = {v for v in visible if pred.labels[v] == c}
            g = {v for v in visible if gt.labels[v] == c}
            counts = report.counts[c]
            if counts.intersection != len(p & g) or counts.union != len(p | g):
                return SuiteResult("metrics", False, f"trial {trial} class {c}: counts differ from set oracle")
    return SuiteResult("metrics", True, f"{trials} random grids match the set-counting oracle")


def ensemble_suite(quick: bool) -> SuiteResult:
    spec = GridSpec(dims=(4, 4, 2), voxel_size=1.0, num_classes=6)
    rng = np.random.default_rng(2)
    trials = 10 if quick else 100
    renorm = idem = dominant = 0.0
    for _ in range(trials):
        grids = [ProbGrid.normalized(spec, rng.dirichlet(np.ones(6), spec.num_voxels)) for _ in range(3)]
        fused = weighted_average(grids, EnsembleWeights(weights=tuple(rng.uniform(0.1, 5.0, 3))))
        renorm = max(renorm, float(np.abs(fused.probs.sum(axis=1) - 1.0).max()))
        same = weighted_average([grids[0]] * 3)
        idem = max(idem, float(np.abs(same.probs - grids[0].probs).max()))
        heavy = weighted_average(grids[:2], EnsembleWeights(weights=(1e9, 1.0)))
        dominant = max(dominant, float(np.abs(heavy.probs - grids[0].probs).max()))
    passed = renorm <= 1e-12 and idem <= 1e-12 and dominant <= 1e-6
    return SuiteResult(
        "ensemble", passed, f"renormalization {renorm:.1e}, idempotence {idem:.1e}, dominant weight {dominant:.1e}"
    )


def det2occ_suite(quick: bool) -> SuiteResult:
    box = DetectionBox(center=(0, 0, 0), size=(4, 2, 2), yaw=math.pi / 2, class_id=0, score=1.0)
    fixture = points_in_box(np.array([[0.9, 1.9, 0.0]]), box)[0]
    flat = box.model_copy(update={"yaw": 0.0})
    fixture_flat = points_in_box(np.array([[0.9, 1.9, 0.0]]), flat)[0]
    if not fixture or fixture_flat:
        return SuiteResult("det2occ", False, "rotated containment fixture failed")

    rng = np.random.default_rng(3)
    trials = 100 if quick else 1000
    for trial in range(trials):
        box = DetectionBox(
            center=tuple(rng.uniform(-5, 5, 3)),
            size=tuple(rng.uniform(0.5, 4.0, 3)),
            yaw=float(rng.uniform(-math.pi, math.pi)),
            class_id=0,
            score=1.0,
        )
        point = rng.uniform(-8, 8, 3)
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        dx, dy, dz = (float(point[i]) - box.center[i] for i in range(3))
        lx, ly = c * dx + s * dy, -s * dx + c * dy
        inside = abs(lx) <= box.size[0] / 2 and abs(ly) <= box.size[1] / 2 and abs(dz) <= box.size[2] / 2
        if bool(points_in_box(point[None, :], box)[0]) != inside:
            return SuiteResult("det2occ", False, f"trial {trial}: containment disagrees with the box-frame oracle")
        if not points_in_box(box_to_points(box, 0.2), box).all():
            return SuiteResult("det2occ", False, f"trial {trial}: lattice point outside its box")
    return SuiteResult("det2occ", True, f"yaw fixture and {trials} random containment checks agree")


def cutout_suite(quick: bool) -> SuiteResult:
    if splitmix64(0)[1] != SPLITMIX64_SEED0_FIRST:
        return SuiteResult("cutout", False, "splitmix64 reference vector mismatch")
    rng = np.random.default_rng(4)
    imgs = ImageSet(rng.integers(0, 256, (3, 16, 24, 3), dtype=np.uint8))
    spec = CutoutSpec(num_holes=2, hole_h=5, hole_w=7, seed=42)
    if cutout(imgs, spec) != cutout(imgs, spec):
        return SuiteResult("cutout", False, "same seed gave different output")
    if cutout(imgs, spec.model_copy(update={"num_holes": 0})) != imgs:
        return SuiteResult("cutout", False, "zero holes changed the images")
    full = cutout(imgs, CutoutSpec(num_holes=1, hole_h=32, hole_w=48, fill=7, seed=1))
    if not (full.data == 7).all():
        return SuiteResult("cutout", False, "full-image hole left pixels unfilled")
    return SuiteResult("cutout", True, "deterministic, identity at 0 holes, full hole fills")


SUITES: List[Tuple[str, Callable[[bool], SuiteResult]]] = [
    ("losses", loss_suite),
    ("metrics", metrics_suite),
    ("ensemble", ensemble_suite),
    ("det2occ", det2occ_suite),
    ("cutout", cutout_suite),
]


def run_selfcheck(quick: bool = False, params: Optional[HeadParams] = None) -> List[SuiteResult]:
    """Run every suite, the gradient suite first. Suites that raise count as failed."""
    results = []
    for name, suite in [("gradients", partial(gradient_suite, params=params))] + SUITES:
        start = time.time()
        try:
            result = suite(quick)
        except Exception as e:
            logger.exception(f"Suite {name} raised")
            result = SuiteResult(name, False, f"raised {type(e).__name__}: {e}")
        logger.info(f"Suite {result.name}: {'PASS' if result.passed else 'FAIL'} in {time.time() - start:.2f}s")
        results.append(result)
    return results
