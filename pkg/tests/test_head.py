"""
Tests for the occupancy head: forward pieces, losses and gradients.
"""

import math

import numpy as np
import pytest

from src.errors import ShapeError
from src.grid import LabelGrid, VoxelMask
from src.head import (
    BevQueryGrid,
    HeadParams,
    VoxelFeatureVolume,
    backward,
    ce_loss,
    classify,
    dice_loss,
    expected_shapes,
    gradient_check,
    loss,
    make_toy_problem,
    mlp_decode,
    sgd_step,
    total_loss,
    unet3d_forward,
)
from src.head import losses
from src.models import GridSpec, HeadConfig


def spec_for(dims, num_classes):
    return GridSpec(dims=dims, voxel_size=1.0, num_classes=num_classes)


# straight-line references for the UNet operators

def ref_conv(x, weight, bias):
    h, w, z, cin = x.shape
    cout = weight.shape[0]
    out = np.zeros((h, w, z, cout))
    for a in range(h):
        for b in range(w):
            for c in range(z):
                for o in range(cout):
                    total = bias[o]
                    for i in range(3):
                        for j in range(3):
                            for k in range(3):
                                xa, xb, xc = a + i - 1, b + j - 1, c + k - 1
                                if 0 <= xa < h and 0 <= xb < w and 0 <= xc < z:
                                    total += float(np.dot(weight[o, :, i, j, k], x[xa, xb, xc]))
                    out[a, b, c, o] = total
    return out


def ref_pool(x):
    h, w, z, ch = x.shape
    out = np.zeros((h // 2, w // 2, z // 2, ch))
    for a in range(h // 2):
        for b in range(w // 2):
            for c in range(z // 2):
                out[a, b, c] = x[2 * a:2 * a + 2, 2 * b:2 * b + 2, 2 * c:2 * c + 2].mean(axis=(0, 1, 2))
    return out


def ref_up(x):
    h, w, z, ch = x.shape
    out = np.zeros((2 * h, 2 * w, 2 * z, ch))
    for a in range(2 * h):
        for b in range(2 * w):
            for c in range(2 * z):
                out[a, b, c] = x[a // 2, b // 2, c // 2]
    return out


def ref_unet(x, params):
    t = params.tensors
    e1 = np.tanh(ref_conv(x, t["unet.enc1.weight"], t["unet.enc1.bias"]))
    e2 = np.tanh(ref_conv(ref_pool(e1), t["unet.enc2.weight"], t["unet.enc2.bias"]))
    e3 = np.tanh(ref_conv(ref_pool(e2), t["unet.enc3.weight"], t["unet.enc3.bias"]))
    bottom = ref_pool(e3)
    d3 = np.tanh(ref_conv(np.concatenate([ref_up(bottom), e3], -1), t["unet.dec3.weight"], t["unet.dec3.bias"]))
    d2 = np.tanh(ref_conv(np.concatenate([ref_up(d3), e2], -1), t["unet.dec2.weight"], t["unet.dec2.bias"]))
    return np.tanh(ref_conv(np.concatenate([ref_up(d2), e1], -1), t["unet.dec1.weight"], t["unet.dec1.bias"]))


class TestMlpDecode:

    @pytest.fixture(autouse=True)
    def setup(self):
        self.config = HeadConfig(bev_channels=2, hidden=1, z=1, ch_v=1)
        self.params = HeadParams.zeros(self.config)
        self.params.tensors["mlp.w1"][:] = [[1.0, 1.0]]
        self.params.tensors["mlp.w2"][:] = [[1.0]]

    def test_zero_params_give_zero_volume(self):
        q = BevQueryGrid(np.random.default_rng(0).standard_normal((3, 2, 2)))
        out = mlp_decode(q, HeadParams.zeros(self.config))
        assert out.data.shape == (3, 2, 1, 1)
        assert not out.data.any()

    @pytest.mark.parametrize("query,expected", [
        ([0.0, 0.0], 0.0),
        ([1.0, 1.0], 0.96402758),
    ])
    def test_hand_evaluated(self, query, expected):
        out = mlp_decode(BevQueryGrid(np.array([[query]])), self.params)
        assert out.data.shape == (1, 1, 1, 1)
        assert out.data[0, 0, 0, 0] == pytest.approx(expected, abs=1e-8)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            mlp_decode(BevQueryGrid(np.zeros((1, 1, 3))), self.params)

    def test_cells_are_independent(self, rng):
        params = HeadParams.init(HeadConfig(), seed=1)
        q = rng.standard_normal((4, 4, 4))
        base = mlp_decode(BevQueryGrid(q), params).data
        q[2, 1] += 1.0
        changed = mlp_decode(BevQueryGrid(q), params).data
        diff = np.abs(changed - base).sum(axis=(2, 3))
        assert diff[2, 1] > 0
        diff[2, 1] = 0
        assert not diff.any()


class TestUnet:
    """Test the 3D UNet forward pass."""

    @pytest.fixture(autouse=True)
    def setup(self):
        self.config = HeadConfig()
        self.params = HeadParams.init(self.config, seed=3)

    def test_shape_contract(self, rng):
        v = VoxelFeatureVolume(rng.standard_normal((8, 8, 8, 1)))
        assert unet3d_forward(v, self.params).data.shape == (8, 8, 8, self.config.ch_out)

    def test_zero_params(self, rng):
        v = VoxelFeatureVolume(rng.standard_normal((8, 8, 8, 1)))
        assert not unet3d_forward(v, HeadParams.zeros(self.config)).data.any()

    @pytest.mark.parametrize("dims", [(8, 8, 4), (12, 8, 8), (8, 6, 8)])
    def test_indivisible_dims(self, dims):
        with pytest.raises(ShapeError):
            unet3d_forward(VoxelFeatureVolume(np.zeros((*dims, 1))), self.params)

    def test_impulse_matches_reference(self):
        x = np.zeros((8, 8, 8, 1))
        x[3, 4, 5, 0] = 1.0
        out = unet3d_forward(VoxelFeatureVolume(x), self.params).data
        np.testing.assert_allclose(out, ref_unet(x, self.params), atol=1e-12)

    def test_random_input_matches_reference(self, rng):
        x = rng.standard_normal((8, 8, 8, 1))
        out = unet3d_forward(VoxelFeatureVolume(x), self.params).data
        np.testing.assert_allclose(out, ref_unet(x, self.params), atol=1e-12)

    def test_receptive_field(self, rng):
        """A single-voxel change stays inside the UNet's receptive field."""
        dims = (32, 16, 8)
        x = rng.standard_normal((*dims, 1))
        base = unet3d_forward(VoxelFeatureVolume(x), self.params).data
        for point in [(3, 12, 4), (17, 0, 7), (30, 9, 0)]:
            bumped = x.copy()
            bumped[point] += 1.0
            diff = np.abs(unet3d_forward(VoxelFeatureVolume(bumped), self.params).data - base).max(axis=-1)
            affected = np.ones(dims, dtype=bool)
            for axis, (p, n) in enumerate(zip(point, dims)):
                lo, hi = receptive_interval(p, n)
                inside = np.zeros(n, dtype=bool)
                inside[lo:hi + 1] = True
                shape = [1, 1, 1]
                shape[axis] = n
                affected &= inside.reshape(shape)
            assert diff[point] > 1e-8
            assert (diff[~affected] <= 1e-13).all(), f"perturbation at {point} leaked outside its receptive field"


def receptive_interval(p, n):
    """Per-axis index range a change at p can reach through the UNet."""
    def conv(iv, size):
        return max(iv[0] - 1, 0), min(iv[1] + 1, size - 1)

    def pool(iv):
        return iv[0] // 2, iv[1] // 2

    def up(iv):
        return 2 * iv[0], 2 * iv[1] + 1

    def union(a, b):
        return min(a[0], b[0]), max(a[1], b[1])

    e1 = conv((p, p), n)
    e2 = conv(pool(e1), n // 2)
    e3 = conv(pool(e2), n // 4)
    bottom = pool(e3)
    d3 = conv(union(up(bottom), e3), n // 4)
    d2 = conv(union(up(d3), e2), n // 2)
    return conv(union(up(d2), e1), n)


class TestClassify:

    def test_bias_only(self, rng):
        config = HeadConfig()
        params = HeadParams.zeros(config)
        params.tensors["cls.bias"][:] = [0.5, -1.0, 2.0, 0.0]
        v = VoxelFeatureVolume(rng.standard_normal((2, 2, 2, config.ch_out)))
        logits = classify(v, params)
        assert logits.shape == (2, 2, 2, 4)
        assert (logits == params["cls.bias"]).all()

    def test_identity_column(self):
        config = HeadConfig(ch_out=1)
        params = HeadParams.zeros(config)
        params.tensors["cls.weight"][:, 0] = [1.0, 2.0, 3.0, 4.0]
        logits = classify(VoxelFeatureVolume(np.ones((1, 1, 1, 1))), params)
        np.testing.assert_array_equal(logits[0, 0, 0], [1.0, 2.0, 3.0, 4.0])

    def test_hand_multiply(self, rng):
        params = HeadParams.init(HeadConfig(), seed=5)
        feature = rng.standard_normal(2)
        logits = classify(VoxelFeatureVolume(feature.reshape(1, 1, 1, 2)), params)[0, 0, 0]
        w, b = params["cls.weight"], params["cls.bias"]
        for k in range(4):
            assert logits[k] == pytest.approx(w[k, 0] * feature[0] + w[k, 1] * feature[1] + b[k], abs=1e-14)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            classify(VoxelFeatureVolume(np.ones((1, 1, 1, 3))), HeadParams.zeros(HeadConfig()))


class TestLosses:
    """Test cross-entropy, dice and their weighted sum."""

    def test_uniform_ce_is_log_k(self):
        spec = spec_for((2, 2, 2), 18)
        gt = LabelGrid(spec, np.arange(8) % 18)
        value = ce_loss(np.zeros((8, 18)), gt)
        assert abs(value - math.log(18)) <= 1e-9
        assert value == pytest.approx(2.89037176, abs=1e-8)

    def test_ce_large_margin(self):
        spec = spec_for((2, 1, 1), 5)
        gt = LabelGrid(spec, np.array([1, 3]))
        logits = np.zeros((2, 5))
        logits[0, 1] = logits[1, 3] = 50.0
        assert 0.0 <= ce_loss(logits, gt) <= 1e-9

    def test_ce_two_voxels(self):
        spec = spec_for((2, 1, 1), 2)
        gt = LabelGrid(spec, np.array([0, 1]))
        logits = np.array([[1.0, 0.0], [0.0, 2.0]])
        expected = (math.log(1 + math.exp(-1)) + math.log(1 + math.exp(-2))) / 2
        assert ce_loss(logits, gt) == pytest.approx(expected, abs=1e-14)

    def test_ce_mask(self):
        spec = spec_for((2, 1, 1), 2)
        gt = LabelGrid(spec, np.array([0, 1]))
        logits = np.array([[1.0, 0.0], [0.0, 2.0]])
        mask = VoxelMask(spec, np.array([False, True]))
        assert ce_loss(logits, gt, mask) == pytest.approx(math.log(1 + math.exp(-2)), abs=1e-14)
        with pytest.raises(ValueError):
            ce_loss(logits, gt, VoxelMask(spec, np.array([False, False])))

    def test_dice_perfect(self, small_spec, rng):
        gt = LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels))
        logits = np.full((small_spec.num_voxels, 5), -1000.0)
        logits[np.arange(small_spec.num_voxels), gt.labels] = 0.0
        assert abs(dice_loss(logits, gt)) <= 1e-12

    def test_dice_disjoint(self):
        spec = spec_for((2, 1, 1), 2)
        gt = LabelGrid(spec, np.array([0, 1]))
        logits = np.array([[-1000.0, 0.0], [0.0, -1000.0]])
        eps = losses.DICE_EPS
        expected = 1 - eps / (2 + eps)
        assert dice_loss(logits, gt) == pytest.approx(expected, abs=1e-12)

    def test_dice_hand_computed(self):
        spec = spec_for((2, 1, 1), 2)
        gt = LabelGrid(spec, np.array([0, 1]))
        logits = np.log(np.array([[0.6, 0.4], [0.6, 0.4]]))
        eps = losses.DICE_EPS
        d0 = 1 - (1.2 + eps) / (2.2 + eps)
        d1 = 1 - (0.8 + eps) / (1.8 + eps)
        assert dice_loss(logits, gt) == pytest.approx((d0 + d1) / 2, abs=1e-12)

    def test_ranges_and_linearity(self, small_spec, rng):
        for _ in range(20):
            gt = LabelGrid(small_spec, rng.integers(0, 5, small_spec.num_voxels))
            logits = 3.0 * rng.standard_normal((small_spec.num_voxels, 5))
            ce, dice = ce_loss(logits, gt), dice_loss(logits, gt)
            assert ce >= 0.0
            assert 0.0 <= dice <= 1.0
            assert total_loss(logits, gt, None, 1.0, 0.0) == ce
            assert total_loss(logits, gt, None, 0.0, 1.0) == dice
            assert abs(total_loss(logits, gt, None, 2.0, 3.0) - (2 * ce + 3 * dice)) <= 1e-12

    def test_logit_shape_checked(self, small_spec):
        with pytest.raises(ShapeError):
            ce_loss(np.zeros((small_spec.num_voxels, 4)), LabelGrid.free(small_spec))


class TestHeadParams:

    def test_shapes(self):
        shapes = expected_shapes(HeadConfig())
        assert shapes["mlp.w1"] == (8, 4)
        assert shapes["mlp.w2"] == (8, 8)
        assert shapes["unet.enc1.weight"] == (2, 1, 3, 3, 3)
        assert shapes["unet.dec3.weight"] == (2, 4, 3, 3, 3)
        assert shapes["unet.dec1.weight"] == (2, 4, 3, 3, 3)
        assert shapes["cls.weight"] == (4, 2)

    def test_wrong_shape_rejected(self):
        tensors = HeadParams.zeros(HeadConfig()).tensors
        tensors["mlp.w1"] = np.zeros((3, 3))
        with pytest.raises(ShapeError):
            HeadParams(HeadConfig(), tensors)

    def test_missing_tensor_rejected(self):
        tensors = HeadParams.zeros(HeadConfig()).tensors
        del tensors["cls.bias"]
        with pytest.raises(ShapeError):
            HeadParams(HeadConfig(), tensors)

    def test_config_recovered_from_tensors(self):
        config = HeadConfig(bev_channels=3, hidden=5, z=8, ch_v=2, width=3, ch_out=2, num_classes=6,
                            lambda_ce=0.5, lambda_dice=2.0)
        params = HeadParams.init(config, seed=2)
        restored = HeadParams.from_tensors(params.to_tensors())
        assert restored.config == config
        for name, tensor in params.items():
            np.testing.assert_array_equal(restored[name], tensor)

    def test_loss_weights_not_both_zero(self):
        with pytest.raises(ValueError):
            HeadConfig(lambda_ce=0.0, lambda_dice=0.0)
        with pytest.raises(ValueError):
            HeadParams.zeros(HeadConfig()).with_loss_weights(0.0, 0.0)

    def test_init_is_seeded(self):
        a = HeadParams.init(HeadConfig(), seed=7)
        b = HeadParams.init(HeadConfig(), seed=7)
        for name, tensor in a.items():
            np.testing.assert_array_equal(tensor, b[name])


class TestBackward:
    """Test analytic gradients of the head."""

    def test_uniform_point_classifier_bias(self, rng):
        config = HeadConfig(lambda_dice=0.0)
        params = HeadParams.zeros(config)
        spec = spec_for((8, 8, 8), 4)
        gt = LabelGrid(spec, rng.integers(0, 4, spec.num_voxels))
        q = BevQueryGrid(rng.standard_normal((8, 8, 4)))
        grads = backward(q, gt, None, params)
        frequency = np.bincount(gt.labels, minlength=4) / spec.num_voxels
        np.testing.assert_allclose(grads.tensors["cls.bias"], 0.25 - frequency, atol=1e-14)

    def test_loss_matches_total_loss(self):
        problem = make_toy_problem(0)
        grads = backward(*problem.args())
        assert grads.loss == loss(*problem.args())

    @pytest.mark.parametrize("seed", range(10))
    def test_finite_differences(self, seed):
        """Analytic gradients agree with central differences on every entry."""
        problem = make_toy_problem(seed)
        result = gradient_check(*problem.args())
        assert result.checked == problem.params.size
        assert result.max_rel_error <= 1e-4, \
            f"seed {seed}: rel err {result.max_rel_error:.3e} at {result.worst}"

    def test_ce_only_gradients(self):
        problem = make_toy_problem(11, HeadConfig(lambda_dice=0.0))
        assert gradient_check(*problem.args(), entries_per_tensor=6).passed()

    def test_detects_wrong_dice_gradient(self, monkeypatch):
        """Zeroing the dice gradient is caught."""
        monkeypatch.setattr(losses, "dice_backward", lambda logits, gt: np.zeros((gt.spec.num_voxels, gt.spec.num_classes)))
        problem = make_toy_problem(0)
        result = gradient_check(*problem.args(), entries_per_tensor=6)
        assert result.max_rel_error > 1e-2

    def test_mirrored_cells_get_equal_query_gradients(self):
        """Mirror-symmetric inputs and kernels give mirror-symmetric query gradients."""
        config = HeadConfig()
        params = HeadParams.init(config, seed=4)
        for name, tensor in params.items():
            if tensor.ndim == 5:
                params.tensors[name] = (tensor + tensor[:, :, ::-1]) / 2
        spec = spec_for((8, 8, 8), 4)
        gt = LabelGrid.filled(spec, 2)
        cell = np.random.default_rng(9).standard_normal(4)
        q = BevQueryGrid(np.broadcast_to(cell, (8, 8, 4)).copy())
        g = backward(q, gt, None, params).query
        np.testing.assert_allclose(g, g[::-1], rtol=1e-9, atol=1e-13)
        assert np.abs(g).max() > 0

    def test_descent_step(self):
        """A small step against the gradient never raises the loss."""
        for seed in range(20):
            problem = make_toy_problem(seed)
            grads = backward(*problem.args())
            stepped = sgd_step(problem.params, grads.tensors, 1e-3)
            after = loss(problem.query, problem.gt, problem.mask, stepped)
            assert after <= grads.loss, f"seed {seed}: loss rose from {grads.loss} to {after}"

    def test_label_grid_must_match_head_output(self):
        problem = make_toy_problem(0)
        wrong = LabelGrid.free(spec_for((8, 8, 4), 4))
        with pytest.raises(ShapeError):
            backward(problem.query, wrong, None, problem.params)
