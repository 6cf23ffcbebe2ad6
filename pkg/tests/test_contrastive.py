import math

import numpy as np
import pytest

from geocontrast.autograd import Tensor
from geocontrast.contrastive import (ImageProjection, Temperature, clip_loss,
                                     l2_normalize_rows, top1_retrieval_accuracy)
from geocontrast.autograd import parameter


class TestNormalize:
    def test_three_four_five(self):
        np.testing.assert_allclose(l2_normalize_rows(np.array([[3.0, 4.0]])),
                                   [[0.6, 0.8]])

    def test_idempotent_on_unit_rows(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 4))
        unit = l2_normalize_rows(x)
        np.testing.assert_allclose(l2_normalize_rows(unit), unit, atol=1e-15)

    def test_zero_row_is_error(self):
        with pytest.raises(ValueError):
            l2_normalize_rows(np.array([[0.0, 0.0]]))

    def test_tensor_path_matches_array_path(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 3))
        np.testing.assert_allclose(l2_normalize_rows(Tensor(x)).data,
                                   l2_normalize_rows(x), atol=1e-14)


class TestTemperature:
    def test_bounds_enforced_at_init(self):
        with pytest.raises(ValueError):
            Temperature(tau_init=1e-4)
        with pytest.raises(ValueError):
            Temperature(tau_init=1000.0)

    def test_clamp_projects_back_into_range(self):
        t = Temperature(0.07)
        t.log_tau.data = np.array(math.log(1e-5))
        t.clamp()
        assert t.tau == pytest.approx(5e-3)

    def test_fixed_temperature_exposes_no_parameters(self):
        assert Temperature(0.07, trainable=False).parameters() == []


class TestClipLoss:
    def test_single_pair_loss_is_zero(self):
        loc = np.array([[1.0, 0.0]])
        img = np.array([[0.0, 2.0]])
        loss = clip_loss(loc, img, Temperature(1.0))
        assert loss.item() == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("n", [2, 8, 64])
    def test_identical_rows_give_ln_n(self, n):
        rng = np.random.default_rng(n)
        row = rng.normal(size=4)
        batch = np.tile(row, (n, 1))
        loss = clip_loss(batch, batch.copy(), Temperature(0.07))
        assert loss.item() == pytest.approx(math.log(n), abs=1e-12)

    def test_two_by_two_identity_similarity(self):
        # orthonormal pairs: S = I, tau = 1 -> all four terms equal ln(1 + e^-1)
        loc = np.array([[1.0, 0.0], [0.0, 1.0]])
        img = np.array([[1.0, 0.0], [0.0, 1.0]])
        loss = clip_loss(loc, img, Temperature(1.0))
        assert loss.item() == pytest.approx(math.log(1.0 + math.exp(-1.0)), abs=1e-9)

    def test_symmetry_under_modality_swap(self):
        rng = np.random.default_rng(7)
        loc, img = rng.normal(size=(6, 5)), rng.normal(size=(6, 5))
        t = Temperature(0.1)
        assert clip_loss(loc, img, t).item() == clip_loss(img, loc, t).item()

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        loc, img = rng.normal(size=(8, 4)), rng.normal(size=(8, 4))
        perm = rng.permutation(8)
        t = Temperature(0.07)
        assert clip_loss(loc[perm], img[perm], t).item() == pytest.approx(
            clip_loss(loc, img, t).item(), abs=1e-12)

    def test_positive_for_finite_batches(self):
        rng = np.random.default_rng(3)
        loss = clip_loss(rng.normal(size=(4, 3)), rng.normal(size=(4, 3)),
                         Temperature(0.07))
        assert loss.item() > 0.0

    def test_mismatching_rows_increases_loss(self):
        # a "well-trained" batch: img rows equal loc rows, so diagonal dominates
        rng = np.random.default_rng(11)
        loc = rng.normal(size=(6, 4))
        t = Temperature(0.07)
        matched = clip_loss(loc, loc.copy(), t).item()
        shuffled = clip_loss(loc, loc[np.roll(np.arange(6), 1)], t).item()
        assert shuffled > matched

    def test_nan_embedding_rejected(self):
        bad = np.array([[1.0, np.nan], [0.0, 1.0]])
        with pytest.raises(FloatingPointError):
            clip_loss(bad, np.eye(2), Temperature(1.0))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            clip_loss(np.ones((2, 3)), np.ones((3, 3)), Temperature(1.0))

    def test_log_tau_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        loc, img = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
        t = Temperature(0.07)
        loss = clip_loss(loc, img, t)
        loss.backward()
        got = float(t.log_tau.grad)
        h = 1e-6
        base = float(t.log_tau.data)
        vals = []
        for delta in (h, -h):
            t2 = Temperature(0.07)
            t2.log_tau.data = np.array(base + delta)
            vals.append(clip_loss(loc, img, t2).item())
        want = (vals[0] - vals[1]) / (2 * h)
        assert abs(got - want) / max(abs(want), 1e-8) < 1e-4


class TestImageProjection:
    def test_identity_weights_pass_through(self):
        proj = ImageProjection(parameter(np.eye(3)), parameter(np.zeros(3)))
        x = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(proj(x).data, x)

    def test_zero_weights_yield_bias(self):
        bias = np.array([1.0, -2.0])
        proj = ImageProjection(parameter(np.zeros((3, 2))), parameter(bias))
        out = proj(np.ones((4, 3))).data
        np.testing.assert_array_equal(out, np.tile(bias, (4, 1)))

    def test_matches_triple_loop_matmul_oracle(self):
        rng = np.random.default_rng(21)
        proj = ImageProjection.init(k_img=5, d=3, seed=2)
        feats = rng.normal(size=(4, 5))
        want = np.empty((4, 3))
        for i in range(4):
            for j in range(3):
                acc = proj.bias.data[j]
                for k in range(5):
                    acc += feats[i, k] * proj.weight.data[k, j]
                want[i, j] = acc
        np.testing.assert_allclose(proj(feats).data, want, atol=1e-12)

    def test_feature_width_mismatch_raises(self):
        proj = ImageProjection.init(k_img=5, d=3, seed=0)
        with pytest.raises(ValueError):
            proj(np.ones((2, 4)))


def test_top1_retrieval_on_aligned_batch_is_one():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(10, 6))
    assert top1_retrieval_accuracy(x, x) == 1.0
