import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affground.model import (
    BinaryMask,
    EmptyDistributionError,
    EmptyMaskError,
    RgbImage,
    SaliencyMap,
    ShapeError,
    confusion_counts,
    mask_centroid_and_axes,
    normalize_to_distribution,
)

from conftest import angle_distance_mod_pi, rotated_rect_mask


def mask_of(rows) -> BinaryMask:
    return BinaryMask.from_array(np.array(rows, dtype=bool))


class TestTypes:
    def test_rgb_image_rejects_bad_buffer(self):
        with pytest.raises(ShapeError):
            RgbImage(width=2, height=2, pixels=np.zeros((2, 3, 3), dtype=np.uint8))

    def test_rgb_image_rejects_zero_size(self):
        with pytest.raises(ValueError):
            RgbImage(width=0, height=2, pixels=np.zeros((2, 0, 3), dtype=np.uint8))

    def test_mask_is_immutable(self):
        m = BinaryMask.zeros(4, 4)
        with pytest.raises(ValueError):
            m.bits[0, 0] = True

    def test_mask_area(self):
        m = mask_of([[1, 0], [0, 1]])
        assert m.area == 2

    def test_saliency_rejects_negative(self):
        with pytest.raises(ValueError):
            SaliencyMap.from_array([[0.5, -0.1]])


class TestConfusionCounts:
    def test_identity_all_foreground(self):
        m = mask_of([[1, 1], [1, 1]])
        c = confusion_counts(m, m)
        assert (c.tp, c.fp, c.fn, c.tn) == (4, 0, 0, 0)

    def test_complement(self):
        pred = mask_of([[0, 0], [0, 0]])
        gt = mask_of([[1, 1], [1, 1]])
        c = confusion_counts(pred, gt)
        assert (c.tp, c.fn) == (0, 4)

    def test_matches_per_pixel_loop_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            pred = BinaryMask.from_array(rng.random((16, 16)) < 0.5)
            gt = BinaryMask.from_array(rng.random((16, 16)) < 0.5)
            tp = fp = fn = tn = 0
            for v in range(16):
                for u in range(16):
                    p, g = pred.bits[v, u], gt.bits[v, u]
                    if p and g:
                        tp += 1
                    elif p and not g:
                        fp += 1
                    elif not p and g:
                        fn += 1
                    else:
                        tn += 1
            c = confusion_counts(pred, gt)
            assert (c.tp, c.fp, c.fn, c.tn) == (tp, fp, fn, tn)
            assert c.total == 256

    def test_swap_symmetry(self):
        rng = np.random.default_rng(11)
        pred = BinaryMask.from_array(rng.random((12, 9)) < 0.4)
        gt = BinaryMask.from_array(rng.random((12, 9)) < 0.6)
        a = confusion_counts(pred, gt)
        b = confusion_counts(gt, pred)
        assert (a.tp, a.tn) == (b.tp, b.tn)
        assert (a.fp, a.fn) == (b.fn, b.fp)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            confusion_counts(BinaryMask.zeros(2, 2), BinaryMask.zeros(3, 2))


class TestCentroidAndAxes:
    def test_axis_aligned_rectangle(self):
        bits = np.zeros((64, 64), dtype=bool)
        bits[27:37, 12:52] = True  # 40 wide, 10 tall
        axes = mask_centroid_and_axes(BinaryMask.from_array(bits))
        assert axes.major_angle == pytest.approx(0.0, abs=1e-12)
        assert axes.centroid[0] == pytest.approx((12 + 51) / 2)
        assert axes.centroid[1] == pytest.approx((27 + 36) / 2)
        assert not axes.degenerate
        assert axes.eigenvalues[0] >= axes.eigenvalues[1]

    def test_rotated_rectangle_recovers_construction_angle(self):
        angle = math.radians(30)
        bits = rotated_rect_mask(40, 10, angle)
        axes = mask_centroid_and_axes(BinaryMask.from_array(bits))
        assert angle_distance_mod_pi(axes.major_angle, angle) < math.radians(2)

    def test_two_pixel_diagonal(self):
        bits = np.zeros((8, 8), dtype=bool)
        bits[0, 0] = True
        bits[5, 5] = True
        axes = mask_centroid_and_axes(BinaryMask.from_array(bits))
        assert axes.major_angle == pytest.approx(math.pi / 4)

    def test_translation_invariance(self):
        angle = math.radians(55)
        a = rotated_rect_mask(30, 8, angle, canvas_w=128, canvas_h=128, center=(40, 40))
        b = rotated_rect_mask(30, 8, angle, canvas_w=128, canvas_h=128, center=(80, 70))
        ax_a = mask_centroid_and_axes(BinaryMask.from_array(a))
        ax_b = mask_centroid_and_axes(BinaryMask.from_array(b))
        assert angle_distance_mod_pi(ax_a.major_angle, ax_b.major_angle) < math.radians(0.5)

    def test_rotation_by_90_shifts_angle(self):
        bits = rotated_rect_mask(40, 10, math.radians(20))
        rotated = np.rot90(bits).copy()
        a = mask_centroid_and_axes(BinaryMask.from_array(bits))
        b = mask_centroid_and_axes(BinaryMask.from_array(rotated))
        assert angle_distance_mod_pi(a.major_angle + math.pi / 2, b.major_angle) < math.radians(2)

    def test_minor_is_major_plus_half_pi(self):
        bits = rotated_rect_mask(40, 10, math.radians(75))
        axes = mask_centroid_and_axes(BinaryMask.from_array(bits))
        assert angle_distance_mod_pi(axes.minor_angle, axes.major_angle + math.pi / 2) < 1e-9

    def test_degenerate_disk(self):
        us, vs = np.meshgrid(np.arange(32), np.arange(32))
        bits = (us - 15.5) ** 2 + (vs - 15.5) ** 2 <= 64
        axes = mask_centroid_and_axes(BinaryMask.from_array(bits))
        assert axes.degenerate
        assert axes.major_angle == 0.0

    def test_empty_mask_raises(self):
        with pytest.raises(EmptyMaskError):
            mask_centroid_and_axes(BinaryMask.zeros(4, 4))


class TestNormalizeToDistribution:
    def test_binary_uniform_split(self):
        m = mask_of([[1, 0], [0, 1]])
        dist = normalize_to_distribution(m)
        assert dist.values[0, 0] == pytest.approx(0.5)
        assert dist.values[0, 1] == 0.0
        assert dist.total() == pytest.approx(1.0, abs=1e-9)

    def test_idempotent_on_distributions(self):
        m = SaliencyMap.from_array([[0.25, 0.25], [0.5, 0.0]])
        out = normalize_to_distribution(m)
        np.testing.assert_allclose(out.values, m.values, atol=1e-12)

    def test_arbitrary_map_sums_to_one(self):
        rng = np.random.default_rng(3)
        raw = rng.random((16, 16))
        out = normalize_to_distribution(SaliencyMap.from_array(raw))
        # independent summation oracle
        total = 0.0
        for v in range(16):
            for u in range(16):
                total += out.values[v, u]
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_all_zero_raises(self):
        with pytest.raises(EmptyDistributionError):
            normalize_to_distribution(BinaryMask.zeros(3, 3))
        with pytest.raises(EmptyDistributionError):
            normalize_to_distribution(SaliencyMap.from_array(np.zeros((3, 3))))

    @settings(max_examples=50, deadline=None)
    @given(
        scale=st.floats(min_value=1e-6, max_value=1e6, allow_nan=False),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    def test_scale_invariance(self, scale, seed):
        rng = np.random.default_rng(seed)
        raw = rng.random((6, 6)) + 1e-9
        a = normalize_to_distribution(SaliencyMap.from_array(raw))
        b = normalize_to_distribution(SaliencyMap.from_array(raw * scale))
        np.testing.assert_allclose(a.values, b.values, atol=1e-12)
