"""Correlation, warping, losses and metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.shared.errors import ConfigurationError, EmptyMaskError, ShapeError, UnsupportedError
from src.shared.schemas import CorrSpec
from src.stereo import (
    DisparityMap,
    correlation_1d,
    d1_error,
    downsample_disparity,
    epe,
    equal_weights,
    error_map,
    l1_loss,
    multiscale_loss,
    sample_metrics,
    three_px_error,
    warp_horizontal,
)
from src.tensor import Tensor


def correlation_reference(left, right, max_d):
    n, c, h, w = left.shape
    out = np.zeros((n, max_d + 1, h, w))
    for d in range(max_d + 1):
        for x in range(w):
            if x - d >= 0:
                out[:, d, :, x] = np.sum(left[:, :, :, x] * right[:, :, :, x - d], axis=1) / c
    return out


class TestCorrelation:
    @settings(max_examples=100, deadline=None)
    @given(
        st.integers(1, 2),
        st.integers(1, 4),
        st.integers(1, 4),
        st.integers(4, 9),
        st.integers(0, 3),
        st.integers(0, 2**31 - 1),
    )
    def test_matches_loop_reference(self, n, c, h, w, max_d, seed):
        rng = np.random.default_rng(seed)
        left = rng.standard_normal((n, c, h, w)).astype(np.float32)
        right = rng.standard_normal((n, c, h, w)).astype(np.float32)
        out = correlation_1d(Tensor(left), Tensor(right), CorrSpec(max_displacement=max_d))
        expected = correlation_reference(left.astype(np.float64), right.astype(np.float64), max_d)
        np.testing.assert_allclose(out.data, expected, rtol=1e-5, atol=1e-6)

    def test_identical_features_channel_zero_is_energy(self, rng):
        feature = rng.standard_normal((1, 3, 2, 6))
        out = correlation_1d(Tensor(feature), Tensor(feature), CorrSpec(max_displacement=2))
        np.testing.assert_allclose(out.data[:, 0], np.mean(feature**2, axis=1))

    def test_shift_peaks_at_true_displacement(self):
        # one-hot column codes: only the true displacement lines features up
        right = np.eye(12).reshape(1, 12, 1, 12)
        left = np.zeros_like(right)
        left[..., 3:] = right[..., :-3]
        out = correlation_1d(Tensor(left), Tensor(right), CorrSpec(max_displacement=5))
        assert np.argmax(out.data[0, :, 0, 8]) == 3

    def test_unsupported_patch(self):
        x = Tensor(np.zeros((1, 1, 2, 8)))
        with pytest.raises(UnsupportedError):
            correlation_1d(x, x, CorrSpec(max_displacement=2, patch_size=3))

    def test_displacement_must_fit_width(self):
        x = Tensor(np.zeros((1, 1, 2, 4)))
        with pytest.raises(ShapeError):
            correlation_1d(x, x, CorrSpec(max_displacement=4))


class TestWarp:
    def test_zero_disparity_is_identity(self, rng):
        src = Tensor(rng.standard_normal((1, 2, 3, 5)))
        out = warp_horizontal(src, DisparityMap.from_array(np.zeros((1, 1, 3, 5))))
        np.testing.assert_array_equal(out.data, src.data)

    def test_integer_disparity_shifts(self):
        row = np.arange(6, dtype=np.float64).reshape(1, 1, 1, 6)
        out = warp_horizontal(Tensor(row), DisparityMap.from_array(np.full((1, 1, 1, 6), 2.0), dtype=np.float64))
        np.testing.assert_allclose(out.data.reshape(-1), [0, 0, 0, 1, 2, 3])

    def test_half_pixel_interpolates(self):
        row = np.arange(4, dtype=np.float64).reshape(1, 1, 1, 4)
        out = warp_horizontal(Tensor(row), DisparityMap.from_array(np.full((1, 1, 1, 4), 0.5), dtype=np.float64))
        np.testing.assert_allclose(out.data.reshape(-1), [0.0, 0.5, 1.5, 2.5])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            warp_horizontal(Tensor(np.zeros((1, 1, 2, 4))), DisparityMap.from_array(np.zeros((1, 1, 2, 3))))

    def test_error_map_is_zero_for_equal_features(self, rng):
        f = Tensor(rng.standard_normal((1, 4, 3, 3)))
        assert not error_map(f, f).data.any()


class TestLosses:
    def test_downsample_divides_values(self):
        gt = DisparityMap.from_array(np.full((1, 1, 4, 4), 8.0))
        down = downsample_disparity(gt, 2)
        assert down.scale == 2 and down.shape == (1, 1, 2, 2)
        np.testing.assert_allclose(down.values, 4.0)

    def test_downsample_ignores_invalid_pixels(self):
        values = np.array([[4.0, 100.0], [4.0, 100.0]]).reshape(1, 1, 2, 2)
        valid = np.array([[True, False], [True, False]]).reshape(1, 1, 2, 2)
        down = downsample_disparity(DisparityMap.from_array(values, valid=valid), 2)
        assert down.values.item() == pytest.approx(2.0)

    def test_downsample_rejects_non_power_of_two(self):
        with pytest.raises(ConfigurationError):
            downsample_disparity(DisparityMap.from_array(np.zeros((1, 1, 6, 6))), 3)

    def test_l1_perfect_prediction_is_zero(self, rng):
        gt = DisparityMap.from_array(rng.uniform(0, 10, (1, 1, 4, 4)))
        assert l1_loss(gt, gt).item() == 0.0

    def test_l1_counts_only_valid_pixels(self):
        pred = DisparityMap.from_array(np.zeros((1, 1, 1, 4)))
        valid = np.array([True, True, False, False]).reshape(1, 1, 1, 4)
        gt = DisparityMap.from_array(np.array([1.0, 3.0, 50.0, 50.0]), valid=valid)
        assert l1_loss(pred, gt).item() == pytest.approx(2.0)

    def test_l1_empty_mask(self):
        gt = DisparityMap.from_array(np.zeros((1, 1, 2, 2)), valid=np.zeros((1, 1, 2, 2), dtype=bool))
        with pytest.raises(EmptyMaskError):
            l1_loss(gt, gt)

    def test_equal_weights_sum_to_one(self):
        assert sum(equal_weights(9)) == pytest.approx(1.0)

    def test_multiscale_components_and_total(self):
        gt = DisparityMap.from_array(np.full((1, 1, 4, 4), 4.0))
        full = DisparityMap.from_array(np.full((1, 1, 4, 4), 3.0))
        half = DisparityMap.from_array(np.full((1, 1, 2, 2), 2.0), scale=2)
        total, components = multiscale_loss([half, full], gt, names=["pr_1", "pr_0"])
        assert components == {"pr_1": pytest.approx(0.0), "pr_0": pytest.approx(1.0)}
        assert total.item() == pytest.approx(0.5)

    def test_multiscale_rejects_weight_count(self):
        gt = DisparityMap.from_array(np.zeros((1, 1, 2, 2)))
        with pytest.raises(ConfigurationError):
            multiscale_loss([gt], gt, weights=[0.5, 0.5])


class TestMetrics:
    def test_perfect_prediction(self, rng):
        gt = DisparityMap.from_array(rng.uniform(0, 50, (1, 1, 8, 8)))
        assert epe(gt, gt) == 0.0
        assert three_px_error(gt, gt) == 0.0
        assert d1_error(gt, gt) == 0.0

    def test_three_pixels_exactly_is_correct(self):
        gt = DisparityMap.from_array(np.zeros((1, 1, 1, 2)))
        pred = DisparityMap.from_array(np.array([3.0, 3.5]))
        assert three_px_error(pred, gt) == pytest.approx(50.0)
        assert epe(pred, gt) == pytest.approx(3.25)

    def test_d1_needs_relative_error_too(self):
        gt = DisparityMap.from_array(np.array([100.0, 10.0]))
        pred = DisparityMap.from_array(np.array([104.0, 14.0]))
        # 4 px on 100 is 4 %, not an outlier; 4 px on 10 is
        assert d1_error(pred, gt) == pytest.approx(50.0)

    def test_invalid_pixels_ignored(self):
        valid = np.array([True, False]).reshape(1, 1, 1, 2)
        gt = DisparityMap.from_array(np.array([1.0, 1.0]), valid=valid)
        pred = DisparityMap.from_array(np.array([1.0, 99.0]))
        assert epe(pred, gt) == 0.0

    def test_empty_mask(self):
        gt = DisparityMap.from_array(np.zeros((1, 1, 1, 2)), valid=np.zeros((1, 1, 1, 2), dtype=bool))
        with pytest.raises(EmptyMaskError):
            epe(gt, gt)

    def test_sample_metrics_reports_non_occluded(self):
        gt = DisparityMap.from_array(np.zeros((1, 1, 1, 4)))
        pred = DisparityMap.from_array(np.array([0.0, 0.0, 0.0, 8.0]))
        occluded = np.array([False, False, False, True]).reshape(1, 1, 1, 4)
        metrics = sample_metrics(0, pred, gt, occluded)
        assert metrics.epe == pytest.approx(2.0)
        assert metrics.epe_noc == 0.0 and metrics.three_px_noc == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-20, 20), st.integers(0, 2**31 - 1))
    def test_epe_invariant_to_common_offset(self, offset, seed):
        rng = np.random.default_rng(seed)
        gt = rng.uniform(0, 30, (1, 1, 3, 5))
        pred = gt + rng.normal(0, 2, gt.shape)
        base = epe(DisparityMap.from_array(pred, dtype=np.float64), DisparityMap.from_array(gt, dtype=np.float64))
        shifted = epe(
            DisparityMap.from_array(pred + offset, dtype=np.float64),
            DisparityMap.from_array(gt + offset, dtype=np.float64),
        )
        assert shifted == pytest.approx(base, abs=1e-9)
