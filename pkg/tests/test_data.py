"""Random-dot generation, PFM and image I/O, filtering, cropping and datasets."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from src.data import (
    DirectoryDataset,
    StereoSample,
    SyntheticDataset,
    apply_filter,
    collate,
    export_disparity_image,
    export_error_image,
    forward_map,
    generate_random_dot,
    large_disparity_fraction,
    load_image,
    load_pfm,
    quantize,
    random_crop,
    save_image,
    save_pfm,
    write_dataset,
)
from src.shared.errors import ConfigurationError, EmptyMaskError, FormatError, ShapeError, UnsupportedError
from src.shared.schemas import DatasetFilterRule
from src.stereo import DisparityMap, warp_horizontal
from src.tensor import Tensor


def visible_pixels_match(sample: StereoSample) -> bool:
    """left(x) == right(x - d) at every non-occluded pixel."""
    d = sample.gt_disparity.values[0, 0].astype(np.int64)
    rows, cols = np.nonzero(sample.non_occluded()[0, 0])
    left = sample.left.data[0][:, rows, cols]
    right = sample.right.data[0][:, rows, cols - d[rows, cols]]
    return np.array_equal(left, right)


def warp_error(sample: StereoSample, start_column: int = 0) -> float:
    """Largest |warp(right, d) - left| over non-occluded pixels from start_column on."""
    warped = warp_horizontal(sample.right, sample.gt_disparity).data
    visible = np.broadcast_to(sample.non_occluded(), warped.shape).copy()
    visible[..., :start_column] = False
    assert visible.any()
    return float(np.abs(warped - sample.left.data)[visible].max())


def rendered_occlusion(disparity: np.ndarray) -> np.ndarray:
    """Occlusion by painting every left pixel into the right view, one at a time."""
    height, width = disparity.shape
    occluded = np.ones((height, width), dtype=bool)
    for y in range(height):
        owner = {}
        for x in range(width):
            target = x - int(disparity[y, x])
            if target < 0:
                continue
            if target not in owner or disparity[y, x] > disparity[y, owner[target]]:
                owner[target] = x
        for x in owner.values():
            occluded[y, x] = False
    return occluded


def sample_with_disparity(values: np.ndarray, valid=None) -> StereoSample:
    shape = (1, 1) + values.shape
    images = Tensor(np.zeros((1, 3) + values.shape, dtype=np.float32))
    return StereoSample(
        left=images,
        right=images,
        gt_disparity=DisparityMap.from_array(values.reshape(shape)),
        valid_mask=np.ones(shape, dtype=bool) if valid is None else valid.reshape(shape),
    )


class TestPfm:
    def test_roundtrip(self, tmp_path, rng):
        values = rng.uniform(-5, 200, (5, 7)).astype(np.float32)
        values[2, 3] = np.inf
        save_pfm(values, tmp_path / "d.pfm")
        loaded = load_pfm(tmp_path / "d.pfm")
        assert loaded.shape == (1, 1, 5, 7)
        np.testing.assert_array_equal(loaded.data[0, 0], values)

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(
            np.float32,
            st.tuples(st.integers(1, 6), st.integers(1, 6)),
            elements=st.floats(-1e6, 1e6, width=32, allow_nan=False),
        )
    )
    def test_roundtrip_is_bit_exact(self, tmp_path_factory, values):
        path = tmp_path_factory.mktemp("pfm") / "d.pfm"
        save_pfm(values, path)
        assert load_pfm(path).data[0, 0].tobytes() == values.tobytes()

    @pytest.mark.parametrize("shape", [(1, 8), (8, 1), (1, 1), (1, 1, 1, 8), (1, 1, 8, 1)])
    def test_thin_maps_roundtrip(self, tmp_path, rng, shape):
        values = rng.uniform(0, 50, shape).astype(np.float32)
        save_pfm(values, tmp_path / "d.pfm")
        loaded = load_pfm(tmp_path / "d.pfm")
        assert loaded.shape == (1, 1) + shape[-2:]
        np.testing.assert_array_equal(loaded.data.reshape(shape), values)

    @pytest.mark.parametrize("shape", [(8,), (2, 3, 4), (1, 2, 3, 4)])
    def test_save_rejects_several_channels(self, tmp_path, shape):
        with pytest.raises(FormatError, match="2-D channel"):
            save_pfm(np.zeros(shape), tmp_path / "d.pfm")

    def test_first_stored_row_is_bottom(self, tmp_path):
        payload = np.array([[1.0, 2.0], [3.0, 4.0]], dtype="<f4").tobytes()
        (tmp_path / "d.pfm").write_bytes(b"Pf\n2 2\n-1.0\n" + payload)
        np.testing.assert_array_equal(load_pfm(tmp_path / "d.pfm").data[0, 0], [[3.0, 4.0], [1.0, 2.0]])

    def test_positive_scale_is_big_endian(self, tmp_path):
        payload = np.array([1.5, -2.0], dtype=">f4").tobytes()
        (tmp_path / "d.pfm").write_bytes(b"Pf\n2 1\n1.0\n" + payload)
        np.testing.assert_array_equal(load_pfm(tmp_path / "d.pfm").data.reshape(-1), [1.5, -2.0])

    def test_colour_pfm_unsupported(self, tmp_path):
        (tmp_path / "c.pfm").write_bytes(b"PF\n1 1\n-1.0\n" + bytes(12))
        with pytest.raises(UnsupportedError):
            load_pfm(tmp_path / "c.pfm")

    def test_truncated_payload(self, tmp_path):
        (tmp_path / "t.pfm").write_bytes(b"Pf\n4 4\n-1.0\n" + bytes(20))
        with pytest.raises(FormatError, match="truncated"):
            load_pfm(tmp_path / "t.pfm")

    @pytest.mark.parametrize("header", [b"P5\n1 1\n-1.0\n", b"Pf\nx 1\n-1.0\n", b"Pf\n1 1\n0.0\n"])
    def test_bad_headers(self, tmp_path, header):
        (tmp_path / "b.pfm").write_bytes(header + bytes(4))
        with pytest.raises(FormatError):
            load_pfm(tmp_path / "b.pfm")


class TestImages:
    def test_quantize_endpoints(self):
        np.testing.assert_array_equal(quantize(np.array([0.0, 50.0, 100.0, 250.0, -3.0]), 100.0), [0, 128, 255, 255, 0])

    def test_quantize_rejects_zero_max(self):
        with pytest.raises(ConfigurationError):
            quantize(np.zeros(2), 0.0)

    def test_disparity_image_upsamples_coarse_maps(self, tmp_path):
        coarse = DisparityMap.from_array(np.full((1, 1, 2, 3), 5.0), scale=2)
        pixels = export_disparity_image(coarse, tmp_path / "d.png", max_disp=10.0)
        assert pixels.shape == (4, 6)
        assert (pixels == 255).all()
        with Image.open(tmp_path / "d.png") as image:
            assert image.mode == "L" and image.size == (6, 4)

    def test_disparity_image_as_pgm(self, tmp_path):
        disparity = DisparityMap.from_array(np.zeros((1, 1, 2, 2)))
        export_disparity_image(disparity, tmp_path / "d.pgm", max_disp=4.0)
        assert (tmp_path / "d.pgm").read_bytes().startswith(b"P5")

    def test_single_row_disparity_image(self, tmp_path):
        disparity = DisparityMap.from_array(np.array([0.0, 2.0, 4.0]).reshape(1, 1, 1, 3))
        pixels = export_disparity_image(disparity, tmp_path / "d.png", max_disp=4.0)
        np.testing.assert_array_equal(pixels, [[0, 128, 255]])
        with Image.open(tmp_path / "d.png") as image:
            assert image.size == (3, 1)

    def test_error_image_blacks_out_invalid(self, tmp_path):
        valid = np.array([[True, False], [True, False]]).reshape(1, 1, 2, 2)
        gt = DisparityMap.from_array(np.zeros((1, 1, 2, 2)), valid=valid)
        pred = DisparityMap.from_array(np.full((1, 1, 2, 2), 3.0))
        np.testing.assert_array_equal(export_error_image(pred, gt, tmp_path / "e.png"), [[255, 0], [255, 0]])

    def test_missing_image_names_path(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.png"):
            load_image(tmp_path / "nope.png")

    def test_unreadable_image(self, tmp_path):
        (tmp_path / "junk.png").write_bytes(b"not an image")
        with pytest.raises(FormatError):
            load_image(tmp_path / "junk.png")

    def test_save_load_quantizes_to_8_bit(self, tmp_path, rng):
        tensor = Tensor(rng.random((1, 3, 4, 5), dtype=np.float32))
        save_image(tensor, tmp_path / "i.png")
        loaded = load_image(tmp_path / "i.png")
        assert loaded.shape == (1, 3, 4, 5)
        np.testing.assert_allclose(loaded.data, tensor.data, atol=0.5 / 255 + 1e-6)


class TestRandomDot:
    def test_deterministic_per_seed(self):
        a = generate_random_dot(11, 16, 32, 4)
        b = generate_random_dot(11, 16, 32, 4)
        np.testing.assert_array_equal(a.left.data, b.left.data)
        np.testing.assert_array_equal(a.right.data, b.right.data)
        np.testing.assert_array_equal(a.gt_disparity.values, b.gt_disparity.values)
        assert not np.array_equal(a.left.data, generate_random_dot(12, 16, 32, 4).left.data)

    @pytest.mark.parametrize("seed", range(5))
    def test_visible_pixels_are_exact_copies(self, seed):
        sample = generate_random_dot(seed, 32, 64, 8, shape_count=4)
        assert visible_pixels_match(sample)
        assert sample.gt_disparity.values.max() <= 8

    @pytest.mark.parametrize("seed", range(5))
    def test_warp_with_ground_truth_reproduces_left(self, seed):
        sample = generate_random_dot(seed, 32, 64, 8, shape_count=4)
        assert warp_error(sample) <= 1e-6

    @pytest.mark.parametrize("seed", range(4))
    def test_occlusion_matches_rendering(self, seed):
        sample = generate_random_dot(seed, 8, 24, 5, shape_count=3)
        disparity = sample.gt_disparity.values[0, 0].astype(np.int64)
        np.testing.assert_array_equal(sample.occlusion_mask[0, 0], rendered_occlusion(disparity))

    def test_forward_map_occlusion_matches_rendering(self, rng):
        disparity = rng.integers(0, 4, size=(6, 12))
        left = rng.random((3, 6, 12), dtype=np.float32)
        _, occluded = forward_map(left, disparity, np.zeros_like(left))
        np.testing.assert_array_equal(occluded, rendered_occlusion(disparity))

    def test_zero_max_disparity_is_identity(self):
        sample = generate_random_dot(0, 8, 16, 0)
        np.testing.assert_array_equal(sample.left.data, sample.right.data)
        assert not sample.occlusion_mask.any()

    def test_left_border_occluded(self):
        disparity = np.full((1, 6), 2)
        left = np.arange(6, dtype=np.float32).reshape(1, 1, 6).repeat(3, axis=0)
        right, occluded = forward_map(left, disparity, np.full_like(left, -1))
        assert occluded[0, :2].all() and not occluded[0, 2:].any()
        np.testing.assert_array_equal(right[0, 0], [2, 3, 4, 5, -1, -1])

    def test_nearer_surface_wins(self):
        disparity = np.array([[0, 0, 2, 0]])
        left = np.array([[[10.0, 11.0, 12.0, 13.0]]]).repeat(3, axis=0)
        right, occluded = forward_map(left, disparity, np.zeros_like(left))
        # pixel 2 (d=2) and pixel 0 (d=0) both land on column 0
        assert right[0, 0, 0] == 12.0
        assert occluded[0].tolist() == [True, False, False, False]

    def test_rejects_disparity_too_wide(self):
        with pytest.raises(ConfigurationError):
            generate_random_dot(0, 8, 16, 4)


class TestPreprocess:
    def test_filter_boundary_is_inclusive(self):
        values = np.array([[400.0, 1.0, 1.0, 1.0]])
        rule = DatasetFilterRule(fraction_threshold=0.25, disparity_threshold=300.0)
        sample = sample_with_disparity(values)
        assert large_disparity_fraction(sample, 300.0) == pytest.approx(0.25)
        assert apply_filter(sample, rule)
        assert not apply_filter(sample_with_disparity(np.array([[400.0, 400.0, 1.0, 1.0]])), rule)

    def test_filter_ignores_invalid(self):
        valid = np.array([[False, True, True, True]])
        sample = sample_with_disparity(np.array([[400.0, 1.0, 1.0, 1.0]]), valid)
        assert large_disparity_fraction(sample, 300.0) == 0.0

    def test_filter_empty_mask(self):
        sample = sample_with_disparity(np.zeros((1, 2)), np.zeros((1, 2), dtype=bool))
        with pytest.raises(EmptyMaskError):
            large_disparity_fraction(sample, 300.0)

    def test_crop_cuts_every_array_alike(self):
        sample = generate_random_dot(1, 128, 256, 16)
        crop = random_crop(sample, 64, 128, seed=5)
        assert crop.left.shape == (1, 3, 64, 128)
        assert crop.occlusion_mask.shape == (1, 1, 64, 128)
        again = random_crop(sample, 64, 128, seed=5)
        np.testing.assert_array_equal(crop.gt_disparity.values, again.gt_disparity.values)

    @pytest.mark.parametrize("seed", range(3))
    def test_crop_interior_stays_warp_consistent(self, seed):
        sample = generate_random_dot(seed, 128, 256, 16, shape_count=4)
        crop = random_crop(sample, 64, 128, seed=seed)
        assert warp_error(crop, start_column=16) <= 1e-6

    def test_full_size_crop_is_identity(self):
        sample = generate_random_dot(1, 64, 128, 8)
        assert random_crop(sample, 64, 128, seed=0) is sample

    def test_crop_validation(self):
        sample = generate_random_dot(1, 64, 128, 8)
        with pytest.raises(ConfigurationError):
            random_crop(sample, 32, 64, seed=0)
        with pytest.raises(ShapeError):
            random_crop(sample, 128, 128, seed=0)

    def test_collate_stacks_batches(self):
        batch = collate([generate_random_dot(i, 8, 16, 2) for i in range(3)])
        assert batch.left.shape == (3, 3, 8, 16)
        assert batch.occlusion_mask.shape == (3, 1, 8, 16)


class TestDatasets:
    def test_synthetic_samples_are_cached_and_named(self):
        dataset = SyntheticDataset(count=3, height=16, width=32, max_disp=4, seed=2)
        assert dataset[1] is dataset[1]
        assert dataset[2].name == "0002"
        with pytest.raises(IndexError):
            dataset[3]

    def test_synthetic_index_is_independent_of_order(self):
        first = SyntheticDataset(count=3, height=16, width=32, max_disp=4, seed=2)
        second = SyntheticDataset(count=3, height=16, width=32, max_disp=4, seed=2)
        first[0]
        np.testing.assert_array_equal(first[2].left.data, second[2].left.data)

    @pytest.mark.asyncio
    async def test_written_dataset_reads_back(self, tmp_path):
        synthetic = SyntheticDataset(count=3, height=64, width=128, max_disp=8, seed=4)
        written = await write_dataset(synthetic, tmp_path, workers=2)
        assert written == 3
        assert sorted(p.name for p in (tmp_path / "disp").iterdir()) == ["0000.pfm", "0001.pfm", "0002.pfm"]

        directory = DirectoryDataset(tmp_path)
        assert len(directory) == 3
        sample = directory[1]
        np.testing.assert_array_equal(sample.gt_disparity.values, synthetic[1].gt_disparity.values)
        np.testing.assert_array_equal(sample.occlusion_mask, synthetic[1].occlusion_mask)
        assert visible_pixels_match(sample)

    def test_non_finite_disparity_is_invalid(self, tmp_path):
        for folder in ("left", "right", "disp"):
            (tmp_path / folder).mkdir()
        image = Tensor(np.zeros((1, 3, 2, 3), dtype=np.float32))
        save_image(image, tmp_path / "left" / "a.png")
        save_image(image, tmp_path / "right" / "a.png")
        save_pfm(np.array([[1.0, np.inf, 2.0], [np.nan, 3.0, 4.0]]), tmp_path / "disp" / "a.pfm")

        sample = DirectoryDataset(tmp_path)[0]
        assert sample.valid_mask.sum() == 4
        assert np.isfinite(sample.gt_disparity.values).all()

    def test_filter_rejecting_everything(self, tmp_path):
        for folder in ("left", "right", "disp"):
            (tmp_path / folder).mkdir()
        image = Tensor(np.zeros((1, 3, 1, 2), dtype=np.float32))
        save_image(image, tmp_path / "left" / "a.png")
        save_image(image, tmp_path / "right" / "a.png")
        save_pfm(np.array([[500.0, 500.0]]), tmp_path / "disp" / "a.pfm")
        with pytest.raises(ConfigurationError, match="rejected"):
            DirectoryDataset(tmp_path, rule=DatasetFilterRule())

    def test_missing_folder(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="right"):
            (tmp_path / "left").mkdir()
            DirectoryDataset(tmp_path)
