import math

import numpy as np
import pytest

from matchbox import calib
from matchbox.errors import (
    DegenerateGeometryError,
    DetectionFailureError,
    InsufficientDataError,
    InvalidInputError,
)
from matchbox.raster import RasterImage

from oracles import equalize_oracle


def color(arr):
    return RasterImage(np.asarray(arr, dtype=np.uint8))


# ---------------------------------------------------------------------------
# to_grayscale


def test_grayscale_white_maps_to_white():
    img = color(np.full((2, 2, 3), 255))
    assert calib.to_grayscale(img).data.max() == 255
    assert calib.to_grayscale(img).data.min() == 255


def test_grayscale_pure_red():
    img = color(np.zeros((1, 1, 3)))
    img.data[0, 0, 0] = 255
    assert calib.to_grayscale(img).data[0, 0] == 76  # round(0.299 * 255)


def test_grayscale_identity_on_gray_axis():
    g = np.arange(256, dtype=np.uint8)
    img = color(np.stack([g, g, g], axis=-1).reshape(16, 16, 3))
    out = calib.to_grayscale(img)
    assert np.array_equal(out.data.ravel(), g)


def test_grayscale_roundtrip_through_replication(rng):
    gray = RasterImage(rng.integers(0, 256, (31, 17), dtype=np.uint8))
    rgb = color(np.stack([gray.data] * 3, axis=-1))
    assert np.array_equal(calib.to_grayscale(rgb).data, gray.data)


def test_grayscale_rejects_single_channel():
    with pytest.raises(InvalidInputError):
        calib.to_grayscale(RasterImage(np.zeros((4, 4), np.uint8)))


def test_grayscale_preserves_ppi():
    img = RasterImage(np.zeros((4, 4, 3), np.uint8), ppi_x=500, ppi_y=500)
    out = calib.to_grayscale(img)
    assert out.ppi_x == 500 and out.ppi_y == 500


# ---------------------------------------------------------------------------
# equalize


def test_equalize_constant_image_maps_to_zero():
    img = RasterImage(np.full((5, 5), 7, np.uint8))
    assert calib.equalize(img).data.max() == 0


def test_equalize_two_extremes():
    img = RasterImage(np.array([[0, 255]], np.uint8))
    out = calib.equalize(img)
    assert out.data.tolist() == [[0, 255]]


def test_equalize_four_pixel_example():
    img = RasterImage(np.array([[10, 10, 20, 20]], np.uint8))
    out = calib.equalize(img)
    assert np.array_equal(out.data, equalize_oracle(img.data))
    # cdf(10)=2, cdf_min=2, N=4 -> 0; cdf(20)=4 -> 255
    assert out.data.tolist() == [[0, 0, 255, 255]]


def test_equalize_matches_oracle_on_random_images(rng):
    for _ in range(25):
        h, w = int(rng.integers(1, 24)), int(rng.integers(1, 24))
        img = RasterImage(rng.integers(0, 256, (h, w), dtype=np.uint8))
        assert np.array_equal(calib.equalize(img).data, equalize_oracle(img.data))


def test_equalize_cdf_near_uniform_on_balanced_histograms(rng):
    # exact-balanced input: every level occurs equally often
    levels = np.repeat(np.arange(256, dtype=np.uint8), 64)
    rng.shuffle(levels)
    img = RasterImage(levels.reshape(128, 128))
    out = calib.equalize(img).data
    hist = np.bincount(out.ravel(), minlength=256)
    cdf = np.cumsum(hist) / out.size
    uniform = (np.arange(256) + 1) / 256
    assert np.abs(cdf - uniform).max() <= 1.0 / 256 + 1e-9


def test_equalize_rejects_color():
    with pytest.raises(InvalidInputError):
        calib.equalize(RasterImage(np.zeros((2, 2, 3), np.uint8)))


# ---------------------------------------------------------------------------
# homography estimation


def square(scale=1.0):
    return np.array([[0, 0], [10, 0], [10, 10], [0, 10]], float) * scale


def test_homography_identity():
    h, err = calib.estimate_homography(square(), square())
    assert np.allclose(h.m, np.eye(3), atol=1e-9)
    assert err < 1e-9


def test_homography_translation():
    h, _ = calib.estimate_homography(square(), square() + [5, 3])
    assert abs(h.m[0, 2] - 5) < 1e-6 and abs(h.m[1, 2] - 3) < 1e-6
    assert abs(h.m[0, 1]) < 1e-6 and abs(h.m[1, 0]) < 1e-6


def test_homography_recovers_projective_grid():
    truth = calib.Homography(
        np.array([[1.02, 0.04, 5.0], [-0.03, 0.97, -2.0], [1e-4, -2e-4, 1.0]])
    )
    jj, ii = np.meshgrid(np.arange(8), np.arange(6))
    src = np.column_stack([jj.ravel() * 23.0, ii.ravel() * 19.0])  # 48 corners
    dst = truth.apply(src)
    fit, err = calib.estimate_homography(src, dst)
    assert err < 1e-6
    reproj = np.sqrt(((fit.apply(src) - dst) ** 2).sum(axis=1)).max()
    assert reproj < 1e-6


def test_homography_insufficient_points():
    with pytest.raises(InsufficientDataError):
        calib.estimate_homography(square()[:3], square()[:3])


def test_homography_collinear_degenerate():
    line = np.column_stack([np.arange(6, dtype=float), np.arange(6, dtype=float) * 2])
    with pytest.raises(DegenerateGeometryError):
        calib.estimate_homography(line, line)


def test_homography_scale_invariance():
    truth = calib.Homography(
        np.array([[0.9, 0.1, 3.0], [0.05, 1.1, -4.0], [2e-4, 1e-4, 1.0]])
    )
    jj, ii = np.meshgrid(np.arange(5), np.arange(5))
    src = np.column_stack([jj.ravel() * 11.0, ii.ravel() * 13.0])
    dst = truth.apply(src)
    h1, e1 = calib.estimate_homography(src, dst)
    s = 3.7
    h2, e2 = calib.estimate_homography(src * s, dst * s)
    sm = np.diag([s, s, 1.0])
    conj = sm @ h1.m @ np.linalg.inv(sm)
    conj /= conj[2, 2]
    assert np.allclose(h2.m, conj, atol=1e-6)
    assert abs(e2 - s * e1) < 1e-6 + 0.01 * s * max(e1, 1e-12)


def test_homography_normalization_invariant():
    h = calib.Homography(np.array([[2.0, 0, 1], [0, 2.0, 0], [0, 0, 4.0]]))
    assert h.m[2, 2] == 1.0


def test_homography_rejects_singular():
    with pytest.raises(DegenerateGeometryError):
        calib.Homography(np.array([[1, 0, 0], [2, 0, 0], [0, 0, 1.0]]))


# ---------------------------------------------------------------------------
# rectify_and_scale


def _profile(h=None, ppi=2000.0, crop=(0, 0, 400, 400)):
    return calib.CalibrationProfile(
        homography=h or calib.Homography.identity(),
        native_ppi_x=ppi,
        native_ppi_y=ppi,
        crop_rect=calib.CropRect(*crop),
    )


def test_rectify_pure_scale_dimensions(rng):
    img = RasterImage(rng.integers(0, 256, (500, 500), dtype=np.uint8))
    out = calib.rectify_and_scale(img, _profile(), 500)
    assert (out.width, out.height) == (100, 100)
    assert out.ppi_x == 500 and out.ppi_y == 500


def test_rectify_1917_native_scale_factor(rng):
    img = RasterImage(rng.integers(0, 256, (300, 500), dtype=np.uint8))
    prof = _profile(ppi=1917.0, crop=(0, 0, 500, 300))
    out = calib.rectify_and_scale(img, prof, 500)
    assert out.width == round(500 * 500 / 1917)  # x scale ~0.2608
    assert not out.upsampled


def test_rectify_identity_at_native_resolution_is_exact(rng):
    img = RasterImage(rng.integers(0, 256, (64, 80), dtype=np.uint8), ppi_x=500, ppi_y=500)
    prof = calib.CalibrationProfile(
        homography=calib.Homography.identity(),
        native_ppi_x=500.0,
        native_ppi_y=500.0,
        crop_rect=calib.CropRect(8, 4, 48, 40),
    )
    out = calib.rectify_and_scale(img, prof, 500)
    assert np.array_equal(out.data, img.data[4:44, 8:56])


def test_rectify_roundtrip_through_known_homography():
    board, _ = calib.render_checkerboard(7, 7, square_px=22.0, margin_px=40.0)
    h = calib.Homography(
        np.array([[1.05, 0.06, 8.0], [-0.04, 0.98, 5.0], [1.2e-4, -8e-5, 1.0]])
    )
    warped, _ = calib.render_checkerboard(
        7, 7, square_px=22.0, margin_px=40.0, homography=h,
        size=(board.width + 60, board.height + 60),
    )
    prof = calib.CalibrationProfile(
        homography=h.inverse(),
        native_ppi_x=500.0,
        native_ppi_y=500.0,
        crop_rect=calib.CropRect(0, 0, board.width, board.height),
    )
    out = calib.rectify_and_scale(warped, prof, 500)
    interior = (slice(30, board.height - 30), slice(30, board.width - 30))
    diff = np.abs(out.data[interior].astype(float) - board.data[interior].astype(float))
    assert diff.mean() < 3.0


def test_rectify_upsampling_flag():
    img = RasterImage(np.zeros((100, 100), np.uint8))
    prof = _profile(ppi=1500.0, crop=(0, 0, 100, 100))
    out = calib.rectify_and_scale(img, prof, 1900)
    assert out.upsampled


def test_rectify_rejects_bad_target():
    img = RasterImage(np.zeros((10, 10), np.uint8))
    with pytest.raises(InvalidInputError):
        calib.rectify_and_scale(img, _profile(), 650)


def test_rectify_out_of_bounds_fills_white():
    img = RasterImage(np.zeros((50, 50), np.uint8))
    prof = _profile(ppi=500.0, crop=(-20, -20, 40, 40))
    out = calib.rectify_and_scale(img, prof, 500)
    assert out.data[0, 0] == 255


# ---------------------------------------------------------------------------
# checkerboard corners


def test_corners_on_ideal_board():
    img, truth = calib.render_checkerboard(7, 7, square_px=20.0, margin_px=30.0)
    found = calib.find_checkerboard_corners(img, 7, 7)
    assert found.shape == (49, 2)
    err = np.sqrt(((found - truth) ** 2).sum(axis=1))
    assert err.max() < 0.5


def test_corners_blank_image_fails_with_zero_found():
    img = RasterImage(np.full((200, 200), 255, np.uint8))
    with pytest.raises(DetectionFailureError) as exc:
        calib.find_checkerboard_corners(img, 7, 7)
    assert exc.value.found == 0


def test_corners_under_known_homography():
    h = calib.Homography(
        np.array([[1.08, 0.05, 12.0], [-0.06, 1.02, 9.0], [1.5e-4, -1e-4, 1.0]])
    )
    img, truth = calib.render_checkerboard(
        6, 8, square_px=24.0, margin_px=36.0, homography=h, size=(340, 300)
    )
    found = calib.find_checkerboard_corners(img, 6, 8)
    err = np.sqrt(((found - truth) ** 2).sum(axis=1))
    assert err.max() < 0.5


def test_corner_count_mismatch_reports_found():
    img, _ = calib.render_checkerboard(5, 5, square_px=20.0, margin_px=30.0)
    with pytest.raises(DetectionFailureError) as exc:
        calib.find_checkerboard_corners(img, 7, 7)
    assert exc.value.found == 25


# ---------------------------------------------------------------------------
# profile persistence


def test_profile_json_roundtrip(tmp_path):
    prof = _profile(ppi=1917.0, crop=(3, 4, 200, 150))
    path = tmp_path / "profile.json"
    prof.save(path)
    loaded = calib.CalibrationProfile.load(path)
    assert np.allclose(loaded.homography.m, prof.homography.m)
    assert loaded.native_ppi_x == prof.native_ppi_x
    assert loaded.crop_rect.width == 200


def test_profile_rejects_out_of_range_ppi():
    with pytest.raises(InvalidInputError):
        _profile(ppi=300.0)


def test_profile_from_board_estimates_ppi():
    img, corners = calib.render_checkerboard(7, 9, square_px=25.0, margin_px=30.0)
    # 25 px per square, 2 mm squares -> 25 / (2/25.4) = 317.5 ppi is out of
    # range; use 1 mm squares for a realistic high-res platen
    prof = calib.profile_from_board(corners, 7, 9, square_mm=1.0)
    assert prof.native_ppi_x == pytest.approx(25.0 * 25.4, rel=1e-6)
