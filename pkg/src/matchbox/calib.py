"""Frame calibration: grayscale, equalization, perspective rectification.

Turns a raw camera frame of the platen into a matcher-ready grayscale
image at a standard resolution (500 ppi adult / 1900 ppi neonate).
Perspective and scale parameters come from a printed checkerboard target.

Rounding convention used throughout: floor(x + 0.5) on nonnegative values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateGeometryError,
    DetectionFailureError,
    InsufficientDataError,
    InvalidInputError,
)
from .raster import RasterImage

TARGET_PPI_CHOICES = (500, 1900)

# ITU-R BT.601 luma weights, the conventional choice for 8-bit camera frames.
_LUMA = np.array([0.299, 0.587, 0.114])


# ---------------------------------------------------------------------------
# Step (i): RGB to grayscale


def to_grayscale(img: RasterImage) -> RasterImage:
    """Per-pixel luma y = floor(.299R + .587G + .114B + 0.5), clamped."""
    if img.channels != 3:
        raise InvalidInputError("to_grayscale expects a 3-channel image")
    luma = img.as_float() @ _LUMA
    gray = np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)
    return RasterImage(gray, ppi_x=img.ppi_x, ppi_y=img.ppi_y)


# ---------------------------------------------------------------------------
# Step (ii): histogram equalization


def equalize(img: RasterImage) -> RasterImage:
    """Standard CDF remapping.

    out(v) = floor(255 * (cdf(v) - cdf_min) / (N - cdf_min) + 0.5) where
    cdf_min is the smallest nonzero CDF value.  A single-level image
    (cdf_min == N) maps to all zeros.
    """
    if img.channels != 1:
        raise InvalidInputError("equalize expects a grayscale image")
    hist = np.bincount(img.data.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    n = img.data.size
    cdf_min = int(cdf[hist.nonzero()[0][0]])
    if cdf_min == n:
        return img.copy_with(np.zeros_like(img.data))
    lut = np.floor(255.0 * (cdf - cdf_min) / (n - cdf_min) + 0.5)
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return img.copy_with(lut[img.data])


# ---------------------------------------------------------------------------
# Homography estimation (normalized DLT)


@dataclass
class Homography:
    """3x3 projective transform, normalized so m[2][2] = 1."""

    m: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise InvalidInputError("homography must be 3x3")
        if abs(m[2, 2]) < 1e-12:
            raise DegenerateGeometryError("homography has m[2][2] ~ 0")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise DegenerateGeometryError("homography is not invertible")
        self.m = m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Map (N,2) points through the transform."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        hom = np.hstack([pts, np.ones((len(pts), 1))]) @ self.m.T
        return hom[:, :2] / hom[:, 2:3]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))


def _normalizer(pts: np.ndarray) -> np.ndarray:
    """Hartley normalization: centroid to origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2.0) / d if d > 1e-12 else 1.0
    return np.array(
        [[s, 0, -s * centroid[0]], [0, s, -s * centroid[1]], [0, 0, 1]]
    )


def _collinear(pts: np.ndarray) -> bool:
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[-1] <= 1e-9 * max(sv[0], 1.0)


def estimate_homography(
    src: np.ndarray, dst: np.ndarray
) -> tuple[Homography, float]:
    """Least-squares DLT fit of dst ~ H . src.

    Returns the homography and the mean reprojection error in pixels.
    Raises on fewer than 4 correspondences or a collinear configuration.
    """
    src = np.atleast_2d(np.asarray(src, dtype=np.float64))
    dst = np.atleast_2d(np.asarray(dst, dtype=np.float64))
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise InvalidInputError("src and dst must both be (N,2) point arrays")
    n = len(src)
    if n < 4:
        raise InsufficientDataError(f"need at least 4 correspondences, got {n}")
    if _collinear(src) or _collinear(dst):
        raise DegenerateGeometryError("point configuration is collinear")

    t_src = _normalizer(src)
    t_dst = _normalizer(dst)
    sn = (np.hstack([src, np.ones((n, 1))]) @ t_src.T)[:, :2]
    dn = (np.hstack([dst, np.ones((n, 1))]) @ t_dst.T)[:, :2]

    a = np.zeros((2 * n, 9))
    a[0::2, 0:2] = sn
    a[0::2, 2] = 1.0
    a[0::2, 6:8] = -dn[:, 0:1] * sn
    a[0::2, 8] = -dn[:, 0]
    a[1::2, 3:5] = sn
    a[1::2, 5] = 1.0
    a[1::2, 6:8] = -dn[:, 1:2] * sn
    a[1::2, 8] = -dn[:, 1]

    _, sv, vt = np.linalg.svd(a)
    if sv[-2] <= 1e-9 * max(sv[0], 1.0):
        raise DegenerateGeometryError("degenerate correspondence geometry")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_norm @ t_src
    fit = Homography(h)
    err = float(np.sqrt(((fit.apply(src) - dst) ** 2).sum(axis=1)).mean())
    return fit, err


# ---------------------------------------------------------------------------
# Calibration profile


@dataclass
class CropRect:
    x: float
    y: float
    width: float
    height: float

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError("crop rectangle must have positive size")


@dataclass
class CalibrationProfile:
    """Perspective + scale parameters estimated from a checkerboard."""

    homography: Homography
    native_ppi_x: float
    native_ppi_y: float
    crop_rect: CropRect

    def __post_init__(self) -> None:
        for v in (self.native_ppi_x, self.native_ppi_y):
            if not 500 <= v <= 5000:
                raise InvalidInputError(f"native ppi {v} outside [500, 5000]")

    def to_json(self) -> str:
        doc = {
            "homography": [float(v) for v in self.homography.m.ravel()],
            "native_ppi_x": self.native_ppi_x,
            "native_ppi_y": self.native_ppi_y,
            "crop_rect": {
                "x": self.crop_rect.x,
                "y": self.crop_rect.y,
                "width": self.crop_rect.width,
                "height": self.crop_rect.height,
            },
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CalibrationProfile":
        doc = json.loads(text)
        cr = doc["crop_rect"]
        return cls(
            homography=Homography(np.array(doc["homography"]).reshape(3, 3)),
            native_ppi_x=float(doc["native_ppi_x"]),
            native_ppi_y=float(doc["native_ppi_y"]),
            crop_rect=CropRect(cr["x"], cr["y"], cr["width"], cr["height"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationProfile":
        return cls.from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# Steps (iii) + (iv): rectification and scaling


def rectify_and_scale(
    img: RasterImage, profile: CalibrationProfile, target_ppi: int
) -> RasterImage:
    """Inverse-mapped bilinear warp, crop, and resample to target_ppi.

    The warp and the rescale share one sampling pass so interpolation error
    is paid once.  Out-of-bounds samples fill with 255 (platen background
    is bright).  If the target exceeds the native resolution the result is
    flagged as upsampled rather than rejected.
    """
    if target_ppi not in TARGET_PPI_CHOICES:
        raise InvalidInputError(f"target_ppi must be one of {TARGET_PPI_CHOICES}")
    crop = profile.crop_rect
    out_w = max(1, int(np.floor(crop.width * target_ppi / profile.native_ppi_x + 0.5)))
    out_h = max(1, int(np.floor(crop.height * target_ppi / profile.native_ppi_y + 0.5)))

    # Output pixel centers -> rectified plane -> raw frame.
    xs = crop.x + (np.arange(out_w) + 0.5) * (crop.width / out_w) - 0.5
    ys = crop.y + (np.arange(out_h) + 0.5) * (crop.height / out_h) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    rect_pts = np.column_stack([gx.ravel(), gy.ravel()])
    raw_pts = profile.homography.inverse().apply(rect_pts)
    coords = np.stack(
        [raw_pts[:, 1].reshape(out_h, out_w), raw_pts[:, 0].reshape(out_h, out_w)]
    )

    if img.channels == 1:
        out = ndimage.map_coordinates(
            img.as_float(), coords, order=1, mode="constant", cval=255.0
        )
        data = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    else:
        planes = [
            ndimage.map_coordinates(
                img.data[:, :, c].astype(np.float64),
                coords,
                order=1,
                mode="constant",
                cval=255.0,
            )
            for c in range(3)
        ]
        data = np.clip(np.floor(np.stack(planes, axis=-1) + 0.5), 0, 255).astype(
            np.uint8
        )

    result = RasterImage(data, ppi_x=float(target_ppi), ppi_y=float(target_ppi))
    if target_ppi > min(profile.native_ppi_x, profile.native_ppi_y):
        result.upsampled = True
    return result


# ---------------------------------------------------------------------------
# Checkerboard target detection


def render_checkerboard(
    rows: int,
    cols: int,
    square_px: float = 20.0,
    margin_px: float = 30.0,
    homography: Homography | None = None,
    size: tuple[int, int] | None = None,
    supersample: int = 4,
) -> tuple[RasterImage, np.ndarray]:
    """Render a synthetic board with rows x cols inner corners.

    Returns the image and the ground-truth inner corner coordinates in
    row-major board order (mapped through ``homography`` when given).
    Used by the calibrate CLI self-test and by the test suite.
    """
    n_sq_y, n_sq_x = rows + 1, cols + 1
    w = int(np.ceil(2 * margin_px + n_sq_x * square_px))
    h = int(np.ceil(2 * margin_px + n_sq_y * square_px))
    if size is not None:
        w, h = size

    jj, ii = np.meshgrid(np.arange(cols), np.arange(rows))
    corners = np.column_stack(
        [
            (margin_px + (jj.ravel() + 1) * square_px),
            (margin_px + (ii.ravel() + 1) * square_px),
        ]
    ).astype(np.float64)

    ss = supersample
    xs = (np.arange(w * ss) + 0.5) / ss - 0.5
    ys = (np.arange(h * ss) + 0.5) / ss - 0.5
    gx, gy = np.meshgrid(xs, ys)
    if homography is not None:
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        board = homography.inverse().apply(pts)
        bx = board[:, 0].reshape(gy.shape)
        by = board[:, 1].reshape(gy.shape)
        corners = homography.apply(corners)
    else:
        bx, by = gx, gy

    cell_x = np.floor((bx - margin_px) / square_px).astype(np.int64)
    cell_y = np.floor((by - margin_px) / square_px).astype(np.int64)
    inside = (cell_x >= 0) & (cell_x < n_sq_x) & (cell_y >= 0) & (cell_y < n_sq_y)
    white = np.where(inside & (((cell_x + cell_y) % 2) == 0), 0.0, 255.0)
    white[~inside] = 255.0
    img = white.reshape(h, ss, w, ss).mean(axis=(1, 3))
    return RasterImage(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)), corners


def _subpixel_refine(resp: np.ndarray, x: int, y: int) -> tuple[float, float]:
    """Quadratic fit of the 3x3 response patch around a peak."""
    if not (1 <= x < resp.shape[1] - 1 and 1 <= y < resp.shape[0] - 1):
        return float(x), float(y)
    patch = resp[y - 1 : y + 2, x - 1 : x + 2]
    dx = (patch[1, 2] - patch[1, 0]) / 2.0
    dy = (patch[2, 1] - patch[0, 1]) / 2.0
    dxx = patch[1, 2] - 2.0 * patch[1, 1] + patch[1, 0]
    dyy = patch[2, 1] - 2.0 * patch[1, 1] + patch[0, 1]
    dxy = (patch[2, 2] - patch[2, 0] - patch[0, 2] + patch[0, 0]) / 4.0
    hess = np.array([[dxx, dxy], [dxy, dyy]])
    if abs(np.linalg.det(hess)) < 1e-12:
        return float(x), float(y)
    off = np.linalg.solve(hess, -np.array([dx, dy]))
    off = np.clip(off, -1.0, 1.0)
    return float(x + off[0]), float(y + off[1])


def find_checkerboard_corners(
    img: RasterImage, rows: int, cols: int
) -> np.ndarray:
    """Locate the rows x cols inner corners, sub-pixel, row-major order.

    Corners are saddle points of the intensity surface; the detector uses
    the negated Hessian determinant of a smoothed image, non-max
    suppression, lattice assignment through a 4-point homography on the
    extreme corners, and quadratic sub-pixel refinement.
    """
    if img.channels != 1:
        raise InvalidInputError("corner detection expects a grayscale image")
    if rows < 2 or cols < 2:
        raise InvalidInputError("board must have at least 2x2 inner corners")
    expected = rows * cols

    f = img.as_float()
    ixx = ndimage.gaussian_filter(f, 2.0, order=(0, 2))
    iyy = ndimage.gaussian_filter(f, 2.0, order=(2, 0))
    ixy = ndimage.gaussian_filter(f, 2.0, order=(1, 1))
    resp = ixy * ixy - ixx * iyy

    peak = float(resp.max())
    if peak <= 1.0:  # flat or structure-free image
        raise DetectionFailureError("no checkerboard structure found", found=0)
    # Full four-quadrant saddles respond ~4x stronger than the junctions
    # along the board margin, so a relative threshold separates them.
    local_max = ndimage.maximum_filter(resp, size=7)
    cand_mask = (resp == local_max) & (resp > 0.35 * peak)
    ys, xs = np.nonzero(cand_mask)
    if len(xs) != expected:
        raise DetectionFailureError(
            f"expected {expected} corners, found {len(xs)}", found=len(xs)
        )

    pts = np.array([_subpixel_refine(resp, x, y) for x, y in zip(xs, ys)])

    # Assign lattice indices: fit a homography from the board's unit grid to
    # the four extreme detections, then invert; the assignment survives
    # perspective because it only relies on the projective lattice structure.
    s = pts.sum(axis=1)
    d = pts[:, 0] - pts[:, 1]
    quad_img = np.array(
        [pts[np.argmin(s)], pts[np.argmax(d)], pts[np.argmin(d)], pts[np.argmax(s)]]
    )
    quad_board = np.array(
        [[0, 0], [cols - 1, 0], [0, rows - 1], [cols - 1, rows - 1]],
        dtype=np.float64,
    )
    h, _ = estimate_homography(quad_board, quad_img)
    board = h.inverse().apply(pts)
    idx = np.floor(board + 0.5).astype(np.int64)
    if (
        idx[:, 0].min() < 0
        or idx[:, 0].max() >= cols
        or idx[:, 1].min() < 0
        or idx[:, 1].max() >= rows
    ):
        raise DetectionFailureError(
            "corner lattice assignment out of range", found=len(xs)
        )
    flat = idx[:, 1] * cols + idx[:, 0]
    if len(np.unique(flat)) != expected:
        raise DetectionFailureError(
            "ambiguous corner lattice assignment", found=len(xs)
        )
    order = np.argsort(flat)
    return pts[order]


def profile_from_board(
    corners: np.ndarray,
    rows: int,
    cols: int,
    square_mm: float,
    pad_squares: float = 1.0,
) -> CalibrationProfile:
    """Build a CalibrationProfile from detected inner corners.

    The rectified plane keeps roughly the raw pixel scale: one board square
    maps to its median observed side length, which fixes the native ppi via
    the printed square size.
    """
    if square_mm <= 0:
        raise InvalidInputError("square size must be positive")
    corners = np.asarray(corners, dtype=np.float64)
    if corners.shape != (rows * cols, 2):
        raise InvalidInputError("corner array does not match the board layout")

    grid = corners.reshape(rows, cols, 2)
    dx = np.linalg.norm(np.diff(grid, axis=1), axis=2)
    dy = np.linalg.norm(np.diff(grid, axis=0), axis=2)
    square_px = float(np.median(np.concatenate([dx.ravel(), dy.ravel()])))

    jj, ii = np.meshgrid(np.arange(cols), np.arange(rows))
    dst = np.column_stack([jj.ravel(), ii.ravel()]).astype(np.float64) * square_px
    h, _ = estimate_homography(corners, dst)

    native_ppi = square_px / (square_mm / 25.4)
    pad = pad_squares * square_px
    crop = CropRect(
        x=-pad,
        y=-pad,
        width=(cols - 1) * square_px + 2 * pad,
        height=(rows - 1) * square_px + 2 * pad,
    )
    return CalibrationProfile(
        homography=h,
        native_ppi_x=native_ppi,
        native_ppi_y=native_ppi,
        crop_rect=crop,
    )
