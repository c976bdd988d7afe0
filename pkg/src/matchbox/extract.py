"""Minutiae extraction from calibrated grayscale fingerprints.

Classical pipeline: block orientation field -> oriented Gabor enhancement
-> local-mean binarization -> Zhang-Suen thinning -> crossing-number
minutiae detection -> spurious-minutiae filtering.

Angle conventions (must stay in lockstep with descriptor canonicalization
and the synthetic generator):
  * ridge orientations are undirected, in [0, pi), image y pointing down;
  * minutia theta is directed, in [0, 2*pi): for an ending it points from
    the termination back along the ridge body; for a bifurcation it points
    along the valley between the two splitting branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .errors import InvalidInputError
from .raster import RasterImage

# Fixed ridge frequency at 500 ppi (~9 px inter-ridge spacing, standard
# adult value); scaled for other resolutions instead of estimated per block.
RIDGE_FREQ_500 = 0.11
DEFAULT_BLOCK = 16
COHERENCE_GATE = 0.2
SEGMENT_VARIANCE_MIN = 100.0
BORDER_MARGIN = 16
FACING_ENDING_DIST = 8.0
MERGE_DIST = 6.0

TWO_PI = 2.0 * math.pi


@dataclass
class Minutia:
    """A ridge ending or bifurcation with directed angle and quality."""

    x: float
    y: float
    theta: float  # [0, 2*pi), direction convention in module docstring
    kind: str  # "ending" | "bifurcation"
    quality: float = 1.0

    def __post_init__(self) -> None:
        self.theta = float(self.theta) % TWO_PI
        self.quality = float(min(max(self.quality, 0.0), 1.0))
        if self.kind not in ("ending", "bifurcation"):
            raise InvalidInputError(f"unknown minutia kind {self.kind!r}")


@dataclass
class OrientationField:
    """Per-block undirected ridge orientation and anisotropy coherence."""

    block_size: int
    angles: np.ndarray  # [0, pi)
    coherence: np.ndarray  # [0, 1]

    def block_index(self, x: float, y: float) -> tuple[int, int]:
        by = min(max(int(y) // self.block_size, 0), self.angles.shape[0] - 1)
        bx = min(max(int(x) // self.block_size, 0), self.angles.shape[1] - 1)
        return by, bx

    def angle_at(self, x: float, y: float) -> float:
        by, bx = self.block_index(x, y)
        return float(self.angles[by, bx])

    def coherence_at(self, x: float, y: float) -> float:
        by, bx = self.block_index(x, y)
        return float(self.coherence[by, bx])


def _block_reduce_sum(arr: np.ndarray, block: int) -> np.ndarray:
    h, w = arr.shape
    gh, gw = math.ceil(h / block), math.ceil(w / block)
    padded = np.zeros((gh * block, gw * block), dtype=arr.dtype)
    padded[:h, :w] = arr
    return padded.reshape(gh, block, gw, block).sum(axis=(1, 3))


def orientation_field(img: RasterImage, block_size: int = DEFAULT_BLOCK) -> OrientationField:
    """Dominant block orientation via gradient-squared (doubled-angle) averaging."""
    if img.channels != 1:
        raise InvalidInputError("orientation field expects a grayscale image")
    if not 8 <= block_size <= 32:
        raise InvalidInputError("block_size must lie in [8, 32]")
    if img.height < block_size or img.width < block_size:
        raise InvalidInputError("image smaller than one block")

    f = ndimage.gaussian_filter(img.as_float(), 1.0)
    gy, gx = np.gradient(f)
    gxx = _block_reduce_sum(gx * gx, block_size)
    gyy = _block_reduce_sum(gy * gy, block_size)
    gxy = _block_reduce_sum(gx * gy, block_size)

    # Doubled-angle mean gradient direction, then +pi/2 for ridge orientation.
    phi = 0.5 * np.arctan2(2.0 * gxy, gxx - gyy)
    angles = np.mod(phi + math.pi / 2.0, math.pi)
    denom = gxx + gyy
    num = np.sqrt((gxx - gyy) ** 2 + (2.0 * gxy) ** 2)
    coherence = np.where(denom > 1e-9, num / np.maximum(denom, 1e-9), 0.0)
    return OrientationField(block_size, angles, np.clip(coherence, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Gabor enhancement

_N_GABOR_ANGLES = 16


def _gabor_kernel(theta: float, freq: float) -> np.ndarray:
    """Zero-mean even Gabor tuned to ridges along orientation theta."""
    sigma = 0.5 / freq
    r = int(math.ceil(2.2 * sigma))
    ax = np.arange(-r, r + 1)
    x, y = np.meshgrid(ax, ax)
    # Wave vector is perpendicular to the ridge orientation.
    phi = theta + math.pi / 2.0
    u = x * math.cos(phi) + y * math.sin(phi)
    env = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    kern = env * np.cos(2.0 * math.pi * freq * u)
    kern -= env * (kern.sum() / env.sum())  # zero DC under the envelope
    return kern


def enhance(img: RasterImage, field: OrientationField, freq: float = RIDGE_FREQ_500) -> RasterImage:
    """Per-block oriented Gabor filtering; low-coherence blocks pass through."""
    if not 0.05 <= freq <= 0.25:
        raise InvalidInputError("ridge frequency must lie in [0.05, 0.25]")
    f = img.as_float()
    inv = 255.0 - f  # ridges bright for the filter bank

    thetas = np.arange(_N_GABOR_ANGLES) * math.pi / _N_GABOR_ANGLES
    responses = np.stack(
        [
            signal.fftconvolve(inv, _gabor_kernel(t, freq), mode="same")
            for t in thetas
        ]
    )

    # Pick each pixel's response by its block's quantized orientation.
    bs = field.block_size
    qidx = np.floor(field.angles / math.pi * _N_GABOR_ANGLES + 0.5).astype(int)
    qidx %= _N_GABOR_ANGLES
    pix_idx = np.repeat(np.repeat(qidx, bs, axis=0), bs, axis=1)[: f.shape[0], : f.shape[1]]
    resp = np.take_along_axis(responses, pix_idx[None], axis=0)[0]

    scale = np.percentile(np.abs(resp), 99.0)
    if scale < 1e-9:
        out = f
    else:
        out = np.clip(127.5 - resp * (127.5 / scale), 0.0, 255.0)

    coh_pix = np.repeat(np.repeat(field.coherence, bs, axis=0), bs, axis=1)[
        : f.shape[0], : f.shape[1]
    ]
    out = np.where(coh_pix < COHERENCE_GATE, f, out)
    return img.copy_with(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


# ---------------------------------------------------------------------------
# Binarization and Zhang-Suen thinning


def _neighbor_stack(p: np.ndarray) -> np.ndarray:
    """8-neighborhoods of every interior pixel, cyclic order N..NW."""
    return np.stack(
        [
            p[:-2, 1:-1],  # N
            p[:-2, 2:],  # NE
            p[1:-1, 2:],  # E
            p[2:, 2:],  # SE
            p[2:, 1:-1],  # S
            p[2:, :-2],  # SW
            p[1:-1, :-2],  # W
            p[:-2, :-2],  # NW
        ]
    )


def _thin_zhang_suen(ridge: np.ndarray) -> np.ndarray:
    """Iterative two-subpass thinning to a 1-px 8-connected skeleton."""
    p = np.pad(ridge.astype(np.uint8), 1)
    while True:
        changed = False
        for step in (0, 1):
            nb = _neighbor_stack(p)
            b = nb.sum(axis=0)
            cyc = np.concatenate([nb, nb[:1]], axis=0)
            a = ((cyc[:-1] == 0) & (cyc[1:] == 1)).sum(axis=0)
            n_, e_, s_, w_ = nb[0], nb[2], nb[4], nb[6]
            if step == 0:
                c3 = (n_ * e_ * s_) == 0
                c4 = (e_ * s_ * w_) == 0
            else:
                c3 = (n_ * e_ * w_) == 0
                c4 = (n_ * s_ * w_) == 0
            remove = (
                (p[1:-1, 1:-1] == 1) & (b >= 2) & (b <= 6) & (a == 1) & c3 & c4
            )
            if remove.any():
                p[1:-1, 1:-1][remove] = 0
                changed = True
        if not changed:
            return p[1:-1, 1:-1]


def binarize(img: RasterImage) -> np.ndarray:
    """Local-mean threshold (16 px window); True marks ridge pixels."""
    if img.channels != 1:
        raise InvalidInputError("binarization expects a grayscale image")
    f = img.as_float()
    local_mean = ndimage.uniform_filter(f, size=16, mode="nearest")
    return f < local_mean - 1.0


def binarize_thin(img: RasterImage) -> RasterImage:
    """Local-mean threshold (16 px window) then Zhang-Suen thinning.

    Output: ridge pixels 0, background 255.
    """
    ridge = binarize(img).astype(np.uint8)
    skel = _thin_zhang_suen(ridge)
    return img.copy_with(np.where(skel == 1, 0, 255).astype(np.uint8))


def skeleton_mask(skel: RasterImage) -> np.ndarray:
    """Boolean ridge mask from a skeleton image (ridge = 0 convention)."""
    return skel.data == 0


def crossing_numbers(ridge: np.ndarray) -> np.ndarray:
    """CN = half the absolute neighbor transitions, cyclic 8-neighborhood."""
    p = np.pad(ridge.astype(np.int8), 1)
    nb = _neighbor_stack(p)
    cyc = np.concatenate([nb, nb[:1]], axis=0)
    cn = np.abs(np.diff(cyc, axis=0)).sum(axis=0) // 2
    cn[ridge == 0] = 0
    return cn.astype(np.int64)


# ---------------------------------------------------------------------------
# Minutiae from the skeleton

_TRACE_STEPS = 10


def _ridge_neighbors(ridge: np.ndarray, y: int, x: int) -> list[tuple[int, int]]:
    out = []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            ny, nx_ = y + dy, x + dx
            if 0 <= ny < ridge.shape[0] and 0 <= nx_ < ridge.shape[1] and ridge[ny, nx_]:
                out.append((ny, nx_))
    return out


def _walk(
    ridge: np.ndarray,
    start: tuple[int, int],
    first: tuple[int, int],
    steps: int,
) -> tuple[int, int]:
    """Walk the skeleton from start through first, preferring the
    straightest continuation; junction clusters are crossed, not stops."""
    visited = {start, first}
    cur = first
    heading = (first[0] - start[0], first[1] - start[1])
    for _ in range(steps - 1):
        y, x = cur
        cands = [
            p for p in _ridge_neighbors(ridge, y, x) if p not in visited
        ]
        if not cands:
            break
        hn = math.hypot(*heading) or 1.0

        def straightness(p: tuple[int, int]) -> float:
            dy, dx = p[0] - y, p[1] - x
            return (dy * heading[0] + dx * heading[1]) / (math.hypot(dy, dx) * hn)

        nxt = max(cands, key=straightness)
        heading = (nxt[0] - cur[0], nxt[1] - cur[1])
        visited.add(nxt)
        cur = nxt
    return cur


def _branch_units(ridge: np.ndarray, y: int, x: int, steps: int) -> list[np.ndarray]:
    units = []
    for nb in _ridge_neighbors(ridge, y, x):
        ey, ex = _walk(ridge, (y, x), nb, steps)
        v = np.array([ex - x, ey - y], dtype=np.float64)
        n = np.linalg.norm(v)
        if n > 1e-9:
            units.append(v / n)
    return units


def _minutia_theta(
    ridge: np.ndarray,
    y: int,
    x: int,
    orientation: float | None,
) -> float:
    """Directed minutia angle.

    The branch-direction sum points into the ridge body for an ending and
    along the valley between the split branches for a bifurcation (two
    branches outvote the trunk).  When an orientation field is available
    its (undirected) angle supplies the precise axis and the branch sum
    only disambiguates the 180-degree sign, which is far more stable than
    the raw walk directions near curved cores.
    """
    units = _branch_units(ridge, y, x, _TRACE_STEPS)
    s = np.sum(units, axis=0) if units else np.zeros(2)
    if orientation is None:
        if np.linalg.norm(s) < 1e-9:
            return 0.0
        return math.atan2(s[1], s[0]) % TWO_PI
    v = np.array([math.cos(orientation), math.sin(orientation)])
    if float(s @ v) < 0:
        return (orientation + math.pi) % TWO_PI
    return orientation % TWO_PI


def minutiae_from_skeleton(
    skel: RasterImage, field: OrientationField | None = None
) -> list[Minutia]:
    """Raw crossing-number minutiae: CN=1 endings, CN=3 bifurcations.

    No spurious filtering; this is the stage oracle tests compare against.
    """
    ridge = skeleton_mask(skel)
    cn = crossing_numbers(ridge)
    out: list[Minutia] = []
    for kind, value in (("ending", 1), ("bifurcation", 3)):
        ys, xs = np.nonzero(cn == value)
        for y, x in zip(ys.tolist(), xs.tolist()):
            orientation = field.angle_at(x, y) if field is not None else None
            theta = _minutia_theta(ridge, y, x, orientation)
            q = field.coherence_at(x, y) if field is not None else 1.0
            out.append(Minutia(float(x), float(y), theta, kind, q))
    out.sort(key=lambda m: (m.y, m.x))
    return out


# ---------------------------------------------------------------------------
# Foreground segmentation and spurious filtering


def segment_foreground(img: RasterImage, block: int = DEFAULT_BLOCK) -> np.ndarray:
    """Block-variance mask: variance < 100 (0-255 scale) is background."""
    f = img.as_float()
    h, w = f.shape
    gh, gw = math.ceil(h / block), math.ceil(w / block)
    padded = np.full((gh * block, gw * block), f.mean())
    padded[:h, :w] = f
    blocks = padded.reshape(gh, block, gw, block)
    var = blocks.var(axis=(1, 3))
    mask_blocks = var >= SEGMENT_VARIANCE_MIN
    mask_blocks = ndimage.binary_closing(mask_blocks, iterations=1)
    mask = np.repeat(np.repeat(mask_blocks, block, axis=0), block, axis=1)
    return mask[:h, :w]


def _wrap_pi(a: np.ndarray | float) -> np.ndarray | float:
    return (a + math.pi) % TWO_PI - math.pi


def filter_minutiae(
    minutiae: list[Minutia],
    mask: np.ndarray | None,
    shape: tuple[int, int],
    border: int = BORDER_MARGIN,
) -> list[Minutia]:
    """Drop border artifacts, facing ending pairs, and near-duplicates."""
    if not minutiae:
        return []
    h, w = shape
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    # image edge counts as foreground border
    dist = ndimage.distance_transform_edt(np.pad(mask, 1))[1:-1, 1:-1]
    kept = [
        m
        for m in minutiae
        if dist[min(int(m.y), h - 1), min(int(m.x), w - 1)] > border
    ]

    # Facing ending/ending pairs within 8 px are broken-ridge artifacts.
    drop: set[int] = set()
    for i in range(len(kept)):
        if kept[i].kind != "ending":
            continue
        for j in range(i + 1, len(kept)):
            if kept[j].kind != "ending":
                continue
            a, b = kept[i], kept[j]
            d = math.hypot(a.x - b.x, a.y - b.y)
            if d > FACING_ENDING_DIST or d < 1e-9:
                continue
            ab = math.atan2(b.y - a.y, b.x - a.x)
            # Each theta points back into its ridge; a broken ridge leaves
            # the two directions anti-aligned, each pointing away from the gap.
            facing = (
                abs(_wrap_pi(a.theta - b.theta - math.pi)) < math.pi / 3
                and abs(_wrap_pi(a.theta - (ab + math.pi))) < math.pi / 3
            )
            if facing:
                drop.update((i, j))
    kept = [m for i, m in enumerate(kept) if i not in drop]

    # Merge anything closer than 6 px, keeping the higher-quality one.
    kept.sort(key=lambda m: -m.quality)
    final: list[Minutia] = []
    for m in kept:
        if all(math.hypot(m.x - f.x, m.y - f.y) >= MERGE_DIST for f in final):
            final.append(m)
    final.sort(key=lambda m: (m.y, m.x))
    return final


def detect_minutiae(
    skel: RasterImage,
    field: OrientationField | None = None,
    mask: np.ndarray | None = None,
) -> list[Minutia]:
    """Crossing-number detection plus spurious filtering."""
    raw = minutiae_from_skeleton(skel, field)
    return filter_minutiae(raw, mask, (skel.height, skel.width))


# ---------------------------------------------------------------------------
# Full extraction pipeline


@dataclass
class ExtractionResult:
    minutiae: list[Minutia]
    field: OrientationField
    skeleton: RasterImage
    mask: np.ndarray
    enhanced: RasterImage


def extract_minutiae(img: RasterImage, min_quality: float = 0.0) -> ExtractionResult:
    """Run the classical pipeline on a calibrated grayscale image."""
    if img.channels != 1:
        raise InvalidInputError("extraction expects a grayscale image")
    ppi = img.ppi_x if img.has_ppi else 500.0
    scale = ppi / 500.0
    block = int(min(32, max(8, round(DEFAULT_BLOCK * scale))))
    freq = min(0.25, max(0.05, RIDGE_FREQ_500 / scale))

    field = orientation_field(img, block)
    enhanced = enhance(img, field, freq)
    mask = segment_foreground(img)
    skel_img = binarize_thin(enhanced)
    # Never report structure outside the segmented foreground.
    skel_data = np.where(mask, skel_img.data, 255).astype(np.uint8)
    skel_img = skel_img.copy_with(skel_data)
    minutiae = detect_minutiae(skel_img, field, mask)
    if min_quality > 0.0:
        minutiae = [m for m in minutiae if m.quality >= min_quality]
    return ExtractionResult(minutiae, field, skel_img, mask, enhanced)


def extract_template(img: RasterImage, min_quality: float = 0.0):
    """Extract minutiae and attach descriptors; returns a matcher Template."""
    from .descriptor import descriptors_for
    from .matcher import Template

    res = extract_minutiae(img, min_quality)
    minutiae = res.minutiae
    if len(minutiae) > 512:  # template format cap; keep the best
        minutiae = sorted(minutiae, key=lambda m: -m.quality)[:512]
        minutiae.sort(key=lambda m: (m.y, m.x))
    desc = descriptors_for(img, minutiae)
    ppi = int(img.ppi_x) if img.has_ppi else 500
    return Template.build(minutiae, desc, source_ppi=ppi)
