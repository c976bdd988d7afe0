"""Fixed-length minutia descriptors from orientation-canonicalized patches.

A 96x96 patch is sampled around each minutia, rotated so the minutia
direction lands on +x, and summarized by a 4x4 grid of 8-bin gradient
orientation histograms (128 dims, unit L2 norm).  The backend is
pluggable: anything that maps a patch stack to unit vectors of a fixed
dimension can stand in without touching the matcher.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError
from .extract import Minutia
from .raster import RasterImage

PATCH_SIDE = 96
SPATIAL_GRID = 4
ORIENTATION_BINS = 8
DESCRIPTOR_DIM = SPATIAL_GRID * SPATIAL_GRID * ORIENTATION_BINS
_CLAMP = 0.2


@dataclass(frozen=True)
class PatchSpec:
    side: int = PATCH_SIDE
    orientation_bins: int = ORIENTATION_BINS
    spatial_grid: int = SPATIAL_GRID


class DescriptorBackend(Protocol):
    """patch stack (N, side, side) float -> unit vectors (N, dim)."""

    dim: int

    def compute(self, patches: np.ndarray) -> np.ndarray: ...


def crop_canonical_patches(img: RasterImage, minutiae: list[Minutia]) -> np.ndarray:
    """Sample a canonical 96x96 patch per minutia (batch).

    The grid is rotated by -theta about the minutia so its direction maps
    to +x; bilinear sampling, out-of-image samples fill with 255.
    """
    if img.channels != 1:
        raise InvalidInputError("patches are sampled from grayscale images")
    n = len(minutiae)
    if n == 0:
        return np.zeros((0, PATCH_SIDE, PATCH_SIDE))
    # integer offsets (minutia at patch index side//2) keep the unrotated
    # crop exactly equal to the raw pixel window
    ax = np.arange(PATCH_SIDE, dtype=np.float64) - PATCH_SIDE // 2
    u, v = np.meshgrid(ax, ax)  # u: canonical +x, v: canonical +y

    coords = np.empty((n, 2, PATCH_SIDE, PATCH_SIDE))
    for i, m in enumerate(minutiae):
        c, s = math.cos(m.theta), math.sin(m.theta)
        coords[i, 1] = m.x + u * c - v * s  # image x
        coords[i, 0] = m.y + u * s + v * c  # image y
    flat = coords.transpose(1, 0, 2, 3).reshape(2, -1)
    sampled = ndimage.map_coordinates(
        img.as_float(), flat, order=1, mode="constant", cval=255.0
    )
    return sampled.reshape(n, PATCH_SIDE, PATCH_SIDE)


def crop_canonical_patch(img: RasterImage, m: Minutia) -> RasterImage:
    """Single-minutia canonical patch as an image (debugging, tests)."""
    patch = crop_canonical_patches(img, [m])[0]
    return RasterImage(np.clip(np.floor(patch + 0.5), 0, 255).astype(np.uint8))


class GradientHistogramBackend:
    """Reference descriptor: Gaussian-weighted, trilinearly interpolated
    gradient orientation histograms over a 4x4 cell grid."""

    dim = DESCRIPTOR_DIM

    def compute(self, patches: np.ndarray) -> np.ndarray:
        patches = np.asarray(patches, dtype=np.float64)
        if patches.ndim == 2:
            patches = patches[None]
        n, h, w = patches.shape
        if (h, w) != (PATCH_SIDE, PATCH_SIDE):
            raise InvalidInputError(f"expected {PATCH_SIDE}x{PATCH_SIDE} patches")
        if n == 0:
            return np.zeros((0, self.dim))

        gy = np.gradient(patches, axis=1)
        gx = np.gradient(patches, axis=2)
        mag = np.hypot(gx, gy)
        ang = np.mod(np.arctan2(gy, gx), 2.0 * math.pi)

        center = PATCH_SIDE // 2
        yy, xx = np.meshgrid(np.arange(h) - center, np.arange(w) - center, indexing="ij")
        sigma = PATCH_SIDE / 2.0
        gauss = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma))
        weight = mag * gauss  # (n, h, w)

        cell = PATCH_SIDE / SPATIAL_GRID
        rb = (np.arange(h) + 0.5) / cell - 0.5  # fractional row bin
        cb = (np.arange(w) + 0.5) / cell - 0.5
        rb = np.broadcast_to(rb[:, None], (h, w))
        cb = np.broadcast_to(cb[None, :], (h, w))
        ob = ang / (2.0 * math.pi / ORIENTATION_BINS)  # (n, h, w)

        r0 = np.floor(rb).astype(np.int64)
        c0 = np.floor(cb).astype(np.int64)
        o0 = np.floor(ob).astype(np.int64)
        fr = rb - r0
        fc = cb - c0
        fo = ob - o0

        hist = np.zeros((n, SPATIAL_GRID, SPATIAL_GRID, ORIENTATION_BINS))
        pidx = np.broadcast_to(np.arange(n)[:, None, None], (n, h, w))
        for dr in (0, 1):
            wr = np.where(dr == 0, 1.0 - fr, fr)
            rr = r0 + dr
            rok = (rr >= 0) & (rr < SPATIAL_GRID)
            for dc in (0, 1):
                wc = np.where(dc == 0, 1.0 - fc, fc)
                cc = c0 + dc
                cok = (cc >= 0) & (cc < SPATIAL_GRID)
                sok = np.broadcast_to(rok & cok, (n, h, w))
                for do in (0, 1):
                    wo = np.where(do == 0, 1.0 - fo, fo)
                    oo = (o0 + do) % ORIENTATION_BINS
                    contrib = weight * wr * wc * wo
                    np.add.at(
                        hist,
                        (
                            pidx[sok],
                            np.broadcast_to(rr, (n, h, w))[sok],
                            np.broadcast_to(cc, (n, h, w))[sok],
                            oo[sok],
                        ),
                        contrib[sok],
                    )

        vec = hist.reshape(n, self.dim)
        return _finalize(vec)


def _finalize(vec: np.ndarray) -> np.ndarray:
    """Normalize, clamp at 0.2, renormalize; zero vectors map to uniform."""
    out = np.empty_like(vec)
    norms = np.linalg.norm(vec, axis=1)
    uniform = np.full(vec.shape[1], 1.0 / math.sqrt(vec.shape[1]))
    for i, nrm in enumerate(norms):
        if nrm < 1e-12:
            out[i] = uniform
            continue
        v = np.minimum(vec[i] / nrm, _CLAMP)
        n2 = np.linalg.norm(v)
        out[i] = v / n2 if n2 > 1e-12 else uniform
    return out


_DEFAULT_BACKEND = GradientHistogramBackend()


def compute_descriptor(patch: np.ndarray | RasterImage) -> np.ndarray:
    """Descriptor of one 96x96 grayscale patch (unit L2 norm)."""
    if isinstance(patch, RasterImage):
        patch = patch.as_float()
    return _DEFAULT_BACKEND.compute(patch[None])[0]


def descriptors_for(
    img: RasterImage,
    minutiae: list[Minutia],
    backend: DescriptorBackend | None = None,
) -> np.ndarray:
    """Canonical patches + descriptors for every minutia of an image."""
    backend = backend or _DEFAULT_BACKEND
    patches = crop_canonical_patches(img, minutiae)
    return backend.compute(patches)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two descriptors (dot product of unit vectors)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(
            f"descriptor dimensions differ: {a.shape} vs {b.shape}"
        )
    return float(a @ b)
