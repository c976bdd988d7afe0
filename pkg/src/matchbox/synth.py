"""Deterministic synthetic fingerprints with ground-truthed minutiae.

Images are rendered from a smooth ridge-phase field (arch / loop / whorl
flow families with randomized placement) plus one unit phase spiral per
injected minutia: a +-2*pi winding makes exactly one ridge (or valley)
terminate at the spiral center, which reads back as an ending (or
bifurcation).  The injected direction follows the empirically pinned law

    theta = angle(grad u) - sign * pi/2

where u is the base phase surface in ridge-period units.  All randomness
comes from numpy's seeded PCG64 generator, so every artifact is a pure
function of (spec, seed) and reproduces across platforms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError
from .extract import Minutia
from .raster import RasterImage

TWO_PI = 2.0 * math.pi

SINGULARITY_TYPES = ("arch", "loop", "whorl")

# Placement margins (px): inside the foreground, away from other minutiae
# and from tightly curved base-field structure.
EDGE_MARGIN = 24
CORE_CLEARANCE = 28
FOLD_CLEARANCE = 12


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    width: int = 288
    height: int = 320
    ridge_freq: float = 0.11
    minutiae_count: int = 30
    singularity: str = "loop"

    def __post_init__(self) -> None:
        if not 0 <= self.minutiae_count <= 64:
            raise InvalidInputError("minutiae_count must lie in [0, 64]")
        if not 0.05 <= self.ridge_freq <= 0.25:
            raise InvalidInputError("ridge_freq must lie in [0.05, 0.25]")
        if self.singularity not in SINGULARITY_TYPES:
            raise InvalidInputError(f"singularity must be one of {SINGULARITY_TYPES}")
        if self.width < 128 or self.height < 128:
            raise InvalidInputError("image must be at least 128x128")


@dataclass
class GroundTruth:
    minutiae: list[Minutia] = dc_field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "minutiae": [
                    {
                        "x": m.x,
                        "y": m.y,
                        "theta": m.theta,
                        "kind": m.kind,
                        "quality": m.quality,
                    }
                    for m in self.minutiae
                ]
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        doc = json.loads(text)
        return cls(
            [
                Minutia(d["x"], d["y"], d["theta"], d["kind"], d.get("quality", 1.0))
                for d in doc["minutiae"]
            ]
        )


class _BaseField:
    """Base phase surface u (ridge-period units) for one flow family."""

    def __init__(self, spec: SynthSpec, rng: np.random.Generator):
        w, h = spec.width, spec.height
        self.cx = w / 2.0 + rng.uniform(-0.05, 0.05) * w
        self.cy = h / 2.0 + rng.uniform(-0.05, 0.05) * h
        self.kind = spec.singularity
        self.rot = {
            "arch": rng.uniform(-0.35, 0.35),
            "loop": rng.uniform(-0.5, 0.5),
            "whorl": 0.0,
        }[spec.singularity]
        if spec.singularity == "arch":
            self.amp = rng.uniform(18.0, 30.0)
            self.sx = rng.uniform(0.3, 0.4) * w
            self.sy = rng.uniform(0.25, 0.35) * h
        elif spec.singularity == "loop":
            self.hair = rng.uniform(10.0, 14.0)
        else:
            self.ex = rng.uniform(0.88, 1.12)
            self.ey = rng.uniform(0.88, 1.12)

    def _local(self, x, y):
        c, s = math.cos(self.rot), math.sin(self.rot)
        dx, dy = x - self.cx, y - self.cy
        return dx * c + dy * s, -dx * s + dy * c

    def u(self, x, y):
        lx, ly = self._local(np.asarray(x, float), np.asarray(y, float))
        if self.kind == "arch":
            bump = self.amp * np.exp(
                -(lx * lx) / (2 * self.sx**2) - (ly * ly) / (2 * self.sy**2)
            )
            return ly - bump
        if self.kind == "loop":
            a = self.hair
            sp = a * np.log1p(np.exp(np.clip(lx / a, -60, 60)))
            return np.sqrt(ly * ly + sp * sp)
        return np.sqrt((self.ex * lx) ** 2 + (self.ey * ly) ** 2)

    def grad_angle(self, x: float, y: float) -> float:
        h = 0.5
        du_dx = float(self.u(x + h, y) - self.u(x - h, y)) / (2 * h)
        du_dy = float(self.u(x, y + h) - self.u(x, y - h)) / (2 * h)
        return math.atan2(du_dy, du_dx)

    def placement_ok(self, x: float, y: float) -> bool:
        lx, ly = self._local(x, y)
        if self.kind == "arch":
            return True
        if self.kind == "loop":
            if math.hypot(lx, ly) < CORE_CLEARANCE:
                return False
            # the hairpin fold line runs along ly=0 on the open side
            return not (lx < 0 and abs(ly) < FOLD_CLEARANCE)
        return math.hypot(lx, ly) >= CORE_CLEARANCE


def _foreground_mask(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    w, h = spec.width, spec.height
    ax = (0.40 + rng.uniform(0.0, 0.04)) * w
    ay = (0.42 + rng.uniform(0.0, 0.04)) * h
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return ((xx - w / 2.0) / ax) ** 2 + ((yy - h / 2.0) / ay) ** 2 <= 1.0


def _place_minutiae(
    spec: SynthSpec,
    base: _BaseField,
    interior: np.ndarray,
    rng: np.random.Generator,
) -> list[tuple[float, float, int]]:
    """Rejection-sample spiral sites; returns (x, y, sign) triples."""
    sep = 18.0 if spec.minutiae_count <= 40 else 15.0
    ys, xs = np.nonzero(interior)
    if len(xs) == 0:
        raise InvalidInputError("foreground too small for minutiae placement")
    signs = np.tile([1, -1], (spec.minutiae_count + 1) // 2)[: spec.minutiae_count]
    placed: list[tuple[float, float, int]] = []
    attempts = 0
    max_attempts = 20000
    while len(placed) < spec.minutiae_count and attempts < max_attempts:
        attempts += 1
        k = int(rng.integers(len(xs)))
        x, y = float(xs[k]), float(ys[k])
        if not base.placement_ok(x, y):
            continue
        if any((x - px) ** 2 + (y - py) ** 2 < sep * sep for px, py, _ in placed):
            continue
        placed.append((x, y, int(signs[len(placed)])))
    if len(placed) < spec.minutiae_count:
        raise InvalidInputError(
            f"could not place {spec.minutiae_count} minutiae (got {len(placed)}); "
            "enlarge the image or reduce the count"
        )
    return placed


def generate(spec: SynthSpec) -> tuple[RasterImage, GroundTruth]:
    """Render a synthetic print and its injected ground truth."""
    rng = np.random.default_rng(spec.seed)
    base = _BaseField(spec, rng)
    mask = _foreground_mask(spec, rng)
    dist = ndimage.distance_transform_edt(mask)
    interior = dist >= EDGE_MARGIN

    sites = _place_minutiae(spec, base, interior, rng)

    h, w = spec.height, spec.width
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    psi = TWO_PI * spec.ridge_freq * base.u(xx, yy) + rng.uniform(0.0, TWO_PI)
    for x, y, sign in sites:
        psi = psi + sign * np.arctan2(yy - y, xx - x)

    amp = rng.uniform(105.0, 120.0)
    ridges = 127.5 - amp * np.cos(psi)
    fade = np.clip(dist / 8.0, 0.0, 1.0)
    img = fade * ridges + (1.0 - fade) * 255.0
    raster = RasterImage(
        np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8),
        ppi_x=500.0,
        ppi_y=500.0,
    )

    truth = GroundTruth()
    for x, y, sign in sites:
        alpha = base.grad_angle(x, y)
        theta = (alpha - sign * math.pi / 2.0) % TWO_PI
        # The spiral terminates a dark (ridge) stripe or a bright (valley)
        # stripe depending on the local phase; sample the render to tell.
        y0, y1 = max(0, int(y) - 1), min(h, int(y) + 2)
        x0, x1 = max(0, int(x) - 1), min(w, int(x) + 2)
        kind = "ending" if ridges[y0:y1, x0:x1].mean() < 127.5 else "bifurcation"
        truth.minutiae.append(Minutia(x, y, theta, kind, 1.0))
    return raster, truth


# ---------------------------------------------------------------------------
# Template-level perturbation models


def template_from_truth(img: RasterImage, truth: GroundTruth, source_ppi: int = 500):
    """Template with ground-truth minutiae and image-derived descriptors."""
    from .descriptor import descriptors_for
    from .matcher import Template

    desc = descriptors_for(img, truth.minutiae)
    return Template.build(truth.minutiae, desc, source_ppi=source_ppi)


def perturb_genuine(
    t,
    seed: int,
    jitter_px: float = 0.0,
    drop_rate: float = 0.0,
    rot: float = 0.0,
    trans: tuple[float, float] = (0.0, 0.0),
):
    """Genuine-pair model: rigid motion + positional jitter + random drops.

    Descriptors ride along unchanged; the count dropped is
    floor(drop_rate * n).  Deterministic per seed.
    """
    from .matcher import Template

    if not 0.0 <= drop_rate <= 0.5:
        raise InvalidInputError("drop_rate must lie in [0, 0.5]")
    rng = np.random.default_rng(seed)
    n = len(t)
    xy = t.xy.astype(np.float64)
    centroid = xy.mean(axis=0) if n else np.zeros(2)
    c, s = math.cos(rot), math.sin(rot)
    rot_mat = np.array([[c, -s], [s, c]])
    new_xy = (xy - centroid) @ rot_mat.T + centroid + np.asarray(trans, float)
    if jitter_px > 0:
        new_xy = new_xy + rng.normal(0.0, jitter_px, size=(n, 2))
    new_theta = (t.theta.astype(np.float64) + rot) % TWO_PI

    keep = np.arange(n)
    n_drop = int(math.floor(drop_rate * n))
    if n_drop > 0:
        dropped = rng.choice(n, size=n_drop, replace=False)
        keep = np.setdiff1d(keep, dropped)
    return Template(
        xy=new_xy[keep],
        theta=new_theta[keep],
        kinds=t.kinds[keep],
        quality=t.quality[keep],
        descriptors=t.descriptors[keep],
        source_ppi=t.source_ppi,
    )


def imposter_pair(seed: int, minutiae_count: int = 25):
    """Two templates from independent specs (different flow families)."""
    rng = np.random.default_rng(seed)
    kinds = rng.permutation(SINGULARITY_TYPES)[:2]
    sub = rng.integers(0, 2**63 - 1, size=2)
    out = []
    for k, ss in zip(kinds, sub):
        spec = SynthSpec(
            seed=int(ss),
            width=224,
            height=256,
            minutiae_count=minutiae_count,
            singularity=str(k),
        )
        img, truth = generate(spec)
        out.append(template_from_truth(img, truth))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# Capture-view synthesis for spoof-detector calibration (stand-ins for
# fabricated spoof material datasets)


def synth_direct_view(
    gray: RasterImage, seed: int, spoof: bool = False
) -> RasterImage:
    """Color direct-view image: per-pixel chromaticity drawn from the live
    skin model (or a shifted/narrowed one for spoof material)."""
    from .spoofdet import DEFAULT_SKIN_COV, DEFAULT_SKIN_MEAN

    rng = np.random.default_rng(seed)
    h, w = gray.height, gray.width
    mean = np.array(DEFAULT_SKIN_MEAN)
    cov = np.array(DEFAULT_SKIN_COV)
    if spoof:
        shift = rng.uniform(0.06, 0.14) * rng.choice([-1.0, 1.0], size=2)
        mean = np.clip(mean + shift, 0.05, 0.8)
        cov = cov * 0.25
    rg = rng.multivariate_normal(mean, cov, size=h * w).reshape(h, w, 2)
    rg = np.clip(rg, 0.02, 0.9)
    b = np.clip(1.0 - rg.sum(axis=2), 0.02, 0.9)

    v = 150.0 + 0.35 * (gray.as_float() - 127.5)
    total = 3.0 * v
    data = np.stack([rg[:, :, 0] * total, rg[:, :, 1] * total, b * total], axis=-1)
    return RasterImage(np.clip(np.floor(data + 0.5), 0, 255).astype(np.uint8))


def degrade_ftir(gray: RasterImage, seed: int) -> RasterImage:
    """Spoof-like FTIR view: flattened contrast and smeared ridge detail."""
    rng = np.random.default_rng(seed)
    f = ndimage.gaussian_filter(gray.as_float(), 1.6)
    flat = 127.5 + 0.28 * (f - 127.5) + rng.normal(0.0, 2.0, size=f.shape)
    return gray.copy_with(np.clip(np.floor(flat + 0.5), 0, 255).astype(np.uint8))
