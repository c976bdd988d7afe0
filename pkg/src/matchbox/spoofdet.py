"""Presentation-attack scoring for the two capture views, max-rule fusion,
and threshold calibration.

Score polarity is spoofness throughout: 1.0 means certainly fake, and a
capture is flagged when the fused score clears the threshold.  Max-rule
fusion is therefore security-conservative: one suspicious view is enough.

The per-view scorers are pluggable (image -> [0,1]); the classical
reference scorers below keep the tree free of learned weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, InvalidInputError
from .raster import RasterImage

VIEWS = ("direct", "ftir", "fused")

# Live-skin chromaticity reference (normalized-rg space), overridable per
# deployment via a JSON document {"mean": [r, g], "cov": [[..], [..]]}.
DEFAULT_SKIN_MEAN = (0.45, 0.33)
DEFAULT_SKIN_COV = ((0.0025, 0.0003), (0.0003, 0.0012))

_RG_BINS = 32

# Fixed logistic map for the FTIR scorer, tuned once on synthetic renders:
# live ridge flow ~(std .67, active .64, energy .20) -> ~0, flattened spoof
# ~(std .15) -> ~0.8, structureless ~(0, 0, 1) -> ~1.
_FTIR_BIAS = 4.0
_FTIR_W_STD = -14.0
_FTIR_W_ACTIVE = -1.5
_FTIR_W_ENERGY = 2.5


@dataclass(frozen=True)
class SpoofScore:
    value: float
    view: str

    def __post_init__(self) -> None:
        if self.view not in VIEWS:
            raise InvalidInputError(f"view must be one of {VIEWS}")
        object.__setattr__(self, "value", float(min(max(self.value, 0.0), 1.0)))


@dataclass
class SpoofDecision:
    fused: SpoofScore
    per_view: dict[str, float]
    is_spoof: bool
    threshold: float


@dataclass
class SkinModel:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(2)
        self.cov = np.asarray(self.cov, dtype=np.float64).reshape(2, 2)
        if np.linalg.det(self.cov) <= 0:
            raise InvalidInputError("skin model covariance must be positive definite")

    @classmethod
    def default(cls) -> "SkinModel":
        return cls(np.array(DEFAULT_SKIN_MEAN), np.array(DEFAULT_SKIN_COV))

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean.tolist(), "cov": self.cov.tolist()}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SkinModel":
        doc = json.loads(text)
        return cls(np.array(doc["mean"]), np.array(doc["cov"]))

    @classmethod
    def load(cls, path: str | Path) -> "SkinModel":
        return cls.from_json(Path(path).read_text())

    def bin_histogram(self, bins: int = _RG_BINS) -> np.ndarray:
        """Model chromaticity discretized onto the scoring grid."""
        centers = (np.arange(bins) + 0.5) / bins
        r, g = np.meshgrid(centers, centers, indexing="ij")
        d = np.stack([r - self.mean[0], g - self.mean[1]], axis=-1)
        inv = np.linalg.inv(self.cov)
        m2 = np.einsum("...i,ij,...j->...", d, inv, d)
        h = np.exp(-0.5 * m2)
        return h / h.sum()


def score_direct(img: RasterImage, model: SkinModel | None = None) -> SpoofScore:
    """Skin-color plausibility of the color view.

    Bhattacharyya distance between the image's normalized-rg histogram and
    the reference model, as 1 - sum(sqrt(p*q)) in [0, 1].
    """
    if img.channels != 3:
        raise InvalidInputError("direct-view scoring expects a color image")
    model = model or SkinModel.default()
    f = img.as_float()
    total = f.sum(axis=2)
    valid = total > 30.0
    if not valid.any():
        return SpoofScore(1.0, "direct")
    r = f[:, :, 0][valid] / total[valid]
    g = f[:, :, 1][valid] / total[valid]
    ri = np.clip((r * _RG_BINS).astype(int), 0, _RG_BINS - 1)
    gi = np.clip((g * _RG_BINS).astype(int), 0, _RG_BINS - 1)
    hist = np.zeros((_RG_BINS, _RG_BINS))
    np.add.at(hist, (ri, gi), 1.0)
    hist /= hist.sum()
    bc = float(np.sqrt(hist * model.bin_histogram()).sum())
    return SpoofScore(1.0 - bc, "direct")


def ftir_features(img: RasterImage) -> tuple[float, float, float]:
    """(contrast std, active-block fraction, co-occurrence energy)."""
    f = img.as_float()
    std = float(f.std()) / 127.5

    h, w = f.shape
    gh, gw = h // 16, w // 16
    if gh == 0 or gw == 0:
        active = 0.0
    else:
        blocks = f[: gh * 16, : gw * 16].reshape(gh, 16, gw, 16)
        active = float((blocks.var(axis=(1, 3)) >= 100.0).mean())

    q = np.clip((f / 16.0).astype(int), 0, 15)
    pmat = np.zeros((16, 16))
    np.add.at(pmat, (q[:, :-1].ravel(), q[:, 1:].ravel()), 1.0)
    pmat /= max(pmat.sum(), 1.0)
    energy = float((pmat * pmat).sum())
    return std, active, energy


def score_ftir(img: RasterImage) -> SpoofScore:
    """Ridge-structure plausibility of the FTIR view via a fixed logistic
    over contrast, block-variance activity, and co-occurrence energy."""
    if img.channels != 1:
        raise InvalidInputError("ftir scoring expects a grayscale image")
    std, active, energy = ftir_features(img)
    z = (
        _FTIR_BIAS
        + _FTIR_W_STD * std
        + _FTIR_W_ACTIVE * active
        + _FTIR_W_ENERGY * energy
    )
    return SpoofScore(1.0 / (1.0 + math.exp(-z)), "ftir")


def fuse_max(a: SpoofScore, b: SpoofScore) -> SpoofScore:
    """Max-rule fusion of the two per-view spoof scores."""
    if a.view != "direct" or b.view != "ftir":
        raise InvalidInputError(
            f"fuse_max expects (direct, ftir) scores, got ({a.view}, {b.view})"
        )
    return SpoofScore(max(a.value, b.value), "fused")


def decide(
    direct: RasterImage,
    ftir: RasterImage,
    threshold: float,
    model: SkinModel | None = None,
) -> SpoofDecision:
    """Score both views, fuse, and apply the threshold."""
    sd = score_direct(direct, model)
    sf = score_ftir(ftir)
    fused = fuse_max(sd, sf)
    return SpoofDecision(
        fused=fused,
        per_view={"direct": sd.value, "ftir": sf.value},
        is_spoof=fused.value >= threshold,
        threshold=threshold,
    )


@dataclass
class SpoofCalibration:
    threshold: float
    live_pass_rate: float
    spoof_pass_rate: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "threshold": self.threshold,
                "live_pass_rate": self.live_pass_rate,
                "spoof_pass_rate": self.spoof_pass_rate,
            },
            indent=2,
        )


def calibrate_threshold(
    spoof_scores: list[float] | np.ndarray,
    live_scores: list[float] | np.ndarray,
    target_far: float,
) -> SpoofCalibration:
    """Largest threshold t with fraction(spoof < t) <= target_far.

    A sample passes as live when its score is below t, so t is the
    (floor(far*N)+1)-th smallest spoof score.  target_far >= 1 returns the
    accept-everything sentinel +inf.
    """
    spoof = np.sort(np.asarray(spoof_scores, dtype=np.float64))
    live = np.asarray(live_scores, dtype=np.float64)
    if spoof.size == 0 or live.size == 0:
        raise InsufficientDataError("calibration needs both spoof and live scores")
    if target_far <= 0.0:
        raise InvalidInputError("target_far must be positive")
    if target_far >= 1.0:
        t = math.inf
    else:
        k = int(math.floor(target_far * spoof.size))
        t = float(spoof[min(k, spoof.size - 1)])
    return SpoofCalibration(
        threshold=t,
        live_pass_rate=float((live < t).mean()),
        spoof_pass_rate=float((spoof < t).mean()),
    )
