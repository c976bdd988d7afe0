"""Portable fingerprint recognition engine.

Pipeline: raw frame calibration -> minutiae extraction -> per-minutia
descriptors -> geometric descriptor matching, plus spoof scoring, a
persistent enrollment gallery with 1:N search, a CLI, and a JSON service.
"""

from .calib import (
    CalibrationProfile,
    CropRect,
    Homography,
    equalize,
    estimate_homography,
    find_checkerboard_corners,
    rectify_and_scale,
    to_grayscale,
)
from .descriptor import compute_descriptor, cosine, crop_canonical_patch
from .extract import Minutia, OrientationField, extract_template
from .matcher import CandidatePair, MatchResult, Template, match
from .raster import RasterImage, read_pnm, write_pnm
from .synth import SynthSpec, generate

__version__ = "0.1.0"

__all__ = [
    "CalibrationProfile",
    "CropRect",
    "Homography",
    "equalize",
    "estimate_homography",
    "find_checkerboard_corners",
    "rectify_and_scale",
    "to_grayscale",
    "compute_descriptor",
    "cosine",
    "crop_canonical_patch",
    "Minutia",
    "OrientationField",
    "extract_template",
    "CandidatePair",
    "MatchResult",
    "Template",
    "match",
    "RasterImage",
    "read_pnm",
    "write_pnm",
    "SynthSpec",
    "generate",
    "__version__",
]
