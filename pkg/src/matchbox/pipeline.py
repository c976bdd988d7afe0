"""Capture-to-decision pipeline shared by the CLI and the JSON service.

One request flows: decode views -> calibrate the FTIR frame (when a
profile is configured and the frame is uncalibrated) -> spoof gate ->
minutiae extraction + descriptors -> gallery operation.  Spoof checking
precedes feature extraction; only captures judged live reach the
extractor.  Every stage reports its wall time in ``timings_ms``.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .calib import CalibrationProfile, equalize, rectify_and_scale, to_grayscale
from .errors import (
    EmptyGalleryError,
    InvalidInputError,
    SpoofDetectedError,
)
from .extract import extract_template
from .gallery import GalleryStore
from .matcher import MatchParams
from .raster import RasterImage
from .spoofdet import SkinModel, decide

ENV_CONFIG = "MATCHBOX_CONFIG"

DEFAULT_SPOOF_THRESHOLD = 0.5


@dataclass
class PipelineConfig:
    """Service/CLI configuration document (JSON, schema in README).

    gallery_dir may be None for gallery-less commands (spoofcheck,
    rectify); gallery operations then raise invalid-input.
    """

    gallery_dir: str | None
    calibration_profile: str | None = None
    target_ppi: int = 500
    spoof_threshold: float = DEFAULT_SPOOF_THRESHOLD
    skin_model: str | None = None
    verify_threshold: float | None = None
    identify_threshold: float | None = None
    min_quality: float = 0.0

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        spoof = doc.get("spoof", {})
        thresholds = doc.get("thresholds", {})
        return cls(
            gallery_dir=doc["gallery_dir"],
            calibration_profile=doc.get("calibration_profile"),
            target_ppi=int(doc.get("target_ppi", 500)),
            spoof_threshold=float(spoof.get("threshold", DEFAULT_SPOOF_THRESHOLD)),
            skin_model=spoof.get("skin_model"),
            verify_threshold=thresholds.get("verify"),
            identify_threshold=thresholds.get("identify"),
            min_quality=float(doc.get("min_quality", 0.0)),
        )

    @classmethod
    def load(cls, path: str | Path | None = None) -> "PipelineConfig":
        if path is None:
            path = os.environ.get(ENV_CONFIG)
            if not path:
                raise InvalidInputError(
                    f"no config path given and {ENV_CONFIG} is not set"
                )
        cfg = cls.from_dict(json.loads(Path(path).read_text()))
        cfg.validate(base=Path(path).parent)
        return cfg

    def validate(self, base: Path | None = None) -> None:
        """Referenced paths must exist at startup."""

        def resolve(p: str) -> Path:
            q = Path(p)
            if not q.is_absolute() and base is not None:
                q = base / q
            return q

        for name in ("calibration_profile", "skin_model"):
            value = getattr(self, name)
            if value is not None:
                resolved = resolve(value)
                if not resolved.exists():
                    raise InvalidInputError(f"{name} path {resolved} does not exist")
                setattr(self, name, str(resolved))
        if self.gallery_dir is not None:
            gdir = resolve(self.gallery_dir)
            gdir.mkdir(parents=True, exist_ok=True)
            self.gallery_dir = str(gdir)


class Timings:
    """Per-stage wall-clock accumulator reported with every response."""

    def __init__(self) -> None:
        self.ms: dict[str, float] = {}

    def stage(self, name: str):
        outer = self

        class _Span:
            def __enter__(self):
                self.t0 = time.perf_counter()
                return self

            def __exit__(self, *exc):
                outer.ms[name] = round((time.perf_counter() - self.t0) * 1000.0, 3)
                return False

        return _Span()


@dataclass
class Pipeline:
    config: PipelineConfig
    store: GalleryStore | None = field(init=False, default=None)
    profile: CalibrationProfile | None = field(init=False, default=None)
    skin: SkinModel | None = field(init=False, default=None)
    match_params: MatchParams = field(init=False, default_factory=MatchParams)

    def __post_init__(self) -> None:
        if self.config.gallery_dir is not None:
            self.store = GalleryStore(self.config.gallery_dir)
            if self.config.verify_threshold is not None:
                self.store.verify_threshold = float(self.config.verify_threshold)
            if self.config.identify_threshold is not None:
                self.store.identify_threshold = float(self.config.identify_threshold)
        if self.config.calibration_profile:
            self.profile = CalibrationProfile.load(self.config.calibration_profile)
        if self.config.skin_model:
            self.skin = SkinModel.load(self.config.skin_model)

    def _require_store(self) -> GalleryStore:
        if self.store is None:
            raise InvalidInputError("no gallery configured for this operation")
        return self.store

    # -- stages ------------------------------------------------------------

    def calibrate_ftir(self, img: RasterImage) -> RasterImage:
        """Four-step calibration for raw frames; calibrated frames (ppi
        metadata present) pass through untouched."""
        if img.has_ppi:
            return img if img.channels == 1 else to_grayscale(img)
        gray = to_grayscale(img) if img.channels == 3 else img
        gray = equalize(gray)
        if self.profile is None:
            return gray
        return rectify_and_scale(gray, self.profile, self.config.target_ppi)

    def spoof_gate(self, direct: RasterImage, ftir: RasterImage):
        decision = decide(direct, ftir, self.config.spoof_threshold, self.skin)
        report = {
            "per_view": decision.per_view,
            "fused": decision.fused.value,
            "threshold": decision.threshold,
            "is_spoof": decision.is_spoof,
        }
        return decision, report

    # -- operations shared by CLI and HTTP ----------------------------------

    def process_capture(self, direct: RasterImage, ftir: RasterImage, timings: Timings):
        """Spoof gate then extraction; raises SpoofDetectedError on spoofs."""
        with timings.stage("calibrate"):
            gray = self.calibrate_ftir(ftir)
        with timings.stage("spoof_check"):
            decision, report = self.spoof_gate(direct, gray)
        if decision.is_spoof:
            err = SpoofDetectedError(
                f"capture flagged as spoof (fused {decision.fused.value:.3f} "
                f">= {decision.threshold})"
            )
            err.spoof = report
            raise err
        with timings.stage("extract"):
            template = extract_template(gray, self.config.min_quality)
        return template, report

    def enroll_capture(
        self,
        subject_id: str,
        finger: int,
        direct: RasterImage,
        ftir: RasterImage,
        metadata: dict | None = None,
    ) -> dict:
        store = self._require_store()
        timings = Timings()
        template, spoof = self.process_capture(direct, ftir, timings)
        with timings.stage("enroll"):
            record = store.enroll(subject_id, {finger: template}, metadata)
        return {
            "record": record.summary(),
            "spoof": spoof,
            "timings_ms": timings.ms,
        }

    def identify_capture(
        self,
        direct: RasterImage,
        ftir: RasterImage,
        top_n: int = 10,
        workers: int = 1,
    ) -> dict:
        store = self._require_store()
        if top_n <= 0:
            raise InvalidInputError("top_n must be positive")
        if len(store) == 0:
            raise EmptyGalleryError("gallery is empty")
        timings = Timings()
        template, spoof = self.process_capture(direct, ftir, timings)
        with timings.stage("search"):
            hits = store.identify(
                template, top_n=top_n, workers=workers, params=self.match_params
            )
        return {
            "hits": [h.to_dict() for h in hits],
            "spoof": spoof,
            "probe_minutiae": len(template),
            "timings_ms": timings.ms,
        }

    def verify_capture(
        self,
        subject_id: str,
        finger: int,
        direct: RasterImage,
        ftir: RasterImage,
    ) -> dict:
        store = self._require_store()
        timings = Timings()
        template, spoof = self.process_capture(direct, ftir, timings)
        with timings.stage("match"):
            result = store.verify(subject_id, finger, template, params=self.match_params)
        return {
            "subject_id": subject_id,
            "finger": finger,
            "score": result.score,
            "matched_pairs": len(result.pairs),
            "decision": result.decision,
            "threshold": result.threshold_used,
            "spoof": spoof,
            "timings_ms": timings.ms,
        }

    def spoof_report(self, direct: RasterImage, ftir: RasterImage) -> dict:
        timings = Timings()
        with timings.stage("calibrate"):
            gray = self.calibrate_ftir(ftir)
        with timings.stage("spoof_check"):
            _, report = self.spoof_gate(direct, gray)
        return {"spoof": report, "timings_ms": timings.ms}

    def subject_summary(self, subject_id: str) -> dict:
        return self._require_store().get(subject_id).summary()

    def stats(self) -> dict:
        store = self._require_store()
        return {
            "size": len(store),
            "index_version": store.index_version,
            "capacity": store.capacity,
            "thresholds": {
                "verify": store.verify_threshold,
                "identify": store.identify_threshold,
            },
        }
