"""Persistent enrollment gallery and 1:N identification.

Layout: one directory per gallery holding ``manifest.json`` (ids, finger
codes, metadata, thresholds) plus one ``.mbt`` template file per
(subject, finger).  Every mutation writes new files and atomically
renames the manifest, so a crash mid-write leaves the previous store
readable.  Search is an exact linear scan; a sharded fork-based parallel
scan is the performance lever for large galleries.

Concurrency: single writer (enrollments serialize through a lock),
readers work off immutable snapshots taken under that lock.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateSubjectError,
    InsufficientDataError,
    InvalidInputError,
    NotFoundError,
    StoreCorruptError,
)
from .matcher import MatchParams, MatchResult, Template, match
from .mbt import load_template, save_template

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_CAPACITY = 10_000
DEFAULT_VERIFY_THRESHOLD = 10.0
DEFAULT_IDENTIFY_THRESHOLD = 10.0

FINGER_CODES = tuple(range(11))  # ISO finger positions 0..10


@dataclass
class GalleryRecord:
    subject_id: str
    fingers: dict[int, Template]
    metadata: dict
    enrolled_at: str

    def summary(self) -> dict:
        """Wire-safe view: metadata and per-finger stats, no descriptors."""
        return {
            "subject_id": self.subject_id,
            "enrolled_at": self.enrolled_at,
            "metadata": self.metadata,
            "fingers": {
                str(code): {"minutiae": len(t), "quality": t.quality_summary}
                for code, t in sorted(self.fingers.items())
            },
        }


@dataclass
class SearchHit:
    subject_id: str
    finger: int
    score: float
    rank: int

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "finger": self.finger,
            "score": self.score,
            "rank": self.rank,
        }


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    dir_fd = os.open(path.parent, os.O_RDONLY)
    try:
        os.fsync(dir_fd)
    finally:
        os.close(dir_fd)


class GalleryStore:
    """Directory-backed template store with linear-scan identification."""

    def __init__(
        self,
        root: str | Path,
        capacity: int = DEFAULT_CAPACITY,
        create: bool = True,
    ):
        self.root = Path(root)
        self.capacity = capacity
        self.verify_threshold = DEFAULT_VERIFY_THRESHOLD
        self.identify_threshold = DEFAULT_IDENTIFY_THRESHOLD
        self.index_version = 0
        self.records: dict[str, GalleryRecord] = {}
        self._lock = threading.Lock()
        self._next_file_id = 0
        self._file_names: dict[tuple[str, int], str] = {}
        manifest = self.root / "manifest.json"
        if manifest.exists():
            self._load()
        elif create:
            self.root.mkdir(parents=True, exist_ok=True)
            self._write_manifest()
        else:
            raise NotFoundError(f"no gallery at {self.root}")

    # -- persistence -------------------------------------------------------

    def _manifest_doc(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "index_version": self.index_version,
            "capacity": self.capacity,
            "thresholds": {
                "verify": self.verify_threshold,
                "identify": self.identify_threshold,
            },
            "next_file_id": self._next_file_id,
            "records": {
                sid: {
                    "enrolled_at": rec.enrolled_at,
                    "metadata": rec.metadata,
                    "fingers": {
                        str(code): self._file_names[(sid, code)]
                        for code in sorted(rec.fingers)
                    },
                }
                for sid, rec in self.records.items()
            },
        }

    def _write_manifest(self) -> None:
        doc = json.dumps(self._manifest_doc(), indent=2, sort_keys=True)
        _atomic_write(self.root / "manifest.json", doc.encode())

    def _load(self) -> None:
        try:
            doc = json.loads((self.root / "manifest.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise StoreCorruptError(f"unreadable manifest in {self.root}: {exc}") from exc
        if doc.get("format_version") != FORMAT_VERSION:
            raise StoreCorruptError(
                f"unsupported gallery format {doc.get('format_version')}"
            )
        self.index_version = int(doc["index_version"])
        self.capacity = int(doc.get("capacity", DEFAULT_CAPACITY))
        th = doc.get("thresholds", {})
        self.verify_threshold = float(th.get("verify", DEFAULT_VERIFY_THRESHOLD))
        self.identify_threshold = float(th.get("identify", DEFAULT_IDENTIFY_THRESHOLD))
        self._next_file_id = int(doc.get("next_file_id", 0))
        for sid, rd in doc["records"].items():
            fingers: dict[int, Template] = {}
            for code_str, fname in rd["fingers"].items():
                code = int(code_str)
                fingers[code] = load_template(self.root / fname)
                self._file_names[(sid, code)] = fname
            self.records[sid] = GalleryRecord(
                subject_id=sid,
                fingers=fingers,
                metadata=rd.get("metadata", {}),
                enrolled_at=rd.get("enrolled_at", ""),
            )

    # -- write path ----------------------------------------------------------

    def enroll(
        self,
        subject_id: str,
        fingers: dict[int, Template],
        metadata: dict | None = None,
    ) -> GalleryRecord:
        """Durably persist a new subject; the manifest rename commits it."""
        if not subject_id:
            raise InvalidInputError("subject_id must be non-empty")
        if not fingers:
            raise InvalidInputError("at least one finger template is required")
        for code in fingers:
            if code not in FINGER_CODES:
                raise InvalidInputError(f"finger code {code} outside ISO 0..10")
        with self._lock:
            if subject_id in self.records:
                raise DuplicateSubjectError(f"subject {subject_id!r} already enrolled")
            for code, template in sorted(fingers.items()):
                fname = f"t{self._next_file_id:06d}_f{code}.mbt"
                self._next_file_id += 1
                save_template(template, self.root / fname)
                self._file_names[(subject_id, code)] = fname
            record = GalleryRecord(
                subject_id=subject_id,
                fingers=dict(fingers),
                metadata=metadata or {},
                enrolled_at=datetime.now(timezone.utc).isoformat(),
            )
            self.records[subject_id] = record
            self.index_version += 1
            self._write_manifest()
            if len(self.records) > self.capacity:
                log.warning(
                    "gallery %s holds %d records, over the %d soft capacity",
                    self.root,
                    len(self.records),
                    self.capacity,
                )
        return record

    # -- read path -----------------------------------------------------------

    def get(self, subject_id: str) -> GalleryRecord:
        rec = self.records.get(subject_id)
        if rec is None:
            raise NotFoundError(f"subject {subject_id!r} not enrolled")
        return rec

    def __len__(self) -> int:
        return len(self.records)

    def verify(
        self,
        subject_id: str,
        finger: int,
        probe: Template,
        threshold: float | None = None,
        params: MatchParams | None = None,
    ) -> MatchResult:
        rec = self.get(subject_id)
        if finger not in rec.fingers:
            raise NotFoundError(f"subject {subject_id!r} has no finger {finger}")
        t = threshold if threshold is not None else self.verify_threshold
        return match(probe, rec.fingers[finger], threshold=t, params=params)

    def _snapshot(self) -> list[tuple[str, int, Template]]:
        with self._lock:
            return [
                (sid, code, t)
                for sid, rec in self.records.items()
                for code, t in rec.fingers.items()
            ]

    def identify(
        self,
        probe: Template,
        top_n: int = 10,
        workers: int = 1,
        params: MatchParams | None = None,
    ) -> list[SearchHit]:
        """Rank all subjects against the probe.

        A subject's score is the max over its enrolled fingers; ties break
        on subject_id, so the ranking is independent of enrollment order
        and of the degree of parallelism.
        """
        if top_n <= 0:
            raise InvalidInputError("top_n must be positive")
        entries = self._snapshot()
        if not entries:
            return []
        scored = _scan(probe, entries, workers, params)
        best: dict[str, tuple[float, int]] = {}
        for sid, code, score in scored:
            cur = best.get(sid)
            if cur is None or score > cur[0] or (score == cur[0] and code < cur[1]):
                best[sid] = (score, code)
        ranked = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[0]))
        return [
            SearchHit(subject_id=sid, finger=code, score=score, rank=r + 1)
            for r, (sid, (score, code)) in enumerate(ranked[:top_n])
        ]


# -- linear scan (sequential or fork-parallel) ------------------------------

_WORKER_CTX: dict = {}


def _scan_chunk(bounds: tuple[int, int]) -> list[tuple[str, int, float]]:
    lo, hi = bounds
    probe = _WORKER_CTX["probe"]
    entries = _WORKER_CTX["entries"]
    params = _WORKER_CTX["params"]
    out = []
    for sid, code, t in entries[lo:hi]:
        r = match(probe, t, threshold=-math.inf, params=params)
        out.append((sid, code, r.score))
    return out


def _scan(
    probe: Template,
    entries: list[tuple[str, int, Template]],
    workers: int,
    params: MatchParams | None,
) -> list[tuple[str, int, float]]:
    import multiprocessing as mp

    _WORKER_CTX.update(probe=probe, entries=entries, params=params)
    try:
        if workers <= 1 or len(entries) < 8:
            return _scan_chunk((0, len(entries)))
        try:
            ctx = mp.get_context("fork")
        except ValueError:  # platform without fork: stay sequential
            return _scan_chunk((0, len(entries)))
        n = len(entries)
        step = math.ceil(n / (workers * 4))
        bounds = [(lo, min(lo + step, n)) for lo in range(0, n, step)]
        with ctx.Pool(processes=workers) as pool:
            chunks = pool.map(_scan_chunk, bounds)
        return [item for chunk in chunks for item in chunk]
    finally:
        _WORKER_CTX.clear()


# -- decision threshold calibration -----------------------------------------


@dataclass
class MatchCalibration:
    threshold: float
    genuine_accept_rate: float
    imposter_accept_rate: float
    accept_all: bool = field(default=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "threshold": self.threshold,
                "genuine_accept_rate": self.genuine_accept_rate,
                "imposter_accept_rate": self.imposter_accept_rate,
                "accept_all": self.accept_all,
            },
            indent=2,
        )


def calibrate_match_threshold(
    genuine: list[float] | np.ndarray,
    imposter: list[float] | np.ndarray,
    target_far: float,
) -> MatchCalibration:
    """Smallest threshold t with fraction(imposter >= t) <= target_far.

    A comparison is accepted when score >= t, so t is the next float above
    the imposter (1 - far) quantile.  target_far >= 1 returns the
    accept-all sentinel -inf, flagged in the result.
    """
    gen = np.asarray(genuine, dtype=np.float64)
    imp = np.sort(np.asarray(imposter, dtype=np.float64))
    if gen.size == 0 or imp.size == 0:
        raise InsufficientDataError("calibration needs both score sets")
    if target_far <= 0.0:
        raise InvalidInputError("target_far must be positive")
    if target_far >= 1.0:
        t = -math.inf
        accept_all = True
    else:
        k = int(math.floor(target_far * imp.size))
        # allow at most k imposters at/above t: step just past the
        # (k+1)-th largest imposter score
        t = float(np.nextafter(imp[imp.size - 1 - k], np.inf))
        accept_all = False
    return MatchCalibration(
        threshold=t,
        genuine_accept_rate=float((gen >= t).mean()),
        imposter_accept_rate=float((imp >= t).mean()),
        accept_all=accept_all,
    )
