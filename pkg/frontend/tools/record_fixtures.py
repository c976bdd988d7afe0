"""Record service responses as console test fixtures.

Spins the JSON service on synthetic captures and saves each endpoint's
response (status + body) under frontend/fixtures/.  Rerun after any wire
format change: the console contract tests consume these files verbatim.

Usage: python3 tools/record_fixtures.py   (from frontend/)
"""

from __future__ import annotations

import io
import json
import sys
import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from matchbox import synth
from matchbox.pipeline import Pipeline, PipelineConfig
from matchbox.raster import RasterImage, write_pnm
from matchbox.service import create_app

OUT = Path(__file__).resolve().parent.parent / "fixtures"


def pnm_bytes(img) -> bytes:
    with tempfile.NamedTemporaryFile(suffix=".pnm") as fh:
        write_pnm(img, fh.name)
        return Path(fh.name).read_bytes()


def record(name: str, response) -> None:
    doc = {"status": response.status_code, "body": response.json()}
    (OUT / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(f"recorded {name}.json ({response.status_code})")


def files_for(ftir, direct):
    return {
        "direct": ("d.ppm", io.BytesIO(pnm_bytes(direct)), "image/x-portable-pixmap"),
        "ftir": ("f.pgm", io.BytesIO(pnm_bytes(ftir)), "image/x-portable-graymap"),
    }


def main() -> int:
    OUT.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        cfg = PipelineConfig(gallery_dir=f"{tmp}/gallery", spoof_threshold=0.5)
        client = TestClient(create_app(Pipeline(cfg)), raise_server_exceptions=False)

        img, _ = synth.generate(synth.SynthSpec(seed=2024, minutiae_count=26))
        direct = synth.synth_direct_view(img, 7, spoof=False)
        flat = RasterImage(np.full((256, 288), 128, np.uint8))

        record(
            "identify_empty",
            client.post("/api/identify", files=files_for(img, direct)),
        )
        record(
            "enroll_success",
            client.post(
                "/api/enroll",
                files=files_for(img, direct),
                data={
                    "subject_id": "subject-0007",
                    "finger": "1",
                    "metadata": json.dumps(
                        {"name": "Fixture Seven", "ward": 3, "consent": True}
                    ),
                },
            ),
        )
        record(
            "enroll_duplicate",
            client.post(
                "/api/enroll",
                files=files_for(img, direct),
                data={"subject_id": "subject-0007", "finger": "1"},
            ),
        )
        record(
            "enroll_spoof",
            client.post(
                "/api/enroll",
                files=files_for(flat, direct),
                data={"subject_id": "subject-0008", "finger": "2"},
            ),
        )
        probe_img, _ = synth.generate(synth.SynthSpec(seed=2024, minutiae_count=26))
        record(
            "identify_success",
            client.post(
                "/api/identify",
                files=files_for(probe_img, direct),
                data={"top_n": "5"},
            ),
        )
        record(
            "identify_spoof",
            client.post(
                "/api/identify", files=files_for(flat, direct), data={"top_n": "5"}
            ),
        )
        record("subject", client.get("/api/subjects/subject-0007"))
        record("subject_missing", client.get("/api/subjects/ghost"))
        record("stats", client.get("/api/stats"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
