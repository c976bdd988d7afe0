import io
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from matchbox import synth
from matchbox.errors import ERROR_CODES
from matchbox.pipeline import Pipeline, PipelineConfig
from matchbox.raster import RasterImage, write_pnm
from matchbox.service import create_app


def pnm_bytes(img) -> bytes:
    import tempfile, os

    with tempfile.NamedTemporaryFile(suffix=".pnm", delete=False) as fh:
        name = fh.name
    write_pnm(img, name)
    data = open(name, "rb").read()
    os.unlink(name)
    return data


@pytest.fixture(scope="module")
def capture():
    img, truth = synth.generate(synth.SynthSpec(seed=301, minutiae_count=25))
    direct = synth.synth_direct_view(img, 5, spoof=False)
    return img, direct, truth


@pytest.fixture()
def client(tmp_path, capture):
    cfg = PipelineConfig(gallery_dir=str(tmp_path / "gal"), spoof_threshold=0.5)
    app = create_app(Pipeline(cfg))
    return TestClient(app, raise_server_exceptions=False)


def post_capture(client, url, ftir, direct, extra=None):
    files = {
        "direct": ("d.ppm", io.BytesIO(pnm_bytes(direct)), "image/x-portable-pixmap"),
        "ftir": ("f.pgm", io.BytesIO(pnm_bytes(ftir)), "image/x-portable-graymap"),
    }
    return client.post(url, files=files, data=extra or {})


def test_health_and_stats(client):
    assert client.get("/api/health").json() == {"status": "ok"}
    stats = client.get("/api/stats").json()
    assert stats["size"] == 0 and "index_version" in stats


def test_enroll_identify_subject_flow(client, capture):
    ftir, direct, _ = capture
    r = post_capture(
        client,
        "/api/enroll",
        ftir,
        direct,
        {"subject_id": "alice", "finger": "1", "metadata": json.dumps({"ward": 7})},
    )
    assert r.status_code == 201, r.text
    body = r.json()
    assert body["record"]["subject_id"] == "alice"
    assert body["spoof"]["is_spoof"] is False
    assert "timings_ms" in body and "extract" in body["timings_ms"]

    r2 = post_capture(client, "/api/identify", ftir, direct, {"top_n": "5"})
    assert r2.status_code == 200
    hits = r2.json()["hits"]
    assert hits[0]["subject_id"] == "alice" and hits[0]["rank"] == 1

    r3 = client.get("/api/subjects/alice")
    assert r3.status_code == 200
    doc = r3.json()
    assert doc["metadata"] == {"ward": 7}
    assert doc["fingers"]["1"]["minutiae"] > 0

    assert client.get("/api/stats").json()["size"] == 1


def test_verify_endpoint(client, capture):
    ftir, direct, _ = capture
    post_capture(
        client, "/api/enroll", ftir, direct, {"subject_id": "bob", "finger": "0"}
    )
    r = post_capture(
        client, "/api/verify", ftir, direct, {"subject_id": "bob", "finger": "0"}
    )
    assert r.status_code == 200
    body = r.json()
    assert body["decision"] == "accept"
    assert body["score"] > 0


def test_duplicate_subject_code(client, capture):
    ftir, direct, _ = capture
    post_capture(client, "/api/enroll", ftir, direct, {"subject_id": "carl", "finger": "0"})
    r = post_capture(client, "/api/enroll", ftir, direct, {"subject_id": "carl", "finger": "0"})
    assert r.status_code == 409
    assert r.json()["code"] == "duplicate_subject"


def test_spoof_detected_on_enroll(client, capture):
    ftir, direct, _ = capture
    flat = RasterImage(np.full((256, 288), 128, np.uint8))
    r = post_capture(client, "/api/enroll", flat, direct, {"subject_id": "eve", "finger": "0"})
    assert r.status_code == 403
    body = r.json()
    assert body["code"] == "spoof_detected"
    assert body["spoof"]["per_view"]["ftir"] > 0.9
    assert client.get("/api/stats").json()["size"] == 0  # enrollment refused


def test_identify_empty_gallery_code(client, capture):
    ftir, direct, _ = capture
    r = post_capture(client, "/api/identify", ftir, direct)
    assert r.status_code == 409
    assert r.json()["code"] == "empty_gallery"


def test_identify_rejects_top_n_zero(client, capture):
    ftir, direct, _ = capture
    post_capture(client, "/api/enroll", ftir, direct, {"subject_id": "dan", "finger": "0"})
    r = post_capture(client, "/api/identify", ftir, direct, {"top_n": "0"})
    assert r.status_code == 400
    assert r.json()["code"] == "invalid_input"


def test_subject_not_found(client):
    r = client.get("/api/subjects/ghost")
    assert r.status_code == 404
    assert r.json()["code"] == "not_found"


def test_invalid_image_code(client):
    files = {
        "direct": ("d.ppm", io.BytesIO(b"not a pnm"), "image/x-portable-pixmap"),
        "ftir": ("f.pgm", io.BytesIO(b"junk"), "image/x-portable-graymap"),
    }
    r = client.post("/api/spoofcheck", files=files)
    assert r.status_code == 400
    assert r.json()["code"] == "invalid_image"


def test_no_descriptor_bytes_on_the_wire(client, capture):
    ftir, direct, _ = capture
    post_capture(client, "/api/enroll", ftir, direct, {"subject_id": "fay", "finger": "2"})
    doc = client.get("/api/subjects/fay").json()

    def walk(node):
        if isinstance(node, dict):
            for k, v in node.items():
                assert k not in ("descriptors", "descriptor")
                walk(v)
        elif isinstance(node, list):
            assert len(node) <= 64  # never a 128-dim vector dump
            for v in node:
                walk(v)

    walk(doc)
    assert set(doc["fingers"]["2"].keys()) == {"minutiae", "quality"}


def test_error_codes_come_from_closed_set(client, capture):
    ftir, direct, _ = capture
    flat = RasterImage(np.full((256, 288), 128, np.uint8))
    responses = [
        post_capture(client, "/api/identify", ftir, direct),
        post_capture(client, "/api/enroll", flat, direct, {"subject_id": "x", "finger": "0"}),
        client.get("/api/subjects/none"),
    ]
    for r in responses:
        body = r.json()
        assert body["code"] in ERROR_CODES
        assert "message" in body and "Traceback" not in body["message"]


def test_spoofcheck_endpoint_reports_views(client, capture):
    ftir, direct, _ = capture
    r = post_capture(client, "/api/spoofcheck", ftir, direct)
    assert r.status_code == 200
    body = r.json()
    assert set(body["spoof"]["per_view"]) == {"direct", "ftir"}
    assert body["spoof"]["fused"] == max(body["spoof"]["per_view"].values())
