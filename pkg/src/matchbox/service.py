"""JSON-over-HTTP service exposing enroll / verify / identify / spoof-check.

A thin adapter over the shared Pipeline: every endpoint has a CLI verb
producing the same JSON for the same inputs.  Image uploads are multipart
with the normative PGM/PPM payloads.  One gallery per process.

Error contract: every failure returns ``{"code": <machine string>,
"message": <human string>}`` plus optional detail fields; codes come from
the closed set in errors.ERROR_CODES, never stack traces.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, File, Form, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .errors import ERROR_CODES, InvalidImageError, InvalidInputError, MatchboxError
from .pipeline import Pipeline, PipelineConfig
from .raster import parse_pnm


def _decode_upload(upload: UploadFile, data: bytes):
    try:
        return parse_pnm(data, source=upload.filename or "upload")
    except MatchboxError:
        raise
    except Exception as exc:
        raise InvalidImageError(f"undecodable image upload: {exc}") from exc


def _error_response(err: MatchboxError) -> JSONResponse:
    assert err.code in ERROR_CODES
    body = err.to_dict()
    spoof = getattr(err, "spoof", None)
    if spoof is not None:
        body["spoof"] = spoof
    return JSONResponse(status_code=err.http_status, content=body)


def create_app(config: PipelineConfig | Pipeline) -> FastAPI:
    pipe = config if isinstance(config, Pipeline) else Pipeline(config)
    app = FastAPI(title="matchbox", version="0.1.0")
    # the operator console is served separately and calls across origins
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(MatchboxError)
    async def _handle_domain_error(_request, err: MatchboxError):
        return _error_response(err)

    @app.exception_handler(Exception)
    async def _handle_unexpected(_request, exc: Exception):
        err = MatchboxError(f"unexpected failure: {type(exc).__name__}")
        return _error_response(err)

    @app.post("/api/enroll", status_code=201)
    async def enroll(
        subject_id: str = Form(...),
        finger: int = Form(...),
        direct: UploadFile = File(...),
        ftir: UploadFile = File(...),
        metadata: str = Form("{}"),
    ):
        try:
            meta = json.loads(metadata)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"metadata is not valid JSON: {exc}") from exc
        direct_img = _decode_upload(direct, await direct.read())
        ftir_img = _decode_upload(ftir, await ftir.read())
        return pipe.enroll_capture(subject_id, finger, direct_img, ftir_img, meta)

    @app.post("/api/identify")
    async def identify(
        direct: UploadFile = File(...),
        ftir: UploadFile = File(...),
        top_n: int = Form(10),
    ):
        direct_img = _decode_upload(direct, await direct.read())
        ftir_img = _decode_upload(ftir, await ftir.read())
        return pipe.identify_capture(direct_img, ftir_img, top_n=top_n)

    @app.post("/api/verify")
    async def verify(
        subject_id: str = Form(...),
        finger: int = Form(...),
        direct: UploadFile = File(...),
        ftir: UploadFile = File(...),
    ):
        direct_img = _decode_upload(direct, await direct.read())
        ftir_img = _decode_upload(ftir, await ftir.read())
        return pipe.verify_capture(subject_id, finger, direct_img, ftir_img)

    @app.post("/api/spoofcheck")
    async def spoofcheck(
        direct: UploadFile = File(...),
        ftir: UploadFile = File(...),
    ):
        direct_img = _decode_upload(direct, await direct.read())
        ftir_img = _decode_upload(ftir, await ftir.read())
        return pipe.spoof_report(direct_img, ftir_img)

    @app.get("/api/subjects/{subject_id}")
    async def subject(subject_id: str):
        return pipe.subject_summary(subject_id)

    @app.get("/api/health")
    async def health():
        return {"status": "ok"}

    @app.get("/api/stats")
    async def stats():
        return pipe.stats()

    return app
