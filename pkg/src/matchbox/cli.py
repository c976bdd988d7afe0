"""Unified command-line interface.

Verbs mirror the JSON service where they overlap (same payloads for the
same inputs), plus offline tooling: calibration, extraction, synthetic
data generation, benchmarking, and the evaluation report path that writes
figures next to the delimited outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import calib, report, synth
from .errors import DetectionFailureError, InvalidInputError, MatchboxError
from .extract import extract_minutiae, extract_template
from .gallery import GalleryStore, calibrate_match_threshold
from .matcher import match
from .mbt import load_template, save_template
from .pipeline import Pipeline, PipelineConfig
from .raster import read_pnm, write_pnm
from .spoofdet import calibrate_threshold, score_direct, score_ftir


def _print_json(doc: dict) -> None:
    print(json.dumps(doc, indent=2))


def _gallery_pipeline(args, gallery=None) -> Pipeline:
    threshold = getattr(args, "threshold", None)
    cfg = PipelineConfig(
        gallery_dir=gallery if gallery is not None else getattr(args, "gallery", None),
        calibration_profile=getattr(args, "profile", None),
        spoof_threshold=0.5 if threshold is None else threshold,
    )
    return Pipeline(cfg)


# ---------------------------------------------------------------------------
# calib verbs


def cmd_calibrate(args) -> int:
    rows, cols = (int(v) for v in args.board.lower().split("x"))
    frames = sorted(
        p for p in Path(args.frames).iterdir() if p.suffix in (".pgm", ".ppm")
    )
    if not frames:
        raise InvalidInputError(f"no .pgm/.ppm frames in {args.frames}")
    stacks = []
    for path in frames:
        img = read_pnm(path)
        if img.channels == 3:
            img = calib.to_grayscale(img)
        corners = calib.find_checkerboard_corners(img, rows, cols)
        stacks.append(corners)
    mean_corners = np.mean(np.stack(stacks), axis=0)
    profile = calib.profile_from_board(mean_corners, rows, cols, args.square_mm)
    profile.save(args.out)
    _, err = calib.estimate_homography(
        mean_corners, profile.homography.apply(mean_corners)
    )
    print(
        f"calibrated from {len(frames)} frame(s): native "
        f"{profile.native_ppi_x:.1f} ppi, residual {err:.2e} px -> {args.out}"
    )
    return 0


def cmd_rectify(args) -> int:
    profile = calib.CalibrationProfile.load(args.profile)
    img = read_pnm(getattr(args, "in"))
    if img.channels == 3:
        img = calib.to_grayscale(img)
    img = calib.equalize(img)
    out = calib.rectify_and_scale(img, profile, args.ppi)
    write_pnm(out, args.out)
    note = " (upsampled)" if out.upsampled else ""
    print(f"rectified {out.width}x{out.height} @ {args.ppi} ppi{note} -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# extraction / matching verbs


def cmd_extract(args) -> int:
    img = read_pnm(getattr(args, "in"))
    if img.channels == 3:
        img = calib.to_grayscale(img)
    if args.dump_skeleton:
        res = extract_minutiae(img, args.min_quality)
        write_pnm(res.skeleton, args.dump_skeleton)
    template = extract_template(img, args.min_quality)
    save_template(template, args.out)
    print(
        f"extracted {len(template)} minutiae "
        f"(quality {template.quality_summary:.2f}) -> {args.out}"
    )
    return 0


def cmd_verify(args) -> int:
    probe = load_template(args.probe)
    cand = load_template(args.cand)
    result = match(probe, cand, threshold=args.threshold)
    doc = {
        "score": result.score,
        "matched_pairs": len(result.pairs),
        "decision": result.decision,
        "threshold": result.threshold_used,
    }
    if args.json:
        _print_json(doc)
    else:
        print(
            f"score={result.score:.4f} pairs={len(result.pairs)} "
            f"decision={result.decision} (threshold {args.threshold})"
        )
    return 0 if result.accepted else 1


# ---------------------------------------------------------------------------
# spoof verbs


def cmd_spoofcheck(args) -> int:
    pipe = _gallery_pipeline(args, gallery=None)
    direct = read_pnm(args.direct)
    ftir = read_pnm(args.ftir)
    doc = pipe.spoof_report(direct, ftir)
    if args.json:
        _print_json(doc)
    else:
        s = doc["spoof"]
        verdict = "SPOOF" if s["is_spoof"] else "live"
        print(
            f"direct={s['per_view']['direct']:.3f} ftir={s['per_view']['ftir']:.3f} "
            f"fused={s['fused']:.3f} threshold={s['threshold']} -> {verdict}"
        )
    return 1 if doc["spoof"]["is_spoof"] else 0


def _capture_scores(directory: Path) -> list[float]:
    """Fused spoof scores for every capture in a directory.

    Captures pair <stem>.ppm (direct) with <stem>.pgm (ftir); single-view
    captures are scored on the available view alone.
    """
    stems: dict[str, dict[str, Path]] = {}
    for p in sorted(directory.iterdir()):
        if p.suffix == ".ppm":
            stems.setdefault(p.stem, {})["direct"] = p
        elif p.suffix == ".pgm":
            stems.setdefault(p.stem, {})["ftir"] = p
    scores = []
    for stem, views in sorted(stems.items()):
        vals = []
        if "direct" in views:
            vals.append(score_direct(read_pnm(views["direct"])).value)
        if "ftir" in views:
            vals.append(score_ftir(read_pnm(views["ftir"])).value)
        if vals:
            scores.append(max(vals))
    if not scores:
        raise InvalidInputError(f"no captures found in {directory}")
    return scores


def cmd_spoofcal(args) -> int:
    live = _capture_scores(Path(args.live))
    spoof = _capture_scores(Path(args.spoof))
    cal = calibrate_threshold(spoof, live, args.far)
    Path(args.out).write_text(cal.to_json())
    if args.plots:
        plots = Path(args.plots)
        plots.mkdir(parents=True, exist_ok=True)
        report.save_score_histogram(live, spoof, plots / "spoof_scores.png")
        report.write_scores_csv(live, spoof, plots / "spoof_scores.csv")
    print(
        f"threshold={cal.threshold:.4f} live_pass={cal.live_pass_rate:.4f} "
        f"spoof_pass={cal.spoof_pass_rate:.4f} -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# gallery verbs


def cmd_enroll(args) -> int:
    if args.image:
        store = GalleryStore(args.gallery)
        img = read_pnm(args.image)
        template = extract_template(img, args.min_quality)
        meta = json.loads(Path(args.meta).read_text()) if args.meta else {}
        record = store.enroll(args.subject, {args.finger: template}, meta)
        doc = {"record": record.summary()}
    else:
        if not (args.direct and args.ftir):
            raise InvalidInputError("provide --image or both --direct and --ftir")
        pipe = _gallery_pipeline(args)
        meta = json.loads(Path(args.meta).read_text()) if args.meta else {}
        doc = pipe.enroll_capture(
            args.subject, args.finger, read_pnm(args.direct), read_pnm(args.ftir), meta
        )
    if args.json:
        _print_json(doc)
    else:
        fingers = doc["record"]["fingers"]
        print(f"enrolled {args.subject} fingers={sorted(fingers)}")
    return 0


def cmd_identify(args) -> int:
    if args.probe:
        store = GalleryStore(args.gallery, create=False)
        img = read_pnm(args.probe)
        template = extract_template(img)
        hits = store.identify(template, top_n=args.top, workers=args.workers)
        doc = {"hits": [h.to_dict() for h in hits], "probe_minutiae": len(template)}
    else:
        if not (args.direct and args.ftir):
            raise InvalidInputError("provide --probe or both --direct and --ftir")
        pipe = _gallery_pipeline(args)
        doc = pipe.identify_capture(
            read_pnm(args.direct), read_pnm(args.ftir), top_n=args.top,
            workers=args.workers,
        )
    if args.json:
        _print_json(doc)
    else:
        for h in doc["hits"]:
            print(f"{h['rank']:3d}. {h['score']:9.4f}  {h['subject_id']} (finger {h['finger']})")
        if not doc["hits"]:
            print("no hits")
    return 0


def cmd_bench(args) -> int:
    store = GalleryStore(args.gallery, create=False)
    entries = [(sid, rec) for sid, rec in sorted(store.records.items())]
    if not entries:
        raise InvalidInputError("gallery is empty")
    rng = np.random.default_rng(args.seed)
    latencies = []
    for i in range(args.probes):
        sid, rec = entries[int(rng.integers(len(entries)))]
        finger = sorted(rec.fingers)[0]
        probe = synth.perturb_genuine(
            rec.fingers[finger],
            seed=int(rng.integers(2**63 - 1)),
            jitter_px=2.0,
            drop_rate=0.1,
            rot=float(rng.uniform(-0.3, 0.3)),
            trans=(float(rng.uniform(-10, 10)), float(rng.uniform(-10, 10))),
        )
        t0 = time.perf_counter()
        store.identify(probe, top_n=args.top, workers=args.workers)
        latencies.append((time.perf_counter() - t0) * 1000.0)
    doc = {
        "gallery_size": len(store),
        "workers": args.workers,
        "latency": report.latency_percentiles(latencies),
    }
    _print_json(doc)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2))
    if args.plots:
        plots = Path(args.plots)
        plots.mkdir(parents=True, exist_ok=True)
        report.save_latency_histogram(latencies, plots / "bench_latency.png")
        report.write_latency_csv(latencies, plots / "bench_latency.csv")
    return 0


# ---------------------------------------------------------------------------
# synthetic data + evaluation report


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for i in range(args.count):
        spec = synth.SynthSpec(
            seed=int(rng.integers(2**63 - 1)),
            minutiae_count=args.minutiae,
            singularity=args.type,
        )
        img, truth = synth.generate(spec)
        stem = out / f"fp_{i:04d}"
        write_pnm(img, stem.with_suffix(".pgm"))
        stem.with_suffix(".json").write_text(truth.to_json())
        if args.views != "none":
            spoofed = args.views == "spoof"
            direct = synth.synth_direct_view(img, spec.seed + 1, spoof=spoofed)
            write_pnm(direct, stem.with_suffix(".ppm"))
            if spoofed:
                write_pnm(synth.degrade_ftir(img, spec.seed + 2), stem.with_suffix(".pgm"))
    print(f"wrote {args.count} synthetic print(s) to {out}")
    return 0


def cmd_eval_synth(args) -> int:
    """Synthetic identification experiment with figures + CSV + JSON."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    kinds = synth.SINGULARITY_TYPES

    templates = []
    for i in range(args.subjects):
        spec = synth.SynthSpec(
            seed=int(rng.integers(2**63 - 1)),
            minutiae_count=args.minutiae,
            singularity=kinds[i % len(kinds)],
        )
        img, truth = synth.generate(spec)
        templates.append(synth.template_from_truth(img, truth))

    genuine, ranks = [], []
    for i, t in enumerate(templates):
        for _ in range(args.probes_per_subject):
            probe = synth.perturb_genuine(
                t,
                seed=int(rng.integers(2**63 - 1)),
                jitter_px=3.0,
                drop_rate=0.1,
                rot=float(rng.uniform(-math.pi / 6, math.pi / 6)),
                trans=(float(rng.uniform(-15, 15)), float(rng.uniform(-15, 15))),
            )
            scores = [match(probe, u, threshold=-math.inf).score for u in templates]
            order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
            ranks.append(order.index(i) + 1)
            genuine.append(scores[i])

    imposter = []
    for i in range(len(templates)):
        for j in range(i + 1, len(templates)):
            imposter.append(match(templates[i], templates[j], threshold=-math.inf).score)

    eer = report.compute_eer(np.array(genuine), np.array(imposter))
    rank1 = float(np.mean(np.array(ranks) == 1))
    metrics = {
        "subjects": args.subjects,
        "genuine_scores": len(genuine),
        "imposter_scores": len(imposter),
        "rank1_accuracy": rank1,
        "eer": eer,
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    report.write_scores_csv(genuine, imposter, out / "scores.csv")
    report.save_score_histogram(genuine, imposter, out / "score_hist.png")
    report.save_roc(genuine, imposter, out / "roc.png")
    report.save_cmc(ranks, out / "cmc.png")
    _print_json(metrics)
    return 0


def cmd_matchcal(args) -> int:
    genuine = [float(x) for x in json.loads(Path(args.genuine).read_text())]
    imposter = [float(x) for x in json.loads(Path(args.imposter).read_text())]
    cal = calibrate_match_threshold(genuine, imposter, args.far)
    Path(args.out).write_text(cal.to_json())
    print(
        f"threshold={cal.threshold:.4f} gar={cal.genuine_accept_rate:.4f} "
        f"far={cal.imposter_accept_rate:.6f} -> {args.out}"
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = PipelineConfig.load(args.config)
    uvicorn.run(create_app(cfg), host=args.host, port=args.port, log_level="info")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="matchbox", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="estimate a calibration profile from checkerboard frames")
    p.add_argument("--board", required=True, help="inner corners as ROWSxCOLS, e.g. 7x9")
    p.add_argument("--square-mm", type=float, required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("rectify", help="calibrate a raw frame to a matcher-ready image")
    p.add_argument("--profile", required=True)
    p.add_argument("--ppi", type=int, choices=(500, 1900), required=True)
    p.add_argument("--in", dest="in", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("extract", help="extract a minutiae template from an image")
    p.add_argument("--in", dest="in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-quality", type=float, default=0.0)
    p.add_argument("--dump-skeleton", default=None)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("verify", help="1:1 comparison of two template files")
    p.add_argument("--probe", required=True)
    p.add_argument("--cand", required=True)
    p.add_argument("--threshold", type=float, default=10.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("spoofcheck", help="score a two-view capture for spoofness")
    p.add_argument("--direct", required=True)
    p.add_argument("--ftir", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_spoofcheck)

    p = sub.add_parser("spoofcal", help="calibrate the spoof threshold from capture dirs")
    p.add_argument("--live", required=True)
    p.add_argument("--spoof", required=True)
    p.add_argument("--far", type=float, default=0.002)
    p.add_argument("--out", required=True)
    p.add_argument("--plots", default=None)
    p.set_defaults(func=cmd_spoofcal)

    p = sub.add_parser("enroll", help="enroll a subject into a gallery")
    p.add_argument("--gallery", required=True)
    p.add_argument("--subject", required=True)
    p.add_argument("--finger", type=int, default=0)
    p.add_argument("--image", default=None, help="calibrated grayscale image")
    p.add_argument("--direct", default=None, help="direct-view image (with --ftir)")
    p.add_argument("--ftir", default=None, help="FTIR image (with --direct)")
    p.add_argument("--meta", default=None)
    p.add_argument("--min-quality", type=float, default=0.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("identify", help="1:N search against a gallery")
    p.add_argument("--gallery", required=True)
    p.add_argument("--probe", default=None, help="calibrated grayscale image")
    p.add_argument("--direct", default=None)
    p.add_argument("--ftir", default=None)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("bench", help="identification latency benchmark")
    p.add_argument("--gallery", required=True)
    p.add_argument("--probes", type=int, default=20)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default=None)
    p.add_argument("--plots", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="generate synthetic prints with ground truth")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--minutiae", type=int, default=30)
    p.add_argument("--type", choices=synth.SINGULARITY_TYPES, default="loop")
    p.add_argument("--views", choices=("none", "live", "spoof"), default="none")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval-synth", help="synthetic identification report (figures + CSV)")
    p.add_argument("--subjects", type=int, default=50)
    p.add_argument("--probes-per-subject", type=int, default=4)
    p.add_argument("--minutiae", type=int, default=30)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_synth)

    p = sub.add_parser("matchcal", help="calibrate a decision threshold from score files")
    p.add_argument("--genuine", required=True, help="JSON array of genuine scores")
    p.add_argument("--imposter", required=True, help="JSON array of imposter scores")
    p.add_argument("--far", type=float, default=0.0001)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_matchcal)

    p = sub.add_parser("serve", help="run the JSON service")
    p.add_argument("--config", default=None, help="config path (or MATCHBOX_CONFIG)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DetectionFailureError as err:
        print(f"error [{err.code}]: {err.message} (found {err.found})", file=sys.stderr)
        return 2
    except MatchboxError as err:
        print(f"error [{err.code}]: {err.message}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error [io_error]: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
