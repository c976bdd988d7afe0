import json

import pytest

from matchbox import synth
from matchbox.errors import InvalidInputError, SpoofDetectedError
from matchbox.pipeline import ENV_CONFIG, Pipeline, PipelineConfig, Timings
from matchbox.raster import RasterImage, write_pnm

import numpy as np


def test_config_load_from_file(tmp_path):
    profile = tmp_path / "profile.json"
    from matchbox.calib import CalibrationProfile, CropRect, Homography

    CalibrationProfile(
        Homography.identity(), 2000.0, 2000.0, CropRect(0, 0, 100, 100)
    ).save(profile)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(
        json.dumps(
            {
                "gallery_dir": "gal",
                "calibration_profile": "profile.json",
                "target_ppi": 500,
                "spoof": {"threshold": 0.6},
                "thresholds": {"verify": 12.0, "identify": 9.0},
            }
        )
    )
    cfg = PipelineConfig.load(cfg_path)
    assert cfg.spoof_threshold == 0.6
    assert (tmp_path / "gal").is_dir()  # created relative to the config file
    pipe = Pipeline(cfg)
    assert pipe.store.verify_threshold == 12.0
    assert pipe.profile is not None


def test_config_env_fallback(tmp_path, monkeypatch):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"gallery_dir": str(tmp_path / "g")}))
    monkeypatch.setenv(ENV_CONFIG, str(cfg_path))
    cfg = PipelineConfig.load()
    assert cfg.gallery_dir == str(tmp_path / "g")
    monkeypatch.delenv(ENV_CONFIG)
    with pytest.raises(InvalidInputError):
        PipelineConfig.load()


def test_config_missing_referenced_path(tmp_path):
    cfg = PipelineConfig(gallery_dir=str(tmp_path / "g"), skin_model="nope.json")
    with pytest.raises(InvalidInputError):
        cfg.validate()


def test_spoof_gate_blocks_extraction(tmp_path):
    pipe = Pipeline(PipelineConfig(gallery_dir=str(tmp_path / "g")))
    flat = RasterImage(np.full((256, 288), 128, np.uint8))
    img, _ = synth.generate(synth.SynthSpec(seed=17, minutiae_count=15, width=192, height=224))
    direct = synth.synth_direct_view(img, 1)
    with pytest.raises(SpoofDetectedError) as exc:
        pipe.enroll_capture("x", 0, direct, flat)
    assert exc.value.spoof["is_spoof"] is True
    assert len(pipe.store) == 0


def test_calibrated_frames_pass_through(tmp_path):
    pipe = Pipeline(PipelineConfig(gallery_dir=str(tmp_path / "g")))
    img, _ = synth.generate(synth.SynthSpec(seed=18, minutiae_count=15, width=192, height=224))
    assert pipe.calibrate_ftir(img) is img  # ppi metadata marks it calibrated


def test_timings_record_stages():
    t = Timings()
    with t.stage("alpha"):
        pass
    assert "alpha" in t.ms and t.ms["alpha"] >= 0.0
