import os

import numpy as np
import pytest
import yaml

from fidgan import cli, gridfile
from fidgan import config as C

TINY = {
    "phantom": {"size": 32, "count": 4, "kinds": ["S1", "S3"]},
    "network": {"scales": 1, "base_channels": 2, "disc_channels": [2, 2, 2]},
    "training": {"lambda": 10.0, "lr": 1e-3, "batch_size": 4, "epochs": 1},
    "patches": {"size": 16, "stride": 8, "per_image": 4, "denoise_stride": 8},
    "verify": {"pairs": 4},
}


def write_config(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def pipeline(cfg_path, out):
    flags = ["--config", cfg_path, "--out", str(out)]
    for cmd in ("phantom", "simulate", "train", "denoise", "eval"):
        assert cli.main([cmd] + flags) == 0, cmd


def test_config_round_trip():
    cfg = C.from_dict(TINY)
    assert cfg.training.lambda_ == 10.0
    assert cfg.phantom.kinds == ["S1", "S3"]
    again = C.from_dict(yaml.safe_load(C.dump(cfg)))
    assert again == cfg
    assert "lambda" in C.dump(cfg) and "lambda_" not in C.dump(cfg)


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="training.lamda"):
        C.from_dict({"training": {"lamda": 1.0}})
    with pytest.raises(ValueError, match="bogus"):
        C.from_dict({"bogus": 1})
    with pytest.raises(ValueError, match="mapping"):
        C.from_dict({"noise": 3})


def test_end_to_end_pipeline_is_reproducible(tmp_path, capsys):
    cfg = write_config(tmp_path, TINY)
    pipeline(cfg, tmp_path / "a")
    pipeline(cfg, tmp_path / "b")
    for sub in ("phantom/S3/img_0002.fggr", "ldct/S3/img_0001.fggr", "denoised/S3/img_0003.fggr"):
        assert (tmp_path / "a" / sub).read_bytes() == (tmp_path / "b" / sub).read_bytes(), sub
    assert (tmp_path / "a/train/final.ckpt").read_bytes() == (tmp_path / "b/train/final.ckpt").read_bytes()
    report = (tmp_path / "a/eval/report_S3.tsv").read_text().splitlines()
    assert report[0].split("\t")[:2] == ["image", "mse_noisy"]
    assert len([r for r in report if r.startswith("img_")]) == 4
    loss = (tmp_path / "a/train/loss.tsv").read_text().splitlines()
    assert len(loss) > 1
    assert C.load(str(tmp_path / "a/config_train.yaml")).seeds == C.Seeds()


def test_seed_flag_sets_every_stream(tmp_path):
    cfg = write_config(tmp_path, TINY)
    assert cli.main(["phantom", "--config", cfg, "--out", str(tmp_path / "s"), "--seed", "10"]) == 0
    saved = C.load(str(tmp_path / "s/config_phantom.yaml"))
    assert (saved.seeds.phantom, saved.seeds.noise, saved.seeds.patches, saved.seeds.train) == (10, 11, 12, 13)
    assert cli.main(["phantom", "--config", cfg, "--out", str(tmp_path / "t")]) == 0
    a = gridfile.read(str(tmp_path / "s/phantom/S1/img_0000.fggr"))
    b = gridfile.read(str(tmp_path / "t/phantom/S1/img_0000.fggr"))
    assert not np.array_equal(a, b)


def test_zero_sigma_gives_identical_images_and_zero_mse(tmp_path):
    data = dict(TINY, noise={"sigma": 0.0})
    cfg = write_config(tmp_path, data)
    out = tmp_path / "z"
    for cmd in ("phantom", "simulate", "eval"):
        assert cli.main([cmd, "--config", cfg, "--out", str(out)]) == 0
    for f in sorted(os.listdir(out / "phantom/S3")):
        if f.endswith(".fggr"):
            assert np.array_equal(gridfile.read(str(out / "phantom/S3" / f)), gridfile.read(str(out / "ldct/S3" / f)))
    rows = (out / "eval/report_S3.tsv").read_text().splitlines()
    mean = dict(zip(rows[0].split("\t"), rows[-1].split("\t")))
    assert float(mean["mse_noisy"]) == 0.0


def test_quantum_flux_sweep_writes_one_set_per_flux(tmp_path):
    data = dict(TINY, phantom={"size": 32, "count": 2, "kinds": ["S3"]},
                noise={"mode": "quantum", "flux_sweep": [2e4, 8e4]}, geometry={"n_angles": 45})
    cfg = write_config(tmp_path, data)
    out = tmp_path / "q"
    for cmd in ("phantom", "simulate", "eval"):
        assert cli.main([cmd, "--config", cfg, "--out", str(out)]) == 0
    assert sorted(os.listdir(out / "ldct")) == ["S3_I0_20000", "S3_I0_80000"]
    assert (out / "eval/report_S3_I0_80000.tsv").exists()


def test_verify_exit_codes(tmp_path, capsys):
    cfg = write_config(tmp_path, TINY)
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    assert (tmp_path / "v/verify/report.txt").read_text().strip().endswith("ALL PASS")
    # an identity tolerance below double precision cannot be met
    bad = write_config(tmp_path, dict(TINY, verify={"pairs": 4, "tol": 0.0, "fidelity": 0.7}), "bad.yaml")
    assert cli.main(["verify", "--config", bad, "--out", str(tmp_path / "w")]) == 1


def test_missing_inputs_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, TINY)
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "empty")]) == 2
    assert "missing input directory" in capsys.readouterr().err
    assert cli.main(["denoise", "--config", cfg, "--out", str(tmp_path / "empty")]) == 2


def test_bad_noise_mode_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, dict(TINY, noise={"mode": "speckle"}))
    out = str(tmp_path / "m")
    assert cli.main(["phantom", "--config", cfg, "--out", out]) == 0
    assert cli.main(["simulate", "--config", cfg, "--out", out]) == 2
    assert "speckle" in capsys.readouterr().err
