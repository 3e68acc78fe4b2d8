import json

import numpy as np
import pytest

from dualflow import datasets as ds
from dualflow import verify
from dualflow.cli import main
from dualflow.flow_model import DenseField, TrainConfig, load_checkpoint, train


def cli(argv):
    return main([str(a) for a in argv])


def run(argv, capsys=None):
    rc = cli(argv)
    err = capsys.readouterr().err if capsys else ""
    return rc, err


def error_doc(err):
    return json.loads(err.strip().splitlines()[-1])


def test_train_defaults_reload_bit_exact(tmp_path):
    assert cli(["train", "--out", str(tmp_path)]) == 0
    field = load_checkpoint(tmp_path / "checkpoint.json")
    # the same run in-process
    x1 = ds.sample_2d(ds.two_moons(), 20000, seed=7)
    pairs = ds.make_pairs(x1, 1, seed=8)
    ref = train(DenseField(2, seed=7), pairs,
                TrainConfig(steps=4000, batch_size=256, seed=7, cond_dropout=0.1)).field
    x = np.array([[0.0, 0.0], [0.5, -0.25]])
    assert np.array_equal(field.velocity(x, 0.5, 1), ref.velocity(x, 0.5, 1))
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["steps"] == 4000 and "checkpoint.json" in manifest["outputs"]


def test_train_loss_csv_is_reproducible(tmp_path):
    for tag in ("a", "b"):
        assert cli(["train", "--seed", "7", "--steps", "150", "--out", str(tmp_path / tag)]) == 0
    a, b = ((tmp_path / t / "loss.csv").read_bytes() for t in "ab")
    assert a == b and a.startswith(b"step,loss\n")


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"steps": 5, "learning_rate": 0.1}))
    rc, err = run(["train", "--config", cfg, "--out", tmp_path], capsys)
    assert rc == 2
    doc = error_doc(err)
    assert doc["key"] == "learning_rate" and "learning_rate" in doc["message"]


def test_bad_flag_is_json_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        cli(["transfer", "--tau", "abc"])
    assert info.value.code == 2
    assert error_doc(capsys.readouterr().err)["error"] == "usage"


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"oracle": "perfect_coupling", "tau": 0.5, "steps": 3}))
    assert cli(["transfer", "--config", cfg, "--tau", "0.8", "--out", tmp_path / "o"]) == 0
    doc = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert doc["config"]["tau"] == 0.8 and doc["config"]["steps"] == 3
    assert doc["transfer"]["config"]["tau"] == 0.8


def test_vanilla_oracle_writes_mean_image(tmp_path):
    out = tmp_path / "v"
    assert cli(["transfer", "--oracle", "perfect_coupling", "--method", "vanilla",
                 "--lambda", "0.5", "--content", "glyph:0,1", "--style", "glyph:3,4",
                 "--out", out]) == 0
    mean = 0.5 * (ds.render_glyph(0, 1).pixels + ds.render_glyph(3, 4).pixels)
    assert np.array_equal(ds.read_pgm(out / "stylized.pgm"), ds.quantize(mean) / 255.0)


def test_content_branch_oracle_writes_style_image(tmp_path):
    out = tmp_path / "v1"
    assert cli(["transfer", "--oracle", "perfect_coupling", "--method", "v1", "--branch",
                 "content_only", "--content", "glyph:2,1", "--style", "glyph:1,3",
                 "--out", out]) == 0
    style = ds.render_glyph(1, 3).pixels
    assert np.array_equal(ds.read_pgm(out / "stylized.pgm"), ds.quantize(style) / 255.0)
    header = (out / "trajectory_a.csv").read_text().splitlines()[0]
    assert header.startswith("step,time,convention,dim,v0,")


def test_transfer_accepts_pgm_inputs(tmp_path):
    ds.write_pgm(tmp_path / "c.pgm", ds.render_glyph(0, 2).pixels)
    ds.write_pgm(tmp_path / "s.pgm", ds.render_glyph(1, 4).pixels)
    assert cli(["transfer", "--oracle", "perfect_coupling", "--content", tmp_path / "c.pgm",
                 "--style", tmp_path / "s.pgm", "--steps", "4", "--out", tmp_path / "o"]) == 0


def test_injection_needs_attention_field(tmp_path, capsys):
    rc, err = run(["transfer", "--oracle", "perfect_coupling", "--inject", "--out", tmp_path],
                  capsys)
    assert rc == 2 and "attention" in error_doc(err)["message"]


def test_field_source_is_required(tmp_path, capsys):
    rc, err = run(["transfer", "--out", tmp_path], capsys)
    assert rc == 2 and error_doc(err)["key"] == "checkpoint"


def test_ablate_with_oracle(tmp_path):
    out = tmp_path / "abl"
    assert cli(["ablate", "--oracle", "perfect_coupling", "--steps", "5", "--out", out]) == 0
    rows = (out / "comparison.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["vanilla", "v1_content", "v1_style",
                                                   "v1_dual", "v2"]
    assert all((out / name / "stylized.pgm").exists() for name in ("vanilla", "v2"))


def test_manifest_rerun_reproduces(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli(["transfer", "--oracle", "perfect_coupling", "--method", "pseudo", "--seed", "4",
                 "--steps", "6", "--out", a]) == 0
    assert cli(["transfer", "--config", a / "manifest.json", "--out", b]) == 0
    for name in ("stylized.pgm", "trajectory_a.csv", "metrics.json", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("DUALFLOW_OUTPUT_ROOT", str(tmp_path / "root"))
    assert cli(["render-glyphs"]) == 0
    files = sorted(p.name for p in (tmp_path / "root" / "render-glyphs").glob("*.pgm"))
    assert len(files) == 20 and files[0] == "glyph_c0_s0.pgm"


def test_generate_invert_reconstruct(tmp_path):
    ckpt = tmp_path / "t"
    assert cli(["train", "--steps", "50", "--out", ckpt]) == 0
    cp = ckpt / "checkpoint.json"
    assert cli(["generate", "--checkpoint", cp, "--n", "5", "--steps", "8",
                 "--out", tmp_path / "g"]) == 0
    assert np.loadtxt(tmp_path / "g" / "samples.csv", delimiter=",").shape == (5, 2)
    assert cli(["invert", "--checkpoint", cp, "--input", "point:0.5,0.1", "--cond", "1",
                 "--out", tmp_path / "i"]) == 0
    assert (tmp_path / "i" / "latent.csv").exists()
    assert cli(["reconstruct", "--oracle", "perfect_coupling", "--input", "glyph:1,2",
                 "--out", tmp_path / "r"]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert rep["error"] < 1e-12
    assert (tmp_path / "r" / "reconstruction.pgm").exists()


def test_verify_passes(capsys):
    assert cli(["verify", "--only", "tokenizer_roundtrip", "--only", "grid_involution"]) == 0
    assert "2/2 checks passed" in capsys.readouterr().out


def test_verify_names_first_failure(monkeypatch, capsys):
    monkeypatch.setitem(verify.CHECKS, "v1_branch_boundaries",
                        lambda: verify.check_v1_boundary(tau=0.9))
    rc = cli(["verify", "--only", "grid_involution", "--only", "v1_branch_boundaries"])
    assert rc == 1
    assert error_doc(capsys.readouterr().err)["check"] == "v1_branch_boundaries"
