import json

import pytest

from bicsim.cli import main
from bicsim.experiments import EXPERIMENTS, ConfigError, ExperimentConfig, run


def test_list(capsys):
    assert main(["--list"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in EXPERIMENTS)
    assert "fig4" in out and "sm_s13" in out


def test_unknown_preset_writes_nothing(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["spectrum_obc", "--preset", "nope", "--out", str(out)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and err["experiment"] == "spectrum_obc"
    assert not out.exists()


def test_unknown_config_field(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "aah_check", "colour": "red"}))
    assert main(["--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "colour" in json.loads(capsys.readouterr().err)["message"]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "nope"})


def test_runtime_error_leaves_no_partial_output(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    # a negative time step fails inside the run, after the config checks
    cfg.write_text(json.dumps({"experiment": "fock_pump", "schedule": {"dt": -1.0}}))
    out = tmp_path / "run"
    assert main(["--config", str(cfg), "--out", str(out)]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "ValueError"
    assert not out.exists()
    assert list(tmp_path.iterdir()) == [cfg]


def test_run_is_deterministic(tmp_path, capsys):
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert main(["aah_check", "--out", str(o)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["out"] == str(o)
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert set(manifest["files"]) == {p.name for p in outs[0].iterdir()}
    for name in manifest["files"]:
        if name == "manifest.json":
            continue
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    again = json.loads((outs[1] / "manifest.json").read_text())
    assert again["content_hash"] == manifest["content_hash"]


def test_content_hash_tracks_config():
    a = ExperimentConfig.from_dict({"experiment": "aah_check"})
    b = ExperimentConfig.from_dict({"experiment": "aah_check", "spec": {"U0": 31.0}})
    c = ExperimentConfig.from_dict({"experiment": "aah_check", "out": "elsewhere", "threads": 2})
    assert a.content_hash() != b.content_hash()
    assert a.content_hash() == c.content_hash()
    assert b.model().U0 == 31.0


def test_programmatic_run(tmp_path):
    cfg = ExperimentConfig.from_dict({"experiment": "aah_check", "out": str(tmp_path / "r"),
                                      "grid": {"U0": [60.0, 120.0]}})
    manifest = run(cfg)
    assert "aah_check.csv" in manifest.files or any(f.endswith(".csv") for f in manifest.files)
