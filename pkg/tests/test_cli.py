import subprocess
import sys

import pytest
import yaml

from rfaction.cli import main
from rfaction.core.formats import read_label_file, read_skeleton_file
from rfaction.simkit import read_heatmaps


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--seed", "3", "--out", str(out)]) == 0
    return out


def test_simulate_writes_all_files(sim_dir, capsys):
    assert {p.name for p in sim_dir.iterdir()} == {"heatmaps.rfhm", "skeleton.txt", "labels.txt", "scenario.yaml"}
    assert len(read_heatmaps(sim_dir / "heatmaps.rfhm")) == len(read_skeleton_file(sim_dir / "skeleton.txt"))
    assert read_label_file(sim_dir / "labels.txt")


def test_simulate_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["simulate", "--seed", "4", "--out", str(tmp_path / name)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == out[1] and out[0].startswith("manifest command=simulate")
    for f in ("heatmaps.rfhm", "skeleton.txt", "labels.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_simulate_from_scenario_file(sim_dir, tmp_path):
    assert main(["simulate", "--config", str(sim_dir / "scenario.yaml"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "heatmaps.rfhm").read_bytes() == (sim_dir / "heatmaps.rfhm").read_bytes()


def test_eval_against_itself(sim_dir, capsys, tmp_path):
    labels = str(sim_dir / "labels.txt")
    assert main(["eval", "--pred", labels, "--gt", labels, "--iou", "0.1,0.5", "--out", str(tmp_path / "t.tsv")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln for ln in lines if ln.startswith("mAP@")] == ["mAP@0.1 1.000000", "mAP@0.5 1.000000"]
    assert (tmp_path / "t.tsv").read_text().startswith("theta\tclass_id")


def test_corrupt_label_file_exits_with_format_error(sim_dir, tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    lines = (sim_dir / "labels.txt").read_text().splitlines()
    lines.insert(1, "this is not a label")
    bad.write_text("\n".join(lines) + "\n")
    assert main(["eval", "--pred", str(bad), "--gt", str(sim_dir / "labels.txt")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_bad_iou_list_is_rejected(sim_dir):
    with pytest.raises(SystemExit):
        main(["eval", "--pred", "x", "--gt", "y", "--iou", "0.1,abc"])


def test_bad_train_config_exits_with_format_error(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"stpes": 3}))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 2
    assert "stpes" in capsys.readouterr().err


def test_train_predict_eval(sim_dir, tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"steps": 2, "duration": 60, "train_seeds": [7], "clip_windows": 1,
                                   "log_every": 1}))
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(run), "--mode", "separate"]) == 0
    assert "done steps=2" in (run / "train.log").read_text()
    pred = tmp_path / "pred" / "labels.txt"
    assert main(["predict", "--checkpoint", str(run / "checkpoint.rfa"),
                 "--heatmaps", str(sim_dir / "heatmaps.rfhm"), "--out", str(pred)]) == 0
    assert pred.exists() and pred.with_suffix(".skeleton.txt").exists()
    capsys.readouterr()
    assert main(["eval", "--pred", str(pred), "--gt", str(sim_dir / "labels.txt"),
                 "--pred-skeleton", str(pred.with_suffix(".skeleton.txt")),
                 "--gt-skeleton", str(sim_dir / "skeleton.txt")]) == 0
    out = capsys.readouterr().out
    assert "mAP@0.1" in out and "mAP@0.5" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "rfaction", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "simulate" in res.stdout
