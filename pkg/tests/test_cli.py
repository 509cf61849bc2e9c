import hashlib
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from jawkin.cli import main
from jawkin.storage import load_session

NS = {"s": "http://www.w3.org/2000/svg"}


def run_all(d, *synth_extra):
    assert main(["synth", "--profile", "open_close", "--seed", "7", "--out", str(d), *synth_extra]) == 0
    sess = str(d / "session.h5")
    assert main(["calibrate", "--markers", str(d / "calibration_markers.csv"), "--rig", str(d / "rig.yaml"),
                 "--out", sess]) == 0
    assert main(["process", "--session", sess, "--markers", str(d / "motion_markers.csv")]) == 0
    return sess


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    run_all(d)
    return d


def test_pipeline_truth_residual(pipeline_dir, capsys):
    sess = str(pipeline_dir / "session.h5")
    assert main(["analyze", "--session", sess, "--truth", str(pipeline_dir / "ground_truth.h5"), "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["truth_residual"]["translation_max_um"] < 1e-6
    assert out["truth_residual"]["rotation_max_deg"] < 1e-9
    for key in ("translation_mean", "translation_std", "rotation_mean", "rotation_std", "cutoff_used"):
        assert key in out["precision"]
    arch = load_session(sess)
    assert arch.reports["truth_residual"]["sample_count"] == len(arch.processed)
    assert arch.filtered.params["method"] == "butterworth"
    assert set(arch.trajectories) == {"incisal", "incisal_filtered"}


def test_plot_svg_bbox(pipeline_dir):
    out = pipeline_dir / "traj.svg"
    assert main(["plot", "--session", str(pipeline_dir / "session.h5"), "--what", "trajectory",
                 "--out", str(out)]) == 0
    root = ET.parse(out).getroot()
    bbox = [float(v) for v in root.find(".//s:g[@id='sagittal']", NS).get("data-bbox-mm").split()]
    assert abs((bbox[3] - bbox[1]) - 20.0) < 1e-6  # default open-close amplitude
    csv_out = pipeline_dir / "traj.csv"
    assert main(["plot", "--session", str(pipeline_dir / "session.h5"), "--filtered", "--out", str(csv_out)]) == 0
    assert csv_out.read_text().splitlines()[0] == "t_s,x_mm,y_mm,z_mm"


def test_idempotent(tmp_path):
    digests = []
    for name in ("a", "b"):
        d = tmp_path / name
        sess = run_all(d)
        assert main(["analyze", "--session", sess, "--cutoff", "6"]) == 0
        files = ("calibration_markers.csv", "motion_markers.csv", "rig.yaml")
        digests.append([hashlib.md5((d / f).read_bytes()).hexdigest() for f in files])
        arch = load_session(sess)
        digests[-1].append(hashlib.md5(np.array([s.pose.matrix for s in arch.processed]).tobytes()).hexdigest())
        digests[-1].append(arch.reports["precision"].to_dict())
    assert digests[0] == digests[1]


def test_incomplete_calibration_exits_2(tmp_path, capsys):
    d = tmp_path
    assert main(["synth", "--out", str(d), "--seed", "1"]) == 0
    lines = (d / "calibration_markers.csv").read_text().splitlines()
    (d / "short.csv").write_text("\n".join(lines[:400]) + "\n")
    sess = str(d / "s.h5")
    assert main(["calibrate", "--markers", str(d / "short.csv"), "--rig", str(d / "rig.yaml"), "--out", sess]) == 2
    assert main(["process", "--session", sess, "--markers", str(d / "motion_markers.csv")]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("error: incomplete-calibration:")


def test_error_codes(tmp_path, capsys):
    assert main(["analyze", "--session", str(tmp_path / "nope.h5")]) == 2
    assert "error: file-not-found:" in capsys.readouterr().err
    bad = tmp_path / "bad.h5"
    bad.write_bytes(b"junk")
    assert main(["analyze", "--session", str(bad)]) == 2
    assert "error: corrupt-file:" in capsys.readouterr().err
    cfg = tmp_path / "c.yaml"
    cfg.write_text("[unclosed\n")
    assert main(["--config", str(cfg), "synth", "--out", str(tmp_path / "o")]) == 2
    assert "error: config:" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "jawkin", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("jawkin ")
