import json

import numpy as np
import pytest

from clmdl.cli import main, parse_sim_segments
from clmdl.errors import ConfigError
from clmdl.ingest import load_csv

SEGS = "sim_segments=M1[-0.6,0.3,1]x30; M1[0.6,2,1]x30"


def _strip(doc):
    doc = dict(doc)
    doc.pop("timing_seconds", None)
    return doc


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    csv = d / "sim.csv"
    rc = main(["simulate", "--out", str(csv), "--seed", "4", "--set", "sim_side=4", "--set", SEGS, "-q"])
    assert rc == 0
    return d, csv


def test_simulate_outputs(simulated):
    d, csv = simulated
    truth = json.loads((d / "sim.csv.truth.json").read_text())
    assert truth["change_points"] == [30] and truth["S"] == 16 and truth["T"] == 60
    pan = load_csv(csv)
    assert pan.y.shape == (60, 16)


def test_detect_ci_pipeline(simulated, capsys):
    d, csv = simulated
    res = d / "res.json"
    assert main(["detect", str(csv), "--out", str(res), "--set", "models=M1", "-q"]) == 0
    doc = json.loads(res.read_text())
    assert doc["m"] == 1 and abs(doc["tau"][0] - 30) <= 2
    assert doc["tau_time_index"] == doc["tau"]
    assert len(doc["segments"]) == 2 and doc["C"] > 0
    ci = d / "ci.json"
    assert main(["ci", str(res), "--out", str(ci), "--n-rep", "30", "-q"]) == 0
    out = json.loads(ci.read_text())
    iv = out["intervals"][0]
    assert iv["lower"] <= doc["tau"][0] <= iv["upper"] and iv["informative"]
    # exact search agrees with the default on this instance; reruns are identical
    assert main(["detect", str(csv), "--search", "exact", "--set", "models=M1", "-q"]) == 0
    ex = json.loads(capsys.readouterr().out)
    assert ex["tau"] == doc["tau"] and ex["clmdl"] == pytest.approx(doc["clmdl"], rel=1e-9)
    assert main(["detect", str(csv), "--set", "models=M1", "-q"]) == 0
    again = json.loads(capsys.readouterr().out)
    again["data_path"] = doc["data_path"]
    assert _strip(again) == _strip(doc)


def test_exit_codes(simulated, tmp_path):
    d, csv = simulated
    assert main(["detect", str(tmp_path / "missing.csv"), "-q"]) == 1
    assert main(["detect", str(csv), "--set", "bogus=1", "-q"]) == 3
    assert main(["detect", str(csv), "--set", "metric=geodesic", "-q"]) == 3
    assert main(["detect", str(csv), "--log1p", "-q"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["ci", str(bad), "-q"]) == 1
    assert main(["simulate", "--set", SEGS, "-q"]) == 3
    # a Matern segment of squared distance is not positive definite on a grid
    assert main(["simulate", "--out", str(tmp_path / "x.csv"), "--set", "sim_side=8",
                 "--set", "sim_segments=matern-const[0.3,-0.5,2,0.9,0.9]x5", "-q"]) == 2


def test_parse_sim_segments():
    segs = parse_sim_segments("M1[-0.5,0.6,1]x10; M2[0,0.2,0.6,1]x20@plain; matern-const[0.3,-0.5,2,0.9,0.9]x5@clip")
    assert [s.length for s in segs] == [10, 20, 5]
    assert segs[1].spatial_kernel == "plain" and segs[2].clip_negative
    assert np.allclose(segs[0].theta, (-0.5, 0.6, 1))
    for bad in ("", "M1(1,2)x3", "M1[a,b,c]x3", "M1[0.1,1]x3", "M1[0.1,1,1]x0"):
        with pytest.raises(ConfigError):
            parse_sim_segments(bad)


def test_replicate_small(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["replicate", "1", "--rows", "0", "--n-rep", "1", "--out", str(out), "-q"]) == 0
    assert out.exists() and (tmp_path / "t.records.csv").exists()
    assert main(["replicate", "1", "--rows", "999", "--n-rep", "1", "-q"]) == 3
