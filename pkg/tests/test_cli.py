import json
import os
import subprocess
import sys

import pytest

from qcnet import cli, formats
from qcnet.quarry import ClosedLoop, ExcavatorSite, LoadTemplate, QuarryConfig
from qcnet.synthesis import build_from_graph, loop_graph, ring_graph


@pytest.fixture(autouse=True)
def no_output_dir(monkeypatch):
    monkeypatch.delenv(cli.OUTPUT_DIR_ENV, raising=False)


@pytest.fixture
def files(tmp_path):
    (tmp_path / "ring.graph.json").write_text(formats.serialize_graph(ring_graph(8, 1.0)))
    cfg = QuarryConfig(loop_graph([(0, 0), (10, 0), (10, 10), (0, 10)]), 1.0, 1.0,
                       [ExcavatorSite("v0", 5.0, LoadTemplate(10.0, {"clear_sand": 1.0}))], ["v2"], ClosedLoop(3))
    (tmp_path / "quarry.json").write_text(formats.serialize_config(cfg, steps=300, seed=1))
    (tmp_path / "state.json").write_text(json.dumps({"mode": "discrete", "tokens": {"0": {"w": 1}, "3": {}}}))
    return tmp_path


def test_build_validate_simulate_render(files):
    d = files
    assert cli.main(["build", str(d / "ring.graph.json"), "-R", "1", "-o", str(d / "ring.net.json")]) == 0
    assert cli.main(["validate", str(d / "ring.net.json")]) == 0
    assert cli.main(["simulate", str(d / "ring.net.json"), "--steps", "9", "--stride", "4",
                     "--state", str(d / "state.json"), "--trace", str(d / "t.csv")]) == 0
    net = formats.parse_net((d / "ring.net.json").read_text())
    trace = formats.import_trace((d / "t.csv").read_text(), net)
    assert trace.snapshot_steps() == [0, 4, 8, 9]
    assert cli.main(["render", str(d / "ring.net.json"), str(d / "t.csv"), "--format", "ascii",
                     "--out-dir", str(d / "frames")]) == 0
    assert len(os.listdir(d / "frames")) == 4


def test_validate_invalid_net(files, capsys):
    doc = json.loads(formats.serialize_net(build_from_graph(ring_graph(4, 1.0), 1.0)))
    doc["cells"].append({"id": 4, "x": 100.0, "y": 100.0, "z": 0.0, "kind": {"type": "regular"}, "directions": []})
    (files / "bad.json").write_text(json.dumps(doc))
    assert cli.main(["validate", str(files / "bad.json")]) == 1
    assert "cell 4 has no neighbor" in capsys.readouterr().out


def test_degenerate_edge_exit_code(files, capsys):
    doc = {"format": "qcnet-graph", "vertices": [{"id": "a", "x": 1, "y": 1}, {"id": "b", "x": 1, "y": 1}],
           "edges": [{"source": "a", "target": "b"}]}
    (files / "deg.json").write_text(json.dumps(doc))
    assert cli.main(["build", str(files / "deg.json"), "-R", "1", "-o", str(files / "x.json")]) == 1
    assert "DegenerateEdge" in capsys.readouterr().err


def test_usage_errors(files):
    assert cli.main([]) == 2
    assert cli.main(["simulate", "nope.json", "--steps", "3", "--trace", "t.csv"]) == 2
    assert cli.main(["simulate", str(files / "x"), "--steps", "-1", "--trace", "t.csv"]) == 2
    assert cli.main(["frobnicate"]) == 2


def test_seeded_simulation_is_byte_identical(files):
    d = files
    cli.main(["build", str(d / "ring.graph.json"), "-R", "1", "-o", str(d / "n.json")])
    for name in ("a.csv", "b.csv"):
        assert cli.main(["simulate", str(d / "n.json"), "--steps", "30", "--seed", "7",
                         "--state", str(d / "state.json"), "--trace", str(d / name)]) == 0
    assert (d / "a.csv").read_bytes() == (d / "b.csv").read_bytes()


def test_continuous_simulation(files):
    d = files
    cli.main(["build", str(d / "ring.graph.json"), "-R", "1", "-o", str(d / "n.json")])
    (d / "lv.json").write_text(json.dumps({"mode": "continuous", "levels": {"0": 4.0}}))
    assert cli.main(["simulate", str(d / "n.json"), "--steps", "5", "--mode", "continuous", "--delta", "0.5",
                     "--state", str(d / "lv.json"), "--trace", str(d / "c.csv")]) == 0
    assert cli.main(["simulate", str(d / "n.json"), "--steps", "5", "--mode", "discrete",
                     "--state", str(d / "lv.json"), "--trace", str(d / "c.csv")]) == 2


def test_quarry_and_metrics(files):
    d = files
    assert cli.main(["quarry", str(d / "quarry.json"), "--trace", str(d / "q.csv"),
                     "--metrics", str(d / "m.csv")]) == 0
    assert cli.main(["metrics", str(d / "q.csv"), "--config", str(d / "quarry.json"),
                     "-o", str(d / "m2.csv")]) == 0
    assert (d / "m.csv").read_text() == (d / "m2.csv").read_text()
    assert formats.parse_metrics((d / "m.csv").read_text())["steps"] == 300


def test_output_dir_env(files, monkeypatch):
    out = files / "outputs"
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(out))
    assert cli.main(["build", str(files / "ring.graph.json"), "-R", "1", "-o", "ring.net.json"]) == 0
    assert (out / "ring.net.json").exists()


def test_module_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "qcnet", "validate", "missing.json"],
                          capture_output=True, text=True, cwd=files)
    assert proc.returncode == 2
    assert "cannot read" in proc.stderr
