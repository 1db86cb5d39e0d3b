import json

import pytest

from wivelo import formats as F
from wivelo.cli import main


@pytest.fixture
def docs(tmp_path):
    (tmp_path / "layout.json").write_text(json.dumps({"ref_distance": 2.1}))
    (tmp_path / "path.json").write_text(json.dumps({
        "kind": "straight", "bbox": [-1.2, 1.2, 1.2, 2.4], "speed": 1.0,
        "pause_before": 0.5, "pause_after": 0.5, "labels": {"scene": "lab"},
    }))
    (tmp_path / "scene.json").write_text(json.dumps({"noise_sigma": 0.05, "scatterers": 5}))
    return tmp_path


def _pipeline(d, tag, trace_name="trace.wvlo"):
    out = d / tag
    assert main(["simulate", "--layout", str(d / "layout.json"), "--path", str(d / "path.json"),
                 "--config", str(d / "scene.json"), "--seed", "3", "--out", str(out / trace_name)]) == 0
    assert main(["track", "--layout", str(d / "layout.json"), "--trace", str(out / trace_name),
                 "--out", str(out / "pred.json")]) == 0
    assert main(["eval", str(out / "pred.json"), str(out / (trace_name + ".truth.json")),
                 "--out", str(out / "metrics.json")]) == 0
    return out


def test_round_trip_is_byte_identical(docs, capsys):
    a, b = _pipeline(docs, "a"), _pipeline(docs, "b")
    for name in ("trace.wvlo", "trace.wvlo.truth.json", "pred.json", "metrics.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    err = float(capsys.readouterr().out.split()[0])
    assert 0 <= err < 1.0
    metrics = F.read_document(a / "metrics.json")
    assert metrics["labels"]["scene"] == "lab" and metrics["manifest"]["digest"]


def test_text_and_binary_traces_track_identically(docs):
    a, b = _pipeline(docs, "bin"), _pipeline(docs, "txt", "trace.csv")
    va = F.read_document(a / "pred.json")["vertices"]
    vb = F.read_document(b / "pred.json")["vertices"]
    assert va == vb


def test_noise_sweep_writes_one_trace_per_sigma(docs, monkeypatch):
    monkeypatch.setenv("WIVELO_OUT_DIR", str(docs / "sweep"))
    assert main(["simulate", "--layout", str(docs / "layout.json"), "--path", str(docs / "path.json"),
                 "--noise", "0", "0.1", "--out", "t.wvlo"]) == 0
    assert (docs / "sweep" / "t-sigma0.wvlo").exists()
    truth = F.read_document(docs / "sweep" / "t-sigma0.1.wvlo.truth.json")
    assert truth["labels"]["noise_sigma"] == "0.1"


def test_report_groups(docs, capsys):
    out = _pipeline(docs, "r")
    capsys.readouterr()
    assert main(["report", str(out / "metrics.json"), "--group-by", "scene", "--out", str(out / "rep.json")]) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[0].startswith("group") and table[2].startswith("scene=lab")
    assert F.read_document(out / "rep.json")["count"] == 1


def test_exit_codes(docs, tmp_path):
    lay, path = str(docs / "layout.json"), str(docs / "path.json")
    assert main(["report", str(tmp_path / "none*.json")]) == 2
    (tmp_path / "bad.json").write_text(json.dumps({"ref_distance": 2.1, "oops": 1}))
    assert main(["simulate", "--layout", str(tmp_path / "bad.json"), "--path", path, "--out", str(tmp_path / "x.wvlo")]) == 2
    assert main(["track", "--layout", lay, "--trace", str(tmp_path / "missing.wvlo"), "--out", str(tmp_path / "p.json")]) == 3
    (tmp_path / "cut.wvlo").write_bytes(b"WVLO\x01\x00")
    assert main(["track", "--layout", lay, "--trace", str(tmp_path / "cut.wvlo"), "--out", str(tmp_path / "p.json")]) == 3
    assert main(["report", lay]) == 2
