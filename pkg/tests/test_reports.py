import json

import numpy as np
import pytest

from imtk.commands import list_runs, record_run
from imtk.reports import RunManifest, dumps, format_float, write_csv, write_json, write_manifold, write_trajectory


@pytest.mark.parametrize(
    "value, text",
    [
        (1.0, "1.0"),
        (0.1, "0.10000000000000001"),
        (float("nan"), '"nan"'),
        (float("-inf"), '"-inf"'),
        (1e-20, "9.9999999999999995e-21"),
    ],
)
def test_format_float(value, text):
    assert format_float(value) == text


def test_dumps_is_valid_json_and_keeps_key_order():
    payload = {"status": "pass", "margin": np.float64(0.5), "j": np.int64(2), "ok": np.bool_(True), "v": np.array([1.0, 2.0])}
    text = dumps(payload)
    assert list(json.loads(text)) == ["status", "margin", "j", "ok", "v"]
    assert json.loads(text)["v"] == [1.0, 2.0]
    assert dumps(payload) == text


def test_dumps_rejects_unknown_types():
    with pytest.raises(TypeError):
        dumps({"x": object()})


def test_write_json_creates_folders(tmp_path):
    path = write_json(tmp_path / "a" / "b.json", {"status": "success"})
    assert json.loads(path.read_text()) == {"status": "success"}


def test_csv_rows(tmp_path):
    path = write_csv(tmp_path / "x.csv", ["k", "value"], [[0, 0.25], [1, np.float64(1.5)]])
    assert path.read_text().splitlines() == ["k,value", "0,0.25", "1,1.5"]


def test_trajectory_header(tmp_path):
    path = write_trajectory(tmp_path / "t.csv", [0.0, 1.0], [[1.0, 2.0], [3.0, 4.0]])
    assert path.read_text().splitlines()[0] == "t,zeta_1,zeta_2"


def test_manifold_files(tmp_path, lin2_manifold):
    csv_path, meta_path = write_manifold(lin2_manifold, tmp_path / "manifold")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "zeta_1,v_1,v_2"
    assert len(lines) == 22
    meta = json.loads(meta_path.read_text())
    assert meta["j"] == 1
    assert meta["converged"] is True


def test_manifest_tracks_missing_artifacts(tmp_path):
    present = write_json(tmp_path / "r.json", {})
    manifest = RunManifest(command="gap", seed=7).finish([present, tmp_path / "missing.csv"])
    assert manifest.finished_at is not None
    assert manifest.missing_artifacts() == [str(tmp_path / "missing.csv")]
    assert manifest.to_dict()["seed"] == 7


def test_run_registry_round_trip():
    manifest = RunManifest(command="check-freq", config_paths=["SYS-SCALAR"]).finish([])
    stored = record_run(manifest, 0)
    assert stored["status"] == "success"
    runs = list_runs()
    assert runs["count"] == 1
    assert runs["runs"][0]["command"] == "check-freq"
    assert runs["runs"][0]["config_paths"] == ["SYS-SCALAR"]
    assert runs["runs"][0]["exit_code"] == 0
