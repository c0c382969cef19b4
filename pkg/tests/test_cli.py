import json

import numpy as np
import pytest

from imtk import commands
from imtk.cli import EXIT_ERROR, EXIT_FAIL, EXIT_PASS, main


@pytest.fixture
def out(tmp_path):
    return tmp_path / "out"


def _read(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_gap_passes(out):
    assert main(["gap", "--N", "8", "--j", "3", "--lambda-lip", "3.0"]) == EXIT_PASS
    report = _read(out / "gap.json")
    assert report["status"] == "pass"
    assert report["margin"] == pytest.approx(0.5)
    manifest = _read(out / "gap.manifest.json")
    assert manifest["command"] == "gap"
    assert manifest["finished_at"] is not None


def test_gap_without_margin_fails(out):
    assert main(["gap", "--N", "8", "--j", "3", "--lambda-lip", "3.5"]) == EXIT_FAIL
    assert _read(out / "gap.json")["status"] == "fail"


def test_check_freq_on_scalar(out):
    assert main(["check-freq", "--system", "SYS-SCALAR"]) == EXIT_PASS
    report = _read(out / "check-freq.json")
    assert report["sup"] == pytest.approx(1.0 / 1.5, abs=1e-6)
    assert (out / "check-freq-sweep.csv").exists()


def test_check_freq_on_the_boundary_fails():
    assert main(["check-freq", "--system", "SYS-SCALAR", "--nu0", "1.0"]) == EXIT_FAIL


def test_small_delay_below_threshold(out):
    assert main(["small-delay", "--tau", "0.3", "--lambda-lip", "1.0"]) == EXIT_PASS
    assert _read(out / "small-delay.json")["tau_threshold"] == pytest.approx(0.36787944117144233)


def test_usage_error_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gap", "--N", "8"])
    assert exc.value.code == EXIT_ERROR
    assert "required" in capsys.readouterr().err


def test_unknown_fixture_is_an_error(out, capsys):
    assert main(["check-freq", "--system", "SYS-NOPE"]) == EXIT_ERROR
    error = _read(out / "check-freq.error.json")
    assert error["error"] == "ParseError"
    assert "ParseError" in capsys.readouterr().err


def test_numerical_crash_is_reported(out, monkeypatch, capsys):
    def singular(*args, **kwargs):
        raise np.linalg.LinAlgError("Singular matrix")

    monkeypatch.setattr(commands, "check_freq", singular)
    assert main(["check-freq", "--system", "SYS-SCALAR"]) == EXIT_ERROR
    error = _read(out / "check-freq.error.json")
    assert error["error"] == "LinAlgError"
    assert error["status"] == "error"
    capsys.readouterr()
    main(["runs"])
    listing = json.loads(capsys.readouterr().out)
    assert listing["runs"][0]["exit_code"] == EXIT_ERROR


def test_runs_are_listed(capsys):
    main(["gap", "--N", "8", "--j", "3", "--lambda-lip", "3.0"])
    capsys.readouterr()
    assert main(["runs", "--limit", "5"]) == EXIT_PASS
    listing = json.loads(capsys.readouterr().out)
    assert listing["count"] == 1
    assert listing["runs"][0]["command"] == "gap"
    assert listing["runs"][0]["exit_code"] == EXIT_PASS


def test_synth_p_writes_cone(out):
    assert main(["synth-p", "--system", "SYS-LIN2"]) == EXIT_PASS
    report = _read(out / "synth-p.json")
    assert report["j"] == 1
    assert (out / "cone.json").exists()


@pytest.mark.slow
def test_verify_all_is_reproducible(out):
    assert main(["verify-all", "SYS-LIN2"]) == EXIT_PASS
    names = ["verify-all.json", "check-freq.json", "synth-p.json", "verify-h3.json", "build-manifold.json", "manifold.csv"]
    first = {name: (out / name).read_bytes() for name in names}
    assert main(["verify-all", "SYS-LIN2"]) == EXIT_PASS
    for name in names:
        assert (out / name).read_bytes() == first[name], name
    report = _read(out / "verify-all.json")
    assert "gap" not in report["stages"]
    assert report["skipped"] == []
