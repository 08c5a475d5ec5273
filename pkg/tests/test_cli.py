import csv
import json
import math
import subprocess
import sys

import pytest

from shapepants.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, dumps, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_dumps_is_deterministic_and_full_precision():
    text = dumps({"a": [0.1, 1.0, float("nan")], "b": True, "c": {"d": 3}})
    assert '"a": [0.10000000000000001, 1, null]' in text
    assert json.loads(text)["c"]["d"] == 3
    with pytest.raises(TypeError):
        dumps({"x": object()})


def test_curvature_equal_and_unequal(tmp_path, capsys):
    code, out, _ = run(capsys, "curvature", "--grid", "120", "--out", str(tmp_path / "eq"))
    assert code == EXIT_OK and "all-nonpositive" in out
    rows = list(csv.reader(open(tmp_path / "eq" / "curvature.csv")))
    assert rows[0] == ["phi", "theta", "s1", "s2", "s3", "conformal_factor", "curvature", "kappa"]
    summary = json.loads((tmp_path / "eq" / "curvature.json").read_text())
    assert summary["verdict"] == "all-nonpositive"
    assert (tmp_path / "eq" / "curvature.svg").exists()
    code, out, _ = run(capsys, "curvature", "--grid", "120", "--masses", "1,1,2", "--no-svg",
                       "--out", str(tmp_path / "uneq"))
    assert code == EXIT_OK and "mixed-sign" in out
    assert not (tmp_path / "uneq" / "curvature.svg").exists()


def test_outputs_are_byte_identical(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(capsys, "curvature", "--grid", "40", "--out", str(tmp_path / name))[0] == EXIT_OK
    for f in ("curvature.csv", "curvature.json", "curvature.svg"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_geodesic_command(tmp_path, capsys):
    code, out, _ = run(capsys, "geodesic", "--start", "euler:1", "--angle", "1.0", "--length", "5",
                       "--out", str(tmp_path))
    assert code == EXIT_OK and "fate:" in out
    rows = list(csv.reader(open(tmp_path / "trajectory.csv")))
    assert len(rows) > 10
    events = json.loads((tmp_path / "events.json").read_text())
    assert isinstance(events, (list, dict))
    code, _, _ = run(capsys, "geodesic", "--start", "lagrange", "--length", "1", "--no-svg",
                     "--out", str(tmp_path / "pole"))
    assert code == EXIT_OK


def test_syzygy_command(capsys):
    assert run(capsys, "syzygy", "reduce", "12213")[1].strip() == "3"
    code, out, _ = run(capsys, "syzygy", "reduce", "1221")
    assert code == EXIT_OK and out.startswith('""')
    assert run(capsys, "syzygy", "reduce", "1231", "--periodic")[1].strip() == "23"
    info = json.loads(run(capsys, "syzygy", "classify", "(123)(12)")[1])
    assert info["tied"] and info["collision_forward"] and not info["collision_backward"]
    assert run(capsys, "syzygy", "decorate", "1232")[1].split() == ["1+2-3+2-", "1-2+3-2+"]
    assert run(capsys, "syzygy", "decorate", "123")[0] == EXIT_INVALID
    assert run(capsys, "syzygy", "approx", "(21)3(21)", "-N", "2")[0] == EXIT_OK


def test_ends_command(tmp_path, capsys):
    code, out, _ = run(capsys, "ends", "--ell", "2,6", "--out", str(tmp_path))
    assert code == EXIT_OK
    lim = f"{1 / math.sqrt(2):.10f}"
    assert lim in out
    data = json.loads((tmp_path / "ends.json").read_text())
    assert data["rows"][-1]["max_dev"] < 1e-4


def test_collide_command(tmp_path, capsys):
    code, out, _ = run(capsys, "collide", "--kstar", "1.0", "--perturbations", "3", "--out", str(tmp_path))
    assert code == EXIT_OK and "PASS" in out
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] is True
    assert (tmp_path / "timeline.csv").exists()
    assert run(capsys, "collide", "--delta", "5", "--kstar", "1", "--out", str(tmp_path))[0] == EXIT_INVALID


def test_realize_command(tmp_path, capsys):
    code, out, _ = run(capsys, "realize", "--restarts", "1", "--out", str(tmp_path))
    assert code == EXIT_OK and "lengths:" in out
    data = json.loads((tmp_path / "realize.json").read_text())
    assert data["word"] == "1+2-3+1-2+3-" and len(data["converged_lengths"]) == 1
    assert data["runs"][0]["converged"]
    code, _, err = run(capsys, "realize", "--word", "1+2-", "--out", str(tmp_path))
    assert code == EXIT_INVALID and "UntiedWord" in err


def test_validation_errors(tmp_path, capsys):
    assert run(capsys, "curvature", "--grid", "1", "--out", str(tmp_path))[0] == EXIT_INVALID
    assert run(capsys, "curvature", "--masses", "1,-1,1")[0] == EXIT_INVALID
    assert run(capsys, "nonsense")[0] == EXIT_INVALID
    assert run(capsys, "geodesic", "--start", "euler:7", "--out", str(tmp_path))[0] == EXIT_INVALID


def test_numerical_failure_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "realize", "--restarts", "1", "--max-iter", "1", "--out", str(tmp_path))
    assert code == EXIT_NUMERICAL and "NoConvergence" in err


def test_config_file_defaults_and_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid": 30, "masses": [1, 1, 2], "no_svg": True}))
    code, out, _ = run(capsys, "--config", str(cfg), "curvature", "--out", str(tmp_path / "c"))
    assert code == EXIT_OK and "mixed-sign" in out
    code, out, _ = run(capsys, "--config", str(cfg), "curvature", "--masses", "1,1,1", "--out",
                       str(tmp_path / "d"))
    assert "all-nonpositive" in out
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "--config", str(bad), "curvature")[0] == EXIT_INVALID


def test_console_script_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "shapepants.cli", "syzygy", "reduce", "11"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith('""')
