import json
import subprocess
import sys

import pytest

from czlab import cli
from czlab import experiments as ex

CHEAP = ["closed_form_oscillation", "mean_value_check", "growth_bound_check", "poly_growth_check"]


def _ini(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text)
    return path


def test_catalog(capsys):
    assert len(ex.CATALOG) >= 14
    assert len({e.name for e in ex.CATALOG}) == len(ex.CATALOG)
    assert all(e.anchor.strip() and e.summary.strip() for e in ex.CATALOG)
    assert cli.main(["list", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert set(doc) == {"experiments"}
    for item in doc["experiments"]:
        assert set(item) == {"name", "anchor", "summary"}
        assert all(isinstance(v, str) and v for v in item.values())


def test_empty_experiment_list(tmp_path):
    cfg = _ini(tmp_path, "[run]\nexperiments =\n")
    assert cli.main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "reports.json").read_text()) == []
    assert (tmp_path / "o" / "reports.csv").read_text().count("\n") == 1


def test_unknown_experiment(tmp_path, capsys):
    assert cli.main(["--experiment", "no_such_thing", "--out", str(tmp_path)]) == 2
    assert "no_such_thing" in capsys.readouterr().err
    cfg = _ini(tmp_path, "[run]\nexperiments = p2_identity_check\n[bogus_section]\nx = 1\n")
    assert cli.main(["--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_invalid_config(tmp_path):
    cfg = _ini(tmp_path, "[run]\ngrids = 128, 64\n")
    assert cli.main(["--config", str(cfg), "--experiment", "p2_identity_check", "--out", str(tmp_path)]) == 2
    cfg = _ini(tmp_path, "[run]\np = 1.0\n")
    assert cli.main(["--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_io_failures(tmp_path):
    assert cli.main(["--config", str(tmp_path / "missing.ini")]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["--experiment", "mean_value_check", "--out", str(blocker / "sub")]) == 3


def test_p2_refinement_rows(tmp_path):
    cfg = _ini(tmp_path, "[run]\nexperiments = p2_identity_check\n[p2_identity_check]\ngrids = 64, 128\n")
    assert cli.main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    res = json.loads((tmp_path / "o" / "reports.json").read_text())
    rows = [r for r in res[0]["reports"] if r["extra"]["case"] == "(1-|x|^2)_+^4"]
    assert [r["grid"]["m"] for r in rows] == [64, 128]
    assert abs(rows[1]["ratio"] - 1) < abs(rows[0]["ratio"] - 1)
    summary = (tmp_path / "o" / "summary.txt").read_text()
    assert "PASS  bump error contraction 64->128" in summary


def test_failed_rule_exits_1(tmp_path):
    # a single grid cannot show error contraction, and 3 x 3 pixels of bump miss the tolerance
    cfg = _ini(tmp_path, "[run]\nexperiments = p2_identity_check\n[p2_identity_check]\ngrids = 24, 32\n")
    assert cli.main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "FAIL" in (tmp_path / "o" / "summary.txt").read_text()


def test_deterministic_across_jobs(tmp_path):
    outs = []
    for jobs, name in ((1, "a"), (2, "b"), (1, "c")):
        args = ["--out", str(tmp_path / name), "--jobs", str(jobs), "--seed", "3"]
        for e in CHEAP:
            args += ["--experiment", e]
        assert cli.main(args) == 0
        outs.append(tuple((tmp_path / name / f).read_bytes() for f in ("reports.json", "reports.csv", "summary.txt")))
    assert outs[0] == outs[1] == outs[2]


def test_inputs_hash_tracks_configuration():
    s = ex.Settings()
    a = cli.inputs_hash("p2_identity_check", s, {"grids": "64, 128"})
    b = cli.inputs_hash("p2_identity_check", s, {"grids": "64, 256"})
    assert a != b and a == cli.inputs_hash("p2_identity_check", ex.Settings(), {"grids": "64, 128"})


def test_dump_fields(tmp_path):
    cfg = _ini(tmp_path, "[run]\nexperiments = p2_identity_check\n[p2_identity_check]\ngrids = 64, 128\n")
    assert cli.main(["--config", str(cfg), "--out", str(tmp_path / "o"), "--dump-fields"]) == 0
    from czlab.fieldio import read_field

    v = read_field(tmp_path / "o" / "fields" / "p2_identity_check" / "bump_m64.czf")
    assert v.domain.m == 64


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "czlab", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "maximal_oracle" in proc.stdout


def test_default_config_parses():
    from pathlib import Path

    cfg = cli.load_config(Path(__file__).parent.parent / "configs" / "default.ini")
    cfg.validate()
    assert cfg.experiments == [e.name for e in ex.CATALOG]


@pytest.mark.parametrize("backend", ["brute", "fft-like"])
def test_backend_flag(tmp_path, backend):
    args = ["--experiment", "closed_form_oscillation", "--maximal-backend", backend, "--out", str(tmp_path)]
    assert cli.main(args) == 0
