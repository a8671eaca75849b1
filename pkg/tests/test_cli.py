import csv
import json

import pytest

from plapmem.cli import parse_config, run_cli
from plapmem.errors import ConfigError


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_minimal_solve_config_defaults():
    cfg = parse_config('{"case": "MS2", "p": 4, "r": 1, "m": 64, "N": 128}', "solve")
    assert (cfg.mode, cfg.case, cfg.p, cfg.m, cfg.N) == ("solve", "MS2", 4.0, 64, 128)
    assert cfg.solver.method == "picard" and cfg.solver.tol == 1e-10 and cfg.solver.max_iter == 100
    resolved = cfg.resolved()
    assert resolved["solver"]["relaxation"] == pytest.approx(0.5)


@pytest.mark.parametrize("text,needle", [
    ('{"case": "MS2", "p": 4, "m": 8, "N": 0}', "N"),
    ('{"case": "MS2", "p": 4, "m": 8, "N": 8, "theta": 0.5}', "theta"),
    ('{"case": "MS2", "p": 1.5, "m": 8, "N": 8}', "p"),
    ('{"case": "MS1", "p": 2, "m": 8, "N": 8}', "p"),
    ('{"case": "MS7", "p": 3, "m": 8, "N": 8}', "case"),
    ('{"case": "MS2", "p": 3, "m": 8, "N": 8, "solver": {"tol": -1}}', "tol"),
    ('{"case": "MS2", "p": 3, "m": 8, "N": 8, "m_list": [8, 16]}', "m_list"),
])
def test_schema_and_range_errors_name_the_field(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text, "solve")


def test_ladders_must_increase():
    with pytest.raises(ConfigError, match="m_list"):
        parse_config('{"case": "MS2", "p": 3, "m_list": [16, 8]}', "study-space")


def test_parse_error_reports_position():
    with pytest.raises(ConfigError, match="line 2, column"):
        parse_config('{"case": "MS2",\n "p": }', "solve")


def test_solve_writes_outputs(tmp_path):
    cfg = _write(tmp_path, {"case": "MS2", "p": 3, "r": 2, "m": 8, "N": 8})
    assert run_cli(["solve", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    rows = _rows(tmp_path / "o" / "solution.csv")
    assert rows[0] == ["x", "U", "Y", "exact_u", "exact_y"]
    assert len(rows) == 1 + 2 * 8 + 1
    meta = json.loads((tmp_path / "o" / "meta.json").read_text())
    assert meta["config"]["m"] == 8 and meta["config"]["solver"]["tol"] == 1e-10
    assert meta["summary"]["admissibility"] == pytest.approx(0.5 + 1 / 64)


def test_outputs_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, {"case": "MS2", "p": 4, "m_list": [8, 16], "N_factor": 2})
    for d in ("a", "b"):
        assert run_cli(["study-space", "--config", cfg, "--out", str(tmp_path / d), "--quiet"]) == 0
    eoc_a = (tmp_path / "a" / "eoc.csv").read_bytes()
    assert eoc_a == (tmp_path / "b" / "eoc.csv").read_bytes()
    rows = _rows(tmp_path / "a" / "eoc.csv")
    assert rows[0] == ["h", "err_u", "err_y", "eoc_u", "eoc_y"] and len(rows) == 3


def test_study_time_prints_levels(tmp_path, capsys):
    cfg = _write(tmp_path, {"case": "MS2", "p": 2, "m": 64, "N_list": [4, 8]})
    assert run_cli(["study-time", "--config", cfg, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 2 and all("admissibility=" in line and "iterations=" in line for line in out)
    assert _rows(tmp_path / "eoc.csv")[0][0] == "delta"


def _inline(g0, T, N):
    return {"problem": {"p": 3, "T": T, "kernel": {"type": "const", "c": g0}}, "m": 8, "N": N}


def test_inadmissible_step_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, _inline(-2.0, 3.0, 1))
    assert run_cli(["solve", "--config", cfg, "--out", str(tmp_path)]) == 4
    assert "-4/g(0) = 2" in capsys.readouterr().err
    cfg = _write(tmp_path, _inline(-2.0, 3.0, 3), "ok.json")
    assert run_cli(["solve", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0


def test_exit_codes(tmp_path):
    bad = _write(tmp_path, {"case": "MS2", "p": 3, "m": 8, "N": 0})
    assert run_cli(["solve", "--config", bad, "--out", str(tmp_path)]) == 2
    assert run_cli(["solve", "--config", str(tmp_path / "missing.json")]) == 2
    assert run_cli(["bogus"]) == 2
    stiff = _write(tmp_path, {"case": "MS2", "p": 4, "m": 32, "N": 4, "solver": {"max_iter": 1}}, "s.json")
    assert run_cli(["solve", "--config", stiff, "--out", str(tmp_path), "--quiet"]) == 3


def test_validate(tmp_path):
    cfg = _write(tmp_path, {"case": "MS1", "p": 3})
    assert run_cli(["validate", "--config", cfg, "--out", str(tmp_path), "--quiet", "--seed", "7"]) == 0
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["summary"]["passed"] is True and meta["seed"] == 7
