import json
import math

import pytest

from masscrit.cli import _json_text, main, run
from masscrit.scenario import (ConfigError, Scenario, build_nonlinearity, parse_scenario, scenario_to_ini,
                               two_scale_ell, validate)


def errors(sc):
    return [d for d in validate(sc) if d.severity == "error"]


def test_defaults_validate_clean():
    assert errors(Scenario()) == []


def test_ini_roundtrip():
    sc = parse_scenario("[problem]\nN = 3\n[nonlinearity]\nkind = bump\neps = 0.25\nsign = -1\n"
                        "[experiment]\neps_list = 0.2, 0.05\n[run]\nseed = 17\n")
    assert sc.problem.N == 3 and sc.nonlinearity.sign == -1 and sc.seed == 17
    assert sc.experiment.eps_list == (0.2, 0.05)
    assert parse_scenario(scenario_to_ini(sc)) == sc


def test_auto_words_parse_to_none():
    sc = parse_scenario("[nonlinearity]\nell = auto\n[experiment]\nmass = none\n")
    assert sc.nonlinearity.ell is None and sc.experiment.mass is None


@pytest.mark.parametrize("text,line", [
    ("[problem]\nN = 2\n[bogus]\nx = 1\n", 3),
    ("[problem]\nN = 2\nsize = 4\n", 3),
    ("[grid]\n\nn = many\n", 3),
    ("N = 2\n", 1),
])
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_scenario(text)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_validate_flags_large_profile_height():
    sc = parse_scenario("[nonlinearity]\nkind = profile\nalpha = 0.7\n")
    keys = [d.key for d in errors(sc)]
    assert any("alpha" in k for k in keys)


def test_validate_flags_dimension_one():
    assert errors(parse_scenario("[problem]\nN = 1\n"))


def test_validate_flags_short_lambda_range():
    sc = parse_scenario("[experiment]\nlambda_min = -1\nlambda_max = 1\n")
    assert errors(sc)


def test_validate_flags_narrow_height_span():
    assert errors(parse_scenario("[experiment]\nheight_min = 1\nheight_max = 100\n"))


def test_two_scale_default_shift():
    sc = parse_scenario("[nonlinearity]\nkind = two_scale\n")
    assert two_scale_ell(sc) == pytest.approx(15.805, abs=1e-3)
    assert build_nonlinearity(sc).kind == "perturbed_power"


def test_json_text_formats():
    text = _json_text({"a": 0.1, "b": math.inf, "c": [1, None, True]})
    assert "0.10000000000000001" in text
    data = json.loads(text)
    assert data["b"] == "Infinity" and data["c"] == [1, None, True]


def test_cli_validate_echoes_defaults(capsys, tmp_path):
    cfg = tmp_path / "empty.ini"
    cfg.write_text("")
    assert main(["validate", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "[problem]" in out and "N = 2" in out


def test_cli_validate_error_exit(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[problem]\nN = 1\n")
    assert main(["validate", "--config", str(cfg)]) == 1


def test_cli_config_error_exit(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[problem]\nwho = 1\n")
    assert main(["ground-state", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_cli_rejects_negative_seed():
    with pytest.raises(SystemExit):
        main(["validate", "--seed", "-1"])


def test_ground_state_run_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["ground-state", "--out", str(a)]) == 0
    assert main(["ground-state", "--out", str(b)]) == 0
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    assert (a / "ground_state.csv").read_bytes() == (b / "ground_state.csv").read_bytes()
    manifest = (a / "MANIFEST.txt").read_text()
    assert "theorem tags:" in manifest and "summary.json" in manifest
    s = json.loads((a / "summary.json").read_text())
    assert s["result"]["mass_over_m1"] == pytest.approx(1.0, rel=1e-8)
    assert "elapsed" not in (a / "summary.json").read_text()


def test_scenario_file_reproduces_run(tmp_path, capsys):
    a = tmp_path / "a"
    assert main(["zero-mass", "--out", str(a)]) == 0
    b = tmp_path / "b"
    assert main(["zero-mass", "--config", str(a / "scenario.ini"), "--out", str(b)]) == 0
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    assert json.loads((a / "summary.json").read_text())["result"]["verdict_g2"] == "NoSolutionFound"


def test_refine_doubles_resolution():
    sc = Scenario().refined()
    assert sc.grid.n == 8192
    assert sc.experiment.n_samples == 49
    assert sc.experiment.n_heights == 80


def test_run_refuses_invalid_scenario(tmp_path):
    with pytest.raises(ConfigError):
        run(parse_scenario("[problem]\nN = 1\n").with_experiment("ground-state"), tmp_path)


def test_duplicate_key_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_scenario("[grid]\nn = 4096\nn = 8192\n")
    assert exc.value.line == 3
