import json

import numpy as np
import pytest

from exitset_lab import cli
from exitset_lab.errors import ParseError, ValidationError
from exitset_lab.grid import TorusGrid, save_field


def write(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj, indent=1))
    return path


def test_minimal_config_gets_defaults(tmp_path):
    cfg = cli.parse_config(write(tmp_path, {"grid": {"N": 64}}), tag="constants")
    assert cfg.grid == {"n": 3, "N": 64, "L": 2 * np.pi}
    assert cfg.curvature == {"type": "constant", "value": -1.0}
    assert cfg.seed == 0 and cfg.experiment["tag"] == "constants"


def test_non_power_of_two_is_rejected(tmp_path):
    with pytest.raises(ValidationError) as info:
        cli.parse_config(write(tmp_path, {"grid": {"N": 63}}))
    assert any("power of two" in p for p in info.value.problems)


def test_close_peaks_are_rejected(tmp_path):
    L = 2 * np.pi
    eps = L / 8
    cfg = {"grid": {"N": 32}, "curvature": {"type": "double_peak", "a1": [1.0, 1.0, 1.0],
                                           "a2": [1.0 + 3 * eps, 1.0, 1.0]}}
    with pytest.raises(ValidationError) as info:
        cli.parse_config(write(tmp_path, cfg))
    assert any("4*eps_c" in p for p in info.value.problems)


def test_every_problem_is_listed(tmp_path):
    with pytest.raises(ValidationError) as info:
        cli.parse_config(write(tmp_path, {"grid": {"N": 63, "n": 7, "L": -1}, "seed": "x"}))
    assert len(info.value.problems) == 4


def test_unknown_key_names_key_and_line(tmp_path):
    text = '{\n  "grid": {\n    "N": 32,\n    "spacing": 2\n  }\n}\n'
    with pytest.raises(ParseError) as info:
        cli.parse_config(write(tmp_path, text))
    assert "grid.spacing" in str(info.value) and "line 4" in str(info.value)


def test_malformed_json_reports_position(tmp_path):
    with pytest.raises(ParseError) as info:
        cli.parse_config(write(tmp_path, '{"grid": {"N": 32,}}'))
    assert "line 1" in str(info.value)


def test_missing_curvature_file(tmp_path):
    with pytest.raises(ValidationError):
        cli.parse_config(write(tmp_path, {"curvature": {"type": "file", "path": str(tmp_path / "none.field")}}))


def test_curvature_from_file(tmp_path):
    g = TorusGrid(3, 8)
    K = -1.0 + 0.5 * np.cos(g.distance_to((1.0, 1.0, 1.0)))
    save_field(tmp_path / "K.field", g, K)
    cfg = cli.parse_config(write(tmp_path, {"grid": {"N": 8},
                                            "curvature": {"type": "file", "path": str(tmp_path / "K.field")}}))
    curv, spec = cli.build_curvature(cfg, cfg.make_grid())
    assert spec is None and np.array_equal(curv.K, K)


def test_tag_mismatch(tmp_path):
    with pytest.raises(ValidationError):
        cli.parse_config(write(tmp_path, {"experiment": {"tag": "nu1"}}), tag="flow")


def test_constants_run_writes_report(tmp_path, capsys):
    code = cli.main(["constants", "--out", str(tmp_path / "out")])
    assert code == cli.EXIT_OK
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["status"] == "pass"
    assert report["constants"]["c1"] == pytest.approx(2.46740110, abs=1e-8)
    assert report["constants"]["b0"] == pytest.approx(4.18879020, abs=1e-8)
    assert report["constants"]["c4"] == pytest.approx(7.40220330, abs=1e-8)
    assert report["config"]["grid"]["N"] == 64
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 5 and all(line.startswith("PASS") for line in lines)


def test_config_error_exit_status(tmp_path):
    assert cli.main(["constants", "--config", str(write(tmp_path, {"grid": {"N": 63}}))]) == cli.EXIT_CONFIG


def test_module_error_becomes_failure_record(tmp_path):
    # lambda 40 is not resolvable at N = 16
    cfg = write(tmp_path, {"grid": {"N": 16}, "experiment": {"params": {"lambdas": [40.0]}}})
    assert cli.main(["lemma21", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_ERROR
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["status"] == "error" and report["failure"]["error"] == "ResolutionError"


def test_failing_assertion_exit_status(tmp_path, capsys):
    # a negative slack demands faster than possible decay
    cfg = write(tmp_path, {"grid": {"N": 64, "L": 1.25},
                           "experiment": {"params": {"lambdas": [5, 10, 20], "slack": -1.0}}})
    code = cli.main(["lemma21", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_ASSERTION
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["status"] == "fail"
    assert sum(line.startswith("FAIL") for line in capsys.readouterr().out.splitlines()) == 2


def test_same_seed_gives_identical_tables(tmp_path):
    cfg = write(tmp_path, {"grid": {"N": 16}, "curvature": {"type": "double_peak"},
                           "experiment": {"params": {"samples": 4}}})
    for name in ("a", "b"):
        assert cli.main(["homotopy", "--config", str(cfg), "--out", str(tmp_path / name), "--seed", "7"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
