"""Acceptance criteria 1 to 9, each driven through the command line entry point.

Every test prints one ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line to the terminal, then asserts the outcome.
"""

import json

import numpy as np
import pytest

from exitset_lab import cli

pytestmark = pytest.mark.slow

# lambda 40 needs lambda <= N / (2 L), so the bubble ladders run on a short box
SHORT_BOX = {"N": 128, "L": 1.25}


def run_cli(tmp_path, name, tag, config):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(config, indent=1))
    out = tmp_path / name
    code = cli.main([tag, "--config", str(path), "--out", str(out)])
    report = json.loads((out / "report.json").read_text())
    return code, report


def summarize(report):
    if report.get("failure"):
        return f"{report['failure']['error']}: {report['failure']['message']}"
    failed = [a for a in report.get("assertions", []) if not a["passed"]]
    shown = failed or report.get("assertions", [])
    return "; ".join(f"{a['name']} ({a['detail']})" for a in shown[:3])


def verdict(capsys, number, runs):
    ok = all(code == cli.EXIT_OK for _, code, _ in runs)
    detail = " | ".join(f"{label}: {summarize(rep)}" for label, _, rep in runs)
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    return ok


def test_criterion_1_constants(tmp_path, capsys):
    code, rep = run_cli(tmp_path, "c1", "constants", {"experiment": {"params": {"dims": [3, 4, 5]}}})
    assert verdict(capsys, 1, [("constants", code, rep)])
    c = rep["constants"]
    assert c["c1"] == pytest.approx(np.pi**2 / 4, rel=1e-10)
    assert c["b0"] == pytest.approx(4 * np.pi / 3, rel=1e-10)
    assert c["c4"] == pytest.approx(3 * np.pi**2 / 4, rel=1e-10)


def test_criterion_2_bubble_residual_ladder(tmp_path, capsys):
    code, rep = run_cli(tmp_path, "c2", "lemma21",
                        {"grid": SHORT_BOX, "experiment": {"params": {"lambdas": [10, 20, 40]}}})
    assert verdict(capsys, 2, [("lemma21", code, rep)])


def test_criterion_3_interaction_estimates(tmp_path, capsys):
    code, rep = run_cli(tmp_path, "c3", "lemma22", {"grid": SHORT_BOX})
    assert verdict(capsys, 3, [("lemma22", code, rep)])


def test_criterion_4_decomposition(tmp_path, capsys):
    code, rep = run_cli(tmp_path, "c4", "decompose-check",
                        {"grid": SHORT_BOX, "experiment": {"params": {"lambdas": [20.0, 40.0]}}})
    assert verdict(capsys, 4, [("decompose-check", code, rep)])


def test_criterion_5_flow_suite(tmp_path, capsys):
    two_peaks = {"type": "double_peak"}
    runs = []
    code, rep = run_cli(tmp_path, "c5_yamabe_kdp", "flow",
                        {"grid": {"N": 32}, "curvature": two_peaks,
                         "experiment": {"params": {"kind": "yamabe", "dt": 1e-2, "t_max": 1.0}}})
    runs.append(("yamabe on two peaks", code, rep))
    code, rep = run_cli(tmp_path, "c5_yamabe_neg", "flow",
                        {"grid": {"N": 16}, "curvature": {"type": "constant", "value": -1.0},
                         "experiment": {"params": {"kind": "yamabe", "dt": 1e-2, "t_max": 5.0,
                                                   "residual_tol": 1e-6}}})
    runs.append(("yamabe with K = -1", code, rep))
    code, rep = run_cli(tmp_path, "c5_exit", "flow",
                        {"grid": {"N": 32}, "curvature": two_peaks,
                         "experiment": {"params": {"kind": "exit", "dt": 1e-3, "t_max": 1.0, "roundtrip": True}}})
    runs.append(("exit and inverse", code, rep))
    code, rep = run_cli(tmp_path, "c5_trans", "transversality",
                        {"grid": {"N": 64, "L": 4 * np.pi},
                         "curvature": {"type": "double_peak", "lam1": 1.5, "lam2": 1.5, "alpha_bar": 0.4223265},
                         "experiment": {"params": {"gammas": [0.05], "samples": 50}}})
    runs.append(("transversality", code, rep))
    assert verdict(capsys, 5, runs)


def test_criterion_6_null_homotopy(tmp_path, capsys):
    code, rep = run_cli(tmp_path, "c6", "homotopy",
                        {"grid": {"N": 32}, "curvature": {"type": "double_peak"},
                         "experiment": {"params": {"samples": 20, "taus": 11}}})
    assert verdict(capsys, 6, [("homotopy", code, rep)])


def test_criterion_7_expansion_ladders(tmp_path, capsys):
    code, rep = run_cli(tmp_path, "c7", "expansion",
                        {"grid": {"N": 128}, "curvature": {"type": "double_peak", "lam1": 40.0, "lam2": 40.0},
                         "experiment": {"params": {"lambdas": [40.0, 80.0, 160.0]}}})
    assert verdict(capsys, 7, [("expansion", code, rep)])


def test_criterion_8_two_exit_components(tmp_path, capsys):
    code, rep = run_cli(tmp_path, "c8", "exit-components",
                        {"grid": {"N": 128}, "curvature": {"type": "double_peak"},
                         "experiment": {"params": {"scan_samples": 200}}})
    assert verdict(capsys, 8, [("exit-components", code, rep)])


def test_criterion_9_curvature_hypotheses(tmp_path, capsys):
    code, rep = run_cli(tmp_path, "c9", "nu1",
                        {"grid": {"N": 128}, "curvature": {"type": "double_peak"},
                         "experiment": {"params": {"crosscheck_N": 32}}})
    assert verdict(capsys, 9, [("nu1", code, rep)])
