"""Command line entry point: ``exitset-lab <tag> --config <path> [--out DIR] [--seed N]``.

Configs are JSON with top-level keys grid, curvature, experiment, seed and
output_dir; every level rejects unknown keys. Each run writes report.json,
one CSV per table and one binary file per field, and exits 0 only when all
of the experiment's assertions pass.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bubbles as bb
from .conformal import CurvatureField
from .errors import LabError, ParseError, ValidationError
from .exitset import DoublePeakSpec, build_kdp, spec_problems
from .experiments import EXPERIMENTS, Context, Outcome, run
from .grid import TorusGrid, load_field, save_field

EXIT_OK, EXIT_ASSERTION, EXIT_ERROR, EXIT_CONFIG = 0, 1, 2, 3

DEFAULTS = {
    "grid": {"n": 3, "N": 64, "L": 2 * np.pi},
    "curvature": {"type": "constant", "value": -1.0},
    "experiment": {"tag": None, "params": {}},
    "seed": 0,
    "output_dir": "out",
}
KEYS = {
    "grid": {"n", "N", "L"},
    "experiment": {"tag", "params"},
    "constant": {"type", "value"},
    "double_peak": {"type", "a1", "a2", "lam1", "lam2", "alpha_bar", "eps_c", "margin"},
    "file": {"type", "path"},
}


@dataclass
class ExperimentConfig:
    grid: dict
    curvature: dict
    experiment: dict
    seed: int
    output_dir: str
    source: str | None = None

    def as_dict(self) -> dict:
        return {"grid": self.grid, "curvature": self.curvature, "experiment": self.experiment,
                "seed": self.seed, "output_dir": self.output_dir}

    def make_grid(self) -> TorusGrid:
        g = self.grid
        return TorusGrid(int(g["n"]), int(g["N"]), float(g["L"]))

    def make_spec(self, grid: TorusGrid) -> DoublePeakSpec | None:
        c = self.curvature
        if c["type"] != "double_peak":
            return None
        a1 = c.get("a1") or [grid.L / 4] * grid.n
        a2 = c.get("a2") or [3 * grid.L / 4] * grid.n
        return DoublePeakSpec(tuple(float(x) for x in a1), tuple(float(x) for x in a2),
                              float(c.get("lam1", 3.0)), float(c.get("lam2", 3.0)),
                              c.get("alpha_bar"), c.get("eps_c"), float(c.get("margin", 0.0)))


def _unknown(where: str, given: dict, allowed: set) -> list[str]:
    return [f"unknown key {where}.{k}" for k in sorted(set(given) - allowed)]


def _key_line(text: str, key: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return i
    return None


def parse_config(path=None, text: str | None = None, tag: str | None = None) -> ExperimentConfig:
    """Read, default-fill and validate a config.

    Raises ParseError for malformed JSON or unknown keys and ValidationError
    listing every violated invariant.
    """
    if text is None and path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read config {path}: {exc}") from None
    raw = {}
    if text is not None and text.strip():
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path or '<config>'}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ParseError("config must be a JSON object")
    unknown = _unknown("config", raw, set(DEFAULTS))
    cfg = copy.deepcopy(DEFAULTS)
    for key in ("grid", "experiment"):
        if key in raw:
            if not isinstance(raw[key], dict):
                raise ParseError(f"{key} must be an object")
            unknown += _unknown(key, raw[key], KEYS[key])
            cfg[key].update(raw[key])
    if "curvature" in raw:
        cur = raw["curvature"]
        if not isinstance(cur, dict) or cur.get("type") not in ("constant", "double_peak", "file"):
            raise ParseError("curvature.type must be one of constant, double_peak, file")
        unknown += _unknown("curvature", cur, KEYS[cur["type"]])
        cfg["curvature"] = dict(cur)
    for key in ("seed", "output_dir"):
        if key in raw:
            cfg[key] = raw[key]
    if unknown:
        first = unknown[0].rsplit(".", 1)[-1]
        line = _key_line(text or "", first)
        where = f" (line {line})" if line else ""
        raise ParseError("; ".join(unknown) + where)
    if tag is not None:
        if cfg["experiment"]["tag"] not in (None, tag):
            raise ValidationError([f"config experiment tag {cfg['experiment']['tag']!r} does not match {tag!r}"])
        cfg["experiment"]["tag"] = tag
    config = ExperimentConfig(cfg["grid"], cfg["curvature"], cfg["experiment"], cfg["seed"], cfg["output_dir"],
                              str(path) if path else None)
    problems = validate(config)
    if problems:
        raise ValidationError(problems)
    return config


def validate(config: ExperimentConfig) -> list[str]:
    problems = []
    g = config.grid
    n, N, L = g.get("n"), g.get("N"), g.get("L")
    if not isinstance(n, int) or not 3 <= n <= 5:
        problems.append(f"grid.n must be an integer in 3..5, got {n!r}")
    if not isinstance(N, int) or N < 4 or N & (N - 1):
        problems.append(f"grid.N must be a power of two >= 4, got {N!r}")
    if not isinstance(L, (int, float)) or not L > 0:
        problems.append(f"grid.L must be positive, got {L!r}")
    if not isinstance(config.seed, int):
        problems.append(f"seed must be an integer, got {config.seed!r}")
    tag = config.experiment.get("tag")
    if tag is not None and tag not in EXPERIMENTS:
        problems.append(f"unknown experiment tag {tag!r}")
    if not isinstance(config.experiment.get("params", {}), dict):
        problems.append("experiment.params must be an object")
    grid = None
    if not problems:
        try:
            grid = config.make_grid()
        except ValueError as exc:
            problems.append(f"grid: {exc}")
    cur = config.curvature
    if cur["type"] == "constant":
        if not isinstance(cur.get("value"), (int, float)) or not cur["value"] < 0:
            problems.append("constant curvature must be a negative number")
    elif cur["type"] == "file":
        p = cur.get("path")
        if not p or not Path(p).is_file():
            problems.append(f"curvature file {p!r} does not exist")
    elif grid is not None:
        for key in ("a1", "a2"):
            pt = cur.get(key)
            if pt is not None and len(pt) != grid.n:
                problems.append(f"curvature.{key} must have {grid.n} coordinates")
        if not problems:
            problems += [f"double_peak: {m}" for m in spec_problems(grid, config.make_spec(grid))]
    return problems


def build_curvature(config: ExperimentConfig, grid: TorusGrid):
    cur = config.curvature
    if cur["type"] == "constant":
        return CurvatureField.constant(grid, float(cur["value"])), None
    if cur["type"] == "file":
        fgrid, K = load_field(cur["path"])
        if fgrid != grid:
            raise ValidationError([f"curvature file grid {fgrid} differs from config grid {grid}"])
        return CurvatureField(K), None
    spec = config.make_spec(grid)
    K, _ = build_kdp(grid, spec, check_h2=False)
    return K, spec


# output -------------------------------------------------------------------------------------
def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else str(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_outputs(out_dir: Path, config: ExperimentConfig, grid: TorusGrid, spec, outcome: Outcome | None,
                  failure: dict | None) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    if outcome is not None:
        for name, (header, rows) in outcome.tables.items():
            path = out_dir / f"{name}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows([[_cell(v) for v in row] for row in rows])
            files[name] = path.name
        for name, f in outcome.fields.items():
            if f is not None:
                path = out_dir / f"{name}.field"
                save_field(path, grid, f)
                files[name] = path.name
    consts = bb.closed_form_constants(grid.n).as_dict()
    report = {
        "config": config.as_dict(),
        "resolved": {"h": grid.h, "volume": grid.volume, "max_lambda": grid.max_lambda,
                     "spec": spec.as_dict(grid) if spec is not None else None},
        "constants": consts,
        "status": "error" if failure else ("pass" if outcome.ok else "fail"),
        "assertions": [a.__dict__ for a in outcome.assertions] if outcome else [],
        "data": outcome.data if outcome else {},
        "failure": failure,
        "files": files,
    }
    (out_dir / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return report


def run_experiment(config: ExperimentConfig, out_dir=None, stream=None) -> tuple[int, dict]:
    stream = sys.stdout if stream is None else stream
    grid = config.make_grid()
    out_dir = Path(out_dir or config.output_dir)
    rng = np.random.default_rng(config.seed)
    spec = None
    outcome, failure = None, None
    try:
        K, spec = build_curvature(config, grid)
        ctx = Context(grid, K, spec, dict(config.experiment.get("params", {})), rng)
        outcome = run(config.experiment["tag"], ctx)
    except (LabError, ValueError) as exc:
        failure = {"error": type(exc).__name__, "message": str(exc),
                   "table": getattr(exc, "table", None), "traceback": traceback.format_exc()}
    report = write_outputs(out_dir, config, grid, spec, outcome, failure)
    if failure:
        print(f"ERROR {failure['error']}: {failure['message']}", file=stream)
        return EXIT_ERROR, report
    for a in outcome.assertions:
        print(a.line(), file=stream)
    return (EXIT_OK if outcome.ok else EXIT_ASSERTION), report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="exitset-lab", description=__doc__.splitlines()[0])
    parser.add_argument("tag", choices=sorted(EXPERIMENTS))
    parser.add_argument("--config", help="JSON config; defaults apply when omitted")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="random seed (overrides seed)")
    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config, tag=args.tag)
    except ValidationError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        config.seed = args.seed
    code, _ = run_experiment(config, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
