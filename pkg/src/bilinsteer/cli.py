"""Command-line front end.

Exit codes: 0 success, 2 config or contract error, 3 inadmissible,
4 exhausted search.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .approx import mollify
from .config import PRESETS, RunConfig
from .control import check_admissibility, hold_control
from .errors import BilinSteerError, ConfigError
from .grid import field_to_csv, l2_norm, linf_norm
from .io import SCHEMA, dumps, write_json
from .pde import ControlSchedule, simulate, zero_nonlinearity
from .steer import (
    EXHAUSTED,
    INADMISSIBLE,
    SUCCESS,
    bernstein_pipeline_demo,
    convergence_study,
    steer_corollary1,
    steer_fixed_time,
    steer_theorem1,
)

EXIT_OK, EXIT_CONFIG, EXIT_INADMISSIBLE, EXIT_EXHAUSTED = 0, 2, 3, 4
_OUTCOME_EXIT = {SUCCESS: EXIT_OK, INADMISSIBLE: EXIT_INADMISSIBLE, EXHAUSTED: EXIT_EXHAUSTED}


class Output:
    """Where a command writes: a directory of files, or stdout when none is given."""

    def __init__(self, cfg: RunConfig, out_dir, quiet: bool):
        out = out_dir or cfg.section("output").get("dir")
        self.dir = Path(out) if out else None
        self.quiet = quiet
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, name):
        return None if self.dir is None else self.dir / name

    def emit(self, name, doc):
        if self.dir is not None:
            write_json(self.dir / name, doc)
        if not self.quiet:
            print(dumps(doc))


def _envelope(cfg: RunConfig, command: str, result: dict) -> dict:
    return {"schema": SCHEMA, "command": command, "config_digest": cfg.digest,
            "config": cfg.data, "result": result}


def load_report(path) -> dict:
    """Read an emitted report back, rejecting unknown schema versions."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != SCHEMA:
        raise ConfigError(f"report {path} has schema {doc.get('schema')!r}, expected {SCHEMA!r}")
    return doc


def cmd_check(cfg: RunConfig, out: Output, args) -> int:
    p = cfg.problem()
    rep = check_admissibility(p.y0, p.yd, p.O, p.zero_threshold, p.a_max)
    out.emit("admissibility.json", _envelope(cfg, "check", rep.to_dict()))
    return EXIT_OK if rep.passed else EXIT_INADMISSIBLE


def cmd_steer(cfg: RunConfig, out: Output, args) -> int:
    p = cfg.problem()
    s = cfg.section("steer")
    mode = s.get("mode", "theorem1")
    if mode == "theorem1":
        report = steer_theorem1(p)
    elif mode == "corollary1":
        report = steer_corollary1(p, s.get("r_schedule"))
    else:
        if "T" not in s:
            raise ConfigError("fixed-time mode needs steer.T")
        report = steer_fixed_time(p, s["T"], s.get("case", "a"),
                                  amplification=s.get("amplification", "spectral"),
                                  r_schedule=s.get("r_schedule"))
    emit_traj = args.emit_trajectory or cfg.section("output").get("emit_trajectory", False)
    if emit_traj and report.trajectory is not None and out.dir is not None:
        report.trajectory.to_csv(out.path("trajectory.csv"))
    doc = _envelope(cfg, "steer", {"mode": mode, **report.to_dict(emit_trajectory=emit_traj)})
    out.emit("report.json", doc)
    if report.outcome == SUCCESS and not report.final_error < p.epsilon:
        raise AssertionError("success reported with error >= epsilon")
    return _OUTCOME_EXIT[report.outcome]


def cmd_sweep(cfg: RunConfig, out: Output, args) -> int:
    T_list = cfg.section("sweep").get("T_list")
    if T_list is None:
        raise ConfigError("sweep needs sweep.T_list")
    table = convergence_study(cfg.problem(), T_list)
    if out.dir is not None:
        table.to_csv(out.path("convergence.csv"))
    out.emit("sweep.json", _envelope(cfg, "sweep", table.to_dict()))
    return EXIT_OK


def cmd_bernstein(cfg: RunConfig, out: Output, args) -> int:
    p = cfg.problem()
    s = cfg.section("bernstein")
    T = s.get("T", p.T0 * p.rho)
    rows = [bernstein_pipeline_demo(p, T, n) for n in s.get("n_list", [None])]
    out.emit("bernstein.json", _envelope(cfg, "bernstein", {"rows": rows}))
    return EXIT_OK


def cmd_mollify(cfg: RunConfig, out: Output, args) -> int:
    s = cfg.section("mollify")
    spec = s.get("field", cfg.data["problem"]["yd"])
    h = cfg.state(spec)
    rows = []
    for r in s.get("r_list", [0.2, 0.1, 0.05]):
        hr = mollify(h, r)
        lo, hi = float(hr.values.min()), float(hr.values.max())
        ok = lo >= r and hi <= linf_norm(h) + r
        if not ok:
            raise AssertionError(f"mollified field out of bounds at r={r}")
        if out.dir is not None:
            field_to_csv(hr, out.path(f"mollified_r{r:g}.csv"))
        rows.append({"r": r, "min": lo, "max": hi, "l2_gap": l2_norm(hr - h), "bounds_ok": ok})
    out.emit("mollify.json", _envelope(cfg, "mollify", {"rows": rows}))
    return EXIT_OK


def cmd_hold(cfg: RunConfig, out: Output, args) -> int:
    p = cfg.data["problem"]
    s = cfg.section("hold")
    yd = cfg.state(s.get("target", p["yd"]))
    T, dt = s.get("T", 0.5), s.get("dt", 1e-3)
    g, residual = hold_control(yd, p.get("delta"))
    traj = simulate(yd.grid, yd, ControlSchedule.constant(g, T), zero_nonlinearity(), T, dt)
    scale = l2_norm(yd)
    drift = float(np.max(np.sqrt(yd.grid.h**yd.grid.d) * np.linalg.norm(traj.states - yd.values, axis=1)))
    rel = drift / scale if scale > 0 else drift
    if out.dir is not None:
        field_to_csv(g, out.path("hold_g.csv"))
    result = {"T": T, "dt": dt, "residual": residual, "g_linf": linf_norm(g),
              "max_drift": drift, "max_relative_drift": rel}
    out.emit("hold.json", _envelope(cfg, "hold", result))
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "steer": cmd_steer,
    "sweep": cmd_sweep,
    "bernstein": cmd_bernstein,
    "mollify": cmd_mollify,
    "hold": cmd_hold,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bilinsteer", description="Steer reaction-diffusion states with multiplicative controls.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="JSON run configuration")
        src.add_argument("--preset", choices=sorted(PRESETS), help="built-in configuration")
        sp.add_argument("--out", help="output directory (default: stdout only)")
        sp.add_argument("--emit-trajectory", action="store_true", help="write trajectory snapshots")
        sp.add_argument("--quiet", action="store_true", help="do not echo the report")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({"preset": args.preset})
        out = Output(cfg, args.out, args.quiet)
        return COMMANDS[args.command](cfg, out, args)
    except BilinSteerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
