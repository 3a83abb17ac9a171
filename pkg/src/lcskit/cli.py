"""Command-line front end: ``lcskit {ftle,lines,extrema,verify,dump-config}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import io
from .config import ConfigError, build, dumps, load_config
from .deformation import deformation_field
from .flowmap import deformation_gradient_grid
from .lcs import (UNCLASSIFIED, ClassifyTolerances, MaterialCurve, classify_variational,
                  generalized_extrema, integrate_line_field)
from .verify import run_verification

EXIT_OK, EXIT_CONFIG, EXIT_DEGRADED, EXIT_VERIFY = 0, 2, 3, 4
DEGRADED_FRACTION = 0.01

log = logging.getLogger("lcskit")


def _forward(run):
    fmg = deformation_gradient_grid(run.field, run.grid, run.t1, run.t2, run.h, run.ip,
                                    run.chart, run.threads, run.estimator)
    return deformation_field(fmg, run.chart, run.gap_tol)


def _outdir(args, cfg):
    path = args.out or cfg["output"]["dir"]
    os.makedirs(path, exist_ok=True)
    return path


def _write(path_stem, columns, cfg, grid=None):
    written = []
    if "csv" in cfg["output"]["formats"]:
        io.write_csv(path_stem + ".csv", columns)
        written.append(path_stem + ".csv")
    if "lcsk" in cfg["output"]["formats"]:
        numeric = {k: v for k, v in columns.items() if np.asarray(v).dtype.kind in "fiub"}
        io.write_block(path_stem + ".lcsk", numeric, grid)
        written.append(path_stem + ".lcsk")
    return written


def _health(field):
    n = len(field.valid)
    invalid = int(n - field.valid.sum())
    frac = invalid / n if n else 1.0
    if frac >= DEGRADED_FRACTION:
        log.warning("%d of %d grid points invalid (%.2f%%)", invalid, n, 100 * frac)
    return {"points": n, "invalid": invalid, "invalid_fraction": frac}, frac


def _finish(summary, frac):
    print(json.dumps(summary, indent=2))
    return EXIT_DEGRADED if frac >= DEGRADED_FRACTION else EXIT_OK


def cmd_ftle(run, args):
    field = _forward(run)
    out = _outdir(args, run.cfg)
    health, frac = _health(field)
    files = _write(os.path.join(out, "field"), field.columns(), run.cfg, run.grid)
    centre = np.argmin(np.linalg.norm(field.points - np.mean(run.grid.points(), axis=0), axis=1))
    return _finish({"command": "ftle", "files": files, **health,
                    "ftle_f_center": float(field.ftle_f[centre])}, frac)


def _line_curves(run, field):
    lc = run.cfg["lines"]
    tol = ClassifyTolerances(first_order=lc["first_order"], normal_angle=lc["normal_angle"],
                             coverage=lc["coverage"], gap=run.gap_tol)
    dirs = {"strainline": field.direction("xi1"), "stretchline": field.direction("xi2")}
    curves = []
    for seed, kind in zip(lc["seeds"], lc["kinds"]):
        try:
            curve = integrate_line_field(dirs[kind], seed, lc["step"], lc["max_len"], kind=kind)
        except ValueError as exc:
            log.warning("%s", exc)
            curve = MaterialCurve(np.asarray([seed]), kind, stop_reasons=("invalid seed",))
        if len(curve.vertices) >= 3:
            classify_variational(curve, field, tol)
        else:
            curve.classification = UNCLASSIFIED
        curves.append(curve)
    return curves


def curve_columns(curves, field):
    """Rows of ``curve_id,vertex_id,x,y,s1,s2,L1,L2,class``."""
    cols = {k: [] for k in ("curve_id", "vertex_id", "x", "y", "s1", "s2", "L1", "L2", "class")}
    s1f, s2f = field.scalar("s1"), field.scalar("s2")
    for cid, c in enumerate(curves):
        n = len(c.vertices)
        d = c.diagnostics
        nan = np.full(n, np.nan)
        cols["curve_id"] += [cid] * n
        cols["vertex_id"] += list(range(n))
        cols["x"] += list(c.vertices[:, 0])
        cols["y"] += list(c.vertices[:, 1])
        cols["s1"] += list(d.get("s1", s1f(c.vertices)))
        cols["s2"] += list(d.get("s2", s2f(c.vertices)))
        cols["L1"] += list(d.get("L1", nan))
        cols["L2"] += list(d.get("L2", nan))
        cols["class"] += [c.classification] * n
    return cols


def cmd_lines(run, args):
    field = _forward(run)
    out = _outdir(args, run.cfg)
    health, frac = _health(field)
    curves = _line_curves(run, field)
    path = os.path.join(out, "curves.csv")
    io.write_csv(path, curve_columns(curves, field))
    info = [{"kind": c.kind, "class": c.classification, "vertices": len(c.vertices),
             "arclength": c.arclength, "stop": list(c.stop_reasons)} for c in curves]
    return _finish({"command": "lines", "files": [path], **health, "curves": info}, frac)


def cmd_extrema(run, args):
    field = _forward(run)
    out = _outdir(args, run.cfg)
    health, frac = _health(field)
    ex = run.cfg["extrema"]
    res = generalized_extrema(field.scalar(ex["scalar"]), field.direction(ex["direction"]),
                              kind=ex["kind"])
    pts, d = res["points"], res["direction"]
    cols = {"x": pts[:, 0], "y": pts[:, 1], "vx": d[:, 0], "vy": d[:, 1],
            "L1": res["l1"], "L2": res["l2"]}
    path = os.path.join(out, "extrema.csv")
    io.write_csv(path, cols)
    return _finish({"command": "extrema", "files": [path], **health, "count": int(len(pts))},
                   frac)


def cmd_verify(run, args):
    field = _forward(run)
    out = _outdir(args, run.cfg)
    health, frac = _health(field)
    report = run_verification(run, field)
    report.update(health)
    path = os.path.join(out, "verify.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
    print(json.dumps(report, indent=2))
    if not report["passed"]:
        return EXIT_VERIFY
    return EXIT_DEGRADED if frac >= DEGRADED_FRACTION else EXIT_OK


COMMANDS = {"ftle": cmd_ftle, "lines": cmd_lines, "extrema": cmd_extrema, "verify": cmd_verify}


def make_parser():
    p = argparse.ArgumentParser(prog="lcskit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "dump-config"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML run configuration")
        s.add_argument("--out", help="output directory (overrides output.dir)")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. grid.nx=101 (repeatable)")
        s.add_argument("--threads", type=int, help="worker threads (0: all cores)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    overrides = list(args.set)
    if args.threads is not None:
        overrides.append(f"run.threads={args.threads}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"lcskit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "dump-config":
        sys.stdout.write(dumps(cfg))
        return EXIT_OK
    return COMMANDS[args.command](build(cfg), args)


if __name__ == "__main__":
    sys.exit(main())
