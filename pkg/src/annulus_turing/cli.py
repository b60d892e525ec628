"""Command-line driver.

Subcommands: ``eigs``, ``critical``, ``sweep``, ``whorlcount``, ``modeplot`` and
``simulate``. Options may also come from ``--config FILE`` (JSON object or
``key = value`` lines); flags given on the command line take precedence.

Exit status: 0 success, 1 usage or configuration error, 2 stable (no onset),
3 numerical failure or blow-up.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, linstab, rdsim, scan, specfun, transition
from .errors import (AnnulusTuringError, BlowUp, EndpointEntry, NoOnset, NumericalFailure,
                     SimultaneousEntry)

EXIT_OK, EXIT_USAGE, EXIT_STABLE, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("annulus_turing")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def load_config(path):
    """Read ``key = value`` lines or a JSON object into a dict."""
    text = Path(path).read_text()
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError(f"config {path}: expected a JSON object")
        return {str(k).replace("-", "_"): v for k, v in data.items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config {path}:{lineno}: expected 'key = value'")
        key, val = (x.strip() for x in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


# -- output helpers --------------------------------------------------------------

def provenance(command, args, params=None):
    opts = {k: v for k, v in sorted(vars(args).items())
            if k not in ("func", "config", "out", "quiet") and v is not None}
    head = {"tool": "annulus-turing", "version": __version__, "command": command,
            "options": _jsonable(opts)}
    if params is not None:
        head["params"] = params.as_dict()
    return head


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def _dump_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _write(path, text):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _csv_text(header, rows, meta):
    buf = io.StringIO()
    buf.write("# " + json.dumps(_jsonable(meta), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _params(args, need_lam=False):
    try:
        p = linstab.ModelParams(a=args.a, d=args.d, R=args.R, delta=args.delta, lam=args.lam)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if need_lam and p.lam is None:
        raise UsageError("--lam (or --lam-offset) is required")
    return p


# -- subcommands -----------------------------------------------------------------

def cmd_eigs(args):
    rows = []
    for n in range(args.n_max + 1):
        for m in specfun.radial_eigenvalues(n, args.delta, args.j_max):
            rows.append((m.n, m.j, m.eig, m.norm))
    meta = provenance("eigs", args)
    _write(args.out, _csv_text(["n", "j", "eig", "norm"], rows, meta))
    return EXIT_OK


def critical_report(params, tail_tol=1e-8, convention="table", n_max=None, j_max=None):
    """Dict with the critical point, transition number and type; raises on no onset."""
    crit = linstab.critical_lambda(params, n_max=n_max, j_max=j_max)
    rep = transition.transition_number(crit, params, tail_tol=tail_tol, convention=convention)
    out = rep.to_dict()
    out["status"] = "onset"
    return out


def cmd_critical(args):
    p = _params(args)
    meta = provenance("critical", args, p)
    try:
        rep = critical_report(p, args.tail_tol, args.convention, args.n_max, args.j_max)
    except NoOnset as exc:
        _write(args.out, _dump_json({"provenance": meta, "status": "stable", "message": str(exc)}))
        return EXIT_STABLE
    except (SimultaneousEntry, EndpointEntry) as exc:
        body = {"provenance": meta, "status": "boundary", "message": str(exc)}
        if isinstance(exc, SimultaneousEntry):
            body.update(modes=[list(m) for m in exc.modes], lambda_c=exc.lambda_c)
        _write(args.out, _dump_json(body))
        return EXIT_NUMERICAL
    rep["provenance"] = meta
    _write(args.out, _dump_json(rep))
    return EXIT_OK


def cmd_sweep(args):
    spec = scan.SweepSpec(a_range=(args.a_min, args.a_max), d_range=(args.d_min, args.d_max),
                          a_count=args.a_steps, d_count=args.d_steps, R=args.R,
                          delta=args.delta, workers=args.workers)
    rows = scan.sweep(spec)
    meta = provenance("sweep", args)
    meta["layout"] = "rows follow d (ascending), columns follow a (ascending)"
    header = ["d\\a"] + [repr(float(a)) for a in spec.a_values]
    body = [[repr(float(d))] + list(r) for d, r in zip(spec.d_values, rows)]
    if args.out in (None, "-"):
        _write(None, _csv_text(header, body, meta))
    else:
        out = Path(args.out)
        _write(out, _csv_text(header, body, meta))
        summary = dict(meta, labels=scan.region_labels(rows),
                       stable_cells=sum(x == scan.STABLE for r in rows for x in r),
                       boundary_cells=sum(x == scan.BOUNDARY for r in rows for x in r))
        _write(out.with_suffix(".json"), _dump_json(summary))
    return EXIT_OK


def cmd_whorlcount(args):
    seq, raw = scan.whorl_sequence(args.R, args.delta, args.d, (args.a_min, args.a_max),
                                   args.steps, details=True)
    meta = provenance("whorlcount", args)
    body = {"provenance": meta, "sequence": seq,
            "samples": [{"a": a, "n_c": x} for a, x in raw] if args.samples else None}
    _write(args.out, _dump_json(body))
    return EXIT_OK if seq else EXIT_STABLE


def cmd_modeplot(args):
    r, theta, vals = scan.mode_field(args.n, args.j, args.delta, args.nr, args.ntheta)
    pos, neg = scan.count_patches(vals, 1), scan.count_patches(vals, -1)
    meta = provenance("modeplot", args)
    meta.update(positive_patches=pos, negative_patches=neg)
    if args.field_out:
        R, T = np.meshgrid(r, theta, indexing="ij")
        rows = zip(R.ravel(), T.ravel(), vals.ravel())
        _write(args.field_out, _csv_text(["r", "theta", "value"], rows, meta))
    _write(args.out, _dump_json(meta))
    return EXIT_OK


def cmd_simulate(args):
    p = _params(args)
    crit = None
    if args.lam_offset is not None:
        crit = linstab.critical_lambda(p)
        p = p.with_lambda(crit.lambda_c + args.lam_offset)
    if p.lam is None:
        raise UsageError("--lam or --lam-offset is required")
    fld = rdsim.make_grid(p, args.nr, args.ntheta)
    project = None
    if args.mode:
        n, j = (int(x) for x in args.mode.split(","))
        fld, project = rdsim.eigenfield(p, fld.grid, n, j, amplitude=args.amplitude)
    elif args.amplitude > 0:
        fld = rdsim.random_field(p, fld.grid, args.amplitude, args.seed)
    meta = provenance("simulate", args, p)
    if crit is not None:
        meta["lambda_c"] = crit.lambda_c
    stepper = rdsim.Stepper(p, fld.grid, args.dt, args.scheme)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    series = []

    def record(f):
        row = [f.time, rdsim.rms(f), float(np.sqrt(np.sum(f.grid.area_weights() * f.u ** 2))),
               float(np.sqrt(np.sum(f.grid.area_weights() * f.v ** 2)))]
        if project is not None:
            row.append(abs(project(f)))
        series.append(row)

    header = ["t", "rms", "l2_u", "l2_v"] + (["modal"] if project is not None else [])
    steps = int(round(args.horizon / args.dt))
    every = max(1, args.record_every)
    record(fld)
    status = EXIT_OK
    try:
        for k in range(1, steps + 1):
            fld = stepper.step(fld)
            if k % every == 0 or k == steps:
                record(fld)
    except BlowUp as exc:
        meta["blowup"] = {"time": exc.time, "message": str(exc)}
        if exc.field is not None and exc.field.is_finite():
            fld = exc.field
        status = EXIT_NUMERICAL
    meta["final_time"] = fld.time
    meta["wall_residual"] = rdsim.wall_residual(fld)
    _write(out / "timeseries.csv", _csv_text(header, series, meta))
    rdsim.write_snapshot(fld, out / "snapshot.csv", meta)
    _write(out / "run.json", _dump_json(meta))
    return status


# -- parser ------------------------------------------------------------------------

def _add_params(sp, lam=True):
    sp.add_argument("--a", type=float, help="production rate of u")
    sp.add_argument("--d", type=float, help="diffusivity ratio")
    sp.add_argument("--R", type=float, help="domain/reaction scale")
    sp.add_argument("--delta", type=float, help="outer/inner radius ratio")
    if lam:
        sp.add_argument("--lam", type=float, help="influx (bifurcation parameter)")


def build_parser():
    parser = _Parser(prog="annulus-turing", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON or key=value file with option defaults")
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    sp = sub.add_parser("eigs", help="table of annular Neumann eigenvalues")
    sp.add_argument("--delta", type=float, default=1.05)
    sp.add_argument("--n-max", type=int, default=10)
    sp.add_argument("--j-max", type=int, default=3)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eigs)

    sp = sub.add_parser("critical", help="critical point and transition type (JSON)")
    _add_params(sp)
    sp.add_argument("--tail-tol", type=float, default=1e-8)
    sp.add_argument("--convention", choices=transition.CONVENTIONS, default="table")
    sp.add_argument("--n-max", type=int, help="truncate the mode table in n")
    sp.add_argument("--j-max", type=int, help="truncate the mode table in j")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_critical)

    sp = sub.add_parser("sweep", help="n_c over an (a, d) grid")
    sp.add_argument("--R", type=float, default=8.0)
    sp.add_argument("--delta", type=float, default=2.0)
    sp.add_argument("--a-min", type=float, default=scan.DEFAULT_A_RANGE[0])
    sp.add_argument("--a-max", type=float, default=scan.DEFAULT_A_RANGE[1])
    sp.add_argument("--d-min", type=float, default=scan.DEFAULT_D_RANGE[0])
    sp.add_argument("--d-max", type=float, default=scan.DEFAULT_D_RANGE[1])
    sp.add_argument("--a-steps", type=int, default=50)
    sp.add_argument("--d-steps", type=int, default=50)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("whorlcount", help="n_c sequence along a")
    sp.add_argument("--R", type=float, default=16.0)
    sp.add_argument("--delta", type=float, default=2.0)
    sp.add_argument("--d", type=float, default=80.0)
    sp.add_argument("--a-min", type=float, default=0.2)
    sp.add_argument("--a-max", type=float, default=0.55)
    sp.add_argument("--steps", type=int, default=1401)
    sp.add_argument("--samples", action="store_true", help="include every sampled a")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_whorlcount)

    sp = sub.add_parser("modeplot", help="sample a critical mode and count sign patches")
    sp.add_argument("--n", type=int, default=6)
    sp.add_argument("--j", type=int, default=3)
    sp.add_argument("--delta", type=float, default=1.2)
    sp.add_argument("--nr", type=int, default=200)
    sp.add_argument("--ntheta", type=int, default=720)
    sp.add_argument("--field-out", help="CSV of r, theta, value")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_modeplot)

    sp = sub.add_parser("simulate", help="nonlinear time integration")
    _add_params(sp)
    sp.add_argument("--lam-offset", type=float, help="run at lam_c + offset")
    sp.add_argument("--mode", help="seed eigenfield 'n,j' (default: random)")
    sp.add_argument("--amplitude", type=float, default=1e-3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--horizon", type=float, default=100.0)
    sp.add_argument("--dt", type=float, default=0.05)
    sp.add_argument("--nr", type=int, default=33)
    sp.add_argument("--ntheta", type=int, default=64)
    sp.add_argument("--scheme", choices=rdsim.SCHEMES, default="linear-implicit")
    sp.add_argument("--record-every", type=int, default=10)
    sp.add_argument("--out", default="simulation")
    sp.set_defaults(func=cmd_simulate)
    return parser


def _apply_config(parser, argv):
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = load_config(known.config)
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in sub._actions}
    unknown = sorted(set(cfg) - dests - {"command"})
    if unknown:
        raise UsageError(f"unknown config keys for '{args.command}': {', '.join(unknown)}")
    # string defaults are converted by argparse just like command-line values
    sub.set_defaults(**{k: (str(v) if isinstance(v, (int, float)) and not isinstance(v, bool)
                            else v) for k, v in cfg.items() if k in dests})


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"annulus-turing: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoOnset as exc:
        print(f"annulus-turing: stable: {exc}", file=sys.stderr)
        return EXIT_STABLE
    except (NumericalFailure, AnnulusTuringError) as exc:
        print(f"annulus-turing: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"annulus-turing: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
