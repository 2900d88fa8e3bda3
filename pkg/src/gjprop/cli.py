"""Command-line front end.  Every subcommand writes CSV.

Exit codes: 0 ok, 2 bad arguments, 3 empty domain, 4 analysis domain
error, 5 model-file error.  No environment variables are read.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .cubic import ROOT_XTOL, TANGENCY_TOL, CubicCell
from .network import (
    REST_TOL,
    ChainConfig,
    ClampProtocol,
    EventRelease,
    simulate_chain,
    write_trajectory_csv,
)
from .regions import (
    Coupling,
    DomainError,
    classify,
    critical_upstream_voltage,
    fires,
    g_bounds,
    k_exc,
    k_max_branch,
    v_infinity,
)
from .treemap import K_PROP_XTOL, NonConvergenceError, iterate_phi, k_prop_branch, tree_g_min

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EMPTY = 3
EXIT_DOMAIN = 4
EXIT_MODEL = 5

TOLERANCES = {"root_xtol": ROOT_XTOL, "tangency_tol": TANGENCY_TOL, "k_prop_xtol": K_PROP_XTOL}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# --- argument types ---------------------------------------------------------


def parse_grid(text: str) -> np.ndarray:
    """``min:max:count`` with inclusive endpoints, optionally ``:log``."""
    parts = text.split(":")
    if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "log"):
        raise argparse.ArgumentTypeError(f"grid {text!r} is not min:max:count or min:max:count:log")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid {text!r} has a non-numeric field") from None
    if count < 1:
        raise argparse.ArgumentTypeError(f"grid {text!r} needs count >= 1")
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise argparse.ArgumentTypeError(f"grid {text!r} needs finite min <= max")
    if count == 1:
        return np.array([lo])
    if len(parts) == 4:
        if lo <= 0.0:
            raise argparse.ArgumentTypeError(f"log grid {text!r} needs min > 0")
        out = np.geomspace(lo, hi, count)
    else:
        out = np.linspace(lo, hi, count)
    out[0], out[-1] = lo, hi
    return out


def _vt(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"v_T must be a number, got {text!r}") from None
    if not 0.0 < v < 0.5:
        raise argparse.ArgumentTypeError(f"v_T={v!r} violates the assumption 0 < v_T < 1/2")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0.0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _nonneg(text: str) -> float:
    v = float(text)
    if not v >= 0.0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text!r}")
    return v


# --- output -----------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def header(command: str, params: dict) -> str:
    """One comment line: version, the full parameter set and tolerances."""
    body = json.dumps({"params": params, "tolerances": TOLERANCES}, sort_keys=True, default=_fmt)
    return f"gjprop {__version__} {command} {body}"


def write_csv(path: str | None, comment: str, columns, rows, extra_comments=()) -> None:
    buf = io.StringIO()
    buf.write(f"# {comment}\n")
    for line in extra_comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    emit(path, buf.getvalue())


def emit(path: str | None, text: str) -> None:
    """Write to stdout, or atomically to ``path`` via a sibling temp file."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- subcommands --------------------------------------------------------------


def cmd_landmarks(args) -> int:
    cell = CubicCell(args.vt)
    lm = cell.landmarks.as_dict()
    write_csv(args.out, header("landmarks", {"v_T": args.vt}), list(lm), [list(lm.values())])
    return EXIT_OK


def cmd_regions(args) -> int:
    cell = CubicCell(args.vt)
    g_min, g_max = g_bounds(cell, args.vu)
    grid = args.g if args.g is not None else np.linspace(g_min, g_max, args.count + 2)[1:-1]
    grid = grid[(grid > g_min) & (grid < g_max)]
    if grid.size == 0:
        raise CliError(f"no g sample inside (g_min, g_max) = ({g_min!r}, {g_max!r})", EXIT_EMPTY)
    rows = []
    for g in grid:
        km, branch = k_max_branch(cell, args.vu, float(g))
        rows.append([g, km, k_exc(cell, float(g)), branch])
    params = {"v_T": args.vt, "V_u": args.vu, "g": _grid_desc(grid), "g_min": g_min, "g_max": g_max}
    write_csv(args.out, header("regions", params), ["g", "k_max", "k_exc", "branch"], rows)
    return EXIT_OK


def cmd_heatmap(args) -> int:
    cell = CubicCell(args.vt)
    rows = []
    for g in args.g:
        for k in args.k:
            c = Coupling(float(g), float(k), args.vu)
            rows.append([g, k, v_infinity(cell, c), str(classify(cell, c))])
    params = {"v_T": args.vt, "V_u": args.vu, "g": _grid_desc(args.g), "k": _grid_desc(args.k)}
    write_csv(args.out, header("heatmap", params), ["g", "k", "v_inf", "class"], rows)
    return EXIT_OK


def cmd_classify(args) -> int:
    cell = CubicCell(args.vt)
    c = Coupling(args.g_value, args.k_value, args.vu)
    v_uc = critical_upstream_voltage(cell, c.g, c.k)
    row = [c.g, c.k, c.V_u, v_infinity(cell, c), fires(cell, c), k_exc(cell, c.g), v_uc, str(classify(cell, c))]
    params = {"v_T": args.vt, "V_u": args.vu, "g": c.g, "k": c.k}
    write_csv(args.out, header("classify", params), ["g", "k", "V_u", "v_inf", "fires", "k_exc", "v_uc", "class"], [row])
    return EXIT_OK


def cmd_iterate(args) -> int:
    cell = CubicCell(args.vt)
    params = {"v_T": args.vt, "g": args.g_value, "k": args.k_value, "tol": args.tol, "max_steps": args.max_steps}
    try:
        trace = iterate_phi(cell, args.g_value, args.k_value, tol=args.tol, max_steps=args.max_steps)
    except NonConvergenceError as exc:
        raise CliError(str(exc), EXIT_DOMAIN) from None
    summary = f"limit={trace.limit!r} limit_tag={trace.limit_tag} steps={trace.steps}"
    rows = [[j, v] for j, v in enumerate(trace.iterates)]
    write_csv(args.out, header("iterate", params), ["step", "v"], rows, extra_comments=[summary])
    print(summary, file=sys.stderr)
    return EXIT_OK


def cmd_treeregion(args) -> int:
    cell = CubicCell(args.vt)
    g_lo = tree_g_min(cell)
    if args.g is not None:
        grid = args.g[args.g >= g_lo]
    else:
        grid = np.linspace(g_lo, args.g_max, args.count) if args.g_max >= g_lo else np.empty(0)
    if grid.size == 0:
        raise CliError(f"no g sample at or above the tree g_min={g_lo!r}", EXIT_EMPTY)
    rows = [[g, *k_prop_branch(cell, float(g))] for g in grid]
    params = {"v_T": args.vt, "g": _grid_desc(grid), "tree_g_min": g_lo}
    write_csv(args.out, header("treeregion", params), ["g", "k_prop", "branch"], rows)
    return EXIT_OK


def _load_model(spec: str):
    from .ionic import bundled_model, bundled_model_names, load_model

    if Path(spec).suffix == ".json" or os.sep in spec:
        return load_model(spec)
    if spec in bundled_model_names():
        return bundled_model(spec)
    return load_model(spec)


def _cell_for(args):
    """The simulated cell: cubic from ``--vt`` or a model from ``--model``."""
    if args.model is None:
        cell = CubicCell(args.vt)
        return cell, cell, {"v_T": args.vt}
    from .ionic import full_dynamics, reduce_to_1d, resting_state

    model = _load_model(args.model)
    rest = resting_state(model)
    current = reduce_to_1d(model, rest)
    dyn = full_dynamics(model, rest) if args.dynamics == "full" else current
    return current, dyn, {"model": model.name, "dynamics": args.dynamics, "v_rest": rest.v_rest}


def cmd_simulate(args) -> int:
    current, dyn, desc = _cell_for(args)
    lm = current.landmarks
    v_u = lm.v_F if args.vu is None else args.vu
    release = None
    if args.release_at is not None:
        release = EventRelease(args.release_at, args.after, observe=1)
    if args.duration is not None:
        if release is not None:
            raise CliError("--duration and --release-at are mutually exclusive", EXIT_USAGE)
        protocol = ClampProtocol.pulse(v_u, args.duration, args.after)
    else:
        protocol = ClampProtocol.constant(v_u, release)
    config = ChainConfig(args.cells, args.g_value, args.k_value, feedforward=args.feedforward)
    is_cubic = isinstance(current, CubicCell)
    dt = args.dt if args.dt is not None else (0.01 if is_cubic else 0.001)
    t_end = args.t_end if args.t_end is not None else (200.0 if is_cubic else 50.0)
    traj = simulate_chain(dyn, config, protocol, dt, t_end, args.stride)
    params = dict(desc)
    params.update(
        {
            "g": args.g_value,
            "k": args.k_value,
            "n_cells": args.cells,
            "feedforward": args.feedforward,
            "protocol": protocol.to_dict(),
            "dt": dt,
            "t_end": t_end,
            "stride": args.stride,
            "rest_tol": REST_TOL,
            "config_hash": traj.metadata["config_hash"],
            "release_time": traj.metadata["release_time"],
        }
    )
    buf = io.StringIO()
    write_trajectory_csv(traj, buf, header("simulate", params))
    emit(args.out, buf.getvalue())
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .ionic.sweep import condition_sweep, default_timing

    current, _, desc = _cell_for(args)
    target = current if args.model is None else current.model
    if args.dynamics == "full" and args.model is None:
        raise CliError("--dynamics full needs --model; the cubic cell has no gates", EXIT_USAGE)
    dt0, t_end0 = default_timing(target)
    dt = dt0 if args.dt is None else args.dt
    t_end = t_end0 if args.t_end is None else args.t_end
    result = condition_sweep(
        target,
        args.g,
        args.k,
        mode=args.dynamics,
        network=args.mode,
        n_cells=args.cells,
        dt=dt,
        t_end=t_end,
        V_u=args.vu,
        jobs=args.jobs,
        feedforward=args.feedforward,
    )
    params = dict(desc)
    params.update(
        {
            "network": args.mode,
            "g": _grid_desc(args.g),
            "k": _grid_desc(args.k),
            "n_cells": args.cells if args.mode == "tree" else 1,
            "feedforward": args.feedforward,
            "dt": dt,
            "t_end": t_end,
            "V_u": current.landmarks.v_F if args.vu is None else args.vu,
            "rule": args.rule,
            "frac": args.frac,
        }
    )
    buf = io.StringIO()
    result.write_csv(buf, header("sweep", params), rule=args.rule, frac=args.frac)
    emit(args.out, buf.getvalue())
    return EXIT_OK


def _grid_desc(grid) -> list:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        return []
    return [float(grid[0]), float(grid[-1]), int(grid.size)]


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gjprop", description="Propagation through gap-junction-coupled excitable cells.")
    parser.add_argument("--version", action="version", version=f"gjprop {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=func)
        p.add_argument("--out", default=None, help="output CSV path (default stdout)")
        return p

    def vt(p, required=True):
        p.add_argument("--vt", type=_vt, required=required, default=None if required else 0.15, help="cubic threshold v_T in (0, 1/2)")

    p = add("landmarks", cmd_landmarks, "landmark voltages of the cubic cell")
    vt(p)

    p = add("regions", cmd_regions, "firing-region boundaries k_max and k_exc over g")
    vt(p)
    p.add_argument("--vu", type=float, default=1.0, help="upstream clamp voltage V_u")
    p.add_argument("--g", type=parse_grid, default=None, help="g grid min:max:count; clipped to (g_min, g_max)")
    p.add_argument("--count", type=int, default=200, help="samples of the default grid")

    p = add("heatmap", cmd_heatmap, "v_inf and propagation class over a (g, k) grid")
    vt(p)
    p.add_argument("--vu", type=float, default=1.0)
    p.add_argument("--g", type=parse_grid, default=parse_grid("0.001:0.2:100"))
    p.add_argument("--k", type=parse_grid, default=parse_grid("0:8:100"))

    p = add("classify", cmd_classify, "classify one (g, k) coupling")
    vt(p)
    p.add_argument("--vu", type=float, default=1.0)
    p.add_argument("--g", dest="g_value", type=_positive, required=True)
    p.add_argument("--k", dest="k_value", type=_nonneg, required=True)

    p = add("iterate", cmd_iterate, "iterate the tree map from v_0 = 1")
    vt(p)
    p.add_argument("--g", dest="g_value", type=_positive, required=True)
    p.add_argument("--k", dest="k_value", type=_nonneg, required=True)
    p.add_argument("--tol", type=_positive, default=1e-10)
    p.add_argument("--max-steps", type=int, default=100_000)

    p = add("treeregion", cmd_treeregion, "tree propagation boundary k_prop over g")
    vt(p)
    p.add_argument("--g", type=parse_grid, default=None, help="g grid; samples below the tree g_min are dropped")
    p.add_argument("--g-max", type=_positive, default=0.3, help="upper end of the default grid")
    p.add_argument("--count", type=int, default=200)

    def cell_args(p):
        vt(p, required=False)
        p.add_argument("--model", default=None, help="model JSON file or bundled model name")
        p.add_argument("--dynamics", choices=("reduced", "full"), default="reduced")
        p.add_argument("--vu", type=float, default=None, help="clamp voltage (default the cell's v_F)")
        p.add_argument("--cells", type=int, default=None)
        p.add_argument("--feedforward", action="store_true", help="hold each cell's downstream neighbours at rest")
        p.add_argument("--dt", type=_positive, default=None)
        p.add_argument("--t-end", type=_positive, default=None)

    p = add("simulate", cmd_simulate, "simulate a clamped chain and write its trajectory")
    cell_args(p)
    p.add_argument("--g", dest="g_value", type=_positive, required=True)
    p.add_argument("--k", dest="k_value", type=_nonneg, required=True)
    p.add_argument("--duration", type=_positive, default=None, help="clamp duration before switching to --after")
    p.add_argument("--after", type=float, default=0.0, help="clamp value after the pulse or release")
    p.add_argument("--release-at", type=float, default=None, help="release once cell 1 reaches this voltage")
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(cells=1)

    p = add("sweep", cmd_sweep, "two-condition clamp sweep over a (g, k) grid")
    cell_args(p)
    p.add_argument("--mode", choices=("single", "tree"), default="single", help="network: single cell or collapsed tree")
    p.add_argument("--g", type=parse_grid, required=True)
    p.add_argument("--k", type=parse_grid, required=True)
    p.add_argument("--rule", choices=("difference", "sustained"), default="difference")
    p.add_argument("--frac", type=float, default=0.25)
    p.add_argument("--jobs", type=int, default=1, help="worker processes; output does not depend on it")
    p.set_defaults(cells=10)
    return parser


def main(argv=None) -> int:
    from .ionic.model import ModelFileError
    from .ionic.reduction import ReductionError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"gjprop: error: {exc}", file=sys.stderr)
        return exc.code
    except ModelFileError as exc:
        print(f"gjprop: model file error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (DomainError, ReductionError) as exc:
        print(f"gjprop: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"gjprop: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
