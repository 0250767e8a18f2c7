"""Command-line front end: ``paneitz-lab <command> [options]``.

Every command prints one JSON document (or a CSV table) holding the fully
resolved parameters and the result.  Exit status is 0 on success, 1 when an
iterative computation did not converge (the partial result is still
written) and 2 on argument or precondition errors, reported on one line.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .blowup import (
    CapacityProblem,
    TaylorData,
    TestFnParams,
    bubble_energy,
    bubble_lambda,
    bubble_mass,
    capacity_oracle,
    capacity_solve,
    criterion_conformal,
    criterion_main2,
    lambda_map,
    proof_schedule_L,
    testfn_mass_expansion,
)
from .geometry import Field, make_model, s3_moment
from .greenfn import expansion_fit, green_function
from .paneitz import SpectralMultiplier, positivity_constant, q_field
from .variational import adams_check, minimize_II_eps

OUTPUT_DIR_ENV = "PANEITZ_LAB_OUTPUT_DIR"
PROG = "paneitz-lab"


class UsageError(Exception):
    """Bad arguments or violated preconditions (exit status 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- value parsing ----------------------------------------------------------------


def _float(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _floats(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _point(text):
    text = str(text).strip()
    if text in ("north", "south"):
        return text
    try:
        idx = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"point must be north, south or i,j,k,l: {text!r}") from None
    if len(idx) != 4:
        raise argparse.ArgumentTypeError(f"torus points need four indices: {text!r}")
    return idx


def _points(text):
    return [_point(t) for t in str(text).split(";") if t.strip()]


def _hessian(values, name):
    if values is None:
        return np.zeros((4, 4))
    if len(values) == 4:
        return np.diag(values)
    if len(values) == 16:
        m = np.array(values).reshape(4, 4)
        if not np.allclose(m, m.T):
            raise UsageError(f"--{name} must be symmetric")
        return m
    raise UsageError(f"--{name} takes 4 diagonal entries or 16 matrix entries")


def _vector(values, name):
    if values is None:
        return [0.0] * 4
    if len(values) != 4:
        raise UsageError(f"--{name} takes 4 entries")
    return list(values)


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, (np.floating,)):
        return _jsonable(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(x) for x in obj]
    return obj


# -- shared options -----------------------------------------------------------------


def _add_model(p):
    p.add_argument("--kind", choices=("torus", "sphere"), default="sphere")
    p.add_argument("--n", type=int, default=16, help="torus grid points per axis")
    p.add_argument("--l-max", type=int, default=32, help="sphere maximal zonal degree")
    p.add_argument("--n-theta", type=int, default=None, help="sphere colatitude nodes (default 2*l_max+2)")


def _model_from(args):
    if args.kind == "torus":
        return make_model("torus", n=args.n)
    return make_model("sphere", l_max=args.l_max, n_theta=args.n_theta)


def _model_params(args):
    if args.kind == "torus":
        return {"kind": "torus", "n": args.n}
    return {"kind": "sphere", "l_max": args.l_max, "n_theta": args.n_theta}


def _add_qt(p):
    p.add_argument("--qt", type=_float, default=None, help="base value of Qt (default: the model's Q)")
    p.add_argument(
        "--qt-amplitude",
        type=_float,
        default=0.0,
        help="relative modulation: Qt = qt (1 + a cos theta) on the sphere, qt (1 + a cos 2 pi x1) on the torus",
    )


def _qt_from(args, model):
    base = q_field(model).q_field.physical.flat[0] if args.qt is None else args.qt
    a = args.qt_amplitude
    if a == 0.0:
        return float(base)
    if model.is_sphere:
        return Field.from_function(model, lambda th: base * (1.0 + a * np.cos(th)))
    return Field.from_function(model, lambda x1, x2, x3, x4: base * (1.0 + a * np.cos(2 * math.pi * x1)) + 0 * x2)


# -- commands -----------------------------------------------------------------------


def cmd_model(args):
    m = _model_from(args)
    return _model_params(args), {"spec": m.spec(), "volume": m.volume, "shape": list(m.shape)}, None


def cmd_paneitz(args):
    m = _model_from(args)
    mult = SpectralMultiplier.for_model(m)
    key = "k_squared" if m.is_torus else "degree"
    rows = [{key: mode, "mu": mu} for mode, mu in mult.rows()]
    result = {
        "smallest_nonzero": mult.smallest_nonzero(),
        "positivity_constant": positivity_constant(m),
        "k_total": q_field(m).k_total,
        "table": rows,
    }
    return _model_params(args), result, None


def cmd_green(args):
    m = _model_from(args)
    p = args.point if args.point is not None else ("north" if m.is_sphere else (0, 0, 0, 0))
    G = green_function(m, p)
    exp = expansion_fit(m, G, p, tuple(args.window) if args.window else None, fit_log=True)
    params = dict(_model_params(args), point=p, window=list(exp.window))
    result = dict(exp.to_dict(), log_coefficient=exp.log_coefficient, integral=G.integral())
    return params, result, None


def cmd_minimize(args):
    m = _model_from(args)
    qt = _qt_from(args, m)
    res = minimize_II_eps(m, qt, args.eps, tol=args.tol, max_iter=args.max_iter, seed=args.seed, init_scale=args.init_scale)
    params = dict(
        _model_params(args),
        qt=args.qt,
        qt_amplitude=args.qt_amplitude,
        eps=args.eps,
        tol=args.tol,
        max_iter=args.max_iter,
        seed=args.seed,
        init_scale=args.init_scale,
    )
    result = res.to_dict(include_field=args.include_field)
    result["table"] = [{"iter": i, "value": v, "grad_norm": g, "step": s} for i, v, g, s in res.trace]
    return params, result, (None if res.converged else "minimization did not converge")


def cmd_adams(args):
    m = _model_from(args)
    rep = adams_check(m, samples=args.samples, seed=args.seed, band=args.band)
    result = rep.to_dict()
    result["table"] = result["ladder"]
    return dict(_model_params(args), samples=args.samples, seed=args.seed, band=args.band), result, None


def cmd_bubble(args):
    if args.lam is None and args.q is None:
        raise UsageError("bubble needs --lambda or --q")
    lam = args.lam if args.lam is not None else bubble_lambda(args.q)
    if not lam > 0:
        raise UsageError("--lambda must be positive")
    L = args.L
    if not L > 0:
        raise UsageError("--L must be positive")
    mass = bubble_mass(lam, L)
    result = {"lambda": lam, "L": L, "mass": mass}
    if args.q is not None:
        result["q_times_mass"] = args.q * mass
    if not math.isinf(L):
        result["energy"] = bubble_energy(lam, L)
        result["energy_asymptotic"] = 16.0 * math.pi**2 * math.log1p(lam * L * L) + 8.0 * math.pi**2 / 3.0
    return {"lambda": lam, "q": args.q, "L": L}, result, None


def cmd_capacity(args):
    try:
        prob = CapacityProblem(args.r, args.R, args.P1, args.P2, args.Q1, args.Q2)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sol = capacity_solve(prob)
    result = sol.to_dict()
    if args.oracle_n:
        result["oracle_energy"] = capacity_oracle(prob, args.oracle_n)
    params = {"r": args.r, "R": args.R, "P1": args.P1, "P2": args.P2, "Q1": args.Q1, "Q2": args.Q2, "oracle_n": args.oracle_n}
    return params, result, None


def _taylor_from(args):
    return TaylorData(
        S0=args.S0,
        a=tuple(_vector(args.a, "a")),
        a_sym=tuple(map(tuple, _hessian(args.a_hess, "a-hess"))),
        Qp=args.qp,
        b=tuple(_vector(args.b, "b")),
        b_sym=tuple(map(tuple, _hessian(args.b_hess, "b-hess"))),
    )


def cmd_testfn(args):
    L = proof_schedule_L(args.eps) if args.L is None else args.L
    tp = TestFnParams(args.eps, L, _taylor_from(args))
    me = testfn_mass_expansion(tp, delta=args.delta)
    params = dict(tp.to_dict(), delta=args.delta, schedule=args.L is None)
    result = me.to_dict()
    return params, result, None


def cmd_lambda(args):
    m = _model_from(args)
    qt = _qt_from(args, m)
    pts = args.points or (["north", "south"] if m.is_sphere else [(0, 0, 0, 0)])
    rep = lambda_map(m, qt, pts, window=tuple(args.window) if args.window else None)
    params = dict(_model_params(args), qt=args.qt, qt_amplitude=args.qt_amplitude, points=pts)
    result = rep.to_dict()
    result["table"] = result["entries"]
    return params, result, None


def cmd_criterion(args):
    if args.which == "main2":
        val, ok = criterion_main2(args.qp, _vector(args.grad_s, "grad-s"), args.lap_s, _vector(args.grad_q, "grad-q"), args.lap_q, args.R_scalar)
        params = {
            "which": "main2",
            "qp": args.qp,
            "grad_s": _vector(args.grad_s, "grad-s"),
            "lap_s": args.lap_s,
            "grad_q": _vector(args.grad_q, "grad-q"),
            "lap_q": args.lap_q,
            "R_scalar": args.R_scalar,
        }
    else:
        a, c, b = _vector(args.a, "a"), _vector(args.c, "c"), _vector(args.b, "b")
        A2, C2, B2 = _hessian(args.a_hess, "a-hess"), _hessian(args.c_hess, "c-hess"), _hessian(args.b_hess, "b-hess")
        val, ok = criterion_conformal(a, A2, c, C2, b, B2, args.qp)
        params = {"which": "conformal", "qp": args.qp, "a": a, "a_hess": A2, "c": c, "c_hess": C2, "b": b, "b_hess": B2}
    return params, {"value": val, "satisfied": ok}, None


def cmd_moments(args):
    if args.index is not None:
        idx = [int(t) for t in args.index.split(",") if t.strip()]
        return {"index": idx}, {"value": s3_moment(idx)}, None
    table = []
    for idx in ([0, 0], [0, 1], [0, 0, 0, 0], [0, 0, 1, 1], [0, 1, 2, 3]):
        table.append({"index": ",".join(map(str, idx)), "value": s3_moment(idx)})
    return {"index": None}, {"table": table}, None


COMMANDS = {
    "model": cmd_model,
    "paneitz": cmd_paneitz,
    "green": cmd_green,
    "minimize": cmd_minimize,
    "adams": cmd_adams,
    "bubble": cmd_bubble,
    "capacity": cmd_capacity,
    "testfn": cmd_testfn,
    "lambda": cmd_lambda,
    "criterion": cmd_criterion,
    "moments": cmd_moments,
}


def build_parser():
    parser = _Parser(prog=PROG, description="Numerical laboratory for the prescribed Q-curvature problem.")
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--output", default=None, help=f"output file (relative paths resolve under ${OUTPUT_DIR_ENV})")
        p.add_argument("--reproducible", action="store_true", help="omit the timestamp")
        return p

    p = add("model", "build a model and report its volume")
    _add_model(p)

    p = add("paneitz", "multiplier table of the Paneitz operator")
    _add_model(p)

    p = add("green", "Green function expansion at a point")
    _add_model(p)
    p.add_argument("--point", type=_point, default=None)
    p.add_argument("--window", type=_floats, default=None, help="r_min,r_max")

    p = add("minimize", "minimize II_eps")
    _add_model(p)
    _add_qt(p)
    p.add_argument("--eps", type=_float, required=True)
    p.add_argument("--tol", type=_float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-scale", type=_float, default=1.0)
    p.add_argument("--include-field", action="store_true")

    p = add("adams", "Adams-Fontana deficit scan")
    _add_model(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--band", type=int, default=8)

    p = add("bubble", "bubble mass and energy")
    p.add_argument("--lambda", dest="lam", type=_float, default=None)
    p.add_argument("--q", type=_float, default=None, help="Qt(p); sets lambda = sqrt(3 q)/12")
    p.add_argument("--L", type=_float, default=math.inf)

    p = add("capacity", "annulus capacity problem")
    for name in ("r", "R", "P1", "P2", "Q1", "Q2"):
        p.add_argument(f"--{name}", type=_float, required=True)
    p.add_argument("--oracle-n", type=int, default=0)

    p = add("testfn", "mass expansion of the glued test function")
    p.add_argument("--eps", type=_float, required=True)
    p.add_argument("--L", type=_float, default=None, help="default: log(1/eps)/sqrt(eps)")
    p.add_argument("--qp", type=_float, default=3.0)
    p.add_argument("--S0", type=_float, default=0.0)
    p.add_argument("--a", type=_floats, default=None)
    p.add_argument("--a-hess", type=_floats, default=None)
    p.add_argument("--b", type=_floats, default=None)
    p.add_argument("--b-hess", type=_floats, default=None)
    p.add_argument("--delta", type=_float, default=0.5)

    p = add("lambda", "energy threshold Lambda at points")
    _add_model(p)
    _add_qt(p)
    p.add_argument("--points", type=_points, default=None, help="north;south or i,j,k,l;...")
    p.add_argument("--window", type=_floats, default=None)

    p = add("criterion", "evaluate an existence criterion")
    p.add_argument("--which", choices=("main2", "conformal"), required=True)
    p.add_argument("--qp", type=_float, required=True)
    p.add_argument("--grad-s", type=_floats, default=None)
    p.add_argument("--lap-s", type=_float, default=0.0)
    p.add_argument("--grad-q", type=_floats, default=None)
    p.add_argument("--lap-q", type=_float, default=0.0)
    p.add_argument("--R-scalar", dest="R_scalar", type=_float, default=0.0)
    for name in ("a", "c", "b"):
        p.add_argument(f"--{name}", type=_floats, default=None)
        p.add_argument(f"--{name}-hess", type=_floats, default=None)

    p = add("moments", "normalized S^3 moments")
    p.add_argument("--index", default=None, help="comma-separated axis indices")

    p = add("sweep", "run a command over a grid read from a config file")
    p.add_argument("--config", required=True)
    return parser


# -- sweeps ------------------------------------------------------------------------


def read_config(path):
    """Parse ``key = v1, v2, ...`` lines; ``#`` starts a comment."""
    grid = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key in grid:
                raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
            grid[key] = [v.strip() for v in val.split(",")] if key != "command" else val
    if "command" not in grid:
        raise UsageError(f"{path}: missing 'command' key")
    return grid


def _sweep_argvs(grid, parser):
    command = grid.pop("command")
    if command not in COMMANDS:
        raise UsageError(f"unknown sweep command {command!r}")
    sub = parser._subparsers._group_actions[0].choices[command]
    known = {a.dest: a for a in sub._actions if a.option_strings}
    for key in grid:
        if key.replace("-", "_") not in known or key in ("format", "output", "reproducible"):
            raise UsageError(f"unknown key {key!r} for command {command!r}")
    keys = list(grid)
    for combo in itertools.product(*(grid[k] for k in keys)):
        argv = [command, "--reproducible"]
        for k, v in zip(keys, combo):
            action = known[k.replace("-", "_")]
            opt = action.option_strings[0]
            if action.nargs == 0:  # boolean flag
                if v.lower() in ("1", "true", "yes"):
                    argv.append(opt)
            else:
                # vector values are written with ';' inside a grid entry
                argv += [opt, v.replace(";", ",")]
        yield command, dict(zip(keys, combo)), argv


def cmd_sweep(args, parser):
    grid = read_config(args.config)
    rows = []
    failure = None
    command = grid["command"]
    for cmd, combo, argv in _sweep_argvs(dict(grid), parser):
        sub_args = parser.parse_args(argv)
        params, result, fail = COMMANDS[cmd](sub_args)
        failure = failure or fail
        if cmd == "testfn":
            rows.append({"eps": params["eps"], "L": params["L"], "numeric": result["numeric"], "predicted": result["predicted"], "gap": result["gap"]})
        else:
            row = dict(combo)
            row.update({k: v for k, v in result.items() if isinstance(v, (int, float, bool, str))})
            rows.append(row)
    params = {"config": os.path.abspath(args.config), "command": command, "grid": {k: v for k, v in grid.items() if k != "command"}}
    return params, {"table": rows}, failure


# -- output ------------------------------------------------------------------------


def _csv_text(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    rows = result.get("table")
    if rows is None:
        rows = [{k: v for k, v in result.items() if not isinstance(v, (list, dict))}]
    if not rows:
        return ""
    header = list(rows[0].keys())
    w.writerow(header)
    for row in rows:
        out = []
        for k in header:
            v = row.get(k, "")
            if isinstance(v, (float, np.floating)):
                v = format(float(v), ".17g")
            out.append(v)
        w.writerow(out)
    return buf.getvalue()


def _resolve_output(path):
    if path is None:
        return None
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def run(argv=None, stdout=None, stderr=None):
    """Run the CLI and return the exit status."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(list(COMMANDS) + ["sweep"]))
        if args.command == "sweep":
            params, result, failure = cmd_sweep(args, parser)
        else:
            params, result, failure = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"{PROG}: error: {' '.join(str(exc).split())}", file=stderr)
        return 2

    doc = {"command": args.command, "version": __version__, "params": params, "result": result}
    if failure:
        doc["status"] = "not_converged"
        doc["message"] = failure
    else:
        doc["status"] = "ok"
    if not args.reproducible:
        doc["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    if args.format == "json":
        text = json.dumps(_jsonable(doc), indent=2) + "\n"
    else:
        text = _csv_text(_jsonable(result))
    path = _resolve_output(args.output)
    if path is None:
        stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    if failure:
        print(f"{PROG}: {failure}", file=stderr)
        return 1
    return 0


def main():  # pragma: no cover - thin wrapper
    sys.exit(run())
