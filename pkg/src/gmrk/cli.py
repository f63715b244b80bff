"""Command-line harness: ``gmrk solve | converge | compare-se | tableau``.

Every option can also come from a JSON file given with ``--config``; flags
given on the command line override file values. Exit codes: 0 success,
2 configuration error, 3 numeric failure or failed ``--check``.
Set ``GMRK_LOG=DEBUG`` (or INFO, ...) for diagnostics on standard error.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from . import continuation, problems, se_baseline
from .butcher import check_order_conditions, tableau_for
from .errors import DomainError, GMRKError
from .gmrk_solver import LIMIT, FiniteTau, GMRKConfig, step

log = logging.getLogger("gmrk")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CSV_HEADER = ["t", "mean", "std", "truth", "abs_error", "error_over_std"]

DEFAULTS = {
    "problem": "linear",
    "lam": None,
    "x0": None,
    "t0": 0.0,
    "order": 2,
    "alpha": 0.5,
    "u": 0.5,
    "v": 1.0,
    "mode": continuation.NAIVE,
    "tau": LIMIT,
    "h": 1.0,
    "steps": 10,
    "grid": 10,
    "seed": 0,
    "out": None,
    "format": None,
    "check": False,
    "h_list": [0.2, 0.1, 0.05, 0.025],
    "kernel": "wiener",
    "lengthscale": 1.0,
    "lambdas": [0.5, 1.0, 2.0, 4.0],
}


class ConfigError(DomainError):
    pass


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _fmt(x):
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.17g}"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return None if not math.isfinite(float(x)) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# configuration ------------------------------------------------------------

def _add_common(p, method=True):
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--check", action="store_true", default=None,
                   help="exit 3 if the run's assertion fails")
    p.add_argument("--seed", type=int)
    if method:
        p.add_argument("--order", "-p", type=int, choices=[1, 2, 3])
        p.add_argument("--alpha", type=float, help="node of the order-2 family")
        p.add_argument("--u", type=float, help="second node of the order-3 family")
        p.add_argument("--v", type=float, help="third node of the order-3 family")


def _add_problem(p):
    p.add_argument("--problem", choices=sorted(problems.PROBLEMS))
    p.add_argument("--lam", type=float, help="rate of the linear problem")
    p.add_argument("--x0", type=float)
    p.add_argument("--t0", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="gmrk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a built-in IVP and write grid rows")
    _add_common(p)
    _add_problem(p)
    p.add_argument("--mode", choices=list(continuation.MODES))
    p.add_argument("--tau", help="'limit' or the absolute process origin (naive mode only)")
    p.add_argument("--h", type=float)
    p.add_argument("--steps", "-N", type=int)
    p.add_argument("--grid", type=int, help="grid intervals per step")

    p = sub.add_parser("converge", help="single-step error slope over a list of step sizes")
    _add_common(p)
    _add_problem(p)
    p.add_argument("--h-list", dest="h_list", type=_float_list)
    p.add_argument("--tau", help="'limit' or the absolute process origin")
    p.add_argument("--kernel", choices=["wiener", "se"])
    p.add_argument("--lengthscale", type=float, help="SE length-scale for --kernel se")

    p = sub.add_parser("compare-se", help="GMRK against SE extrapolation over length-scales")
    _add_common(p)
    _add_problem(p)
    p.add_argument("--lambdas", type=_float_list, help="length-scales in units of h")
    p.add_argument("--h", type=float)
    p.add_argument("--steps", "-N", type=int)
    p.add_argument("--grid", type=int)

    p = sub.add_parser("tableau", help="print a tableau and its order-condition report")
    _add_common(p)
    return parser


def resolve(args):
    """Merge defaults, the ``--config`` file and explicit flags (in rising priority)."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        cfg.update(data)
    cfg.update({k: v for k, v in vars(args).items() if v is not None and k in DEFAULTS})
    cfg["command"] = args.command
    return cfg


def method_params(cfg):
    order = int(cfg["order"])
    if order == 1:
        return ()
    if order == 2:
        return (float(cfg["alpha"]),)
    return (float(cfg["u"]), float(cfg["v"]))


def solver_mode(cfg, t0):
    tau = cfg["tau"]
    if tau is None or str(tau).lower() == LIMIT:
        return LIMIT
    try:
        tau = float(tau)
    except ValueError as exc:
        raise ConfigError(f"tau must be 'limit' or a number, got {tau!r}") from exc
    if not t0 - tau > 0:
        raise ConfigError(f"finite tau={tau} must lie before t0={t0}")
    return FiniteTau(tau)


def load_problem(cfg, tH):
    params = {k: cfg[k] for k in ("lam", "x0") if cfg.get(k) is not None}
    if cfg["problem"] != "linear":
        params.pop("lam", None)
    return problems.load(cfg["problem"], t0=float(cfg["t0"]), tH=tH, **params)


# output -------------------------------------------------------------------

def _emit(text, cfg):
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def grid_rows(traj, per_step):
    rows = []
    for t, mean, std, truth in traj.grid_dump(per_step):
        err = abs(mean - truth)
        ratio = err / std if std > 0 else float("nan")
        rows.append([t, mean, std, truth, err, ratio])
    return rows


def rows_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) if isinstance(x, (float, int, np.floating)) else x for x in r])
    return buf.getvalue()


# commands -----------------------------------------------------------------

def cmd_solve(cfg):
    h, n = float(cfg["h"]), int(cfg["steps"])
    if n < 1:
        raise ConfigError(f"steps must be a positive integer, got {n}")
    t0 = float(cfg["t0"])
    prob = load_problem(cfg, t0 + n * h)
    mode = solver_mode(cfg, t0)
    gcfg = GMRKConfig(int(cfg["order"]), method_params(cfg), h, mode)
    if cfg["mode"] not in continuation.MODES:
        raise ConfigError(f"mode must be one of {continuation.MODES}")
    if mode != LIMIT and cfg["mode"] != continuation.NAIVE:
        raise ConfigError("finite tau is supported by the naive mode only")
    traj = continuation.run(gcfg, prob, cfg["mode"])
    rows = grid_rows(traj, int(cfg["grid"]))
    log.info("solve: %s, %d steps, endpoint mean %.17g", cfg["mode"], n, rows[-1][1])

    ok = True
    if traj.global_std is not None:
        ends = np.array([traj.global_std(t) for t in traj.endpoints])
        monotone = bool(np.all(np.diff(ends) >= -1e-12))
        if cfg["mode"] == continuation.CONTINUATION:
            ok = monotone
    if cfg["format"] == "json":
        text = json.dumps(_jsonable({
            "config": {k: cfg[k] for k in ("problem", "order", "mode", "tau", "h", "steps")},
            "params": list(method_params(cfg)),
            "sigma2_hat": traj.sigma2_hat,
            "columns": CSV_HEADER,
            "rows": rows,
        }), indent=1) + "\n"
    else:
        text = rows_csv(CSV_HEADER, rows)
    _emit(text, cfg)
    if cfg["check"] and not ok:
        print("check failed: std at step endpoints decreases", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def single_step_errors(cfg, hs):
    """Error of one step from ``t0`` for each step size in ``hs``."""
    t0 = float(cfg["t0"])
    errors = []
    for h in hs:
        prob = load_problem(cfg, t0 + h)
        if cfg["kernel"] == "se":
            x1, _ = se_baseline.se_step(prob, t0, prob.x0, h, float(cfg["lengthscale"]))
        else:
            gcfg = GMRKConfig(int(cfg["order"]), method_params(cfg), h, solver_mode(cfg, t0))
            x1 = step(gcfg, prob, t0, prob.x0).x1
        errors.append(abs(float(x1) - float(prob.exact(t0 + h))))
    return np.array(errors)


def cmd_converge(cfg):
    hs = np.asarray(cfg["h_list"], dtype=float)
    if len(hs) < 3 or np.any(hs <= 0):
        raise ConfigError("converge needs at least three positive step sizes")
    errors = single_step_errors(cfg, hs)
    if np.any(errors <= 0):
        raise GMRKError("an error is exactly zero; the slope is undefined")
    slope = float(np.polyfit(np.log(hs), np.log(errors), 1)[0])
    p = 1 if cfg["kernel"] == "se" else int(cfg["order"])
    target = p + 1 - 0.2
    report = {
        "problem": cfg["problem"],
        "kernel": cfg["kernel"],
        "order": p,
        "params": list(method_params(cfg)) if cfg["kernel"] != "se" else [],
        "lengthscale": float(cfg["lengthscale"]) if cfg["kernel"] == "se" else None,
        "h": hs.tolist(),
        "error": errors.tolist(),
        "slope": slope,
        "expected": p + 1,
        "passed": slope >= target,
    }
    _emit(json.dumps(_jsonable(report), indent=1) + "\n", cfg)
    if cfg["check"] and not report["passed"]:
        print(f"check failed: slope {slope:.3f} < {target:.3f}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _coverage(mean, std, truth):
    err = np.abs(np.asarray(mean) - truth)
    return float(np.mean(err <= 2 * np.asarray(std) + 1e-15 * np.abs(truth)))


def cmd_compare_se(cfg):
    h, n = float(cfg["h"]), int(cfg["steps"])
    lambdas = [float(x) for x in cfg["lambdas"]]
    if not lambdas or min(lambdas) <= 0:
        raise ConfigError("lambdas must be positive")
    t0 = float(cfg["t0"])
    prob = load_problem(cfg, t0 + n * h)
    gcfg = GMRKConfig(int(cfg["order"]), method_params(cfg), h)
    truth_end = float(prob.exact(prob.tH))
    naive = continuation.run_naive(gcfg, prob)
    joint = continuation.run_continuation(gcfg, prob)
    grid = joint.grid(int(cfg["grid"]))
    truth = prob.exact(grid)
    gmrk_err = abs(float(naive.global_mean(prob.tH)) - truth_end)
    gmrk_cov = _coverage(joint.global_mean(grid), joint.global_std(grid), truth)

    header = ["lambda", "method", "endpoint_abs_error", "coverage_2sigma", "euler_weight_deviation"]
    rows, wins = [], []
    for lam_rel in lambdas:
        lam = lam_rel * h
        _, xs = se_baseline.se_chain(prob, h, lam, n)
        se_err = abs(xs[-1] - truth_end)
        try:
            post = se_baseline.se_continuation(prob, h, lam, n)
            se_cov = _coverage(post.mean(grid), post.std(grid), truth)
        except GMRKError as exc:
            log.warning("SE joint posterior unavailable at lambda=%g: %s", lam, exc)
            se_cov = float("nan")
        dev = se_baseline.euler_weight_deviation(h, lam)
        rows.append([lam, "se", se_err, se_cov, dev])
        rows.append([lam, "gmrk", gmrk_err, gmrk_cov, 0.0])
        wins.append(gmrk_err < se_err)
    devs = [r[4] for r in rows if r[1] == "se"]
    order = np.argsort(lambdas)
    decreasing = bool(np.all(np.diff(np.asarray(devs)[order]) < 0))

    if cfg["format"] == "json":
        text = json.dumps(_jsonable({"columns": header, "rows": rows, "gmrk_wins": wins,
                                     "deviation_decreasing": decreasing}), indent=1) + "\n"
    else:
        text = rows_csv(header, rows)
    _emit(text, cfg)
    if cfg["check"] and not (all(wins) and decreasing):
        print("check failed: GMRK must win at every lambda and the Euler-weight deviation "
              "must decrease", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_tableau(cfg):
    order = int(cfg["order"])
    tab = tableau_for(order, method_params(cfg))
    report = check_order_conditions(tab, order)
    if cfg["format"] == "json":
        text = json.dumps(_jsonable({"name": tab.name, "c": tab.c, "W": tab.W, "b": tab.b,
                                     "conditions": report.as_dict()}), indent=1) + "\n"
    else:
        lines = [str(tab), ""]
        lines += [f"{'ok ' if abs(r) <= report.tol else 'FAIL'} {k}  residual {r:.3e}"
                  for k, r in report.residuals.items()]
        text = "\n".join(lines) + "\n"
    _emit(text, cfg)
    if cfg["check"] and not report.passed:
        return EXIT_NUMERIC
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "converge": cmd_converge, "compare-se": cmd_compare_se,
            "tableau": cmd_tableau}


def _setup_logging():
    level = os.environ.get("GMRK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING) if not level.isdigit()
                        else int(level), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except DomainError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GMRKError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
