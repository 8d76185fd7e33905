"""Command-line front end.

Subcommands::

    stochlawson convergence strong|weak  [options]
    stochlawson stability point|region   [options]
    stochlawson simulate                 [options]

Every option may also come from a JSON ``--config`` file whose keys are the
long option names with dashes replaced by underscores (``"lambda_h": -0.3``).
Flags override the file, which overrides the built-in defaults.  Numbers
accept ``pi`` multiples (``pi``, ``10pi``, ``0.5*pi``) and powers of two
(``2^-6``); step-size lists accept ``2^-a..2^-b`` for all powers of two in
between.

Ranges starting with a minus sign need the ``=`` form:
``--lambda-h-range=-3:0:61``.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 divergence
threshold exceeded.
"""

from __future__ import annotations

import argparse
import inspect
import json
import math
import re
import sys

import numpy as np

from . import experiments as ex
from .linalg import LinAlgFailure
from .problems import PROBLEMS, make_problem
from .schemes import NewtonError, get_scheme
from .stability import SCHEME_KINDS, problem_matrices, region_scan, scheme_rho

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_DIVERGENCE = 4

DEFAULT_KINDS = ("em_dsl", "platen_dsl", "implicit_platen_derived")

_POW2 = re.compile(r"^\s*([+-]?[\d.]+(?:e[+-]?\d+)?)\s*\^\s*([+-]?[\d.]+)\s*$", re.I)
_PI = re.compile(r"^\s*([+-]?[\d.]*(?:e[+-]?\d+)?)\s*\*?\s*pi\s*$", re.I)
_RANGE = re.compile(r"^\s*2\s*\^\s*(-?\d+)\s*\.\.\s*2\s*\^\s*(-?\d+)\s*$")


class UsageError(ValueError):
    """Invalid command-line or configuration input."""


def parse_number(text):
    """Float from ``1.5``, ``2^-6``, ``pi``, ``10pi`` or ``0.5*pi``."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    s = str(text).strip()
    m = _POW2.match(s)
    if m:
        return float(m.group(1)) ** float(m.group(2))
    m = _PI.match(s)
    if m:
        coef = m.group(1)
        if coef in ("", "+"):
            c = 1.0
        elif coef == "-":
            c = -1.0
        else:
            c = float(coef)
        return c * math.pi
    try:
        return float(s)
    except ValueError:
        raise UsageError(f"not a number: {text!r}") from None


def parse_h_list(text):
    """Step sizes from ``2^-a..2^-b`` or a comma separated list (or a JSON list)."""
    if isinstance(text, (list, tuple)):
        values = [parse_number(v) for v in text]
    else:
        m = _RANGE.match(str(text))
        if m:
            a, b = int(m.group(1)), int(m.group(2))
            lo, hi = sorted((a, b))
            values = [2.0**k for k in range(hi, lo - 1, -1)]
        else:
            values = [parse_number(v) for v in str(text).split(",") if v.strip()]
    if not values:
        raise UsageError("empty h list")
    if any(not (v > 0 and math.isfinite(v)) for v in values):
        raise UsageError("step sizes must be positive")
    if len(set(values)) != len(values):
        raise UsageError("duplicated step sizes in h list")
    return sorted(values, reverse=True)


def parse_list(text):
    if isinstance(text, (list, tuple)):
        return [str(v).strip() for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


def parse_range(text):
    """``a:b:n`` -> ``n`` evenly spaced values on ``[a, b]``."""
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(":")
    if len(parts) != 3:
        raise UsageError(f"expected a range a:b:n, got {text!r}")
    a, b = parse_number(parts[0]), parse_number(parts[1])
    try:
        n = int(parts[2])
    except ValueError:
        raise UsageError(f"bad point count in range {text!r}") from None
    if n < 1:
        raise UsageError("empty grid")
    return np.linspace(a, b, n)


# option tables: (flag, key, default, help) ----------------------------------

PROBLEM_PARAMS = {
    "lambda": "lam",
    "mu": "mu",
    "sigma": "sigma",
    "b": "b",
    "omega2": "omega2",
}

COMMON = [
    ("--problem", "problem", None, "problem id"),
    ("--lambda", "lambda", None, "lambda of the problem"),
    ("--mu", "mu", None, "noise coefficient mu (scalar and GBM problems)"),
    ("--sigma", "sigma", None, "sigma (noise of orthogonal/damped problems, drift remainder of the scalar problem)"),
    ("--b", "b", None, "off-diagonal drift entry of the orthogonal problem"),
    ("--omega2", "omega2", None, "omega^2 of the damped oscillator"),
    ("--seed", "seed", None, "master seed"),
    ("--workers", "workers", None, "worker threads"),
    ("--output", "output", None, "CSV output path (default: stdout)"),
]

CONVERGENCE = [
    ("--schemes", "schemes", None, "comma separated scheme names"),
    ("--h", "h", None, "step sizes: 2^-a..2^-b or a comma separated list"),
    ("--batches", "batches", None, "number of batches"),
    ("--paths", "paths", None, "paths per batch"),
    ("--reference", "reference", None, "reference scheme"),
    ("--reference-factor", "reference_factor", None, "reference step is min(h) / factor"),
    ("--functional", "functional", None, "weak functional: " + ", ".join(ex.FUNCTIONALS)),
    ("--T", "T", None, "final time (default: the problem's)"),
]

CONVERGENCE_DEFAULTS = {
    "strong": {"problem": "oscillator", "schemes": "em-dsl,platen-dsl", "h": "2^-6..2^-10",
               "batches": 20, "paths": 50, "seed": 0, "workers": 1, "reference": "platen15-dsl",
               "reference_factor": 64, "functional": "x1^2", "control_variate": True, "timing": False},
    "weak": {"problem": "gbm", "schemes": "em-dsl,platen-dsl,platen-weak2-dsl", "h": "2^-3..2^-7",
             "batches": 40, "paths": 2500, "seed": 0, "workers": 1, "reference": "platen15-dsl",
             "reference_factor": 64, "functional": "x1^2", "control_variate": True, "timing": False},
}

STABILITY = [
    ("--problem", "problem", None, "orthogonal or oscillator"),
    ("--lambda-h", "lambda_h", None, "lambda h (point)"),
    ("--sigma2-h", "sigma2_h", None, "sigma^2 h (point)"),
    ("--b-h", "b_h", None, "b h (orthogonal problem)"),
    ("--omega2-h", "omega2_h", None, "omega^2 h (oscillator problem)"),
    ("--kinds", "kinds", None, "comma separated stability kinds: " + ", ".join(SCHEME_KINDS)),
    ("--lambda-h-range", "lambda_h_range", None, "region grid a:b:n in lambda h"),
    ("--sigma2-max", "sigma2_max", None, "upper end of the scanned sigma^2 h range"),
    ("--scan-points", "scan_points", None, "bracketing scan points per column"),
    ("--tol", "tol", None, "bisection tolerance"),
    ("--output", "output", None, "CSV output path (default: stdout)"),
]

STABILITY_DEFAULTS = {"problem": "orthogonal", "kinds": ",".join(DEFAULT_KINDS),
                      "lambda_h_range": "-3:0:61", "sigma2_max": 8.0, "scan_points": 81, "tol": 1e-6}

SIMULATE = [
    ("--schemes", "schemes", None, "comma separated scheme names"),
    ("--h", "h", None, "step size"),
    ("--steps", "steps", None, "number of steps"),
    ("--paths", "paths", None, "number of paths"),
    ("--lambda-h", "lambda_h", None, "lambda h (sets lambda = lambda_h / h)"),
    ("--sigma2-h", "sigma2_h", None, "sigma^2 h (sets sigma = sqrt(sigma2_h / h))"),
    ("--b-h", "b_h", None, "b h (sets b = b_h / h)"),
    ("--omega2-h", "omega2_h", None, "omega^2 h (sets omega2 = omega2_h / h)"),
]

SIMULATE_DEFAULTS = {"problem": "damped", "schemes": "em-dsl,platen-dsl,implicit-platen",
                     "h": 0.1, "steps": 100, "paths": 10000, "seed": 0, "workers": 1}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add(parser, table):
    for flag, key, default, text in table:
        parser.add_argument(flag, dest=key, default=default, help=text)


def build_parser():
    parser = _Parser(prog="stochlawson", description="Stochastic Lawson schemes: convergence, stability and moment experiments.")
    parser.add_argument("--config", help="JSON configuration file (flags override it)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    conv = sub.add_parser("convergence", help="strong or weak Monte Carlo convergence study")
    conv.add_argument("kind", choices=("strong", "weak"))
    conv.add_argument("--config", dest="config_sub", help="JSON configuration file")
    _add(conv, COMMON)
    _add(conv, CONVERGENCE)
    conv.add_argument("--timing", dest="timing", action="store_const", const=True, default=None,
                      help="record wall-clock seconds (the CSV is then no longer reproducible byte for byte)")
    conv.add_argument("--no-control-variate", dest="control_variate", action="store_const", const=False, default=None,
                      help="weak errors from plain sample means instead of differences to the reference")

    stab = sub.add_parser("stability", help="mean-square stability of the linear test systems")
    stab.add_argument("kind", choices=("point", "region"))
    stab.add_argument("--config", dest="config_sub", help="JSON configuration file")
    _add(stab, STABILITY)

    sim = sub.add_parser("simulate", help="second-moment evolution by Monte Carlo")
    sim.add_argument("--config", dest="config_sub", help="JSON configuration file")
    _add(sim, COMMON)
    _add(sim, SIMULATE)
    return parser


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("the config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve(args, defaults, table_keys):
    """Merge defaults, the config file and flags (in that order of precedence, lowest first)."""
    cfg = _load_config(args.config_sub or args.config)
    cfg.pop("command", None)
    cfg.pop("kind", None)
    unknown = set(cfg) - set(table_keys)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = dict(defaults)
    out.update(cfg)
    for key in table_keys:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _int(value, name, minimum=None):
    try:
        n = int(value)
        if n != float(value):
            raise ValueError
    except (TypeError, ValueError):
        raise UsageError(f"{name} must be an integer, got {value!r}") from None
    if minimum is not None and n < minimum:
        raise UsageError(f"{name} must be at least {minimum}, got {n}")
    return n


def _problem_params(opts, problem):
    if problem not in PROBLEMS:
        raise UsageError(f"unknown problem {problem!r}; choose from {', '.join(PROBLEMS)}")
    accepted = set(inspect.signature(PROBLEMS[problem]).parameters)
    params = {}
    for key, arg in PROBLEM_PARAMS.items():
        if opts.get(key) is None:
            continue
        if arg not in accepted:
            raise UsageError(f"problem {problem!r} has no parameter {key!r}")
        params[arg] = parse_number(opts[key])
    return params


def _check_schemes(names):
    if not names:
        raise UsageError("no schemes given")
    for n in names:
        try:
            get_scheme(n)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    return names


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _fmt(x):
    return f"{x:.4g}" if np.isfinite(x) else "nan"


CONVERGENCE_KEYS = [k for _, k, _, _ in COMMON + CONVERGENCE] + ["timing", "control_variate"]


def cmd_convergence(args):
    opts = resolve(args, CONVERGENCE_DEFAULTS[args.kind], CONVERGENCE_KEYS)
    problem = str(opts["problem"])
    params = _problem_params(opts, problem)
    config = ex.ExperimentConfig(
        problem=problem,
        params=params,
        schemes=tuple(_check_schemes(parse_list(opts["schemes"]))),
        h=tuple(parse_h_list(opts["h"])),
        batches=_int(opts["batches"], "batches", 1),
        paths=_int(opts["paths"], "paths", 1),
        seed=_int(opts["seed"], "seed", 0),
        reference=str(opts["reference"]),
        reference_factor=_int(opts["reference_factor"], "reference-factor", 1),
        functional=str(opts["functional"]),
        control_variate=bool(opts["control_variate"]),
        T=None if opts.get("T") is None else parse_number(opts["T"]),
        workers=_int(opts["workers"], "workers", 1),
        timing=bool(opts["timing"]),
    )
    try:
        config.validate()
        make_problem(config.problem, **config.params)
    except (ex.ExperimentError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    run = ex.strong_error if args.kind == "strong" else ex.weak_error
    tables = run(config)
    _write(ex.error_table_csv(tables, config), opts.get("output"))
    for name, t in tables.items():
        errs = ", ".join(f"{_fmt(e)}±{_fmt(c)}" for e, c in zip(t.error, t.ci))
        print(f"{name}: order {_fmt(t.order)} ± {_fmt(t.order_ci())}  errors {errs}", file=sys.stderr)
    return EXIT_OK


STABILITY_KEYS = [k for _, k, _, _ in STABILITY]


def _stability_problem(opts):
    problem = str(opts["problem"])
    if problem == "orthogonal":
        key = "b_h"
    elif problem == "oscillator":
        key = "omega2_h"
    else:
        raise UsageError(f"stability problems are orthogonal and oscillator, got {problem!r}")
    if opts.get(key) is None:
        raise UsageError(f"--{key.replace('_', '-')} is required for the {problem} problem")
    return problem, parse_number(opts[key]), key


def _kinds(opts):
    kinds = parse_list(opts["kinds"])
    for k in kinds:
        if k not in SCHEME_KINDS:
            raise UsageError(f"unknown stability kind {k!r}; choose from {', '.join(SCHEME_KINDS)}")
    if not kinds:
        raise UsageError("no stability kinds given")
    return kinds


def _config_line(opts):
    clean = {k: (list(v) if isinstance(v, tuple) else v) for k, v in opts.items() if k not in ("output", "workers")}
    return json.dumps(clean, sort_keys=True, default=str)


def cmd_stability(args):
    opts = resolve(args, STABILITY_DEFAULTS, STABILITY_KEYS)
    problem, param, key = _stability_problem(opts)
    kinds = _kinds(opts)
    header = f"# config {_config_line(dict(opts, command='stability ' + args.kind))}\n"
    if args.kind == "point":
        if opts.get("lambda_h") is None or opts.get("sigma2_h") is None:
            raise UsageError("stability point needs --lambda-h and --sigma2-h")
        lam_h, s2 = parse_number(opts["lambda_h"]), parse_number(opts["sigma2_h"])
        if s2 < 0:
            raise UsageError("sigma^2 h must be nonnegative")
        Abar, Bbar = problem_matrices(problem, lam_h, s2, param)
        lines = [header, "kind,rho,verdict\n"]
        for kind in kinds + ["exact"]:
            rho = scheme_rho(kind, Abar, Bbar)
            verdict = "stable" if rho < 1 else "unstable"
            lines.append(f"{kind},{rho!r},{verdict}\n")
            print(f"{kind:26s} rho = {rho:.6g}  {verdict}", file=sys.stderr)
        _write("".join(lines), opts.get("output"))
        return EXIT_OK
    lam_grid = parse_range(opts["lambda_h_range"])
    sigma2_max = parse_number(opts["sigma2_max"])
    if not sigma2_max > 0:
        raise UsageError("sigma2-max must be positive")
    scan_points = _int(opts["scan_points"], "scan-points", 2)
    tol = parse_number(opts["tol"])
    if not tol > 0:
        raise UsageError("tol must be positive")
    columns = {}
    for kind in kinds + ["exact"]:
        columns[kind] = region_scan(problem, kind, param, lam_grid, sigma2_max, scan_points, tol)
    lines = [header, ",".join(["lambda_h"] + [f"sigma2_h_{k}" for k in columns]) + "\n"]
    warnings = 0
    for j, lam_h in enumerate(lam_grid):
        row = [repr(float(lam_h))]
        for kind, cols in columns.items():
            col = cols[j]
            row.append(repr(float(col.sigma2_h)))
            if col.status != "ok":
                warnings += 1
        lines.append(",".join(row) + "\n")
    _write("".join(lines), opts.get("output"))
    if warnings:
        counts = {}
        for kind, cols in columns.items():
            for col in cols:
                if col.status != "ok":
                    counts[(kind, col.status)] = counts.get((kind, col.status), 0) + 1
        for (kind, status), n in sorted(counts.items()):
            print(f"warning: {kind}: {n} column(s) without a single crossing ({status})", file=sys.stderr)
    return EXIT_OK


SIMULATE_KEYS = [k for _, k, _, _ in COMMON + SIMULATE]


def cmd_simulate(args):
    opts = resolve(args, SIMULATE_DEFAULTS, SIMULATE_KEYS)
    problem_id = str(opts["problem"])
    h = parse_number(opts["h"])
    if not h > 0:
        raise UsageError("h must be positive")
    steps = _int(opts["steps"], "steps", 1)
    paths = _int(opts["paths"], "paths", 1)
    opts.update(h=h, steps=steps, paths=paths)
    scaled = {"lambda_h": "lambda", "b_h": "b", "omega2_h": "omega2"}
    for key, target in scaled.items():
        if opts.get(key) is not None:
            opts[target] = parse_number(opts[key]) / h
    if opts.get("sigma2_h") is not None:
        s2 = parse_number(opts["sigma2_h"])
        if s2 < 0:
            raise UsageError("sigma^2 h must be nonnegative")
        opts["sigma"] = math.sqrt(s2 / h)
    params = _problem_params(opts, problem_id)
    try:
        problem = make_problem(problem_id, **params)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    schemes = _check_schemes(parse_list(opts["schemes"]))
    series = ex.moment_evolution(problem, schemes, h, steps, paths, seed=_int(opts["seed"], "seed", 0),
                                 workers=_int(opts["workers"], "workers", 1))
    _write(ex.moment_csv(series, _config_line(dict(opts, command="simulate"))), opts.get("output"))
    for name, n in series.truncated.items():
        if n is not None:
            print(f"warning: {name}: paths diverged from step {n}; series truncated", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"convergence": cmd_convergence, "stability": cmd_stability, "simulate": cmd_simulate}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ex.DivergenceThresholdError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (NewtonError, LinAlgFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
