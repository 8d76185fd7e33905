"""Monte Carlo convergence and moment experiments.

Paths are organised in batches; path ``k`` of batch ``b`` has the global
index ``b * paths + k`` and draws its noise from its own stream (see
:mod:`stochlawson.noise`).  Consecutive batches are integrated together in
groups of about ``group_paths`` paths, since the cost of a step is mostly
per-call overhead.  Groups are handed to workers; the grouping depends only on
the configuration, so results do not depend on the number of workers.  Confidence intervals are Student-t
intervals over the batch means.

Every scheme in an experiment sees the same Brownian paths: increments are
drawn once on the finest grid and summed (with the exact ``dZ`` rule) for
the coarser step sizes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .model import exact_linear_solution
from .noise import PathStream
from .problems import make_problem
from .schemes import PathIntegrator, get_scheme
from .stability import (
    exact_second_moment,
    iterate_moments,
    scheme_stability_matrix,
    sde_stability_matrix,
)

__all__ = [
    "ErrorTable",
    "ExperimentConfig",
    "ExperimentError",
    "DivergenceThresholdError",
    "MomentSeries",
    "FUNCTIONALS",
    "strong_error",
    "weak_error",
    "moment_evolution",
    "estimate_order",
    "confidence_interval",
    "error_table_csv",
    "moment_csv",
    "scheme_kind",
    "DIVERGENCE_LIMIT",
]

DIVERGENCE_LIMIT = 1e-3

FUNCTIONALS = {
    "x1^2": lambda y: y[:, 0] ** 2,
    "x2^2": lambda y: y[:, 1] ** 2,
    "norm^2": lambda y: np.sum(y * y, axis=-1),
    "x1": lambda y: y[:, 0],
    "one": lambda y: np.ones(y.shape[0]),
}


class ExperimentError(RuntimeError):
    """Invalid experiment setup."""


class DivergenceThresholdError(ArithmeticError):
    """More than ``DIVERGENCE_LIMIT`` of the paths of a scheme diverged."""

    def __init__(self, scheme, count, total):
        self.scheme = scheme
        self.count = count
        self.total = total
        super().__init__(f"{scheme}: {count} of {total} paths diverged")


def estimate_order(h, errors):
    """Least-squares fit ``log2(err) = p log2(h) + c``; returns ``(p, c)``."""
    h = np.asarray(h, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if h.shape != errors.shape or h.ndim != 1:
        raise ValueError("h and errors must be 1-d arrays of equal length")
    if h.size < 3:
        raise ValueError(f"need at least 3 points for an order estimate, got {h.size}")
    if np.any(h <= 0) or np.any(~np.isfinite(h)):
        raise ValueError("step sizes must be positive")
    if np.unique(h).size != h.size:
        raise ValueError("duplicated step sizes")
    if np.any(~(errors > 0)) or np.any(~np.isfinite(errors)):
        raise ValueError("errors must be positive and finite")
    slope, intercept = np.polyfit(np.log2(h), np.log2(errors), 1)
    return float(slope), float(intercept)


def confidence_interval(batch_means, level=0.95):
    """Student-t half-width of the mean of ``batch_means``."""
    x = np.asarray(batch_means, dtype=float)
    if x.size < 2:
        raise ValueError("need at least 2 batches for a confidence interval")
    sd = np.std(x, ddof=1)
    return float(stats.t.ppf(0.5 + level / 2.0, x.size - 1) * sd / math.sqrt(x.size))


@dataclass
class ErrorTable:
    """Errors of one scheme over decreasing step sizes."""

    scheme: str
    h: np.ndarray
    error: np.ndarray
    ci: np.ndarray
    seconds: np.ndarray
    diverged: np.ndarray = None

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.error = np.asarray(self.error, dtype=float)
        self.ci = np.asarray(self.ci, dtype=float)
        self.seconds = np.asarray(self.seconds, dtype=float)
        if np.any(np.diff(self.h) >= 0):
            raise ValueError("h must be strictly decreasing")

    @property
    def order(self):
        """Regression slope, ``nan`` with fewer than 3 usable points."""
        ok = self.error > 0
        if np.count_nonzero(ok) < 3:
            return math.nan
        return estimate_order(self.h[ok], self.error[ok])[0]

    def order_ci(self, level=0.95):
        """Student-t half-width of the regression slope (``nan`` with fewer than 3 points)."""
        ok = self.error > 0
        n = np.count_nonzero(ok)
        if n < 3:
            return math.nan
        x, y = np.log2(self.h[ok]), np.log2(self.error[ok])
        slope, icept = np.polyfit(x, y, 1)
        resid = y - (slope * x + icept)
        se = math.sqrt(np.sum(resid**2) / (n - 2) / np.sum((x - x.mean()) ** 2))
        return float(stats.t.ppf(0.5 + level / 2.0, n - 2) * se)


@dataclass
class ExperimentConfig:
    """Setup of a convergence experiment.

    ``h`` lists the step sizes (any order; tables are sorted decreasing).
    ``reference_factor`` sets the reference step ``min(h) / reference_factor``
    for strong errors.  For weak errors ``functional`` names an entry of
    :data:`FUNCTIONALS`; linear problems use the exact solution, otherwise
    the reference scheme.  ``control_variate`` subtracts ``f`` of the
    reference on the same path before averaging, which leaves the mean
    unchanged and removes most of the Monte Carlo noise.
    """

    problem: str = "oscillator"
    params: dict = field(default_factory=dict)
    schemes: tuple = ("em-dsl",)
    h: tuple = (2.0**-6, 2.0**-7, 2.0**-8)
    batches: int = 8
    paths: int = 50
    seed: int = 0
    reference: str = "platen15-dsl"
    reference_factor: int = 64
    functional: str = "x1^2"
    control_variate: bool = True
    T: Optional[float] = None
    workers: int = 1
    timing: bool = False
    chunk_steps: int = 4096
    group_paths: int = 1000

    def validate(self):
        if self.batches < 1 or self.paths < 1:
            raise ExperimentError("batches and paths must be positive")
        if len(self.h) == 0 or any(not h > 0 for h in self.h):
            raise ExperimentError("h must be a non-empty list of positive step sizes")
        if len(set(self.h)) != len(self.h):
            raise ExperimentError("duplicated step sizes")
        if self.reference_factor < 1 or int(self.reference_factor) != self.reference_factor:
            raise ExperimentError("reference_factor must be a positive integer")
        if self.functional not in FUNCTIONALS:
            raise ExperimentError(f"unknown functional {self.functional!r}; choose from {', '.join(FUNCTIONALS)}")
        if self.workers < 1:
            raise ExperimentError("workers must be at least 1")
        if self.group_paths < 1:
            raise ExperimentError("group_paths must be positive")
        for name in tuple(self.schemes) + (self.reference,):
            try:
                get_scheme(name)
            except KeyError as exc:
                raise ExperimentError(str(exc.args[0])) from exc
        return self

    def to_dict(self):
        d = asdict(self)
        d["schemes"] = list(self.schemes)
        d["h"] = [float(x) for x in self.h]
        return d

    def describe(self):
        """JSON of every setting that can change the results (``workers`` cannot)."""
        d = self.to_dict()
        d.pop("workers")
        return json.dumps(d, sort_keys=True)


def _steps(T, h, what):
    n = T / h
    N = int(round(n))
    if N < 1 or abs(n - N) > 1e-9 * max(1.0, n):
        raise ExperimentError(f"{what}: step {h!r} does not divide T = {T!r}")
    return N


def _plan(cfg, base_h):
    problem = make_problem(cfg.problem, **cfg.params)
    T = problem.T if cfg.T is None else float(cfg.T)
    N_base = _steps(T, base_h, "reference grid")
    factors = {}
    for h in cfg.h:
        f = h / base_h
        F = int(round(f))
        if F < 1 or abs(f - F) > 1e-9 * f:
            raise ExperimentError(f"step {h!r} is not a multiple of the base step {base_h!r}")
        _steps(T, h, "scheme grid")
        factors[float(h)] = F
    lcm = 1
    for F in factors.values():
        lcm = lcm * F // math.gcd(lcm, F)
    chunk = max(lcm, (cfg.chunk_steps // lcm) * lcm)
    while N_base % chunk:
        chunk -= lcm
    return problem, T, N_base, factors, chunk


def _run_group(cfg, problem, base_h, N_base, factors, chunk, batches, with_reference, need_dz):
    """All schemes (and the reference) over the paths of the given batches, vectorized."""
    sde = problem.sde
    P = cfg.paths * len(batches)
    idx = [b * cfg.paths + k for b in batches for k in range(cfg.paths)]
    stream = PathStream(cfg.seed, idx, sde.M, base_h, need_dz)
    runners = {}
    for name in cfg.schemes:
        for h in factors:
            runners[(name, h)] = PathIntegrator(sde, name, h, problem.t0, problem.X0, P)
    ref = PathIntegrator(sde, cfg.reference, base_h, problem.t0, problem.X0, P) if with_reference else None
    W = np.zeros((P, sde.M))
    for _ in range(N_base // chunk):
        noise = stream.next(chunk)
        W = W + noise.dW.sum(axis=1)
        if ref is not None:
            ref.advance(noise)
        coarse = {h: (noise if F == 1 else noise.coarsen(F)) for h, F in factors.items()}
        for (name, h), integ in runners.items():
            integ.advance(coarse[h])
    return runners, ref, W


def _ensure_dz(cfg, with_reference):
    names = list(cfg.schemes) + ([cfg.reference] if with_reference else [])
    return any(get_scheme(n).needs_dz for n in names)


def _groups(cfg):
    """Batches integrated together; depends on the configuration only, never on ``workers``."""
    size = max(1, cfg.group_paths // cfg.paths)
    return [list(range(b, min(b + size, cfg.batches))) for b in range(0, cfg.batches, size)]


def _map_groups(cfg, fn):
    """Per-batch results in batch order."""
    groups = _groups(cfg)
    if cfg.workers == 1:
        parts = [fn(g) for g in groups]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(fn, groups))
    return [r for part in parts for r in part]


def _slices(cfg, batches):
    return [slice(k * cfg.paths, (k + 1) * cfg.paths) for k in range(len(batches))]


def _tables(cfg, per_batch, hs):
    """Combine per-batch ``(sum, count, diverged, seconds)`` into ErrorTables."""
    tables = {}
    total = cfg.batches * cfg.paths
    for name in cfg.schemes:
        err, ci, sec, div = [], [], [], []
        for h in hs:
            rows = [pb[(name, h)] for pb in per_batch]
            means = np.array([r[0] / r[1] if r[1] else np.nan for r in rows])
            counts = np.array([r[1] for r in rows])
            n_div = int(sum(r[2] for r in rows))
            if n_div > DIVERGENCE_LIMIT * total:
                raise DivergenceThresholdError(f"{name} at h={h:g}", n_div, total)
            ok = counts > 0
            mean = float(np.sum(means[ok] * counts[ok]) / np.sum(counts[ok]))
            err.append(mean)
            ci.append(confidence_interval(means[ok]) if np.count_nonzero(ok) >= 2 else math.nan)
            sec.append(float(sum(r[3] for r in rows)) if cfg.timing else math.nan)
            div.append(n_div)
        tables[name] = ErrorTable(name, np.array(hs), np.array(err), np.array(ci), np.array(sec), np.array(div))
    return tables


def strong_error(config):
    """Mean ``||Y_N - Y_N^ref||_2`` per scheme and step size.

    The reference is ``config.reference`` at ``min(h) / reference_factor``
    on the same Brownian paths.

    Returns:
        dict scheme name -> :class:`ErrorTable`.

    Raises:
        DivergenceThresholdError: more than 0.1% of a scheme's paths diverged.
    """
    cfg = config.validate()
    hs = sorted((float(h) for h in cfg.h), reverse=True)
    base_h = min(hs) / cfg.reference_factor
    problem, T, N_base, factors, chunk = _plan(cfg, base_h)
    need_dz = _ensure_dz(cfg, True)

    def group(batches):
        runners, ref, _ = _run_group(cfg, problem, base_h, N_base, factors, chunk, batches, True, need_dz)
        yref = ref.state()
        share = 1.0 / len(batches)
        outs = []
        for sl in _slices(cfg, batches):
            out = {}
            for (name, h), integ in runners.items():
                div = integ.diverged[sl]
                bad = div | ref.diverged[sl]
                e = np.linalg.norm(integ.state()[sl] - yref[sl], axis=-1)[~bad]
                out[(name, h)] = (float(np.sum(e)), int(e.size), int(np.count_nonzero(div)), integ.elapsed * share)
            outs.append(out)
        return outs

    return _tables(cfg, _map_groups(cfg, group), hs)


def _linear_exact_available(problem):
    sde = problem.sde
    return sde.linear_only


def _analytic_moment(problem, T, functional):
    """``E f(X(T))`` for quadratic functionals of linear problems."""
    S = sde_stability_matrix(problem.drift_matrix, list(problem.noise_matrices))
    P0 = np.outer(problem.X0, problem.X0)
    P = exact_second_moment(S, P0, T - problem.t0)
    if functional == "x1^2":
        return float(P[0, 0])
    if functional == "x2^2":
        return float(P[1, 1])
    if functional == "norm^2":
        return float(np.trace(P))
    if functional == "one":
        return 1.0
    raise ExperimentError(f"no analytic reference for functional {functional!r}")


def weak_error(config):
    """``|E f(Y_N) - E f(X(T))|`` per scheme and step size.

    For linear problems with all linear parts commuting (``g = 0``) the
    reference is the exact solution: pathwise with ``control_variate``,
    otherwise its analytic second moment.  Other problems use the
    reference scheme at ``min(h) / reference_factor``.
    """
    cfg = config.validate()
    f = FUNCTIONALS[cfg.functional]
    hs = sorted((float(h) for h in cfg.h), reverse=True)
    probe = make_problem(cfg.problem, **cfg.params)
    exact = _linear_exact_available(probe)
    base_h = min(hs) if exact else min(hs) / cfg.reference_factor
    problem, T, N_base, factors, chunk = _plan(cfg, base_h)
    with_reference = not exact
    need_dz = _ensure_dz(cfg, with_reference)
    analytic = None
    if not cfg.control_variate:
        analytic = _analytic_moment(problem, T, cfg.functional) if exact else None

    def group(batches):
        runners, ref, W = _run_group(cfg, problem, base_h, N_base, factors, chunk, batches, with_reference, need_dz)
        if exact:
            xref = exact_linear_solution(problem.sde, T, problem.X0, W, t0=problem.t0)
            ref_bad = np.zeros(W.shape[0], dtype=bool)
        else:
            xref = ref.state()
            ref_bad = ref.diverged
        fref = f(xref)
        share = 1.0 / len(batches)
        outs = []
        for sl in _slices(cfg, batches):
            out = {}
            rb = ref_bad[sl]
            for (name, h), integ in runners.items():
                div = integ.diverged[sl]
                bad = div | rb
                fy = f(integ.state()[sl])
                vals = (fy - fref[sl])[~bad] if cfg.control_variate else fy[~bad]
                out[(name, h)] = (float(np.sum(vals)), int(vals.size), int(np.count_nonzero(div)), integ.elapsed * share)
                out[("__ref__", h)] = (float(np.sum(fref[sl][~rb])), int(np.count_nonzero(~rb)), 0, 0.0)
            outs.append(out)
        return outs

    per_batch = _map_groups(cfg, group)
    tables = _tables(cfg, per_batch, hs)
    for name, table in tables.items():
        if cfg.control_variate:
            table.error = np.abs(table.error)
        elif analytic is not None:
            table.error = np.abs(table.error - analytic)
        else:
            # plain difference of the two sample means
            ref_means = []
            for h in hs:
                rows = [pb[("__ref__", h)] for pb in per_batch]
                ref_means.append(sum(r[0] for r in rows) / sum(r[1] for r in rows))
            table.error = np.abs(table.error - np.array(ref_means))
    return tables


def error_table_csv(tables, config=None):
    """CSV text: a ``# config`` comment line, then ``h, err_<s>, ci_<s>, time_<s>, ...``."""
    buf = io.StringIO()
    if config is not None:
        buf.write(f"# config {config.describe()}\n")
    names = list(tables)
    writer = csv.writer(buf, lineterminator="\n")
    header = ["h"]
    for n in names:
        header += [f"err_{n}", f"ci_{n}", f"time_{n}"]
    writer.writerow(header)
    hs = tables[names[0]].h
    for k, h in enumerate(hs):
        row = [repr(float(h))]
        for n in names:
            t = tables[n]
            row += [repr(float(t.error[k])), repr(float(t.ci[k])), repr(float(t.seconds[k]))]
        writer.writerow(row)
    return buf.getvalue()


SCHEME_KIND_BY_NAME = {
    "em-dsl": "em_dsl",
    "platen-dsl": "platen_dsl",
    "implicit-platen": "implicit_platen_exact",
}


def scheme_kind(name):
    """Stability-matrix kind describing ``name`` exactly on linear drift-split problems."""
    return SCHEME_KIND_BY_NAME.get(name)


@dataclass
class MomentSeries:
    """Second moments ``E(Y_1^2)``, ``E(Y_2^2)`` (and the mixed moment) over time.

    ``mc[s]`` is ``(steps + 1, 3)``: columns ``E Y_1^2``, ``E Y_2^2``,
    ``E Y_1 Y_2``; ``se[s]`` their standard errors.  ``iterated[s]`` holds the
    same quantities from the scheme's stability matrix where one exists, and
    ``exact`` those of the SDE.  ``truncated[s]`` is the first step at which
    a path diverged (``None`` if none did); later entries are NaN.
    """

    t: np.ndarray
    mc: dict
    se: dict
    iterated: dict
    exact: Optional[np.ndarray]
    truncated: dict


def _moment_cols(P):
    if P.shape[-1] == 1:
        return np.stack([P[..., 0, 0], np.full(P.shape[:-2], np.nan), np.full(P.shape[:-2], np.nan)], -1)
    return np.stack([P[..., 0, 0], P[..., 1, 1], P[..., 0, 1]], -1)


def moment_evolution(problem, schemes, h, steps, paths, seed=0, batch_paths=10000, workers=1):
    """Monte Carlo second-moment series next to their exact and iterated counterparts.

    Args:
        problem: a :class:`~stochlawson.problems.Problem` with linear data.
        schemes: scheme names.
        h: step size; ``steps`` steps are taken.
        paths: total number of paths, simulated in batches of ``batch_paths``.
    """
    if paths < 1:
        raise ExperimentError("need at least one path")
    if steps < 1:
        raise ExperimentError("need at least one step")
    d = problem.sde.d
    t = problem.t0 + h * np.arange(steps + 1)
    n_batches = -(-paths // batch_paths)
    record = set(range(steps + 1))

    def batch(b):
        lo = b * batch_paths
        hi = min(paths, lo + batch_paths)
        noise = PathStream(seed, range(lo, hi), problem.sde.M, h, any(get_scheme(s).needs_dz for s in schemes)).next(steps)
        res = {}
        for name in schemes:
            integ = PathIntegrator(problem.sde, name, h, problem.t0, problem.X0, hi - lo)
            records = {0: integ.state()}
            integ.advance(noise, record, records)
            ys = np.stack([records[n] for n in range(steps + 1)])
            prod = ys[..., :, None] * ys[..., None, :]
            m = _moment_cols(prod)
            res[name] = (np.nansum(m, axis=1), np.nansum(m * m, axis=1), np.sum(np.isfinite(m[..., 0]), axis=1))
        return res

    if workers == 1:
        parts = [batch(b) for b in range(n_batches)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(batch, range(n_batches)))
    mc, se, iterated, truncated = {}, {}, {}, {}
    P0 = np.outer(problem.X0, problem.X0)
    for name in schemes:
        s1 = sum(p[name][0] for p in parts)
        s2 = sum(p[name][1] for p in parts)
        cnt = sum(p[name][2] for p in parts)
        mean = s1 / cnt[:, None]
        var = np.maximum(s2 / cnt[:, None] - mean * mean, 0.0) * cnt[:, None] / np.maximum(cnt[:, None] - 1, 1)
        lost = np.flatnonzero(cnt < paths)
        truncated[name] = int(lost[0]) if lost.size else None
        if lost.size:
            mean[lost[0]:] = np.nan
        mc[name] = mean
        se[name] = np.sqrt(var / cnt[:, None])
        kind = scheme_kind(name)
        if kind is not None and problem.linear:
            Sb = scheme_stability_matrix(kind, h * problem.drift_matrix, [math.sqrt(h) * b for b in problem.noise_matrices])
            iterated[name] = _moment_cols(iterate_moments(Sb, P0, steps))
    exact = None
    if problem.linear:
        S = sde_stability_matrix(problem.drift_matrix, list(problem.noise_matrices))
        exact = _moment_cols(np.stack([exact_second_moment(S, P0, tt - problem.t0) for tt in t]))
    return MomentSeries(t, mc, se, iterated, exact, truncated)


def moment_csv(series, config_line=None):
    """CSV text: ``t, mc_<s>_1, mc_<s>_2, ..., exact_1, exact_2``."""
    buf = io.StringIO()
    if config_line is not None:
        buf.write(f"# config {config_line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    names = list(series.mc)
    header = ["t"]
    for n in names:
        header += [f"mc_{n}_1", f"mc_{n}_2"]
    header += ["exact_1", "exact_2"]
    writer.writerow(header)
    for k, tt in enumerate(series.t):
        row = [repr(float(tt))]
        for n in names:
            row += [repr(float(series.mc[n][k, 0])), repr(float(series.mc[n][k, 1]))]
        if series.exact is not None:
            row += [repr(float(series.exact[k, 0])), repr(float(series.exact[k, 1]))]
        else:
            row += ["nan", "nan"]
        writer.writerow(row)
    return buf.getvalue()


def timed(fn, *args, **kwargs):
    """``(result, seconds)`` of one call."""
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start
