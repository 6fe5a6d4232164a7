"""Simulation and formula experiments at configurable scale.

Each replication draws from its own random stream ``make_rng(seed, rep)``,
so reports do not depend on how replications are spread over workers.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import bounds as bd
from .constants import MomentAssumption
from .datagen import GeneratorKind, GeneratorSpec, InfiniteMomentError, generate, make_rng, moment_v
from .estimators import (
    CenterMethod,
    EstimatorConfig,
    gmom,
    gmom_block_count,
    naive_center,
    sample_mean,
    truncated_mean,
    truncated_mean_path,
)
from .space import SpaceSpec, beta, row_norms


class ExperimentKind(str, enum.Enum):
    BOUND_COMPARE = "compare"
    COVERAGE = "coverage"
    EST_DIST = "distances"
    MOMENT_CHECK = "moment"
    VILLE_CHECK = "ville"


def k_from_rule(rule, n: int) -> int:
    """Center sample count from a rule: 'n/10', 'sqrt', 'log2' or an integer."""
    if isinstance(rule, (int, np.integer)):
        return int(rule)
    rule = str(rule).strip()
    if rule == "n/10":
        return n // 10
    if rule == "sqrt":
        return math.isqrt(n)
    if rule == "log2":
        return n.bit_length() - 1
    try:
        return int(rule)
    except ValueError:
        raise ValueError(f"unknown k rule {rule!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    kind: ExperimentKind = ExperimentKind.COVERAGE
    gen: GeneratorSpec = field(default_factory=GeneratorSpec)
    space: SpaceSpec | None = None
    p_grid: tuple = (1.5,)
    v: float | None = None  # None: exact moment of the generator
    n_grid: tuple = (2000,)
    delta: float = 0.05
    delta1: float | None = None
    delta2: float | None = None
    k_rule: object = 100
    lambdas: tuple | str = "opt"
    center: CenterMethod = CenterMethod.SAMPLE_MEAN
    gmom_delta: float = 1e-4
    replications: int = 100
    seed: int = 0
    workers: int = 1
    # bound comparison
    tournament_c: float = 1.0
    trace: float = 1.0
    lambda_max: float = 0.01
    # coverage harness knobs
    width_scale: float = 1.0
    estimator_lambda: float | None = None
    # distances: lambdas are given at paper_n and rescaled to the run size
    paper_n: int | None = None
    moment_blocks: int = 16

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        object.__setattr__(self, "center", CenterMethod(self.center))
        if self.space is None:
            object.__setattr__(self, "space", SpaceSpec.euclidean(self.gen.dim))
        if self.space.dim != self.gen.dim:
            raise ValueError("space and generator dimensions differ")
        if not self.p_grid or not self.n_grid:
            raise ValueError("p and n grids must be nonempty")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if not (0 < self.delta < 1):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")

    @property
    def deltas(self) -> tuple[float, float]:
        d1 = self.delta / 2 if self.delta1 is None else self.delta1
        d2 = self.delta / 2 if self.delta2 is None else self.delta2
        return d1, d2

    def assumption(self, p: float) -> MomentAssumption:
        v = self.v if self.v is not None else moment_v(self.gen, p)
        return MomentAssumption(p, v, True)

    def rate(self) -> bd.RateFunction:
        if self.center is CenterMethod.GMOM:
            return bd.RateFunction.gmom()
        if self.center is CenterMethod.SAMPLE_MEAN:
            return bd.RateFunction.sample_mean()
        # a zero center has no data-driven rate; harness self-tests only
        return bd.RateFunction.constant(0.0)


COLUMNS = ("experiment", "estimator", "p", "n", "k", "lam", "replication",
           "distance", "width", "violated", "wall_time")


def _row(experiment, estimator, p, n, k, lam=math.nan, replication=0, distance=math.nan,
         width=math.nan, violated=None, wall_time=0.0):
    return dict(experiment=experiment, estimator=estimator, p=p, n=n, k=k, lam=lam,
                replication=replication, distance=distance, width=width,
                violated=violated, wall_time=wall_time)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else format(float(x), ".17g")
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if math.isnan(x) else float(format(x, ".17g"))
    return obj


@dataclass
class RunReport:
    experiment: str
    rows: list
    summary: dict
    config: dict

    def sorted_rows(self):
        def key(r):
            lam = r["lam"]
            return (r["replication"], r["estimator"], r["p"], r["n"],
                    -1.0 if (lam is None or math.isnan(lam)) else lam)
        return sorted(self.rows, key=key)

    def to_csv(self, fh=None, timing: bool = False) -> str:
        cols = COLUMNS if timing else COLUMNS[:-1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.sorted_rows():
            w.writerow([_fmt(r[c]) for c in cols])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def to_json(self) -> str:
        doc = {"experiment": self.experiment, "config": self.config, "summary": self.summary}
        return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _config_echo(cfg: ExperimentConfig) -> dict:
    # the worker count cannot change results, so it is not part of the report
    echo = asdict(cfg)
    echo.pop("workers")
    return _jsonable(echo)


def _map(fn, cfg: ExperimentConfig, tasks):
    if cfg.workers <= 1 or len(tasks) < 2:
        return [fn(cfg, t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * cfg.workers))
    with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
        return list(ex.map(fn, [cfg] * len(tasks), tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# bound comparison
# ---------------------------------------------------------------------------


def _safe(f):
    try:
        return f()
    except ValueError:
        return math.nan


def run_bound_compare(cfg: ExperimentConfig) -> RunReport:
    """Widths of five estimators' bounds over the (p, n) grid.

    Truncation rows use the symmetric split delta1 = delta2 = delta/2 and
    the balancing lambda; infeasible cells (too few samples for the GMoM
    blocks) and the tournament curve at p != 2 are left blank.
    """
    space, delta = cfg.space, cfg.delta
    v = 1.0 if cfg.v is None else cfg.v
    rows = []
    for p in cfg.p_grid:
        assm = MomentAssumption(p, v)
        for n in cfg.n_grid:
            n = int(n)
            k = k_from_rule(cfg.k_rule, n)
            ex = ExperimentKind.BOUND_COMPARE.value
            rows.append(_row(ex, "sample_mean", p, n, 0,
                             width=_safe(lambda: bd.r_sample_mean(delta, n, assm, space))))
            rows.append(_row(ex, "gmom", p, n, 0,
                             width=_safe(lambda: bd.r_gmom(delta, n, assm, space))))
            for name, rate in (("trunc_sample_mean", bd.RateFunction.sample_mean()),
                               ("trunc_gmom", bd.RateFunction.gmom())):
                q = bd.BoundQuery.split(n, delta, k)
                rows.append(_row(ex, name, p, n, k,
                                 lam=_safe(lambda: bd.opt_lambda(q, assm, space, rate)),
                                 width=_safe(lambda: bd.optimized_width(q, assm, space, rate))))
            tw = (bd.tournament_width(n, delta, cfg.trace, cfg.lambda_max, cfg.tournament_c)
                  if p == 2.0 else math.nan)
            rows.append(_row(ex, "tournament", p, n, 0, width=tw))
    return RunReport(ExperimentKind.BOUND_COMPARE.value, rows,
                     {"rows": len(rows)}, _config_echo(cfg))


def log_log_slope(n1, w1, n2, w2) -> float:
    return (math.log(w2) - math.log(w1)) / (math.log(n2) - math.log(n1))


# ---------------------------------------------------------------------------
# coverage
# ---------------------------------------------------------------------------


def _coverage_setup(cfg: ExperimentConfig, N: int):
    p = cfg.p_grid[0]
    try:
        assm = cfg.assumption(p)
    except InfiniteMomentError as e:
        raise ValueError(str(e)) from e
    k = k_from_rule(cfg.k_rule, N)
    d1, d2 = cfg.deltas
    q = bd.BoundQuery(N, k, d1, d2)
    rate = cfg.rate()
    if cfg.lambdas == "opt":
        lam = bd.opt_lambda(q, assm, cfg.space, rate)
    else:
        lam = float(cfg.lambdas[0])
    ns = np.arange(k + 1, N + 1)
    widths = bd.line_crossing_path(ns, q, assm, cfg.space, rate, lam) * cfg.width_scale
    est_lam = lam if cfg.estimator_lambda is None else cfg.estimator_lambda
    return assm, k, lam, est_lam, widths


def _coverage_rep(cfg: ExperimentConfig, rep: int):
    t0 = time.perf_counter()
    N = int(cfg.n_grid[0])
    assm, k, lam, est_lam, widths = _coverage_setup(cfg, N)
    X = generate(cfg.gen, N, make_rng(cfg.seed, rep))
    ec = EstimatorConfig(est_lam, k, cfg.center, cfg.gmom_delta)
    path, _ = truncated_mean_path(X, ec, cfg.space)
    dist = row_norms(path - cfg.gen.mu, cfg.space)
    violated = bool(np.any(dist > widths))
    return _row(ExperimentKind.COVERAGE.value, f"trunc_{cfg.center.value}", assm.p, N, k,
                lam=est_lam, replication=rep, distance=float(dist[-1]),
                width=float(widths[-1]), violated=violated,
                wall_time=time.perf_counter() - t0)


def run_coverage(cfg: ExperimentConfig) -> RunReport:
    """Fraction of replications whose estimate leaves the width at any n in (k, N]."""
    N = int(cfg.n_grid[0])
    assm, k, lam, est_lam, widths = _coverage_setup(cfg, N)
    rows = _map(_coverage_rep, cfg, list(range(cfg.replications)))
    viol = sum(r["violated"] for r in rows)
    R = cfg.replications
    summary = {
        "violation_rate": viol / R,
        "violations": viol,
        "replications": R,
        "delta": cfg.delta,
        "binomial_3sigma": 3.0 * math.sqrt(cfg.delta * (1 - cfg.delta) / R),
        "lambda_bound": lam,
        "lambda_estimator": est_lam,
        "k": k,
        "v": assm.v,
        "width_at_N": float(widths[-1]),
    }
    return RunReport(ExperimentKind.COVERAGE.value, rows, summary, _config_echo(cfg))


# ---------------------------------------------------------------------------
# estimator distances
# ---------------------------------------------------------------------------


def scaled_lambdas(cfg: ExperimentConfig, n: int) -> list[float]:
    """Run-size truncation levels, lam * (paper_n / n)^{1/p} (lam ~ n^{-1/p} at the optimum)."""
    lams = [float(x) for x in cfg.lambdas]
    if cfg.paper_n is None or cfg.paper_n == n:
        return lams
    p = cfg.p_grid[0]
    return [lam * (cfg.paper_n / n) ** (1.0 / p) for lam in lams]


def _dist_rep(cfg: ExperimentConfig, rep: int):
    t0 = time.perf_counter()
    n = int(cfg.n_grid[0])
    p = cfg.p_grid[0]
    k = k_from_rule(cfg.k_rule, n)
    space, mu = cfg.space, cfg.gen.mu
    X = generate(cfg.gen, n, make_rng(cfg.seed, rep))
    B = gmom_block_count(cfg.gmom_delta)
    ex = ExperimentKind.EST_DIST.value

    def dist(y):
        return float(row_norms((y - mu)[None, :], space)[0])

    rows = [_row(ex, "sample_mean", p, n, 0, replication=rep, distance=dist(sample_mean(X))),
            _row(ex, "gmom", p, n, 0, replication=rep, distance=dist(gmom(X, B, space)))]
    for lam in scaled_lambdas(cfg, n):
        for center in (CenterMethod.SAMPLE_MEAN, CenterMethod.GMOM):
            ec = EstimatorConfig(lam, k, center, cfg.gmom_delta)
            rows.append(_row(ex, f"trunc_{center.value}", p, n, k, lam=lam, replication=rep,
                             distance=dist(truncated_mean(X, ec, space))))
    wall = time.perf_counter() - t0
    for r in rows:
        r["wall_time"] = wall / len(rows)
    return rows


def box_stats(values) -> dict:
    """Quartiles (linear interpolation) and whiskers M +/- 1.5 (Q3 - M)."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    reach = 1.5 * (q3 - med)
    inside = x[(x >= med - reach) & (x <= med + reach)]
    return {
        "q1": float(q1), "median": float(med), "q3": float(q3),
        "whisker_low": float(inside.min()), "whisker_high": float(inside.max()),
        "min": float(x[0]), "max": float(x[-1]),
        "outliers": int(x.size - inside.size),
    }


def run_est_dist(cfg: ExperimentConfig) -> RunReport:
    """Distance to the true mean for each estimator over independent replications."""
    rows = [r for rr in _map(_dist_rep, cfg, list(range(cfg.replications))) for r in rr]
    groups: dict = {}
    for r in rows:
        key = r["estimator"] if math.isnan(r["lam"]) else f"{r['estimator']}@{_fmt(r['lam'])}"
        groups.setdefault(key, []).append(r["distance"])
    summary = {key: box_stats(vals) for key, vals in sorted(groups.items())}
    return RunReport(ExperimentKind.EST_DIST.value, rows, summary, _config_echo(cfg))


# ---------------------------------------------------------------------------
# moment inequality check
# ---------------------------------------------------------------------------


def median_of_means(values, blocks: int = 16) -> tuple[float, float]:
    """(median of block means, standard error sd(block means)/sqrt(blocks))."""
    x = np.asarray(values, dtype=np.float64)
    blocks = min(blocks, x.size)
    means = np.array([np.mean(x[s]) for s in np.array_split(np.arange(x.size), blocks)])
    se = float(np.std(means, ddof=1) / math.sqrt(blocks)) if blocks > 1 else math.inf
    return float(np.median(means)), se


def _moment_rep(cfg: ExperimentConfig, task):
    n, rep = task
    X = generate(cfg.gen, n, make_rng(cfg.seed, rep + 1_000_003 * n)) - cfg.gen.mu
    S = np.sum(X, axis=0)
    norms = row_norms(X, cfg.space)
    s_norm = float(row_norms(S[None, :], cfg.space)[0])
    return n, rep, s_norm, norms


def run_moment_check(cfg: ExperimentConfig) -> RunReport:
    """E||S_n||^p against 2^p beta^p sum_m E||X_m||^p by Monte Carlo."""
    tasks = [(int(n), rep) for n in cfg.n_grid for rep in range(cfg.replications)]
    draws = _map(_moment_rep, cfg, tasks)
    b = beta(cfg.space)
    rows, summary, ok = [], {}, True
    ex = ExperimentKind.MOMENT_CHECK.value
    for p in cfg.p_grid:
        for n in cfg.n_grid:
            n = int(n)
            got = [d for d in draws if d[0] == n]
            lhs_samples = np.array([d[2] ** p for d in got])
            rhs_samples = np.array([np.sum(d[3] ** p) for d in got])
            lhs, se_l = median_of_means(lhs_samples, cfg.moment_blocks)
            rhs, se_r = median_of_means(rhs_samples, cfg.moment_blocks)
            c = 2.0**p * b**p
            slack = 3.0 * math.hypot(se_l, c * se_r)
            passed = lhs <= c * rhs + slack
            ok &= passed
            ratio = lhs / (c * rhs)
            summary[f"p={_fmt(p)},n={n}"] = {"lhs": lhs, "rhs": c * rhs, "ratio": ratio,
                                             "slack": slack, "passed": passed}
            rows.append(_row(ex, cfg.gen.kind.value, p, n, 0, distance=ratio, width=c * rhs,
                             violated=not passed))
    summary["all_passed"] = ok
    return RunReport(ex, rows, summary, _config_echo(cfg))


# ---------------------------------------------------------------------------
# Ville check
# ---------------------------------------------------------------------------


def _ville_setup(cfg: ExperimentConfig):
    p = cfg.p_grid[0]
    assm = cfg.assumption(p)
    N = int(cfg.n_grid[0])
    k = k_from_rule(cfg.k_rule, N)
    d1, d2 = cfg.deltas
    if cfg.lambdas == "opt":
        q = bd.BoundQuery(N + k, k, d1, d2)
        lam = bd.opt_lambda(q, assm, cfg.space, cfg.rate())
    else:
        lam = float(cfg.lambdas[0])
    return assm, N, k, lam


def _ville_rep(cfg: ExperimentConfig, rep: int):
    t0 = time.perf_counter()
    assm, N, k, lam = _ville_setup(cfg)
    X = generate(cfg.gen, k + N, make_rng(cfg.seed, rep))
    ec = EstimatorConfig(lam, k, cfg.center, cfg.gmom_delta)
    Z = naive_center(X[:k], ec, cfg.space)
    M = bd.eprocess_diag(X[k:], np.repeat(Z[None, :], N, axis=0), np.full(N, lam),
                         cfg.gen.mu, assm, cfg.space)
    sup = float(np.max(M))
    return _row(ExperimentKind.VILLE_CHECK.value, "eprocess", assm.p, N, k, lam=lam,
                replication=rep, distance=sup, violated=sup >= 1.0 / cfg.delta,
                wall_time=time.perf_counter() - t0)


def run_ville_check(cfg: ExperimentConfig) -> RunReport:
    """Fraction of paths whose e-process ever reaches 1/delta."""
    assm, N, k, lam = _ville_setup(cfg)
    rows = _map(_ville_rep, cfg, list(range(cfg.replications)))
    R = cfg.replications
    frac = sum(r["violated"] for r in rows) / R
    sigma = math.sqrt(cfg.delta * (1 - cfg.delta) / R)
    summary = {"crossing_fraction": frac, "delta": cfg.delta, "binomial_sigma": sigma,
               "passed": frac <= cfg.delta + 3 * sigma, "lambda": lam, "k": k, "v": assm.v,
               "max_sup": max(r["distance"] for r in rows)}
    return RunReport(ExperimentKind.VILLE_CHECK.value, rows, summary, _config_echo(cfg))


RUNNERS = {
    ExperimentKind.BOUND_COMPARE: run_bound_compare,
    ExperimentKind.COVERAGE: run_coverage,
    ExperimentKind.EST_DIST: run_est_dist,
    ExperimentKind.MOMENT_CHECK: run_moment_check,
    ExperimentKind.VILLE_CHECK: run_ville_check,
}


def run(cfg: ExperimentConfig) -> RunReport:
    return RUNNERS[cfg.kind](cfg)
