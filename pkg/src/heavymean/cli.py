"""Command-line driver: ``heavymean <subcommand> [options] [key=value ...]``.

Configuration is a flat list of ``section.key=value`` settings. Each
subcommand has its own documented defaults (see ``--print-config``); a
config file given with ``--config`` and then command-line overrides are
applied on top. Exit codes: 0 success, 1 usage, 2 invalid input or config,
3 too few samples for the requested k, 4 a ``--assert`` check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import bounds as bd
from . import experiments as exp
from .constants import MomentAssumption
from .datagen import GeneratorSpec
from .estimators import CenterMethod, ConvergenceError, EstimatorConfig, naive_center, truncated_mean
from .space import SpaceKind, SpaceSpec

SUBCOMMANDS = ("estimate", "bounds", "coverage", "compare", "distances", "check")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_TOO_FEW, EXIT_ASSERT = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


def _float_list(s):
    return tuple(float(t) for t in str(s).split(",") if t.strip())


def _int(s):
    x = float(s)
    if x != int(x):
        raise ValueError(f"not an integer: {s!r}")
    return int(x)


def _int_list(s):
    return tuple(_int(t) for t in str(s).split(",") if t.strip())


def _opt_float(s):
    return None if str(s).strip().lower() in ("", "none", "auto") else float(s)


def _lambdas(s):
    return "opt" if str(s).strip() == "opt" else _float_list(s)


# key -> (parser, description)
KEYS = {
    "space.kind": (str, "euclidean or lp"),
    "space.alpha": (float, "exponent of the lp norm (>= 2)"),
    "gen.kind": (str, "lomax_sphere, gaussian_sphere or martingale_scale"),
    "gen.a": (float, "Lomax shape"),
    "gen.dim": (_int, "dimension"),
    "gen.mean_offset": (_float_list, "true mean, comma separated; empty means the origin"),
    "gen.base": (float, "martingale scale: base level"),
    "gen.amp": (float, "martingale scale: amplitude"),
    "gen.lo": (float, "martingale scale: lower clamp"),
    "gen.hi": (float, "martingale scale: upper clamp"),
    "est.lam": (float, "truncation level lambda"),
    "est.k": (_int, "samples used for the center"),
    "est.center": (str, "zero, sample_mean or gmom"),
    "est.gmom_delta": (float, "failure probability that sizes the GMoM blocks"),
    "est.tol": (float, "Weiszfeld relative tolerance"),
    "est.max_iter": (_int, "Weiszfeld iteration cap"),
    "est.dim": (_int, "expected number of columns; 0 infers it from the file"),
    "bound.p": (float, "moment order in (1, 2]"),
    "bound.v": (float, "moment bound"),
    "bound.n": (_int, "target sample size"),
    "bound.k": (_int, "samples used for the center"),
    "bound.delta": (float, "total failure probability"),
    "bound.delta1": (_opt_float, "line-crossing failure probability; none means delta/2"),
    "bound.delta2": (_opt_float, "center failure probability; none means delta/2"),
    "bound.rate": (str, "center rate: sample_mean, gmom or a constant radius"),
    "bound.rho": (_opt_float, "Bennett parameter; none means 1/beta"),
    "run.p_grid": (_float_list, "moment orders"),
    "run.n_grid": (_int_list, "sample sizes (first entry for single-size runs)"),
    "run.v": (_opt_float, "moment bound; none means the generator's exact moment"),
    "run.delta": (float, "failure probability"),
    "run.k_rule": (str, "n/10, sqrt, log2 or an integer"),
    "run.lambdas": (_lambdas, "truncation levels or opt"),
    "run.center": (str, "zero, sample_mean or gmom"),
    "run.gmom_delta": (float, "failure probability that sizes the GMoM blocks"),
    "run.replications": (_int, "independent replications"),
    "run.workers": (_int, "worker processes"),
    "run.width_scale": (float, "coverage: multiplier on every width"),
    "run.estimator_lambda": (_opt_float, "coverage: estimator lambda if different from the bound's"),
    "run.paper_n": (_opt_float, "distances: sample size the lambdas refer to"),
    "run.tournament_c": (float, "compare: tournament constant"),
    "run.trace": (float, "compare: trace of the covariance"),
    "run.lambda_max": (float, "compare: largest covariance eigenvalue"),
    "run.moment_blocks": (_int, "check: median-of-means blocks"),
    "check.kind": (str, "check: moment or ville"),
}

_SPACE = {"space.kind": "euclidean", "space.alpha": "2"}
_GEN = {"gen.kind": "lomax_sphere", "gen.a": "1.75", "gen.dim": "10", "gen.mean_offset": "",
        "gen.base": "0.5", "gen.amp": "1", "gen.lo": "0.5", "gen.hi": "1.5"}
_RUN = {"run.p_grid": "1.5", "run.n_grid": "2000", "run.v": "none", "run.delta": "0.05",
        "run.k_rule": "100", "run.lambdas": "opt", "run.center": "sample_mean",
        "run.gmom_delta": "1e-4", "run.replications": "100",
        "run.workers": os.environ.get("HEAVYMEAN_WORKERS", "1"),
        "run.width_scale": "1", "run.estimator_lambda": "none", "run.paper_n": "none",
        "run.tournament_c": "1", "run.trace": "1", "run.lambda_max": "0.01",
        "run.moment_blocks": "16"}

PROFILES = {
    "estimate": {**_SPACE, "est.lam": "0.1", "est.k": "0", "est.center": "sample_mean",
                 "est.gmom_delta": "1e-4", "est.tol": "1e-10", "est.max_iter": "10000",
                 "est.dim": "0"},
    "bounds": {**_SPACE, "bound.p": "2", "bound.v": "1", "bound.n": "1000", "bound.k": "100",
               "bound.delta": "0.05", "bound.delta1": "none", "bound.delta2": "none",
               "bound.rate": "sample_mean", "bound.rho": "none"},
    "coverage": {**_SPACE, **_GEN, **_RUN, "gen.dim": "5", "run.replications": "500"},
    "compare": {**_SPACE, **_GEN, **_RUN, "gen.dim": "100", "run.p_grid": "1.25,1.5,1.75,2",
                "run.n_grid": ",".join(str(10**e) for e in range(2, 11)), "run.v": "1",
                "run.delta": "1e-4", "run.k_rule": "n/10"},
    "distances": {**_SPACE, **_GEN, **_RUN, "run.n_grid": "10000", "run.k_rule": "sqrt",
                  "run.lambdas": "0.0005,0.005,0.05,0.5", "run.paper_n": "100000"},
    "check": {**_SPACE, **_GEN, **_RUN, "check.kind": "moment"},
}

# Overrides applied by --paper-scale, per subcommand.
PAPER_SCALE = {
    "distances": {"run.n_grid": "100000", "run.replications": "250"},
}

# Defaults for the two check kinds, applied before user settings.
CHECK_DEFAULTS = {
    "moment": {"gen.a": "3", "gen.dim": "5", "run.p_grid": "1.5,2", "run.n_grid": "10,50",
               "run.replications": "5000"},
    "ville": {"gen.dim": "5", "run.n_grid": "1000", "run.delta": "0.1",
              "run.replications": "2000"},
}


def read_config_file(path: str) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def resolve_config(sub: str, file_settings: dict, overrides: dict, paper_scale: bool) -> dict:
    """Merge defaults, scale profile, file and overrides, then parse every value."""
    raw = dict(PROFILES[sub])
    user = {**file_settings, **overrides}
    unknown = sorted(k for k in user if k not in raw)
    if unknown:
        raise ConfigError("unknown config keys for '%s': %s" % (sub, ", ".join(unknown)))
    if sub == "check":
        kind = user.get("check.kind", raw["check.kind"])
        if kind not in CHECK_DEFAULTS:
            raise ConfigError(f"check.kind must be moment or ville, got {kind!r}")
        raw.update(CHECK_DEFAULTS[kind])
    if paper_scale:
        raw.update(PAPER_SCALE.get(sub, {}))
    raw.update(user)
    parsed, bad = {}, []
    for key, val in raw.items():
        try:
            parsed[key] = KEYS[key][0](val)
        except (TypeError, ValueError) as e:
            bad.append(f"{key}={val!r} ({e})")
    if bad:
        raise ConfigError("invalid config values: " + "; ".join(bad))
    return {"raw": raw, "values": parsed}


def _space(vals, dim) -> SpaceSpec:
    kind = SpaceKind(vals["space.kind"])
    if kind is SpaceKind.LP:
        return SpaceSpec.lp(vals["space.alpha"], dim)
    return SpaceSpec.euclidean(dim)


def _gen(vals) -> GeneratorSpec:
    return GeneratorSpec(kind=vals["gen.kind"], a=vals["gen.a"], dim=vals["gen.dim"],
                         mean_offset=vals["gen.mean_offset"], base=vals["gen.base"],
                         amp=vals["gen.amp"], lo=vals["gen.lo"], hi=vals["gen.hi"])


def _rate(spec: str) -> bd.RateFunction:
    spec = spec.strip()
    if spec == "sample_mean":
        return bd.RateFunction.sample_mean()
    if spec == "gmom":
        return bd.RateFunction.gmom()
    return bd.RateFunction.constant(float(spec))


def experiment_config(sub: str, vals: dict, seed: int) -> exp.ExperimentConfig:
    kind = {"coverage": exp.ExperimentKind.COVERAGE,
            "compare": exp.ExperimentKind.BOUND_COMPARE,
            "distances": exp.ExperimentKind.EST_DIST}.get(sub)
    if sub == "check":
        kind = exp.ExperimentKind(vals["check.kind"])
    gen = _gen(vals)
    k_rule = vals["run.k_rule"]
    paper_n = vals["run.paper_n"]
    return exp.ExperimentConfig(
        kind=kind, gen=gen, space=_space(vals, gen.dim), p_grid=vals["run.p_grid"],
        v=vals["run.v"], n_grid=vals["run.n_grid"], delta=vals["run.delta"],
        k_rule=int(k_rule) if k_rule.lstrip("-").isdigit() else k_rule,
        lambdas=vals["run.lambdas"], center=vals["run.center"],
        gmom_delta=vals["run.gmom_delta"], replications=vals["run.replications"], seed=seed,
        workers=vals["run.workers"], tournament_c=vals["run.tournament_c"],
        trace=vals["run.trace"], lambda_max=vals["run.lambda_max"],
        width_scale=vals["run.width_scale"], estimator_lambda=vals["run.estimator_lambda"],
        paper_n=None if paper_n is None else int(paper_n),
        moment_blocks=vals["run.moment_blocks"])


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


class InputError(ValueError):
    pass


def read_vectors(path: str, dim: int = 0) -> np.ndarray:
    """Rows of decimal reals; raises InputError naming the offending row and column."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, rec in enumerate(csv.reader(fh), 1):
            if not rec or all(not c.strip() for c in rec):
                continue
            vals = []
            for j, cell in enumerate(rec, 1):
                try:
                    x = float(cell)
                except ValueError:
                    raise InputError(f"row {i}, column {j}: cannot parse {cell!r}") from None
                if not math.isfinite(x):
                    raise InputError(f"row {i}, column {j}: value is not finite")
                vals.append(x)
            width = dim or (len(rows[0]) if rows else len(vals))
            if len(vals) != width:
                raise InputError(f"row {i}: expected {width} columns, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def cmd_estimate(args, vals) -> int:
    if args.input is None:
        print("estimate: an input file is required", file=sys.stderr)
        return EXIT_INPUT
    try:
        X = read_vectors(args.input, vals["est.dim"])
    except (InputError, OSError) as e:
        print(f"estimate: {e}", file=sys.stderr)
        return EXIT_INPUT
    n, d = X.shape
    k = vals["est.k"]
    if n <= k:
        print(f"estimate: need more than k={k} rows, found {n}", file=sys.stderr)
        return EXIT_TOO_FEW
    try:
        space = _space(vals, d)
        cfg = EstimatorConfig(vals["est.lam"], k, CenterMethod(vals["est.center"]),
                              vals["est.gmom_delta"], vals["est.tol"], vals["est.max_iter"])
        center = naive_center(X[:k], cfg, space)
        est = truncated_mean(X, cfg, space)
    except ConvergenceError as e:
        print(f"estimate: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as e:
        print(f"estimate: {e}", file=sys.stderr)
        return EXIT_INPUT
    doc = {"estimate": [float(x) for x in est], "center": [float(x) for x in center],
           "n": int(n), "k": int(k), "lambda": cfg.lam, "center_method": cfg.center_method.value}
    text = json.dumps(doc, sort_keys=True)
    print("estimate: " + " ".join(format(float(x), ".17g") for x in est))
    print(text)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def bound_table(vals, raw: bool) -> list[tuple[str, float, float]]:
    space = _space(vals, 1)
    p, v, n, k = vals["bound.p"], vals["bound.v"], vals["bound.n"], vals["bound.k"]
    delta = vals["bound.delta"]
    d1 = delta / 2 if vals["bound.delta1"] is None else vals["bound.delta1"]
    d2 = delta / 2 if vals["bound.delta2"] is None else vals["bound.delta2"]
    q = bd.BoundQuery(n, k, d1, d2, rho=vals["bound.rho"])
    assm = MomentAssumption(p, v)
    rate = _rate(vals["bound.rate"])
    out = [("central", bd.opt_lambda(q, assm, space, rate), bd.optimized_width(q, assm, space, rate))]
    if raw:
        lam, width = bd.noncentral_opt(n, d1 + d2, MomentAssumption(p, v, central=False), space)
        out.append(("raw", lam, width))
    return out


def cmd_bounds(args, vals) -> int:
    try:
        rows = bound_table(vals, args.raw)
    except ValueError as e:
        print(f"bounds: {e}", file=sys.stderr)
        return EXIT_INPUT
    lines = ["path lambda width"] + [f"{name} {lam:.17g} {w:.17g}" for name, lam, w in rows]
    print("\n".join(lines))
    if args.output:
        doc = {name: {"lambda": lam, "width": w} for name, lam, w in rows}
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment runs
# ---------------------------------------------------------------------------


def assertion(report: exp.RunReport, cfg: exp.ExperimentConfig) -> tuple[bool, str]:
    s = report.summary
    if cfg.kind is exp.ExperimentKind.COVERAGE:
        ok = s["violation_rate"] <= cfg.delta + s["binomial_3sigma"]
        return ok, f"violation_rate={s['violation_rate']:.6g}"
    if cfg.kind is exp.ExperimentKind.BOUND_COMPARE:
        expected = len(cfg.p_grid) * len(cfg.n_grid) * 5
        ok = len(report.rows) == expected and all(
            r["width"] > 0 for r in report.rows if not math.isnan(r["width"]))
        return ok, f"rows={len(report.rows)}"
    if cfg.kind is exp.ExperimentKind.EST_DIST:
        # Judged at the lambda = 0.05 analog when it is on the list, else at every lambda.
        given = [float(x) for x in cfg.lambdas]
        scaled = exp.scaled_lambdas(cfg, int(cfg.n_grid[0]))
        keys = [k for k in s if "@" not in k]
        if 0.05 in given:
            tag = exp._fmt(scaled[given.index(0.05)])
            keys += [k for k in s if k.endswith("@" + tag)]
        else:
            keys = list(s)
        maxes = {k: s[k]["max"] for k in keys}
        top = max(maxes, key=maxes.get)
        ok = all(maxes[k] < maxes["sample_mean"] for k in maxes if k != "sample_mean")
        if 0.05 in given:
            ok &= s[f"trunc_gmom@{tag}"]["median"] <= s["gmom"]["median"]
        return ok, f"widest_tail={top}"
    if cfg.kind is exp.ExperimentKind.MOMENT_CHECK:
        return bool(s["all_passed"]), f"all_passed={s['all_passed']}"
    return bool(s["passed"]), f"crossing_fraction={s['crossing_fraction']:.6g}"


def cmd_run(sub, args, vals) -> int:
    try:
        cfg = experiment_config(sub, vals, args.seed)
        report = exp.run(cfg)
    except ValueError as e:
        print(f"{sub}: {e}", file=sys.stderr)
        return EXIT_INPUT
    out = args.output or f"heavymean_{sub}.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        report.to_csv(fh, timing=args.timing)
    json_path = os.path.splitext(out)[0] + ".json"
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    ok, stat = assertion(report, cfg)
    print(f"{sub}: wrote {out} and {json_path}; {stat}")
    if args.assert_ and not ok:
        print(f"{sub}: assertion failed", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="heavymean", description="Heavy-tailed mean estimation and confidence bounds.",
        epilog="Subcommands: " + ", ".join(SUBCOMMANDS))
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("settings", nargs="*",
                    help="key=value overrides; for estimate, also the input CSV path")
    ap.add_argument("--config", help="flat key=value config file")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--output", help="output path (CSV for runs; JSON sidecar alongside)")
    ap.add_argument("--paper-scale", action="store_true",
                    help="use the published sample sizes and replication counts")
    ap.add_argument("--assert", dest="assert_", action="store_true",
                    help="exit 4 when the run's acceptance check fails")
    ap.add_argument("--raw", action="store_true", help="bounds: also the raw-moment path")
    ap.add_argument("--timing", action="store_true", help="include wall times in CSV output")
    ap.add_argument("--print-config", action="store_true",
                    help="print the resolved configuration and exit")
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    first = next((a for a in argv if not a.startswith("-")), None)
    if first not in SUBCOMMANDS:
        ap.print_usage(sys.stderr)
        print(f"heavymean: expected a subcommand from {', '.join(SUBCOMMANDS)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = ap.parse_intermixed_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT

    overrides, positional = {}, []
    for item in args.settings:
        if "=" in item:
            key, val = item.split("=", 1)
            overrides[key.strip()] = val.strip()
        else:
            positional.append(item)
    if len(positional) > (1 if args.subcommand == "estimate" else 0):
        print(f"{args.subcommand}: unexpected arguments {positional}", file=sys.stderr)
        return EXIT_INPUT
    args.input = positional[0] if positional else None

    try:
        file_settings = read_config_file(args.config) if args.config else {}
        resolved = resolve_config(args.subcommand, file_settings, overrides, args.paper_scale)
    except (ConfigError, OSError) as e:
        print(f"{args.subcommand}: {e}", file=sys.stderr)
        return EXIT_INPUT

    if args.print_config:
        for key in sorted(resolved["raw"]):
            print(f"{key}={resolved['raw'][key]}  # {KEYS[key][1]}")
        return EXIT_OK

    vals = resolved["values"]
    if args.subcommand == "estimate":
        return cmd_estimate(args, vals)
    if args.subcommand == "bounds":
        return cmd_bounds(args, vals)
    return cmd_run(args.subcommand, args, vals)


if __name__ == "__main__":
    sys.exit(main())
