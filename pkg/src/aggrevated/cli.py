"""Command-line entry points: ``run``, ``sweep`` and ``verify``.

Experiment files hold ``section.key = value`` lines (sections ``env``,
``policy``, ``learner``, ``oracle``, ``run``) with ``#`` comments.  Exit
status is 0 on success, 2 for configuration or usage errors and 3 for
numerical failures during a run.

Set ``AGGREVATED_VERBOSE=1`` for progress messages on stderr and
``AGGREVATED_TIMING=1`` (or ``run.timing = true``) to record real per-episode
wall-clock times; by default ``wall_ms`` is written as 0 so that output
files are byte-reproducible.
"""
import argparse
import hashlib
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .errors import AggrevatedError, ConfigurationError, NumericError
from .learner import RunConfig, run_aggrevated, slope_fit

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

SWEEP_KEYS = {
    "K": "env.depth",
    "S": "env.num_states",
    "A": "env.num_actions",
    "N": "run.episodes",
    "seed": "run.seed",
}
REQUIRED_KEYS = ("env.kind", "learner.update", "run.episodes")
CSV_HEADER = "episode,mu_pi,mu_star,inst_regret,cum_regret,wall_ms"


def _verbose():
    return os.environ.get("AGGREVATED_VERBOSE", "0") not in ("", "0")


def _log(msg):
    if _verbose():
        print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# experiment files
# ---------------------------------------------------------------------------


def _field_types():
    cfg = RunConfig()
    out = {}
    for name in RunConfig.SECTIONS:
        section = getattr(cfg, name)
        for f in fields(section):
            out[f"{name}.{f.name}"] = f.type if isinstance(f.type, str) else f.type.__name__
    return out


def _parse_value(kind, raw, lineno, key):
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "tuple":
            if raw.lower() in ("", "none"):
                return None
            return tuple(float(x) for x in raw.split(","))
        return raw
    except ValueError:
        raise ConfigurationError(f"line {lineno}: cannot read {key} = {raw!r} as {kind}") from None


def format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    return str(value)


def parse_experiment(text):
    """``RunConfig`` from experiment-file text; errors carry line numbers."""
    types = _field_types()
    cfg = RunConfig()
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'section.key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        cfg = cfg.with_value(key, _parse_value(types[key], raw, lineno, key))
    missing = [k for k in REQUIRED_KEYS if k not in seen]
    if missing:
        raise ConfigurationError(f"missing required key(s): {', '.join(missing)}")
    return cfg.validate()


def resolved_text(cfg, exclude=()):
    return "".join(f"{k} = {format_value(v)}\n" for k, v in cfg.items() if k not in exclude)


def config_hash(cfg, exclude=()):
    return hashlib.sha256(resolved_text(cfg, exclude).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------


def curve_csv(curve, timing=False):
    rows = [CSV_HEADER]
    wall = curve.wall_ms if timing else np.zeros(len(curve))
    for i in range(len(curve)):
        vals = (curve.mu_pi[i], curve.mu_star[i], curve.inst_regret[i], curve.cum_regret[i], wall[i])
        rows.append(f"{i + 1}," + ",".join("%.17g" % v for v in vals))
    return "\n".join(rows) + "\n"


def curve_dat(curve):
    lines = ["# episode cum_regret mu_pi mu_star"]
    for i in range(len(curve)):
        lines.append("%d %.17g %.17g %.17g" % (i + 1, curve.cum_regret[i], curve.mu_pi[i], curve.mu_star[i]))
    return "\n".join(lines) + "\n"


def curve_slope(curve):
    """Log-log slope over the last 90% of episodes (nan if undefined)."""
    N = len(curve)
    lo = max(1, N // 10)
    try:
        return slope_fit(curve.cum_regret, (lo, N))
    except AggrevatedError:
        return float("nan")


def summary(curve):
    return {
        "final_mu": float(curve.mu_pi[-1]),
        "best_mu": float(curve.mu_pi.min()),
        "mu_star": float(curve.mu_star[-1]),
        "final_regret": curve.final_regret,
        "slope": curve_slope(curve),
    }


def _write(path, text):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def execute(cfg, out_dir):
    """Run one configuration and write its output files; returns the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timing = cfg.run.timing or os.environ.get("AGGREVATED_TIMING", "0") not in ("", "0")
    cfg = cfg.with_value("run.timing", bool(timing))
    _log(f"running {cfg.learner.update} on {cfg.env.kind} for {cfg.run.episodes} episodes")
    curve, _ = run_aggrevated(cfg)
    _write(out / "curve.csv", curve_csv(curve, timing))
    _write(out / "curve.dat", curve_dat(curve))
    info = summary(curve)
    _write(out / "summary.txt", "".join(f"{k} = {'%.17g' % v}\n" for k, v in info.items()))
    _write(out / "resolved_config.txt", resolved_text(cfg.with_value("run.timing", False)))
    return info


def _read_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    return parse_experiment(text)


def _guard(fn):
    try:
        return fn()
    except NumericError as exc:
        ep = getattr(exc, "episode", None)
        where = f" (episode {ep})" if ep is not None else ""
        print(f"numeric error{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigurationError, AggrevatedError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def cmd_run(config_path, out_dir):
    def go():
        info = execute(_read_config(config_path), out_dir)
        print(f"final_mu={info['final_mu']:.6g} final_regret={info['final_regret']:.6g}")
        return EXIT_OK
    return _guard(go)


def _parse_grid(var, values, cfg):
    if var not in SWEEP_KEYS:
        raise ConfigurationError(f"sweep variable must be one of {', '.join(SWEEP_KEYS)}")
    key = SWEEP_KEYS[var]
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not items:
        raise ConfigurationError("sweep grid is empty")
    try:
        grid = [int(v) for v in items]
    except ValueError:
        raise ConfigurationError(f"sweep values for {var} must be integers") from None
    return key, grid


def _sweep_point(args):
    cfg, out_dir, key = args
    info = execute(cfg, out_dir)
    return info, config_hash(cfg, exclude=(key,))


def cmd_sweep(config_path, var, values, out_dir, jobs=1):
    def go():
        cfg = _read_config(config_path)
        key, grid = _parse_grid(var, values, cfg)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tasks = []
        for v in grid:
            point = cfg.with_value(key, v)
            if var == "K" and point.env.leaf_means is not None:
                point = point.with_value("env.leaf_means", None)
            tasks.append((point.validate(), out / f"{var}={v}", key))
        if jobs > 1:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(jobs) as pool:
                results = list(pool.map(_sweep_point, tasks))
        else:
            results = [_sweep_point(t) for t in tasks]
        lines = ["variable,value,final_mu,final_regret,slope,config_hash"]
        for v, (info, h) in zip(grid, results):
            lines.append(f"{var},{v},{'%.17g' % info['final_mu']},{'%.17g' % info['final_regret']},"
                         f"{'%.17g' % info['slope']},{h}")
        _write(out / "sweep.csv", "\n".join(lines) + "\n")
        print(f"{len(grid)} grid points written to {out}")
        return EXIT_OK
    return _guard(go)


def cmd_verify(suite):
    from .verification import SUITES, run_suite
    if suite not in SUITES:
        print(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_suite(suite, report=print)
    return EXIT_OK if all(r.passed for r in results) else 1


def main(argv=None):
    parser = argparse.ArgumentParser(prog="aggrevated", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one experiment file")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p = sub.add_parser("sweep", help="run an experiment over a grid of one variable")
    p.add_argument("config")
    p.add_argument("--var", required=True, help="one of " + ", ".join(SWEEP_KEYS))
    p.add_argument("--values", required=True, help="comma-separated grid values")
    p.add_argument("--out", default="sweep")
    p.add_argument("--jobs", type=int, default=1)
    p = sub.add_parser("verify", help="run an acceptance suite")
    p.add_argument("suite")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "run":
        return cmd_run(args.config, args.out)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.var, args.values, args.out, args.jobs)
    return cmd_verify(args.suite)


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
