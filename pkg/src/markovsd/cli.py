"""Experiment runner.

Configs are flat INI files ([channel] / [interleaver] / [mc] / [task] /
[output]); every task writes CSV artifacts plus a manifest into the output
directory, and identical config+seed reproduces byte-identical CSVs.

    markovsd validate --config run.cfg
    markovsd run --config run.cfg [--out DIR] [--seed N] [--threads N]
"""

import argparse
import configparser
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, exitchart, exponent, inforate, interleaver, optimizer
from .contraction import theorem_gap_bound
from .fsmc import build_fsmc, lloyd_max
from .inforate import MonteCarlo

TASKS = ("mu-curve", "rates", "optimize-weights", "exit", "exponent", "plan",
         "bound-check")
FAMILIES = ("rectangular", "binary-weighted", "random", "optimize")


class ConfigError(Exception):
    pass


def _diagnose(cp, base_dir):
    """Collect config problems; an empty list means valid."""
    problems = []

    def need(section, key, cast=str):
        if not cp.has_section(section):
            problems.append(f"missing section [{section}]")
            return None
        if not cp.has_option(section, key):
            problems.append(f"missing {section}.{key}")
            return None
        raw = cp.get(section, key)
        try:
            return cast(raw)
        except ValueError:
            problems.append(f"{section}.{key}: cannot parse {raw!r}")
            return None

    alpha = need("channel", "alpha", float)
    if alpha is not None and not 0.0 < alpha < 1.0:
        problems.append(f"channel.alpha must be in (0,1), got {alpha}")
    levels_per_dim = need("channel", "levels_per_dim", int)
    if levels_per_dim is not None and levels_per_dim < 1:
        problems.append("channel.levels_per_dim must be >= 1")
    need("channel", "es_n0_db", float)

    family = need("interleaver", "family")
    if family is not None and family not in FAMILIES:
        problems.append(f"interleaver.family must be one of {FAMILIES}, got {family!r}")
    levels = need("interleaver", "levels", int)
    if levels is not None and levels < 1:
        problems.append("interleaver.levels must be >= 1")
    if family == "random" and cp.has_option("interleaver", "weights"):
        try:
            w = [float(t) for t in cp.get("interleaver", "weights").split()]
            if abs(sum(w) - 1.0) > 1e-12:
                problems.append(f"interleaver.weights sum to {sum(w)!r}, expected 1")
            if levels is not None and len(w) != levels:
                problems.append("interleaver.weights length differs from levels")
        except ValueError:
            problems.append("interleaver.weights: cannot parse")
    if family == "random" and not (cp.has_option("interleaver", "weights")
                                   or cp.has_option("interleaver", "weights_file")):
        problems.append("interleaver.family=random needs weights or weights_file")

    for key in ("block_len", "blocks", "burn_in_cap"):
        v = need("mc", key, int)
        if v is not None and v < 0:
            problems.append(f"mc.{key} must be nonnegative")
    if not (cp.has_section("mc") and cp.has_option("mc", "seed")):
        problems.append("missing mc.seed")
    else:
        try:
            int(cp.get("mc", "seed"))
        except ValueError:
            problems.append("mc.seed: must be an integer")

    task = need("task", "name")
    if task is not None and task not in TASKS:
        problems.append(f"task.name must be one of {TASKS}, got {task!r}")
    if task == "plan":
        need("task", "total_length", int)
        pe = need("task", "p_bar_e", float)
        if pe is not None and not 0.0 < pe < 1.0:
            problems.append("task.p_bar_e must lie in (0,1)")
    for key in ("mu_csv", "decoder_family", "weights_file"):
        for section in ("task", "interleaver"):
            if cp.has_option(section, key):
                p = (base_dir / cp.get(section, key)).resolve()
                if not p.exists():
                    problems.append(f"{section}.{key}: file not found: {p}")

    need("output", "directory")
    return problems


def _load_config(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    return cp


def _build_model(cp):
    q = lloyd_max(cp.getint("channel", "levels_per_dim"), 0.5, tol=1e-12)
    return build_fsmc(cp.getfloat("channel", "alpha"), q,
                      cp.getfloat("channel", "es_n0_db"))


def _mc(cp, seed_override=None, threads=1):
    seed = seed_override if seed_override is not None else cp.getint("mc", "seed")
    return MonteCarlo(block_len=cp.getint("mc", "block_len", fallback=10_000),
                      blocks=cp.getint("mc", "blocks", fallback=100),
                      burn_in_cap=cp.getint("mc", "burn_in_cap", fallback=200),
                      seed=seed, threads=threads)


def _mu_interpolant(cp, base_dir, model, mc):
    """Load a measured pilot-utility curve if configured, else measure one."""
    if cp.has_option("task", "mu_csv"):
        curve = inforate.read_mu_csv(base_dir / cp.get("task", "mu_csv"))
    else:
        points = cp.getint("task", "grid_points", fallback=21)
        curve = inforate.pilot_utility(model, inforate.default_mu_grid(points), mc)
    return optimizer.fit_mu(curve), curve


def _resolve_weights(cp, base_dir, levels, mu):
    if cp.has_option("interleaver", "weights"):
        w = np.array([float(t) for t in cp.get("interleaver", "weights").split()])
        return interleaver.WeightDistribution(w)
    if cp.has_option("interleaver", "weights_file"):
        return interleaver.load_weights(base_dir / cp.get("interleaver", "weights_file"))
    if mu is not None:
        return interleaver.WeightDistribution(optimizer.solve_weights(mu, levels).weights)
    raise ConfigError("random interleaver needs weights, weights_file or a mu curve")


def _resolve_pattern(cp, base_dir, mc, mu=None):
    family = cp.get("interleaver", "family")
    levels = cp.getint("interleaver", "levels")
    if family == "rectangular":
        return interleaver.rectangular(levels, mc.block_len)
    if family == "binary-weighted":
        reps = cp.getint("interleaver", "reps",
                         fallback=interleaver.default_reps(levels))
        return interleaver.binary_weighted(levels, reps, mc.block_len)
    if family in ("random", "optimize"):
        w = _resolve_weights(cp, base_dir, levels, mu)
        return interleaver.sample_random(w, mc.block_len, mc.seed)
    raise ConfigError(f"unknown interleaver family {family!r}")


# ---------------------------------------------------------------------------
# tasks

def _task_mu_curve(cp, base_dir, out, mc):
    model = _build_model(cp)
    points = cp.getint("task", "grid_points", fallback=21)
    curve = inforate.pilot_utility(model, inforate.default_mu_grid(points), mc)
    inforate.write_mu_csv(curve, out / "mu_curve.csv")
    return ["mu_curve.csv"]


def _task_rates(cp, base_dir, out, mc):
    model = _build_model(cp)
    mu = None
    if cp.get("interleaver", "family") == "optimize":
        mu, _ = _mu_interpolant(cp, base_dir, model, mc)
    pattern = _resolve_pattern(cp, base_dir, mc, mu)
    result = inforate.overall_rates(model, pattern, mc)
    inforate.write_rates_csv(result, out / "rates.csv")
    return ["rates.csv"]


def _task_optimize_weights(cp, base_dir, out, mc):
    model = _build_model(cp)
    mu, curve = _mu_interpolant(cp, base_dir, model, mc)
    levels = cp.getint("interleaver", "levels")
    solution = optimizer.solve_weights(mu, levels)
    optimizer.write_solution_csv(solution, out / "weights.csv")
    if curve is not None and not cp.has_option("task", "mu_csv"):
        inforate.write_mu_csv(curve, out / "mu_curve.csv")
        return ["weights.csv", "mu_curve.csv"]
    return ["weights.csv"]


def _task_exit(cp, base_dir, out, mc):
    model = _build_model(cp)
    family_name = cp.get("interleaver", "family")
    levels = cp.getint("interleaver", "levels")
    d_t = cp.getfloat("task", "d_t", fallback=0.0)
    artifacts = []
    if cp.has_option("task", "decoder_family"):
        fam = exitchart.load_decoder_family(base_dir / cp.get("task", "decoder_family"))
    else:
        fam = exitchart.synthetic_decoder_family()
    if family_name in ("random", "optimize"):
        mu, _ = _mu_interpolant(cp, base_dir, model, mc)
        w = _resolve_weights(cp, base_dir, levels, mu)
        curves = [exitchart.estimator_exit_from_mu(mu, w, k) for k in range(1, levels + 1)]
        weights = w.weights
    else:
        pattern = _resolve_pattern(cp, base_dir, mc)
        grid = np.linspace(0.0, 1.0, cp.getint("task", "exit_grid_points", fallback=9))
        curves = [exitchart.estimator_exit_mc(model, pattern, k, grid, mc)
                  for k in range(1, levels + 1)]
        weights = pattern.level_sizes / pattern.length
    with open(out / "supported_rates.csv", "w", newline="") as fh:
        fh.write("level,weight,max_rate\n")
        for k, curve in enumerate(curves, start=1):
            name = f"exit_estimator_level{k}.csv"
            exitchart.write_exit_csv(curve, out / name)
            artifacts.append(name)
            rate = exitchart.max_supported_rate(curve, fam, d_t)
            fh.write(f"{k},{weights[k-1]:.17g},"
                     f"{'none' if rate is None else format(rate, '.17g')}\n")
    artifacts.append("supported_rates.csv")
    return artifacts


def _task_exponent(cp, base_dir, out, mc):
    model = _build_model(cp)
    levels = cp.getint("interleaver", "levels")
    rho = exponent.default_rho_grid(cp.getfloat("task", "rho_step", fallback=0.05))
    family = cp.get("interleaver", "family")
    artifacts = []
    if family in ("random", "optimize"):
        mu = None
        if family == "optimize" or not cp.has_option("interleaver", "weights"):
            mu, _ = _mu_interpolant(cp, base_dir, model, mc)
        subject = _resolve_weights(cp, base_dir, levels, mu)
    else:
        subject = _resolve_pattern(cp, base_dir, mc)
    for k in range(1, levels + 1):
        curve = exponent.e0_subchannel(model, subject, k, rho, mc)
        name = f"exponent_level{k}.csv"
        exponent.write_exponent_csv(curve, out / name)
        artifacts.append(name)
    return artifacts


def _task_plan(cp, base_dir, out, mc):
    model = _build_model(cp)
    family = cp.get("interleaver", "family")
    family = "random" if family in ("random", "optimize") else "rectangular"
    total = cp.getint("task", "total_length")
    p_bar_e = cp.getfloat("task", "p_bar_e")
    candidates = [int(t) for t in cp.get("task", "candidates", fallback="1 2 3 4").split()]
    mu = None
    if family == "random":
        mu, _ = _mu_interpolant(cp, base_dir, model, mc)
    plan = exponent.optimal_levels(model, family, total, p_bar_e, candidates, mc, mu=mu)
    exponent.write_plan_csv(plan, out / "plan.csv")
    return ["plan.csv"]


def _task_bound_check(cp, base_dir, out, mc):
    model = _build_model(cp)
    klist = [int(t) for t in cp.get("task", "bound_levels", fallback="2 3 4").split()]
    with open(out / "bound_check.csv", "w", newline="") as fh:
        fh.write("K,bound,measured_gap,gap_stderr\n")
        for K in klist:
            pattern = interleaver.rectangular(K, mc.block_len)
            result = inforate.overall_rates(model, pattern, mc)
            gap = result.capacity.mean - result.rate.mean
            se = float(np.hypot(result.capacity.std_error, result.rate.std_error))
            bound = theorem_gap_bound(model.positive_transition(), K)
            fh.write(f"{K},{bound:.17g},{gap:.17g},{se:.17g}\n")
    return ["bound_check.csv"]


_RUNNERS = {
    "mu-curve": _task_mu_curve,
    "rates": _task_rates,
    "optimize-weights": _task_optimize_weights,
    "exit": _task_exit,
    "exponent": _task_exponent,
    "plan": _task_plan,
    "bound-check": _task_bound_check,
}


def run_config(config_path, out_dir=None, seed=None, threads=1):
    config_path = Path(config_path)
    cp = _load_config(config_path)
    problems = _diagnose(cp, config_path.parent)
    if problems:
        raise ConfigError("; ".join(problems))
    base_dir = config_path.parent
    out = Path(out_dir) if out_dir else base_dir / cp.get("output", "directory")
    out.mkdir(parents=True, exist_ok=True)
    mc = _mc(cp, seed_override=seed, threads=threads)

    started = time.time()
    task = cp.get("task", "name")
    artifacts = _RUNNERS[task](cp, base_dir, out, mc)

    canon = {s: dict(cp.items(s)) for s in cp.sections()}
    canon["mc"]["seed"] = str(mc.seed)
    digest = hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()
    manifest = {
        "task": task,
        "config_sha256": digest,
        "seed": mc.seed,
        "versions": {"markovsd": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "wall_time_s": round(time.time() - started, 3),
        "artifacts": artifacts,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out, artifacts


def main(argv=None):
    parser = argparse.ArgumentParser(prog="markovsd",
                                     description="successive-decoding design toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("--config", required=True)
    p_run = sub.add_parser("run", help="run the configured task")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--seed", type=int, default=None, help="seed override")
    p_run.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    if args.command == "validate":
        try:
            cp = _load_config(args.config)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        problems = _diagnose(cp, Path(args.config).parent)
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        if not problems:
            print("config ok")
        return 1 if problems else 0

    try:
        out, artifacts = run_config(args.config, out_dir=args.out,
                                    seed=args.seed, threads=args.threads)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(artifacts)} artifact(s) + manifest.json to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
