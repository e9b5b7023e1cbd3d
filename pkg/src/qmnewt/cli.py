"""Benchmark command line: ``qmnewt {run,residual-table,probe,mu-sweep}``.

Exit status: 0 success, 1 I/O failure, 2 usage error, 3 a run failed or a
trend check did not hold (data is still written).
"""

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .diagnostics import approximation_scaling_probe
from .exceptions import ConfigError, QmnewtError
from .problems import IG_TAGS, get_problem, initial_guess
from .solver import SolverConfig, fd_newton, run

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3
SEED_ENV = "QMNEWT_SEED"
STEP_NAMES = {"newton": "newton_direct", "sr1": "sr1", "bfgs": "bfgs"}
VARIANTS = ("qmn", "fd-newton")


class UsageError(Exception):
    pass


@dataclass
class BenchSpec:
    """Grid of runs described by the command line."""

    problems: list
    igs: list
    overrides: dict = field(default_factory=dict)
    variants: list = field(default_factory=lambda: ["qmn"])
    repetitions: int = 1
    fmt: str = "csv"
    out: str = None
    dim: int = None
    lam: float = None
    mu: float = None
    preset: str = "auto"
    jobs: int = 1

    def __post_init__(self):
        if not self.problems or not self.igs:
            raise UsageError("need at least one problem and one initial guess")
        if self.repetitions < 1:
            raise UsageError("repetitions must be >= 1")
        if self.jobs < 1:
            raise UsageError("--jobs must be >= 1")


# --- formatting ------------------------------------------------------------


def fmt_num(v):
    """17 significant digits for floats; integers and strings unchanged."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".16e")
    return str(v)


def json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else None
    return v


def encode(rows, fmt, meta):
    if fmt == "json":
        payload = {"meta": meta, "rows": [{k: json_value(v) for k, v in r.items()} for r in rows]}
        return json.dumps(payload, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    cols = list(rows[0].keys()) if rows else []
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt_num(r.get(c)) for c in cols])
    return buf.getvalue()


def emit(rows, bench, meta, sidecar):
    text = encode(rows, bench.fmt, meta)
    if bench.out is None:
        sys.stdout.write(text)
        return
    with open(bench.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    side = dict(sidecar)
    side["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    with open(bench.out + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=1)
        fh.write("\n")


def human(v):
    return "nan" if not np.isfinite(v) else f"{v:.3g}"


# --- argument handling -----------------------------------------------------


def _list(text, conv=str, what="value"):
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    try:
        return [conv(t) for t in items]
    except ValueError:
        raise UsageError(f"bad {what} list: {text!r}") from None


def resolve_seed(arg):
    if arg is not None:
        return arg
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        seed = int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be a nonnegative integer, got {env!r}") from None
    if seed < 0:
        raise UsageError(f"{SEED_ENV} must be nonnegative")
    return seed


def config_for(problem, bench):
    preset = bench.preset
    if preset == "auto":
        preset = "nonsmooth" if problem.smoothness == "nonsmooth" else "default"
    return SolverConfig.preset(preset, **bench.overrides)


def make_problem(name, bench):
    params = {}
    if name in ("p4", "p4-relaxed"):
        params["lam"] = bench.lam
    if name == "p4-relaxed":
        params["mu"] = bench.mu
    return get_problem(name, dim=bench.dim, **params)


def build_bench(args):
    problems = _list(args.problem, what="problem")
    igs = _list(args.ig, what="initial guess")
    for ig in igs:
        if ig not in IG_TAGS:
            raise UsageError(f"unknown initial guess {ig!r}; choose from {IG_TAGS}")
    variants = _list(args.variant, what="variant")
    for v in variants:
        if v not in VARIANTS:
            raise UsageError(f"unknown variant {v!r}; choose from {VARIANTS}")
    overrides = dict(seed=resolve_seed(args.seed))
    if args.model is not None:
        overrides["model_variant"] = args.model
    if args.step is not None:
        overrides["step_variant"] = STEP_NAMES[args.step]
    for key in ("safeguard", "epsilon", "max_iter", "init_spread", "kkt_coupling", "refresh"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    bench = BenchSpec(
        problems=problems, igs=igs, overrides=overrides, variants=variants,
        repetitions=args.repetitions, fmt=args.format, out=args.out, dim=args.dim,
        lam=args.lam, mu=getattr(args, "mu", None), preset=args.preset, jobs=args.jobs,
    )
    # fail fast on names and parameters before any output is produced
    for name in problems:
        make_problem(name, bench)
    SolverConfig(**overrides)
    return bench


def add_common(p, problem_required=True):
    p.add_argument("--problem", required=problem_required, help="comma-separated problem names")
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--ig", default="IG1", help="comma-separated tags among IG1,IG2,IG3")
    p.add_argument("--model", choices=("full", "simplified"), default=None)
    p.add_argument("--step", choices=tuple(STEP_NAMES), default=None)
    p.add_argument("--safeguard", choices=("pure", "backtrack"), default=None)
    p.add_argument("--refresh", choices=("off", "stall", "always"), default=None)
    p.add_argument("--kkt-coupling", dest="kkt_coupling", choices=("printed", "full"), default=None)
    p.add_argument("--preset", choices=("auto", "default", "nonsmooth"), default="auto")
    p.add_argument("--init-spread", dest="init_spread", type=float, default=None)
    p.add_argument("--eps", dest="epsilon", type=float, default=None)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--variant", default="qmn", help="comma-separated: qmn, fd-newton")
    p.add_argument("--lam", type=float, default=None, help="cardinality weight for p4")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def make_parser():
    parser = argparse.ArgumentParser(prog="qmnewt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qmnewt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="solve problem x initial-guess grids")
    add_common(p_run)
    p_run.add_argument("--mu", type=float, default=None)
    p_res = sub.add_parser("residual-table", help="residual norms at fixed iterations")
    add_common(p_res)
    p_res.add_argument("--mu", type=float, default=None)
    p_res.add_argument("--checkpoints", default="200,300,400,500")
    p_probe = sub.add_parser("probe", help="model error decay versus sample radius")
    p_probe.add_argument("--problem", required=True)
    p_probe.add_argument("--dim", type=int, default=None)
    p_probe.add_argument("--radii", default="1e-1,3e-2,1e-2,3e-3,1e-3")
    p_probe.add_argument("--center", default=None, help="comma-separated coordinates (default 0)")
    p_probe.add_argument("--seed", type=int, default=None)
    p_probe.add_argument("--out", default=None)
    p_probe.add_argument("--format", choices=("csv", "json"), default="csv")
    p_mu = sub.add_parser("mu-sweep", help="relaxed cardinality problem over decreasing mu")
    add_common(p_mu, problem_required=False)
    p_mu.add_argument("--mus", default="1e-1,1e-2,1e-3")
    return parser


# --- cells -------------------------------------------------------------------


def grid_optimum(problem, m=201):
    """Brute-force minimum over a uniform grid of the problem's box (dim <= 2)."""
    lo, hi = problem.bounds
    axes = [np.unique(np.concatenate([np.linspace(a, b, m), [a, b]])) for a, b in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, problem.dim)
    return min(problem(x) for x in mesh)


def reference_fstar(problem):
    if not problem.unique_xstar and problem.bounds is not None and problem.dim <= 2:
        return grid_optimum(problem)
    return problem.known_fstar


def run_cell(name, ig, variant, bench, rep=0):
    problem = make_problem(name, bench)
    cfg = config_for(problem, bench)
    if rep:
        cfg = SolverConfig(**{**cfg.to_dict(), "seed": cfg.seed + rep})
    x0 = initial_guess(ig, problem.dim)
    solver = fd_newton if variant == "fd-newton" else run
    report = solver(problem, x0, cfg)
    return problem, cfg, report


def result_row(problem, ig, variant, cfg, report, rep=0):
    x = np.asarray(report.x_star)
    err_x = None
    if problem.known_xstar is not None and not problem.claimed_only and problem.unique_xstar:
        err_x = float(np.max(np.abs(x - problem.known_xstar)))
    fref = reference_fstar(problem)
    f_gap = None if fref is None else abs(report.f_star - fref)
    true_grad = None
    if problem.analytic_grad is not None:
        true_grad = float(np.max(np.abs(problem.analytic_grad(x))))
    label = variant if variant == "fd-newton" else f"{cfg.model_variant}/{cfg.step_variant}/{cfg.safeguard}"
    return {
        "problem": problem.name,
        "dim": problem.dim,
        "IG": ig,
        "variant": label,
        "rep": rep,
        "seed": cfg.seed,
        "status": report.status,
        "iters": report.n_iter,
        "n_fev": report.n_fev,
        "f_final": float(report.f_star),
        "grad_norm_final": float(report.grad_norm_final),
        "true_grad_inf": true_grad,
        "err_x": err_x,
        "f_gap": f_gap,
        "x_inf": float(np.max(np.abs(x))),
        "e1_inf_final": float(report.e1_inf_final),
        "e2_inf_final": float(report.e2_inf_final),
    }


def _cells(bench):
    return [(p, ig, v, r) for p in bench.problems for ig in bench.igs for v in bench.variants
            for r in range(bench.repetitions)]


def execute(bench, fn):
    cells = _cells(bench)
    if bench.jobs > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=bench.jobs) as pool:
            return list(pool.map(lambda c: fn(*c), cells))
    return [fn(*c) for c in cells]


def meta_for(bench, command):
    return {
        "command": command,
        "version": __version__,
        "problems": bench.problems,
        "igs": bench.igs,
        "variants": bench.variants,
        "preset": bench.preset,
        "overrides": bench.overrides,
    }


def cmd_run(bench):
    def cell(name, ig, variant, rep):
        problem, cfg, report = run_cell(name, ig, variant, bench, rep)
        return result_row(problem, ig, variant, cfg, report, rep), report.wall_time

    results = execute(bench, cell)
    rows = [r for r, _ in results]
    sidecar = {"wall_time": [t for _, t in results]}
    emit(rows, bench, meta_for(bench, "run"), sidecar)
    failed = [r for r in rows if r["status"] not in ("converged", "max_iter")]
    return EXIT_CHECK if failed else EXIT_OK


NOT_REACHED = "not-reached"


def cmd_residual_table(bench, checkpoints):
    if not checkpoints:
        raise UsageError("need at least one checkpoint")
    if any(c < 1 for c in checkpoints) or any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise UsageError("checkpoints must be positive and strictly ascending")

    def cell(name, ig, variant, rep):
        problem, cfg, report = run_cell(name, ig, "qmn", bench, rep)
        row = {"problem": problem.name, "IG": ig, "rep": rep, "status": report.status,
               "iters": report.n_iter}
        for c in checkpoints:
            if c <= report.n_iter:
                rec = report.iterations[c - 1]
                row[f"E1@{c}"], row[f"E2@{c}"] = rec.e1_inf, rec.e2_inf
            else:
                row[f"E1@{c}"] = row[f"E2@{c}"] = NOT_REACHED
        return row, report.wall_time

    bench.variants = ["qmn"]
    results = execute(bench, cell)
    meta = meta_for(bench, "residual-table")
    meta["checkpoints"] = checkpoints
    emit([r for r, _ in results], bench, meta, {"wall_time": [t for _, t in results]})
    return EXIT_OK


def cmd_probe(name, radii, center=None, seed=0, fmt="csv", out=None, dim=None):
    if not radii:
        raise UsageError("radii list is empty")
    problem = get_problem(name, dim=dim)
    if problem.analytic_grad is None or problem.analytic_hess is None:
        raise UsageError(f"problem {name!r} has no analytic derivatives")
    c = np.zeros(problem.dim) if center is None else np.asarray(center, dtype=float)
    if c.shape != (problem.dim,):
        raise UsageError(f"center must have {problem.dim} coordinates")
    res = approximation_scaling_probe(problem, c, radii, seed=seed)
    rows = [
        {"radius": float(r), "grad_error": float(ge), "hess_error": float(he),
         "grad_used": bool(ug), "hess_used": bool(uh)}
        for r, ge, he, ug, uh in zip(res.radii, res.grad_errors, res.hess_errors,
                                     res.used_grad, res.used_hess)
    ]
    if out is None:
        print(f"{'radius':>10} {'grad_err':>10} {'hess_err':>10}")
        for r in rows:
            print(f"{human(r['radius']):>10} {human(r['grad_error']):>10} {human(r['hess_error']):>10}")
        if res.floor_detected:
            print("floor-detected: errors at rounding level, slopes undefined")
        print(f"grad_slope {human(res.grad_slope)}  hess_slope {human(res.hess_slope)}")
    else:
        bench = BenchSpec([name], ["IG1"], fmt=fmt, out=out)
        meta = {"command": "probe", "problem": name, "seed": seed,
                "grad_slope": json_value(res.grad_slope), "hess_slope": json_value(res.hess_slope),
                "floor_detected": res.floor_detected}
        emit(rows, bench, meta, {})
    return EXIT_OK


def cmd_mu_sweep(mus, bench):
    if not mus:
        raise UsageError("mu list is empty")
    if any(m <= 0 for m in mus):
        raise UsageError("mu values must be positive")
    if any(b >= a for a, b in zip(mus, mus[1:])):
        raise UsageError("mu values must be strictly descending")
    rows, times = [], []
    for mu in mus:
        bench.mu = mu
        problem = make_problem("p4-relaxed", bench)
        cfg = config_for(problem, bench)
        for ig in bench.igs:
            report = run(problem, initial_guess(ig, problem.dim), cfg)
            rows.append({
                "mu": mu, "IG": ig, "status": report.status, "iters": report.n_iter,
                "f_final": float(report.f_star), "xstar_inf": float(np.max(np.abs(report.x_star))),
            })
            times.append(report.wall_time)
    meta = meta_for(bench, "mu-sweep")
    meta["mus"] = mus
    emit(rows, bench, meta, {"wall_time": times})
    ok = True
    for ig in bench.igs:
        vals = [r["xstar_inf"] for r in rows if r["IG"] == ig]
        if any(not b < a for a, b in zip(vals, vals[1:])):
            ok = False
            print(f"mu-sweep: ||x*||_inf not strictly decreasing for {ig}: "
                  + ", ".join(human(v) for v in vals), file=sys.stderr)
    return EXIT_OK if ok else EXIT_CHECK


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        if args.command == "probe":
            radii = _list(args.radii, float, "radius")
            center = None if args.center is None else _list(args.center, float, "center")
            return cmd_probe(args.problem, radii, center, resolve_seed(args.seed),
                             args.format, args.out, args.dim)
        if args.command == "mu-sweep":
            args.problem = "p4-relaxed"
            args.mu = None
            mus = _list(args.mus, float, "mu")
            bench = build_bench(args)
            return cmd_mu_sweep(mus, bench)
        bench = build_bench(args)
        if args.command == "run":
            return cmd_run(bench)
        return cmd_residual_table(bench, _list(args.checkpoints, int, "checkpoint"))
    except (UsageError, ConfigError) as exc:
        print(f"qmnewt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"qmnewt: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QmnewtError as exc:
        print(f"qmnewt: failure: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
