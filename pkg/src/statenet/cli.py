"""Command line interface: ``statenet run|verify|plot|sweep``.

Exit codes: 0 success, 1 a mandatory verification check failed, 2 the
config could not be read, 3 the config violates the schema or a preset
constraint, 4 a CSV input is malformed, 5 outputs could not be written.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import export
from .continuous import (
    FlowProblem,
    FlowState,
    Integrator,
    continuous_lyapunov,
    find_saddle,
    integrate,
)
from .core import ConfigError, EvaluationError, NeighborhoodRule
from .discrete import Family, StepSchedule, run
from .harness import (
    analyze_equilibrium,
    audit_smoothness,
    bcd_dual_oracle,
    fd_gradient_check,
    monitor,
)
from .models import build_preset

EXIT_OK, EXIT_CHECK, EXIT_READ, EXIT_SCHEMA, EXIT_CSV, EXIT_IO = 0, 1, 2, 3, 4, 5
HK_SEPARATION = {"homogeneous_hk", "lazy_hk"}
M_CERTIFIED = {Family.BCD_MAJORIZE, Family.MIRROR, Family.ASYMMETRIC, Family.TRANSFER}


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _schema(name):
    text = resources.files("statenet").joinpath("schemas", name).read_text(encoding="utf-8")
    return json.loads(text)


def load_config(path):
    """Read and schema-validate a config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_READ, f"cannot read config {path}: {exc}") from exc
    validator = jsonschema.Draft202012Validator(_schema("config.schema.json"))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = [f"  {'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise CliError(EXIT_SCHEMA, "config violates the schema:\n" + "\n".join(lines))
    return cfg


def _dynamics(preset, cfg):
    over = dict(cfg.get("dynamics", {}))
    spec = preset.dynamics
    if spec is None:
        return None
    changes = {}
    if "max_iter" in cfg:
        changes["max_iter"] = int(cfg["max_iter"])
    if "tol" in cfg:
        changes["tol"] = float(cfg["tol"])
    if "schedule" in over:
        sched = over.pop("schedule")
        try:
            changes["schedule"] = StepSchedule(**sched)
        except (TypeError, ConfigError) as exc:
            raise CliError(EXIT_SCHEMA, f"dynamics/schedule: {exc}") from exc
    if "family" in over:
        fam = Family(over.pop("family"))
        changes["family"] = fam
        if fam != spec.family and "schedule" not in changes:
            changes["schedule"] = None
    if "rule" in over:
        changes["rule"] = NeighborhoodRule(over.pop("rule"))
    changes.update(over)
    try:
        return replace(spec, **changes)
    except (ConfigError, TypeError) as exc:
        raise CliError(EXIT_SCHEMA, f"dynamics: {exc}") from exc


def setup(cfg, seed=None, params=None):
    """Resolve a validated config into ``(preset, spec, x0, seed)``."""
    init = cfg["init"]
    n = int(cfg["n"])
    if seed is None and init["kind"] == "uniform":
        seed = int(init["seed"])
    pre = cfg["preset"]
    merged = {**pre.get("params", {}), **(params or {})}
    try:
        preset = build_preset(pre["name"], merged, n=n, seed=seed)
        if init["kind"] == "uniform":
            if not init["low"] < init["high"]:
                raise ConfigError("init: low must be below high")
            x0 = np.random.default_rng(seed).uniform(init["low"], init["high"], size=n)
        else:
            x0 = np.asarray(init["values"], dtype=float)
            if x0.shape[0] != n:
                raise ConfigError(f"init: {x0.shape[0]} explicit values for n={n}")
        preset.check_initial(x0)
    except ConfigError as exc:
        raise CliError(EXIT_SCHEMA, f"config rejected: {exc}") from exc
    spec = _dynamics(preset, cfg)
    return preset, spec, x0, seed


def _finite(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _write_summary(path, summary):
    jsonschema.validate(summary, _schema("summary.schema.json"))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def run_discrete(cfg, preset, spec, x0, seed, out):
    traj = run(spec, x0, preset.g, preset.f)
    ledger = monitor(traj, preset.g, preset.f)
    eps = float(preset.eps) if preset.name in HK_SEPARATION else None
    report = analyze_equilibrium(traj, gap=preset.gap_threshold, eps=eps)
    export.write_trajectory_csv(out / "trajectory.csv", traj.states)
    export.write_lyapunov_csv(out / "lyapunov.csv", traj.lyapunov, traj.drift, traj.bound, traj.ok)
    if cfg.get("output", {}).get("svg", True):
        export.write_svg(out / "plot.svg", export.render_svg(np.arange(traj.states.shape[0]), traj.states,
                                                             lyap_values=traj.lyapunov, title=preset.name))
    clusters = None
    if not report.diverged:
        clusters = {"count": report.n_clusters, "values": report.values, "sizes": report.sizes,
                    "separated_by_eps": report.separated_by_eps}
    summary = {
        "schema_version": 1,
        "preset": preset.name,
        "mode": "discrete",
        "family": spec.family.value,
        "lyapunov_family": spec.lyapunov_family.value,
        "n": int(x0.shape[0]),
        "seed": seed,
        "status": traj.status.value,
        "message": traj.message,
        "iterations": traj.iterations,
        "lyapunov": {"initial": _finite(traj.lyapunov[0]), "final": _finite(traj.lyapunov[-1]),
                     "decrease_fraction": ledger.decrease_fraction},
        "violations": {"total": ledger.violations, "certified": ledger.certified_violations,
                       "observational": ledger.observational, "exceptions": ledger.exceptions,
                       "max_violation": ledger.max_violation},
        "clusters": clusters,
        "sign_groups": report.sign_groups,
        "boundary_hits": len(traj.boundary_hits),
        "final_range": [float(traj.final_state.min()), float(traj.final_state.max())],
    }
    _write_summary(out / "summary.json", summary)
    return summary


def run_continuous(cfg, preset, x0, seed, out):
    opts = cfg.get("continuous", {})
    dt = float(opts.get("dt", 1e-3))
    T = float(opts.get("T", 50.0))
    nsteps = int(round(T / dt))
    stride = int(opts.get("stride", max(1, nsteps // 1000)))
    n = x0.shape[0]
    lam0 = np.full((n, n), float(opts.get("lam0", 0.0)))
    problem = preset.flow if preset.flow is not None else FlowProblem(g=preset.g, f=preset.f)
    s0 = FlowState(x0, lam0)
    if preset.saddle is not None:
        saddle, saddle_info = preset.saddle, {"source": "analytic"}
    else:
        found = find_saddle(s0, problem, dt=dt)
        saddle = (found.x, found.lam)
        saddle_info = {"source": "integrated", "residual": found.residual, "converged": found.converged}
    try:
        traj = integrate(s0, problem, dt=dt, T=T, method=Integrator(opts.get("method", "euler")), stride=stride)
    except ValueError as exc:
        raise CliError(EXIT_SCHEMA, f"continuous: {exc}") from exc
    V = np.array([continuous_lyapunov(traj.state_at(k), saddle, problem) for k in range(traj.times.size)])
    drift = V[:-1] - V[1:]
    slack = 10.0 * dt * dt * stride
    bound = np.full(drift.shape, -slack)
    ok = drift >= bound
    iters = np.rint(traj.times / dt).astype(int)
    export.write_trajectory_csv(out / "trajectory.csv", traj.states, iters)
    export.write_lyapunov_csv(out / "lyapunov.csv", V, drift, bound, ok, iters)
    export.write_edges_csv(out / "edges.csv", traj.lams, iters)
    if cfg.get("output", {}).get("svg", True):
        export.write_svg(out / "plot.svg", export.render_svg(iters, traj.states, iters, V, title=preset.name))
    summary = {
        "schema_version": 1,
        "preset": preset.name,
        "mode": "continuous",
        "family": None,
        "lyapunov_family": "bregman",
        "n": int(n),
        "seed": seed,
        "status": traj.status.value,
        "message": traj.message,
        "iterations": int(iters[-1]),
        "lyapunov": {"initial": _finite(V[0]), "final": _finite(V[-1]),
                     "decrease_fraction": float(np.mean(ok)) if ok.size else 1.0},
        "violations": {"total": int(np.count_nonzero(~ok)), "certified": int(np.count_nonzero(~ok)),
                       "observational": False, "exceptions": np.flatnonzero(~ok).tolist()},
        "clusters": None,
        "final_range": [float(traj.states[-1].min()), float(traj.states[-1].max())],
        "lambda_range": [float(traj.lams.min()), float(traj.lams.max())],
        "saddle": {**saddle_info, "x": [float(v) for v in saddle[0]]},
    }
    _write_summary(out / "summary.json", summary)
    return summary


def _outpath(cfg, out):
    return Path(out if out is not None else cfg.get("output", {}).get("dir", "statenet_out"))


def _outdir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create output directory {path}: {exc}") from exc
    return path


def execute(cfg, out, seed=None, params=None):
    """Resolve the config, then create ``out`` and write every output into it."""
    preset, spec, x0, seed = setup(cfg, seed, params)
    out = _outdir(out)
    try:
        if cfg.get("mode", "discrete") == "continuous":
            return run_continuous(cfg, preset, x0, seed, out)
        if spec is None:
            raise CliError(EXIT_SCHEMA, f"preset {preset.name} only supports mode 'continuous'")
        return run_discrete(cfg, preset, spec, x0, seed, out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write outputs: {exc}") from exc


def cmd_run(args):
    cfg = load_config(args.config)
    out = _outpath(cfg, args.out)
    summary = execute(cfg, out, args.seed)
    print(f"{summary['preset']}: status={summary['status']} iterations={summary['iterations']} "
          f"violations={summary['violations']['total']} -> {out}")
    return EXIT_OK


# --- verify ------------------------------------------------------------------------

def _internal_box(preset, spec):
    lo, hi = preset.box
    if spec is not None and spec.log_states:
        return np.log(lo), np.log(hi)
    return lo, hi


def verify_checks(cfg, seed=None):
    """Run the verification battery; return a list of ``(name, status, detail)``.

    ``status`` is ``PASS``, ``FAIL`` or ``INFO``; only FAIL is fatal.
    """
    preset, spec, x0, seed = setup(cfg, seed)
    opts = cfg.get("verify", {})
    points = int(opts.get("points", 20))
    trials = int(opts.get("oracle_trials", 20))
    short = int(opts.get("short_run", 50))
    rng = np.random.default_rng(0 if seed is None else seed)
    g, f = preset.g, preset.f
    n = x0.shape[0]
    lo, hi = _internal_box(preset, spec)
    rows = []

    m = None if spec is None else spec.m if spec.m is not None else g.m
    if spec is not None and spec.family in M_CERTIFIED:
        audit = audit_smoothness(g, f, m, (lo, hi), n=min(n, 6), samples=100, seed=int(rng.integers(2**32)))
        worst = max(audit.max_d11, audit.max_d12, audit.max_d22, audit.max_f2)
        rows.append(("smoothness audit", "PASS" if audit.passed else "FAIL",
                     f"max second partial {worst:.6g} vs declared m {m:.6g}"))

    coords = np.arange(min(n, 8))
    err_l = err_p = 0.0
    for _ in range(points):
        x = rng.uniform(lo, hi, size=n)
        lam = rng.uniform(0.0, 1.0, size=(n, n))
        err_l = max(err_l, fd_gradient_check(g, f, x, lam, rng=rng, coords=coords))
        err_p = max(err_p, fd_gradient_check(g, f, x, target="penalty", rng=rng, coords=coords))
    rows.append(("gradient of L", "PASS" if err_l < 1e-6 else "FAIL", f"max rel. error {err_l:.3g}"))
    rows.append(("gradient of Phi", "PASS" if err_p < 1e-6 else "FAIL", f"max rel. error {err_p:.3g}"))

    rule = preset.rule if spec is None else spec.rule
    agree = 0
    k = min(n, 3)
    for _ in range(trials):
        idx = np.sort(rng.choice(n, size=k, replace=False))
        gs = g.restrict(idx) if getattr(g, "n", None) is not None else g
        fs = f.restrict(idx) if f is not None else None
        res = bcd_dual_oracle(rng.uniform(lo, hi, size=k), gs, fs, rule)
        agree += res.agrees
    if trials:
        rows.append(("dual oracle", "PASS" if agree == trials else "FAIL", f"{agree}/{trials} agreement off ties"))

    if spec is not None:
        traj = run(spec.with_(max_iter=min(short, spec.max_iter) if spec.max_iter else short), x0, g, f)
        ledger = monitor(traj, g, f)
        detail = f"{ledger.violations} shortfalls over {traj.iterations} steps"
        if ledger.observational or not ledger.certified.any():
            rows.append(("drift monitor", "INFO", detail + " (observational)"))
        else:
            rows.append(("drift monitor", "PASS" if ledger.certified_violations == 0 else "FAIL", detail))
    return rows


def cmd_verify(args):
    cfg = load_config(args.config)
    try:
        rows = verify_checks(cfg, args.seed)
    except EvaluationError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    for name, status, detail in rows:
        print(f"{name:<20} {status:<5} {detail}")
    failed = [r for r in rows if r[1] == "FAIL"]
    print("verify: " + ("FAILED" if failed else "all mandatory checks passed"))
    return EXIT_CHECK if failed else EXIT_OK


# --- plot --------------------------------------------------------------------------

def plot_files(traj_path, out_path, lyap_path=None):
    iters, states = export.read_trajectory_csv(traj_path)
    li = lv = None
    if lyap_path is not None and Path(lyap_path).exists():
        li, lv = export.read_lyapunov_csv(lyap_path)
    export.write_svg(out_path, export.render_svg(iters, states, li, lv))


def cmd_plot(args):
    if args.trajectory is not None:
        traj = Path(args.trajectory)
        base = traj.parent
    elif args.config is not None:
        cfg = load_config(args.config)
        base = Path(args.out if args.out is not None else cfg.get("output", {}).get("dir", "statenet_out"))
        traj = base / "trajectory.csv"
    else:
        print("plot needs --config or --trajectory", file=sys.stderr)
        return EXIT_READ
    if args.out is not None and str(args.out).endswith(".svg"):
        out = Path(args.out)
    else:
        out = (Path(args.out) if args.out is not None and args.trajectory is not None else base) / "plot.svg"
    try:
        plot_files(traj, out, base / "lyapunov.csv")
    except export.MalformedCSV as exc:
        print(f"malformed CSV: {exc}", file=sys.stderr)
        return EXIT_CSV
    except OSError as exc:
        print(f"cannot write {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {out}")
    return EXIT_OK


# --- sweep -------------------------------------------------------------------------

def thread_cap(default=None):
    raw = os.environ.get("STATENET_THREADS")
    if raw is None or raw.strip() == "":
        return default or os.cpu_count() or 1
    try:
        val = int(raw)
    except ValueError:
        raise CliError(EXIT_SCHEMA, f"STATENET_THREADS must be a positive integer, got {raw!r}") from None
    if val < 1:
        raise CliError(EXIT_SCHEMA, "STATENET_THREADS must be a positive integer")
    return val


def sweep_jobs(cfg, seed=None):
    sw = cfg.get("sweep")
    if not sw:
        raise CliError(EXIT_SCHEMA, "sweep needs a 'sweep' section in the config")
    values = sw.get("values", [None]) if "param" in sw else [None]
    seeds = sw.get("seeds", [seed])
    jobs = []
    for v in values:
        for s in seeds:
            params = {sw["param"]: v} if v is not None else None
            jobs.append((len(jobs), params, s))
    return jobs


def cmd_sweep(args):
    cfg = load_config(args.config)
    jobs = sweep_jobs(cfg, args.seed)
    workers = min(thread_cap(), len(jobs))
    out = _outdir(_outpath(cfg, args.out))

    def work(job):
        idx, params, s = job
        sub = out / f"run_{idx:03d}"
        summary = execute(cfg, sub, s, params)
        return {"index": idx, "params": params, "seed": summary["seed"], "dir": sub.name,
                "status": summary["status"], "iterations": summary["iterations"],
                "violations": summary["violations"]["total"]}

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(work, jobs))
    with open(out / "sweep.json", "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps({"runs": results}, indent=2, sort_keys=True) + "\n")
    print(f"sweep: {len(results)} runs with {workers} worker thread(s) -> {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="statenet", description="State-dependent network dynamics")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (("run", cmd_run, "run a config and write CSV, SVG and JSON outputs"),
                               ("verify", cmd_verify, "run gradient, oracle, audit and drift checks"),
                               ("plot", cmd_plot, "render a trajectory CSV as SVG"),
                               ("sweep", cmd_sweep, "run a parameter or seed sweep in parallel")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=name != "plot", help="path to a JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (or .svg path for plot)")
        p.add_argument("--seed", type=int, default=None, help="override the initialization seed (u64)")
        if name == "plot":
            p.add_argument("--trajectory", default=None, help="trajectory CSV to render")
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("--seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
