"""Command-line harness: ``oqcontrol run|list|init``.

Exit status: 0 when every threshold declared by the scenario is met,
1 when some threshold is missed, 2 for an invalid configuration and 3 when
an iterative run stopped on its Cauchy budget with thresholds unmet.
"""
import argparse
import csv
import datetime
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from .controls import ControlGrid, CrabBounds, CrabParams, sample_to_grid
from .globalopt import (SteeringObjective, best_trial, run_trials,
                        write_trace_csv, write_trials_csv)
from .gpm import GpmConfig, run_gpm
from .krotov import KrotovConfig, run_method
from .model import angles_from_vector, free_populations, sphere_points
from .pmp import check_pmp, zero_control_analysis
from .problem import OverlapProblem
from .propagate import solve_forward

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


@dataclass
class RunSummary:
    """Recorded values of a scenario run and the verdicts derived from them."""

    scenario: str
    values: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    budget_exhausted: bool = False
    wall_time: float = 0.0

    @property
    def passed(self):
        return all(self.verdicts.values())

    @property
    def exit_code(self):
        if self.passed:
            return EXIT_OK
        return EXIT_BUDGET if self.budget_exhausted else EXIT_FAIL

    def write_csv(self, path):
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        rows = [("scenario", self.scenario), ("timestamp", stamp),
                ("wall_time_s", f"{self.wall_time:.3f}")]
        rows += [(k, _fmt(v)) for k, v in self.values.items()]
        rows += [(f"verdict.{k}", "pass" if v else "fail") for k, v in self.verdicts.items()]
        rows += [("passed", int(self.passed)), ("budget_exhausted", int(self.budget_exhausted)),
                 ("exit_code", self.exit_code)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["key", "value"])
            writer.writerows(rows)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return v


def threshold_verdicts(thresholds, I=None, cauchy=None, prefix="", I_lowest=None):
    """Verdicts for the ``I_*`` and ``cauchy_*`` thresholds present.

    ``I_max`` applies to the final ``I``; ``I_min`` to the lowest ``I`` seen
    (``I_lowest``, defaulting to the final value).
    """
    out = {}
    I_lowest = I if I_lowest is None else I_lowest
    checks = (("I_min", I_lowest, lambda v, t: v >= t), ("I_max", I, lambda v, t: v <= t),
              ("cauchy_min", cauchy, lambda v, t: v >= t),
              ("cauchy_max", cauchy, lambda v, t: v <= t))
    for key, value, ok in checks:
        if key in thresholds and value is not None:
            out[prefix + key] = bool(ok(value, thresholds[key]))
    return out


def _problem(cfg, params=None, N=None, T=None):
    return OverlapProblem(params or cfgmod.system_params(cfg), cfg["states"]["rho0"],
                          cfg["states"]["target"], T or cfg["T"], N or cfg["N"],
                          cfg.get("substeps", 2))


def _is_diagonal(m):
    return bool(np.all(np.abs(m - np.diag(np.diag(m))) == 0))


def run_free_evolution(cfg, out, workers, seeds):
    problem = _problem(cfg)
    grid = problem.grid((0.0, 0.0, 0.0))
    traj = problem.forward(grid)
    s = RunSummary(cfg["scenario"])
    s.values["I"] = problem.gap(traj)
    s.values["cauchy"] = 1
    rho0, target = problem.rho0, problem.rho_target
    if _is_diagonal(rho0) and _is_diagonal(target):
        pops = free_populations(problem.params, np.real(np.diag(rho0)), problem.T)
        I_cf = problem.b - float(pops @ np.real(np.diag(target)))
        s.values["I_closed_form"] = I_cf
        s.values["closed_form_rel_dev"] = abs(s.values["I"] - I_cf) / max(abs(I_cf), 1e-300)
    s.verdicts.update(threshold_verdicts(cfg["thresholds"], I=s.values["I"]))
    traj.write_csv(os.path.join(out, "trajectory.csv"), target)
    grid.write_csv(os.path.join(out, "control.csv"))
    return s


def _pmp_draw(args):
    cfg, theta, phi, interaction = args
    params = cfgmod.system_params(cfg, theta=tuple(theta), phi=tuple(phi), interaction=interaction)
    grid = ControlGrid.zeros(cfg["T"], cfg["N"], params.mu, params.n_max)
    sub = cfg.get("substeps", 2)
    rep = check_pmp(params, grid, cfg["states"]["rho0"], cfg["states"]["target"],
                    tol=cfg["pmp"].get("tol", 1e-10), substeps=sub)
    dev = (float("nan"), float("nan"))
    if _closed_form_setting(cfg):
        samples = 101 if cfg["N"] % 100 == 0 else 2
        dev = zero_control_analysis(params, cfg["T"], cfg["N"], samples=samples,
                                    substeps=sub).closed_form_deviation
    return rep, dev


def _closed_form_setting(cfg):
    return (np.allclose(cfg["states"]["rho0"], np.eye(4) / 4, atol=0)
            and np.allclose(cfg["states"]["target"], np.diag([1.0, 0, 0, 0]), atol=0))


def run_pmp_check(cfg, out, workers, seeds):
    pc = cfg["pmp"]
    seed = pc.get("seed", 0) if seeds is None else seeds[0]
    rng = np.random.default_rng(seed)
    draws = []
    for d in range(pc.get("draws", 20)):
        theta = np.arccos(rng.uniform(-1.0, 1.0, 2))
        phi = rng.uniform(0.0, 2.0 * np.pi, 2)
        for v in pc.get("interactions", ["V1", "V2"]):
            draws.append((d, theta, phi, v))
    jobs = [(cfg, th, ph, v) for _, th, ph, v in draws]
    results = _map(_pmp_draw, jobs, workers)
    s = RunSummary(cfg["scenario"])
    with open(os.path.join(out, "pmp.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["draw", "interaction", "theta1", "theta2", "phi1", "phi2", "max_abs_Ku",
                         "max_Kn1", "max_Kn2", "closed_form_dev1", "closed_form_dev2", "satisfied"])
        for (d, th, ph, v), (rep, dev) in zip(draws, results):
            writer.writerow([d, v, *(_fmt(x) for x in (*th, *ph, rep.max_abs_Ku, *rep.max_Kn, *dev)),
                             int(rep.satisfied)])
    reps = [r for r, _ in results]
    devs = np.array([dv for _, dv in results])
    s.values["draws"] = len(draws)
    s.values["cauchy"] = 2 * len(draws)
    s.values["max_abs_Ku"] = max(r.max_abs_Ku for r in reps)
    s.values["max_Kn"] = max(max(r.max_Kn) for r in reps)
    s.values["closed_form_max_dev"] = float(np.max(devs)) if devs.size else float("nan")
    s.values["satisfied_fraction"] = sum(r.satisfied for r in reps) / len(reps)
    th = cfg["thresholds"]
    s.verdicts["pmp_satisfied"] = all(r.satisfied for r in reps)
    if "Ku_max" in th:
        s.verdicts["Ku_max"] = s.values["max_abs_Ku"] <= th["Ku_max"]
    if "Kn_max" in th:
        s.verdicts["Kn_max"] = s.values["max_Kn"] <= th["Kn_max"]
    if "closed_form_max" in th and _closed_form_setting(cfg):
        s.verdicts["closed_form_max"] = s.values["closed_form_max_dev"] <= th["closed_form_max"]
    if _closed_form_setting(cfg) and cfg["N"] % 100 == 0:
        z = zero_control_analysis(cfgmod.system_params(cfg), cfg["T"], cfg["N"],
                                  substeps=cfg.get("substeps", 2))
        with open(os.path.join(out, "zero_control_K.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "Kn1", "Kn2", "Kn1_closed", "Kn2_closed"])
            for t, kn, kc in zip(z.times, z.Kn_numeric, z.Kn_closed):
                writer.writerow([_fmt(x) for x in (t, *kn, *kc)])
    return s


def _method_config(run):
    keys = ("variant", "max_iters", "target_I", "cauchy_budget")
    if run["method"] == "krotov":
        keys += ("regularized", "s", "alpha", "singular_policy", "eps_stop")
        return KrotovConfig(**{k: run[k] for k in keys if k in run})
    keys += ("beta", "implicit")
    kw = {k: run[k] for k in keys if k in run}
    if "schedule" in run:
        kw["schedule"] = tuple(tuple(e) for e in run["schedule"])
    if "beta" in kw:
        kw["beta"] = tuple(kw["beta"])
    return GpmConfig(**kw)


def _solve_run(args):
    cfg, run = args
    problem = _problem(cfg)
    mc = _method_config(run)
    c0 = run.get("c0", [0.0, 0.0, 0.0])
    if run["method"] == "krotov":
        return run_method(problem, mc, c0)
    return run_gpm(problem, mc, c0)


def run_case1(cfg, out, workers, seeds):
    runs = cfg["runs"]
    results = _map(_solve_run, [(cfg, r) for r in runs], workers)
    s = RunSummary(cfg["scenario"])
    target = cfg["states"]["target"]
    for run, res in zip(runs, results):
        name = run["name"]
        s.values[f"{name}.I_initial"] = res.history[0].I
        s.values[f"{name}.I"] = res.I
        s.values[f"{name}.I_min"] = float(np.min(res.I_values()))
        s.values[f"{name}.cauchy"] = res.counter.count
        s.values[f"{name}.iterations"] = res.history[-1].k
        s.values[f"{name}.status"] = res.status
        verdicts = threshold_verdicts(run.get("thresholds", {}), I=res.I, cauchy=res.counter.count,
                                      prefix=f"{name}.", I_lowest=s.values[f"{name}.I_min"])
        s.verdicts.update(verdicts)
        if res.budget_exhausted and not all(verdicts.values()):
            s.budget_exhausted = True
        res.write_csv(os.path.join(out, f"{name}_history.csv"))
        res.process.grid.write_csv(os.path.join(out, f"{name}_control.csv"))
        res.process.rho.write_csv(os.path.join(out, f"{name}_trajectory.csv"), target)
    return s


def _solve_sphere(args):
    cfg, theta, phi = args
    params = cfgmod.system_params(cfg, theta=(theta, theta), phi=(phi, phi))
    run = dict(cfg["method"], method="krotov")
    res = run_method(_problem(cfg, params), _method_config(run), run.get("c0", [0.0, 0.0, 0.0]))
    return res.history[0].I, res.I, res.counter.count, res.history[-1].k, res.status


def run_sphere_batch(cfg, out, workers, seeds):
    pts = sphere_points(cfg["batch"].get("points", 50))
    angles = [angles_from_vector(p) for p in pts]
    results = _map(_solve_sphere, [(cfg, float(t), float(p)) for t, p in angles], workers)
    s = RunSummary(cfg["scenario"])
    th = cfg["thresholds"]
    problem = _problem(cfg)
    zero_I = problem.gap(problem.forward(problem.grid((0.0, 0.0, 0.0))))
    with open(os.path.join(out, "batch.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "theta", "phi", "I_initial", "I", "cauchy", "iterations", "status"])
        for i, ((t, p), r) in enumerate(zip(angles, results)):
            writer.writerow([i, _fmt(t), _fmt(p), _fmt(r[0]), _fmt(r[1]), r[2], r[3], r[4]])
    I = np.array([r[1] for r in results])
    counts = np.array([r[2] for r in results])
    s.values["problems"] = len(results)
    s.values["zero_control_I"] = zero_I
    s.values["I_max"] = float(I.max())
    s.values["cauchy_min"] = int(counts.min())
    s.values["cauchy_max"] = int(counts.max())
    s.values["cauchy_total"] = int(counts.sum())
    if "I_max" in th:
        s.values["reached_fraction"] = float(np.mean(I <= th["I_max"]))
        s.verdicts["I_max"] = bool(np.all(I <= th["I_max"]))
    if "cauchy_min" in th:
        s.verdicts["cauchy_min"] = bool(counts.min() >= th["cauchy_min"])
    if "cauchy_max" in th:
        s.verdicts["cauchy_max"] = bool(counts.max() <= th["cauchy_max"])
    if "zero_I_min" in th:
        s.verdicts["zero_I_min"] = zero_I >= th["zero_I_min"]
    if "zero_I_max" in th:
        s.verdicts["zero_I_max"] = zero_I <= th["zero_I_max"]
    if any(r[4] == "budget" for r in results) and not s.passed:
        s.budget_exhausted = True
    return s


def steering_objective(cfg, interaction):
    """:class:`SteeringObjective` described by a steer-state/steer-overlap config."""
    crab = cfg["crab"]
    bounds = CrabBounds(h_u=tuple(crab["h_u"]), amp=tuple(crab["amp"]), C=tuple(crab["C"]),
                        h_n=tuple(crab["h_n"]), T=tuple(crab["T"]))
    an = cfg["anneal"]
    kind = "state" if cfg["scenario"] == "steer-state" else "overlap"
    return SteeringObjective(cfgmod.system_params(cfg, interaction=interaction), kind,
                             cfg["states"]["rho0"], cfg["states"]["target"], P=an.get("P", 1e3),
                             M=an.get("M"), N=cfg["N"], nu=tuple(crab["nu"]), bounds=bounds)


def run_steering(cfg, out, workers, seeds):
    an = cfg["anneal"]
    seeds = an.get("seeds", list(range(10))) if seeds is None else seeds
    kw = {k: an[k] for k in ("max_evals", "initial_temp", "visit", "accept",
                             "restart_temp_ratio", "local_search") if k in an}
    s = RunSummary(cfg["scenario"])
    th = cfg["thresholds"]
    for v in an.get("interactions", ["V1"]):
        obj = steering_objective(cfg, v)
        J0, m0, _ = obj.evaluate(obj.baseline())
        trials = run_trials(obj, seeds=seeds, workers=workers, **kw)
        best = best_trial(trials)
        write_trials_csv(trials, os.path.join(out, f"{v}_trials.csv"))
        write_trace_csv(best, os.path.join(out, f"{v}_best_trace.csv"))
        p = CrabParams.from_vector(best.best_x, obj.nu, obj.crab_bounds)
        grid = sample_to_grid(p, obj.N, obj.params.mu, obj.params.n_max)
        grid.write_csv(os.path.join(out, f"{v}_best_control.csv"))
        traj = solve_forward(obj.params, grid, obj.rho0, substeps=cfg.get("substeps", 2))
        traj.write_csv(os.path.join(out, f"{v}_best_trajectory.csv"), obj.rho_target)
        s.values[f"{v}.baseline_objective"] = J0
        s.values[f"{v}.baseline_metric"] = m0
        s.values[f"{v}.best_seed"] = best.seed
        s.values[f"{v}.best_objective"] = best.best_f
        s.values[f"{v}.best_metric"] = best.metric
        s.values[f"{v}.best_T"] = p.T
        s.values[f"{v}.evaluations"] = int(sum(t.nfev for t in trials))
        if "metric_max" in th:
            s.verdicts[f"{v}.metric_max"] = bool(best.metric <= th["metric_max"])
    return s


RUNNERS = {
    "free-evolution": run_free_evolution,
    "pmp-check": run_pmp_check,
    "case1-maxoverlap": run_case1,
    "case2-sphere-batch": run_sphere_batch,
    "steer-state": run_steering,
    "steer-overlap": run_steering,
}


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def run_scenario(cfg, output=None, workers=None, seeds=None, figures=True):
    """Run a validated configuration; returns its :class:`RunSummary`.

    Writes ``summary.csv`` and the scenario CSVs into ``output`` (default:
    the configured directory), plus PNG figures unless ``figures`` is false.
    """
    out = output or cfg["output"]
    os.makedirs(out, exist_ok=True)
    if workers is None:
        workers = int(os.environ["OQCONTROL_WORKERS"]) if os.environ.get("OQCONTROL_WORKERS") \
            else cfg.get("workers", 1)
    workers = max(1, int(workers))
    start = time.perf_counter()
    summary = RUNNERS[cfg["scenario"]](cfg, out, workers, seeds)
    summary.wall_time = time.perf_counter() - start
    summary.write_csv(os.path.join(out, "summary.csv"))
    if figures:
        from .report import render_directory

        render_directory(out)
    return summary


def parse_seeds(text):
    """``"3"``, ``"0..9"`` (inclusive) or ``"1,4,7"`` -> list of ints."""
    text = text.strip()
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a.lstrip("s")), int(b.lstrip("s"))
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(v.strip().lstrip("s")) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="oqcontrol",
                                     description="Open two-qubit control experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario configuration")
    run.add_argument("config", help="TOML scenario file")
    run.add_argument("--workers", type=int, default=None,
                     help="parallel workers (default: OQCONTROL_WORKERS or the config)")
    run.add_argument("--output", default=None, help="output directory (overrides the config)")
    run.add_argument("--seed", type=parse_seeds, default=None,
                     help="seeds: 's0..s9', '0..9' or '1,2,3'")
    run.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    sub.add_parser("list", help="list scenario ids")
    init = sub.add_parser("init", help="write a default configuration")
    init.add_argument("scenario")
    init.add_argument("path")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for sid in cfgmod.list_scenarios():
            print(f"{sid}\t{cfgmod.DESCRIPTIONS[sid]}")
        return EXIT_OK
    if args.command == "init":
        try:
            text = cfgmod.emit_default_config(args.scenario)
        except cfgmod.ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        with open(args.path, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.path}")
        return EXIT_OK
    try:
        cfg = cfgmod.load(args.config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except cfgmod.ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_CONFIG
    summary = run_scenario(cfg, args.output, args.workers, args.seed, not args.no_figures)
    for k, v in summary.values.items():
        print(f"{k} = {_fmt(v)}")
    for k, v in summary.verdicts.items():
        print(f"{k}: {'pass' if v else 'fail'}")
    print(f"wall time {summary.wall_time:.1f} s, exit {summary.exit_code}")
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
