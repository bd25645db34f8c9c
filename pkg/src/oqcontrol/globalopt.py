"""Global search over the Gaussian-envelope control class.

Annealing is SciPy's generalized simulated annealing; local refinement is a
bounded coordinate search with shrinking steps. Each trial is deterministic
given its seed.
"""
import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import OptimizeResult, dual_annealing

from .controls import CrabBounds, CrabParams, sample_to_grid
from .objectives import hs_distance
from .propagate import final_coords
from .qops import check_density_matrix, from_coords, to_coords

STEER_RHO0 = np.diag([1.0, 0.0, 0.0, 0.0])
STEER_TARGET = np.diag([0.1, 0.1, 0.3, 0.5])


def coordinate_search(fun, x0, args=(), bounds=None, maxfev=None, step=0.1, shrink=0.5,
                      min_step=1e-7, **unused):
    """Derivative-free compass search inside a box.

    Tries ``+h`` and ``-h`` along each coordinate in turn, moving on the
    first improvement and halving ``h`` (by ``shrink``) after a sweep
    without one. Steps are relative to the box widths. Usable as a
    ``scipy.optimize.minimize`` method.
    """
    x = np.asarray(x0, dtype=float).copy()
    if bounds is None:
        lo = np.full(x.shape, -np.inf)
        hi = np.full(x.shape, np.inf)
        span = np.ones_like(x)
    else:
        b = np.asarray([(l, h) for l, h in bounds], dtype=float)
        lo, hi = b[:, 0], b[:, 1]
        span = np.where(hi > lo, hi - lo, 1.0)
    maxfev = 50 * x.size if maxfev is None else int(maxfev)
    x = np.clip(x, lo, hi)
    f = fun(x, *args)
    nfev, nit = 1, 0
    rel = step
    while nfev < maxfev and rel > min_step:
        nit += 1
        improved = False
        for i in range(x.size):
            for sign in (1.0, -1.0):
                y = x.copy()
                y[i] = np.clip(x[i] + sign * rel * span[i], lo[i], hi[i])
                if y[i] == x[i]:
                    continue
                fy = fun(y, *args)
                nfev += 1
                if fy < f:
                    x, f, improved = y, fy, True
                    break
                if nfev >= maxfev:
                    break
            if nfev >= maxfev:
                break
        if not improved:
            rel *= shrink
    return OptimizeResult(x=x, fun=f, nfev=nfev, nit=nit, success=True)


@dataclass
class AnnealConfig:
    """Settings of one annealing trial.

    Args:
        bounds: ``(d, 2)`` array of parameter boxes.
        seed: RNG seed of the trial.
        max_evals: hard cap on objective evaluations (positive).
        initial_temp, visit, accept, restart_temp_ratio: annealing schedule.
        local_search: refine accepted minima with :func:`coordinate_search`.
        local_maxfev: evaluation cap of one refinement (default ``50 d``).
        x0: optional starting point (e.g. a baseline to beat).
    """

    bounds: np.ndarray
    seed: int = 0
    max_evals: int = 10000
    initial_temp: float = 5230.0
    visit: float = 2.62
    accept: float = -5.0
    restart_temp_ratio: float = 2e-5
    local_search: bool = True
    local_maxfev: int = None
    x0: np.ndarray = None

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.bounds.ndim != 2 or self.bounds.shape[1] != 2:
            raise ValueError("bounds must have shape (d, 2)")
        if not np.all(np.isfinite(self.bounds)) or np.any(self.bounds[:, 0] > self.bounds[:, 1]):
            raise ValueError("bounds must be finite with lower <= upper")
        if int(self.max_evals) < 1:
            raise ValueError("evaluation budget must be positive")
        self.max_evals = int(self.max_evals)


@dataclass
class TrialResult:
    """Best point of one trial with its monotone-best trace ``(evaluation, value)``."""

    seed: int
    best_x: np.ndarray
    best_f: float
    nfev: int
    metric: float = float("nan")
    trace: list = field(default_factory=list)


class _BudgetReached(Exception):
    pass


def dual_anneal(objective, cfg):
    """Minimize ``objective`` over ``cfg.bounds``; returns a :class:`TrialResult`."""
    lo, hi = cfg.bounds[:, 0], cfg.bounds[:, 1]
    best = {"f": np.inf, "x": None}
    trace = []
    count = [0]

    def fun(x):
        if count[0] >= cfg.max_evals:
            raise _BudgetReached
        count[0] += 1
        value = float(objective(x))
        if value < best["f"]:
            best["f"], best["x"] = value, np.array(x, dtype=float)
            trace.append((count[0], value))
        return value

    # degenerate boxes are not accepted by the annealer
    free = hi > lo
    fixed = lo.copy()

    def embed(z):
        x = fixed.copy()
        x[free] = z
        return x

    minimizer_kwargs = {"method": coordinate_search,
                        "bounds": list(zip(lo[free], hi[free])),
                        "options": {"maxfev": cfg.local_maxfev or 50 * int(free.sum())}}
    x0 = None if cfg.x0 is None else np.clip(np.asarray(cfg.x0, dtype=float), lo, hi)[free]
    try:
        if free.any():
            dual_annealing(lambda z: fun(embed(z)), list(zip(lo[free], hi[free])),
                           maxiter=10 ** 6, initial_temp=cfg.initial_temp,
                           restart_temp_ratio=cfg.restart_temp_ratio, visit=cfg.visit,
                           accept=cfg.accept, maxfun=cfg.max_evals, rng=cfg.seed,
                           no_local_search=not cfg.local_search,
                           minimizer_kwargs=minimizer_kwargs, x0=x0)
        else:
            fun(fixed)
    except _BudgetReached:
        pass
    return TrialResult(seed=cfg.seed, best_x=best["x"], best_f=best["f"], nfev=count[0],
                       trace=trace)


class SteeringObjective:
    """``J(p) = T + P * metric(rho(T))`` over the flat control-class vector.

    ``kind="state"``: metric is the Hilbert-Schmidt distance to the target.
    ``kind="overlap"``: metric is ``|<rho(T), target> - M|``.
    Vectors outside the parameter box raise ``ValueError``.
    """

    def __init__(self, params, kind="state", rho0=STEER_RHO0, rho_target=STEER_TARGET, P=1e3,
                 M=None, N=2000, nu=(0.5, 1.0, 2.0), bounds=None):
        if kind not in ("state", "overlap"):
            raise ValueError("kind must be 'state' or 'overlap'")
        if kind == "overlap" and (M is None or not 0 < M < 1):
            raise ValueError("the overlap objective needs M in (0, 1)")
        if not P > 0:
            raise ValueError("penalty P must be positive")
        self.params = params
        self.kind = kind
        self.rho0 = check_density_matrix(rho0)
        self.rho_target = check_density_matrix(rho_target)
        self.P = float(P)
        self.M = M
        self.N = int(N)
        self.nu = tuple(nu)
        self.crab_bounds = bounds or CrabBounds()
        self.box = self.crab_bounds.vector_bounds(len(self.nu))
        self._x0 = to_coords(self.rho0)

    @property
    def bounds(self):
        return self.box.copy()

    def baseline(self):
        """All-zero control parameters at the shortest admissible horizon."""
        x = np.clip(np.zeros(len(self.box)), self.box[:, 0], self.box[:, 1])
        x[-1] = self.box[-1, 0]
        return x

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (len(self.box),):
            raise ValueError(f"expected {len(self.box)} parameters, got shape {x.shape}")
        slack = 1e-12 * (self.box[:, 1] - self.box[:, 0] + 1.0)
        if np.any(x < self.box[:, 0] - slack) or np.any(x > self.box[:, 1] + slack):
            raise ValueError("parameter vector outside its box")
        return np.clip(x, self.box[:, 0], self.box[:, 1])

    def final_state(self, x):
        x = self._check(x)
        p = CrabParams.from_vector(x, self.nu, self.crab_bounds)
        grid = sample_to_grid(p, self.N, self.params.mu, self.params.n_max)
        return from_coords(final_coords(self.params, grid, self._x0)), p.T

    def metric_of(self, rho_T):
        if self.kind == "state":
            return hs_distance(rho_T, self.rho_target)
        return abs(float(np.real(np.trace(rho_T @ self.rho_target))) - self.M)

    def evaluate(self, x):
        """``(J, metric, rho_T)``."""
        rho_T, T = self.final_state(x)
        m = self.metric_of(rho_T)
        return T + self.P * m, m, rho_T

    def metric(self, x):
        return self.evaluate(x)[1]

    def __call__(self, x):
        return self.evaluate(x)[0]


def steer_state_objective(params, p, P=1e3, N=2000, rho0=STEER_RHO0, rho_target=STEER_TARGET):
    """``T + P ||rho(T) - rho_target||`` for a :class:`CrabParams` ``p``."""
    obj = SteeringObjective(params, "state", rho0, rho_target, P=P, N=N, nu=p.nu, bounds=p.bounds)
    return obj(p.to_vector())


def steer_overlap_objective(params, p, M, P=1e3, N=2000, rho0=STEER_RHO0, rho_target=STEER_TARGET):
    """``T + P |<rho(T), rho_target> - M|`` for a :class:`CrabParams` ``p``."""
    obj = SteeringObjective(params, "overlap", rho0, rho_target, P=P, M=M, N=N, nu=p.nu,
                            bounds=p.bounds)
    return obj(p.to_vector())


def _run_one(args):
    objective, cfg = args
    res = dual_anneal(objective, cfg)
    if res.best_x is not None:
        res.metric = objective.metric(res.best_x)
    return res


def run_trials(objective, seeds=range(10), workers=1, **cfg_kwargs):
    """Independent annealing trials, one per seed, sorted by seed.

    Extra keyword arguments go to :class:`AnnealConfig`. ``workers > 1``
    runs trials in separate processes.
    """
    cfgs = [AnnealConfig(bounds=objective.bounds, seed=int(s), **cfg_kwargs) for s in seeds]
    jobs = [(objective, c) for c in cfgs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    return sorted(results, key=lambda r: r.seed)


def best_trial(results):
    return min(results, key=lambda r: (r.best_f, r.seed))


def default_workers():
    env = os.environ.get("OQCONTROL_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def write_trials_csv(results, path):
    """One row per trial: seed, best objective, metric, evaluations, parameters."""
    dim = max((len(r.best_x) for r in results if r.best_x is not None), default=0)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "best_objective", "metric", "evaluations"]
                        + [f"p{i}" for i in range(dim)])
        for r in results:
            params = [] if r.best_x is None else [f"{v:.12g}" for v in r.best_x]
            writer.writerow([r.seed, f"{r.best_f:.12g}", f"{r.metric:.12g}", r.nfev, *params])


def write_trace_csv(result, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["evaluation", "best_objective"])
        for n, v in result.trace:
            writer.writerow([n, f"{v:.12g}"])
