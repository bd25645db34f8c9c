"""Gradient projection methods on the control box.

The gradient of ``I`` at a piecewise-constant control is taken per
subinterval as minus the Simpson average of the switching functions, which
is the exact derivative of the discretized functional up to quadrature
error. GPM-1 steps along it and projects; GPM-2 adds an inertia term.
"""
from dataclasses import dataclass, field

import numpy as np

from .controls import project_box
from .problem import MethodResult, Process, make_record
from .propagate import CauchyCounter, switching_along

# (I threshold, alpha, theta): an entry applies once I <= threshold
CASE1_SCHEDULE = ((np.inf, 1.0, 0.7), (0.1, 0.5, 0.85), (0.05, 0.3, 0.9))


def _check_pair(chi_traj, rho_traj):
    g1, g2 = chi_traj.grid, rho_traj.grid
    if not g1.same_shape(g2) or not np.array_equal(g1.values, g2.values):
        raise ValueError("state and costate were propagated with different controls")


def switching_averages(params, chi_traj, rho_traj):
    """Simpson averages of ``K(chi, rho)`` over each subinterval, shape ``(N, 3)``."""
    _check_pair(chi_traj, rho_traj)
    kn = switching_along(params, chi_traj, rho_traj, "nodes")
    km = switching_along(params, chi_traj, rho_traj, "mid")
    return (kn[:-1] + 4.0 * km + kn[1:]) / 6.0


def grad_I(params, chi_traj, rho_traj):
    """Gradient of ``I`` per subinterval: ``-K`` averaged over the subinterval."""
    return -switching_averages(params, chi_traj, rho_traj)


def grad_I_beta(params, chi_traj, rho_traj, beta1, beta2):
    """Gradient of ``1 - J1 + int(beta1 u^2 + beta2 (n1 + n2))``."""
    g = grad_I(params, chi_traj, rho_traj)
    g[:, 0] += 2.0 * beta1 * rho_traj.grid.values[:, 0]
    g[:, 1:] += beta2
    return g


def gpm1_step(grid, gradient, alpha):
    """``Pr_Q(c - alpha * grad)``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    raw = grid.values - alpha * np.asarray(gradient)
    return grid.replace_values(project_box(raw, grid.mu, grid.n_max))


def gpm2_step(grid, prev_grid, gradient, alpha, theta, implicit=False, iters=20, damping=0.5):
    """Two-step projection with inertia.

    The default is ``Pr_Q[c - alpha grad + theta (c - c_prev)]``. With
    ``implicit=True`` the update solves ``z = Pr_Q[c - alpha grad + theta (c - z)]``
    by at most ``iters`` damped fixed-point sweeps. ``prev_grid=None``
    falls back to :func:`gpm1_step`.
    """
    if not 0 <= theta < 1:
        raise ValueError("theta must lie in [0, 1)")
    if prev_grid is None:
        return gpm1_step(grid, gradient, alpha)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    c = grid.values
    base = c - alpha * np.asarray(gradient)
    if not implicit:
        raw = base + theta * (c - prev_grid.values)
        return grid.replace_values(project_box(raw, grid.mu, grid.n_max))
    z = project_box(base, grid.mu, grid.n_max)
    for _ in range(iters):
        nxt = project_box(base + theta * (c - z), grid.mu, grid.n_max)
        if np.array_equal(nxt, z):
            break
        z = (1.0 - damping) * z + damping * nxt
    return grid.replace_values(z)


@dataclass
class GpmConfig:
    """Settings of a GPM run.

    Args:
        variant: ``"gpm1"`` or ``"gpm2"``.
        schedule: ``(threshold, alpha, theta)`` triples; the entry with the
            smallest threshold not below the current ``I`` is active.
        beta: ``(beta1, beta2)`` weights of the running cost, ``(0, 0)`` for plain ``I``.
        target_I: stop once ``I <= target_I``.
        max_iters: iteration cap.
        cauchy_budget: cap on full-horizon solves (None: no cap).
        implicit: use the implicit reading of the GPM-2 update.
    """

    variant: str = "gpm2"
    schedule: tuple = CASE1_SCHEDULE
    beta: tuple = (0.0, 0.0)
    target_I: float = None
    max_iters: int = 1000
    cauchy_budget: int = None
    implicit: bool = False
    fixed_point_iters: int = 20
    schedule_entries: list = field(init=False, repr=False)

    def __post_init__(self):
        if self.variant not in ("gpm1", "gpm2"):
            raise ValueError("variant must be 'gpm1' or 'gpm2'")
        entries = sorted(((float(t), float(a), float(th)) for t, a, th in self.schedule),
                         key=lambda e: -e[0])
        if not entries:
            raise ValueError("empty step schedule")
        for _, a, th in entries:
            if not a > 0:
                raise ValueError("step sizes must be positive")
            if self.variant == "gpm2" and not 0 < th < 1:
                raise ValueError("inertia must lie in (0, 1)")
        if len(self.beta) != 2 or min(self.beta) < 0:
            raise ValueError("beta needs two nonnegative weights")
        self.schedule_entries = entries

    def step_for(self, I):
        """``(alpha, theta)`` active at objective value ``I``."""
        active = self.schedule_entries[0]
        for entry in self.schedule_entries:
            if I <= entry[0]:
                active = entry
        return active[1], active[2]


def run_gpm(problem, cfg, c0, counter=None, callback=None):
    """Iterate GPM-1/GPM-2 from ``c0``; records share the Krotov history schema.

    ``I_aux`` holds ``I^beta``. Each iteration costs one backward and one
    forward solve.
    """
    counter = counter if counter is not None else CauchyCounter()
    grid = c0 if hasattr(c0, "values") else problem.grid(c0)
    rho = problem.forward(grid, counter)
    process = Process(grid, rho, problem.gap(rho))
    prev = None
    params = problem.params
    history = []
    k = 0
    while True:
        status = None
        if cfg.target_I is not None and process.I <= cfg.target_I:
            status = "target"
        elif k >= cfg.max_iters:
            status = "max_iters"
        elif cfg.cauchy_budget is not None and counter.count + 2 > cfg.cauchy_budget:
            status = "budget"
        if status is None:
            process.chi = problem.backward(process.grid, counter)
            K = switching_averages(params, process.chi, process.rho)
        else:
            K = None
        rec = make_record(k, process, K, grid.dt, counter.count,
                          I_aux=problem.I_beta(process.rho, cfg.beta))
        history.append(rec)
        if callback is not None:
            callback(rec)
        if status is not None:
            break
        g = -K
        g[:, 0] += 2.0 * cfg.beta[0] * process.grid.values[:, 0]
        g[:, 1:] += cfg.beta[1]
        alpha, theta = cfg.step_for(process.I)
        if cfg.variant == "gpm1":
            new_grid = gpm1_step(process.grid, g, alpha)
        else:
            new_grid = gpm2_step(process.grid, prev, g, alpha, theta,
                                 implicit=cfg.implicit, iters=cfg.fixed_point_iters)
        prev = process.grid
        rho = problem.forward(new_grid, counter)
        process = Process(new_grid, rho, problem.gap(rho))
        k += 1
    return MethodResult(history, process, status, counter)
