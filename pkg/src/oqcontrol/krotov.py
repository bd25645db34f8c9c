"""Nonlocal improvement by feedback: the rho- and chi-methods.

Each iteration freezes one trajectory of the current process (the costate
for the rho-method, the state for the chi-method) and propagates the other
system in closed loop with a pointwise maximizer of the Pontryagin function.
Without regularization the maximizer is bang-bang; with regularization it
is the clamped stationary point ``s c_ref + alpha K``.
"""
from dataclasses import dataclass

import numpy as np

from .controls import l2_norm_sq
from .problem import MethodResult, Process, make_record
from .propagate import (
    CauchyCounter,
    SwitchingLaw,
    solve_backward_feedback,
    solve_forward_feedback,
    switching_along,
    switching_weights,
)

POLICIES = ("zero", "hold_previous")


@dataclass
class KrotovConfig:
    """Settings of one rho/chi run.

    Args:
        variant: ``"rho"`` or ``"chi"``.
        regularized: use the stationary-point mapping instead of bang-bang.
        s: 0 or 1, whether the regularizer is centred at the previous control.
        alpha: step parameter of the regularized mapping.
        singular_policy: ``"zero"``, ``"hold_previous"`` or ``"both"`` (try each
            and keep the lower ``I``).
        eps_stop: stop once ``|I_(k+1) - I_k| < eps_stop``.
        max_iters: iteration cap.
        cauchy_budget: cap on the number of full-horizon solves (None: no cap).
        target_I: stop as soon as ``I <= target_I``.
        K_tol_rel: singular threshold relative to the switching-function scale.
        mono_tol: slack on the monotonicity guard.
    """

    variant: str = "rho"
    regularized: bool = True
    s: int = 0
    alpha: float = 1.0
    singular_policy: str = "both"
    eps_stop: float = 1e-12
    max_iters: int = 100
    cauchy_budget: int = None
    target_I: float = None
    K_tol_rel: float = 1e-9
    mono_tol: float = 1e-9

    def __post_init__(self):
        if self.variant not in ("rho", "chi"):
            raise ValueError("variant must be 'rho' or 'chi'")
        if self.s not in (0, 1):
            raise ValueError("s must be 0 or 1")
        if self.regularized and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.singular_policy not in POLICIES + ("both",):
            raise ValueError(f"unknown singular policy {self.singular_policy!r}")
        if not self.eps_stop > 0:
            raise ValueError("eps_stop must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")

    @property
    def policies(self):
        if self.regularized:
            return ("zero",)
        return POLICIES if self.singular_policy == "both" else (self.singular_policy,)

    @property
    def label(self):
        name = f"{self.variant}-method"
        if self.regularized:
            name += f"-reg(s={self.s}, alpha={self.alpha:g})"
        return name


def bang_mapping(K, bounds, singular_policy="zero", tol_K=1e-12, previous=(0.0, 0.0, 0.0)):
    """Maximizer of ``<K, c>`` over the control box.

    Args:
        K: switching triple.
        bounds: ``(lo, hi)`` corners of the box.
        singular_policy: value used where ``|K| <= tol_K``: ``"zero"`` or
            ``"hold_previous"``.
        tol_K: singular threshold (positive).
        previous: control value used by ``"hold_previous"``.
    """
    if not tol_K > 0:
        raise ValueError("tol_K must be positive")
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    K = np.asarray(K, dtype=float)
    if singular_policy == "zero":
        sing = np.zeros(3)
    elif singular_policy == "hold_previous":
        sing = np.asarray(previous, dtype=float)
    else:
        raise ValueError(f"unknown singular policy {singular_policy!r}")
    out = np.where(K > tol_K, hi, np.where(K < -tol_K, lo, sing))
    return np.clip(out, lo, hi)


def reg_mapping(K, previous, s, alpha, bounds):
    """Clamped stationary point ``s * previous + alpha * K``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    lo, hi = bounds
    return np.clip(s * np.asarray(previous, dtype=float) + alpha * np.asarray(K, dtype=float), lo, hi)


def _law(problem, cfg, background, reference, policy):
    w_nodes, w_mid = switching_weights(problem.params, background)
    # |K_a| <= |W_a| |x| with |x| <= 1 for states, O(1) for costates
    scale = np.maximum(np.max(np.linalg.norm(w_nodes, axis=2), axis=0),
                       np.max(np.linalg.norm(w_mid, axis=2), axis=0))
    tol = cfg.K_tol_rel * np.maximum(scale, np.finfo(float).tiny)
    return SwitchingLaw("reg" if cfg.regularized else "bang", background, reference,
                        s=cfg.s, alpha=cfg.alpha, singular_policy=policy, tol=tol,
                        weights=(w_nodes, w_mid))


def aux_value(process, reference, cfg):
    """Functional the configured method is monotone in.

    ``I`` for bang-bang runs and ``I + |c - s c_ref|^2 / (2 alpha)`` for the
    regularized ones.
    """
    if not cfg.regularized:
        return process.I
    return process.I + l2_norm_sq(process.grid, reference, cfg.s) / (2.0 * cfg.alpha)


def _candidates(problem, process, cfg, counter, solve):
    out = []
    for policy in cfg.policies:
        cand = solve(policy)
        out.append(cand)
        driving = cand.chi if cfg.variant == "chi" else cand.rho
        if driving.flags is None or not np.any(driving.flags & 1):
            # singular branch never fired, other policies reproduce this one
            break
    return out


def rho_iterate(problem, process, cfg, counter=None, k=1):
    """One rho-method step: costate of the current control, then a
    closed-loop forward solve. Returns ``(next_process, record)``."""
    counter = counter if counter is not None else CauchyCounter()
    if process.chi is None:
        process.chi = problem.backward(process.grid, counter)
    chi = process.chi

    def solve(policy):
        law = _law(problem, cfg, chi, process.grid, policy)
        traj, grid = solve_forward_feedback(problem.params, law, problem.rho0, counter,
                                            substeps=problem.substeps)
        return Process(grid, traj, problem.gap(traj))

    cands = _candidates(problem, process, cfg, counter, solve)
    return _select(problem, process, cfg, counter, k, cands, "rho")


def chi_iterate(problem, process, cfg, counter=None, k=1):
    """One chi-method step: closed-loop costate solve along the current state,
    then a forward solve with the realized control."""
    counter = counter if counter is not None else CauchyCounter()

    def solve(policy):
        law = _law(problem, cfg, process.rho, process.grid, policy)
        chi, grid = solve_backward_feedback(problem.params, law, problem.rho_target, counter,
                                            substeps=problem.substeps)
        rho = problem.forward(grid, counter)
        return Process(grid, rho, problem.gap(rho), chi=chi)

    cands = _candidates(problem, process, cfg, counter, solve)
    return _select(problem, process, cfg, counter, k, cands, "chi")


def _select(problem, process, cfg, counter, k, cands, variant):
    best = min(cands, key=lambda p: p.I)
    driving = best.chi if variant == "chi" else best.rho
    old_aux = aux_value(process, process.grid, cfg)
    new_aux = aux_value(best, process.grid, cfg)
    accepted = new_aux <= old_aux + cfg.mono_tol
    flags = driving.flags if driving.flags is not None else np.zeros(0, dtype=int)
    switches = 0
    if not cfg.regularized:
        switches = int(np.sum(np.any(np.diff(best.grid.values, axis=0) != 0, axis=1)))
    nxt = best if accepted else process
    rec = make_record(k, nxt, driving.switching, problem.T / problem.N, counter.count,
                      accepted=bool(accepted), switches=switches,
                      chattering=int(np.sum((flags & 2) > 0)),
                      I_aux=aux_value(nxt, process.grid, cfg))
    return nxt, rec


def _cost(process, cfg):
    if cfg.variant == "chi":
        return 2
    return 1 + (process.chi is None)


def run_method(problem, cfg, c0, counter=None, callback=None):
    """Iterate from the initial control ``c0`` (triple, ``(N, 3)`` array or grid).

    Stops on ``|dI| < eps_stop``, ``I <= target_I``, ``max_iters`` or when the
    next iteration would exceed ``cauchy_budget``. A rejected candidate (one
    that would break monotonicity) ends the run since the next iteration
    would repeat it.
    """
    counter = counter if counter is not None else CauchyCounter()
    grid0 = c0 if hasattr(c0, "values") else problem.grid(c0)
    rho = problem.forward(grid0, counter)
    process = Process(grid0, rho, problem.gap(rho))
    history = [make_record(0, process, None, grid0.dt, counter.count,
                           I_aux=aux_value(process, grid0, cfg))]
    step = rho_iterate if cfg.variant == "rho" else chi_iterate
    status = "max_iters"
    for k in range(1, cfg.max_iters + 1):
        if cfg.target_I is not None and process.I <= cfg.target_I:
            break
        if cfg.cauchy_budget is not None and counter.count + _cost(process, cfg) > cfg.cauchy_budget:
            status = "budget"
            break
        nxt, rec = step(problem, process, cfg, counter, k)
        history.append(rec)
        if callback is not None:
            callback(rec)
        delta = nxt.I - process.I
        process = nxt
        if not rec.accepted or abs(delta) < cfg.eps_stop:
            status = "converged"
            break
    if cfg.target_I is not None and process.I <= cfg.target_I:
        status = "target"
    return MethodResult(history, process, status, counter)


@dataclass
class IncrementCheck:
    """Both sides of an exact increment formula on one iteration.

    ``lhs`` is the change of ``I + alpha_hat/(2 alpha) |c - s c_old|^2``;
    ``rhs`` is minus the Simpson integral of the Pontryagin-function increment
    ``dH(t)``. ``min_integrand`` is the smallest ``dH`` at the midpoints of
    subintervals whose feedback decision settled; ``flagged`` counts the
    chattering subintervals left out.
    """

    lhs: float
    rhs: float
    min_integrand: float
    flagged: int = 0

    @property
    def residual(self):
        return abs(self.lhs - self.rhs)


def increment_residual_check(problem, before, after, variant, alpha_hat=0.0, alpha=1.0, s=0):
    """Evaluate the increment formula for a step ``before -> after``.

    For ``variant="rho"`` the background is the costate of ``before`` paired
    with the state of ``after``; for ``"chi"`` the costate of ``after`` paired
    with the state of ``before``. The needed costate must be attached to the
    corresponding process.
    """
    if variant == "rho":
        chi, rho = before.chi, after.rho
        driving = after.rho
    elif variant == "chi":
        chi, rho = after.chi, before.rho
        driving = after.chi
    else:
        raise ValueError("variant must be 'rho' or 'chi'")
    if chi is None:
        raise ValueError("the background costate is missing")
    if not before.grid.same_shape(after.grid):
        raise ValueError("processes live on different grids")
    if alpha_hat and not alpha > 0:
        raise ValueError("alpha must be positive")
    params = problem.params
    c_old, c_new = before.grid.values, after.grid.values
    dc = c_new - c_old
    w = alpha_hat / (2.0 * alpha) if alpha_hat else 0.0
    pen_new = w * np.sum((c_new - s * c_old) ** 2, axis=1)
    pen_old = w * np.sum((c_old - s * c_old) ** 2, axis=1)
    kn = switching_along(params, chi, rho, "nodes")
    km = switching_along(params, chi, rho, "mid")
    left = np.sum(kn[:-1] * dc, axis=1) - pen_new + pen_old
    right = np.sum(kn[1:] * dc, axis=1) - pen_new + pen_old
    mid = np.sum(km * dc, axis=1) - pen_new + pen_old
    dt = before.grid.dt
    rhs = -dt / 6.0 * float(np.sum(left + 4.0 * mid + right))
    lhs = (after.I + dt * float(np.sum(pen_new))) - (before.I + dt * float(np.sum(pen_old)))
    clean = np.ones(len(mid), dtype=bool)
    if driving is not None and driving.flags is not None:
        clean = (driving.flags & 2) == 0
    low = float(np.min(mid[clean])) if np.any(clean) else float("nan")
    return IncrementCheck(lhs=lhs, rhs=rhs, min_integrand=low, flagged=int(np.sum(~clean)))
