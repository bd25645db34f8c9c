"""Forward (state) and backward (costate) propagation on a control grid.

States are carried in the real Pauli coordinates of :mod:`oqcontrol.qops`.
Every full-horizon solve adds one to the :class:`CauchyCounter` it is given,
which is the cost metric used to compare methods.
"""
import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from .controls import ControlGrid, project_box
from .model import liouvillian_stack
from .qops import check_density_matrix, from_coords, is_hermitian, to_coords

DEFAULT_SUBSTEPS = 2
# largest h * ||M(c)|| allowed per RK4 substep
STEP_KAPPA = 0.3


class IntegrationError(RuntimeError):
    """Raised when a solve produces non-finite values."""

    def __init__(self, message, time):
        super().__init__(f"{message} (at t = {time:.6g})")
        self.time = time


class CauchyCounter:
    """Number of full-horizon initial/terminal value problems solved."""

    def __init__(self, count=0):
        self.count = int(count)

    def increment(self, n=1):
        self.count += n

    def __add__(self, other):
        return CauchyCounter(self.count + other.count)

    def __iadd__(self, other):
        self.count += other.count
        return self

    def __repr__(self):
        return f"CauchyCounter({self.count})"


@dataclass
class Trajectory:
    """States at the ``N + 1`` grid nodes and the ``N`` subinterval midpoints.

    ``grid`` is the control the trajectory was propagated with (for feedback
    solves, the realized control). For feedback solves driven by a
    :class:`SwitchingLaw`, ``switching`` holds the switching values behind
    each subinterval's decision and ``flags`` marks singular (bit 0) and
    chattering (bit 1) subintervals.
    """

    grid: ControlGrid
    coords: np.ndarray
    mid_coords: np.ndarray
    direction: str
    switching: np.ndarray = None
    flags: np.ndarray = None
    clamped: int = 0
    cauchy_cost_delta: int = field(default=1, init=False)

    @property
    def times(self):
        return self.grid.nodes

    @property
    def states(self):
        return from_coords(self.coords)

    @property
    def mid_states(self):
        return from_coords(self.mid_coords)

    @property
    def final(self):
        """State at ``t = T``."""
        return from_coords(self.coords[-1])

    @property
    def initial(self):
        """State at ``t = 0``."""
        return from_coords(self.coords[0])

    def write_csv(self, path, target=None):
        """Populations, purity, entropy and overlap with ``target`` per node."""
        from .objectives import entropy, purity

        states = self.states
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["t", "rho11", "rho22", "rho33", "rho44", "purity", "entropy"]
            if target is not None:
                header.append("overlap")
            writer.writerow(header)
            for t, rho in zip(self.times, states):
                row = [t, *np.real(np.diag(rho)), purity(rho), entropy(rho)]
                if target is not None:
                    row.append(float(np.real(np.trace(rho @ target))))
                writer.writerow([f"{v:.12g}" for v in row])


@lru_cache(maxsize=256)
def _sparse_generator(params):
    stack = liouvillian_stack(params)
    pattern = np.any(stack != 0.0, axis=0)
    rows, cols = np.nonzero(pattern)
    vals = np.ascontiguousarray(stack[:, rows, cols])
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    norms = np.array([np.linalg.norm(m, 2) for m in stack])
    for arr in (rows, cols, vals, norms):
        arr.setflags(write=False)
    return rows, cols, vals, norms


def substep_counts(params, grid, substeps=DEFAULT_SUBSTEPS, kappa=STEP_KAPPA):
    """RK4 substeps used on each subinterval of ``grid``."""
    norms = _sparse_generator(params)[3]
    v = np.abs(grid.values)
    bound = norms[0] + v @ norms[1:]
    return np.maximum(substeps, 2 * np.ceil(grid.dt * bound / (2.0 * kappa)).astype(int))


def _check_substeps(substeps):
    if substeps < 2 or substeps % 2:
        raise ValueError("substeps must be an even integer >= 2")


def _tick(counter):
    if counter is not None:
        counter.increment()


def _initial_coords(rho0):
    rho0 = check_density_matrix(rho0)
    return to_coords(rho0)


def _terminal_coords(target):
    target = np.asarray(target, dtype=complex)
    if target.shape != (4, 4) or not is_hermitian(target):
        raise ValueError("terminal costate must be a Hermitian 4x4 matrix")
    if abs(np.trace(target) - 1.0) > 1e-9:
        raise ValueError("terminal costate must have unit trace")
    return to_coords(target)


def _raise_if_failed(fail, grid, reverse):
    if fail >= 0:
        t = grid.nodes[fail if reverse else fail + 1]
        raise IntegrationError("integration produced non-finite values", t)


def _adaptive(params, grid, x0, reverse, rtol=1e-8, atol=1e-8):
    stack = liouvillian_stack(params)
    N, dt = grid.N, grid.dt
    xs = np.empty((N + 1, 16))
    xm = np.empty((N, 16))
    x = np.array(x0, dtype=float)
    xs[N if reverse else 0] = x
    order = range(N - 1, -1, -1) if reverse else range(N)
    for i in order:
        u, n1, n2 = grid.values[i]
        A = stack[0] + u * stack[1] + n1 * stack[2] + n2 * stack[3]
        if reverse:
            A = A.T
        sol = solve_ivp(lambda t, y: A @ y, (0.0, dt), x, method="RK45",
                        t_eval=[0.5 * dt, dt], rtol=rtol, atol=atol)
        if not sol.success or not np.all(np.isfinite(sol.y)):
            raise IntegrationError("adaptive integration failed", grid.nodes[i])
        xm[i] = sol.y[:, 0]
        x = sol.y[:, 1]
        xs[i if reverse else i + 1] = x
    return xs, xm


def solve_forward(params, grid, rho0, counter=None, substeps=DEFAULT_SUBSTEPS, method="rk4",
                  kappa=STEP_KAPPA):
    """Integrate the master equation from ``rho0`` under ``grid``.

    ``method`` is ``"rk4"`` or ``"rk45"`` (adaptive, rtol = atol = 1e-8, for
    cross-checks). RK4 takes at least ``substeps`` (even) steps per
    subinterval and more where the control makes the generator stiff, so
    that ``h * ||M(c)|| <= kappa``; ``kappa=inf`` fixes the count.
    """
    x0 = _initial_coords(rho0)
    if method == "rk45":
        xs, xm = _adaptive(params, grid, x0, reverse=False)
    elif method == "rk4":
        _check_substeps(substeps)
        rows, cols, vals, norms = _sparse_generator(params)
        xs, xm, fail = _kernels.propagate_pc(rows, cols, vals, grid.values, grid.dt,
                                             x0, False, norms, substeps, kappa)
        _raise_if_failed(fail, grid, False)
    else:
        raise ValueError(f"unknown method {method!r}")
    _tick(counter)
    return Trajectory(grid, xs, xm, "forward")


def solve_backward(params, grid, rho_target, counter=None, substeps=DEFAULT_SUBSTEPS, method="rk4",
                   kappa=STEP_KAPPA):
    """Integrate the costate equation from ``chi(T) = rho_target`` back to 0.

    Uses the same per-subinterval steps as :func:`solve_forward`.
    """
    xT = _terminal_coords(rho_target)
    if method == "rk45":
        xs, xm = _adaptive(params, grid, xT, reverse=True)
    elif method == "rk4":
        _check_substeps(substeps)
        rows, cols, vals, norms = _sparse_generator(params)
        xs, xm, fail = _kernels.propagate_pc(cols, rows, vals, grid.values, grid.dt,
                                             xT, True, norms, substeps, kappa)
        _raise_if_failed(fail, grid, True)
    else:
        raise ValueError(f"unknown method {method!r}")
    _tick(counter)
    return Trajectory(grid, xs, xm, "backward")


def final_coords(params, grid, x0, substeps=DEFAULT_SUBSTEPS, kappa=STEP_KAPPA):
    """Coordinates of ``rho(T)`` from initial coordinates ``x0`` (no counter,
    no input validation); the inner loop of parameter searches."""
    rows, cols, vals, norms = _sparse_generator(params)
    xs, _, fail = _kernels.propagate_pc(rows, cols, vals, grid.values, grid.dt,
                                        np.asarray(x0, dtype=float), False, norms, substeps, kappa)
    _raise_if_failed(fail, grid, False)
    return xs[-1]


@dataclass
class SwitchingLaw:
    """Pointwise maximizer of the Pontryagin function along a frozen background.

    For a forward (state) feedback solve the background is the costate
    trajectory; for a backward (costate) feedback solve it is the state
    trajectory. ``reference`` is the previous control ``c^(k)``.

    kind="bang": per channel the box vertex selected by the sign of K, or the
    singular value (0 for ``singular_policy="zero"``, the reference value for
    ``"hold_previous"``) when ``|K| <= tol``.
    kind="reg": ``clip(s * reference + alpha * K)``.

    ``weights`` optionally caches :func:`switching_weights` of the background.
    """

    kind: str
    background: Trajectory
    reference: ControlGrid
    s: int = 0
    alpha: float = 1.0
    singular_policy: str = "zero"
    tol: np.ndarray = None
    weights: tuple = None

    def __post_init__(self):
        if self.kind not in ("bang", "reg"):
            raise ValueError("kind must be 'bang' or 'reg'")
        if self.kind == "reg" and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.singular_policy not in ("zero", "hold_previous"):
            raise ValueError("singular_policy must be 'zero' or 'hold_previous'")
        if not self.background.grid.same_shape(self.reference):
            raise ValueError("background and reference grids differ")
        self.tol = np.zeros(3) if self.tol is None else np.broadcast_to(
            np.asarray(self.tol, dtype=float), (3,)).copy()


def switching_weights(params, background):
    """Vectors ``W_a(t)`` with ``K_a = W_a(t) . x`` along a background.

    For a costate background ``K_a(chi, rho) = (M_a^T y) . x``; for a state
    background ``K_a(chi, rho) = (M_a x) . y``. Returns node and midpoint
    arrays of shape ``(N + 1, 3, 16)`` and ``(N, 3, 16)``.
    """
    stack = liouvillian_stack(params)[1:]
    if background.direction == "backward":
        # y @ M_a for all a at once
        flat = np.concatenate(list(stack), axis=1)
    else:
        flat = np.concatenate([m.T for m in stack], axis=1)
    out = []
    for coords in (background.coords, background.mid_coords):
        out.append(np.ascontiguousarray((coords @ flat).reshape(len(coords), 3, 16)))
    return tuple(out)


def _feedback_law(params, law, x0, reverse, substeps, kappa, counter):
    rows, cols, vals, norms = _sparse_generator(params)
    if reverse:
        rows, cols = cols, rows
    grid = law.reference
    w_nodes, w_mid = law.weights or switching_weights(params, law.background)
    lo, hi = params.bounds
    kind = 0 if law.kind == "bang" else 1
    policy = 0 if law.singular_policy == "zero" else 1
    xs, xm, ctrl, kmid, flags, fail = _kernels.propagate_feedback(
        rows, cols, vals, grid.dt, x0, reverse, norms, substeps, kappa, w_nodes, w_mid, kind,
        np.ascontiguousarray(grid.values), float(law.s), float(law.alpha), lo, hi,
        law.tol, policy)
    _raise_if_failed(fail, grid, reverse)
    _tick(counter)
    realized = ControlGrid.projected(grid.T, ctrl, params.mu, params.n_max)
    traj = Trajectory(realized, xs, xm, "backward" if reverse else "forward",
                      switching=kmid, flags=flags)
    return traj, realized


def _feedback_callable(params, mapping, x0, reverse, T, N, substeps, kappa, counter):
    rows, cols, vals, norms = _sparse_generator(params)
    if reverse:
        rows, cols = cols, rows
    dt = T / N
    nodes = np.linspace(0.0, T, N + 1)
    xs = np.empty((N + 1, 16))
    xm = np.empty((N, 16))
    ctrl = np.empty((N, 3))
    clamped = 0

    def evaluate(x, t):
        nonlocal clamped
        raw = np.asarray(mapping(from_coords(x), t), dtype=float)
        c = project_box(raw, params.mu, params.n_max)
        if np.any(c != raw):
            clamped += 1
        return c

    x = np.array(x0, dtype=float)
    xs[N if reverse else 0] = x
    order = range(N - 1, -1, -1) if reverse else range(N)
    for i in order:
        entry = i + 1 if reverse else i
        c_pred = evaluate(x, nodes[entry])
        _, xp = _kernels.interval_step(rows, cols, vals, c_pred, dt, x, norms, substeps, kappa)
        c = evaluate(xp, (i + 0.5) * dt)
        ctrl[i] = c
        x, mid = _kernels.interval_step(rows, cols, vals, c, dt, x, norms, substeps, kappa)
        xm[i] = mid
        xs[i if reverse else i + 1] = x
        if not np.all(np.isfinite(x)):
            raise IntegrationError("integration produced non-finite values", nodes[i if reverse else i + 1])
    _tick(counter)
    realized = ControlGrid(T, ctrl, params.mu, params.n_max)
    traj = Trajectory(realized, xs, xm, "backward" if reverse else "forward", clamped=clamped)
    return traj, realized


def solve_forward_feedback(params, mapping, rho0, counter=None, T=None, N=None,
                           substeps=DEFAULT_SUBSTEPS, kappa=STEP_KAPPA):
    """Closed-loop forward solve; returns ``(trajectory, realized_grid)``.

    ``mapping`` is either a :class:`SwitchingLaw` (compiled path; the grid
    comes from its reference control) or a callable ``(rho, t) -> (u, n1, n2)``
    which needs ``T`` and ``N``. Out-of-box callable outputs are clamped and
    counted in ``trajectory.clamped``. The control is constant on each
    subinterval and equals the mapping at the (predicted) midpoint state.
    """
    _check_substeps(substeps)
    x0 = _initial_coords(rho0)
    if isinstance(mapping, SwitchingLaw):
        if mapping.background.direction != "backward":
            raise ValueError("forward feedback needs a costate background")
        return _feedback_law(params, mapping, x0, False, substeps, kappa, counter)
    if T is None or N is None:
        raise ValueError("T and N are required for a callable mapping")
    return _feedback_callable(params, mapping, x0, False, T, N, substeps, kappa, counter)


def solve_backward_feedback(params, mapping, rho_target, counter=None, T=None, N=None,
                            substeps=DEFAULT_SUBSTEPS, kappa=STEP_KAPPA):
    """Closed-loop costate solve from ``chi(T) = rho_target``; mirror of
    :func:`solve_forward_feedback`."""
    _check_substeps(substeps)
    xT = _terminal_coords(rho_target)
    if isinstance(mapping, SwitchingLaw):
        if mapping.background.direction != "forward":
            raise ValueError("backward feedback needs a state background")
        return _feedback_law(params, mapping, xT, True, substeps, kappa, counter)
    if T is None or N is None:
        raise ValueError("T and N are required for a callable mapping")
    return _feedback_callable(params, mapping, xT, True, T, N, substeps, kappa, counter)


def pairing(chi_traj, rho_traj):
    """``<chi(t), rho(t)>`` at every node."""
    return np.einsum("ni,ni->n", chi_traj.coords, rho_traj.coords)


def switching_along(params, chi_traj, rho_traj, where="nodes"):
    """Switching functions ``K(chi(t), rho(t))`` along two trajectories.

    Returns an ``(N + 1, 3)`` array at the nodes or ``(N, 3)`` at midpoints.
    """
    stack = liouvillian_stack(params)[1:]
    if where == "nodes":
        y, x = chi_traj.coords, rho_traj.coords
    else:
        y, x = chi_traj.mid_coords, rho_traj.mid_coords
    return np.einsum("ni,aij,nj->na", y, stack, x)


def state_diagnostics(traj):
    """Worst trace drift, Hermiticity error and smallest eigenvalue."""
    states = traj.states
    trace_drift = float(np.max(np.abs(np.trace(states, axis1=1, axis2=2) - 1.0)))
    adj = np.conj(np.swapaxes(states, 1, 2))
    herm = float(np.max(np.abs(states - adj)))
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (states + adj))))
    return trace_drift, herm, min_eig
