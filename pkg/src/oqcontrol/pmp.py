"""Numerical check of the maximum principle for a candidate control."""
from dataclasses import asdict, dataclass

import numpy as np

from .controls import ControlGrid
from .model import closed_form_Kn
from .propagate import DEFAULT_SUBSTEPS, solve_backward, solve_forward, switching_along
from .qops import check_density_matrix

CHANNEL_NAMES = ("u", "n1", "n2")


@dataclass
class PmpReport:
    """Outcome of :func:`check_pmp`.

    ``gaps`` are the per-channel largest shortfalls ``max_c K c - K c_hat``
    over the nodes; a channel is satisfied when its gap is at most ``tol``
    times the channel's bound. ``violations`` counts offending nodes.
    """

    max_abs_Ku: float
    max_Kn: tuple
    gaps: tuple
    violations: tuple
    verdicts: dict
    N: int
    tol: float

    @property
    def satisfied(self):
        return all(self.verdicts.values())

    def as_dict(self):
        out = asdict(self)
        out["satisfied"] = self.satisfied
        return out


def check_pmp(params, grid, rho0, rho_target, tol=1e-10, substeps=DEFAULT_SUBSTEPS):
    """Check the pointwise maximum condition along ``grid``.

    At node ``t_i`` the active control is ``grid.values[i]`` (the last node
    uses the last subinterval). For the coherent channel the maximum of
    ``K^u u`` over ``[-mu, mu]`` is ``mu |K^u|``; for ``n_j`` the maximum of
    ``K^nj n_j`` over ``[0, n_max]`` is ``n_max max(K^nj, 0)``.
    """
    rho0 = check_density_matrix(rho0)
    rho_target = check_density_matrix(rho_target)
    rho = solve_forward(params, grid, rho0, substeps=substeps)
    chi = solve_backward(params, grid, rho_target, substeps=substeps)
    K = switching_along(params, chi, rho, "nodes")
    c = np.vstack([grid.values, grid.values[-1:]])
    best = np.column_stack([params.mu * np.abs(K[:, 0]),
                            params.n_max * np.maximum(K[:, 1], 0.0),
                            params.n_max * np.maximum(K[:, 2], 0.0)])
    shortfall = best - K * c
    scale = np.array([params.mu, params.n_max, params.n_max])
    bad = shortfall > tol * scale
    verdicts = {name: not bool(np.any(bad[:, a])) for a, name in enumerate(CHANNEL_NAMES)}
    return PmpReport(max_abs_Ku=float(np.max(np.abs(K[:, 0]))),
                     max_Kn=(float(np.max(K[:, 1])), float(np.max(K[:, 2]))),
                     gaps=tuple(float(v) for v in np.max(shortfall, axis=0)),
                     violations=tuple(int(v) for v in np.sum(bad, axis=0)),
                     verdicts=verdicts, N=grid.N, tol=tol)


@dataclass
class ZeroControlAnalysis:
    """Numeric switching functions at ``c = 0`` against the closed forms."""

    max_abs_Ku: float
    max_Kn: tuple
    closed_form_deviation: tuple
    max_offdiag_rho: float
    max_offdiag_chi: float
    times: np.ndarray
    Kn_numeric: np.ndarray
    Kn_closed: np.ndarray

    @property
    def Ku_vanishes(self):
        return self.max_abs_Ku <= 1e-8

    @property
    def Kn_nonpositive(self):
        return max(self.max_Kn) <= 1e-10


def zero_control_analysis(params, T, N=10000, rho0=None, rho_target=None, samples=101,
                          substeps=DEFAULT_SUBSTEPS):
    """Propagate at ``c = 0`` and compare with the closed-form ``K^nj``.

    Defaults to ``rho0 = I/4`` and ``rho_target = diag(1, 0, 0, 0)``, the
    setting of the closed forms; the comparison is reported at ``samples``
    evenly spaced nodes (``N`` must be divisible by ``samples - 1``).
    """
    rho0 = np.eye(4) / 4 if rho0 is None else rho0
    rho_target = np.diag([1.0, 0.0, 0.0, 0.0]) if rho_target is None else rho_target
    for name, m in (("rho0", rho0), ("rho_target", rho_target)):
        m = np.asarray(m)
        if np.any(np.abs(m - np.diag(np.diag(m))) > 0):
            raise ValueError(f"{name} must be diagonal")
    if N % (samples - 1):
        raise ValueError("N must be a multiple of samples - 1")
    grid = ControlGrid.zeros(T, N, params.mu, params.n_max)
    rho = solve_forward(params, grid, rho0, substeps=substeps)
    chi = solve_backward(params, grid, rho_target, substeps=substeps)
    K = switching_along(params, chi, rho, "nodes")
    idx = np.arange(0, N + 1, N // (samples - 1))
    t = grid.nodes[idx]
    closed = np.column_stack(closed_form_Kn(t, T, params.eps, *params.relax))
    dev = np.max(np.abs(K[idx, 1:] - closed), axis=0)
    mask = ~np.eye(4, dtype=bool)
    return ZeroControlAnalysis(
        max_abs_Ku=float(np.max(np.abs(K[:, 0]))),
        max_Kn=(float(np.max(K[:, 1])), float(np.max(K[:, 2]))),
        closed_form_deviation=(float(dev[0]), float(dev[1])),
        max_offdiag_rho=float(np.max(np.abs(rho.states[:, mask]))),
        max_offdiag_chi=float(np.max(np.abs(chi.states[:, mask]))),
        times=t, Kn_numeric=K[idx, 1:], Kn_closed=closed)
