"""Overlap-maximization problem shared by the iterative methods, plus the
per-iteration records they emit."""
import csv
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .controls import ControlGrid
from .objectives import I_beta, J1, overlap_bound_b
from .propagate import DEFAULT_SUBSTEPS, CauchyCounter, solve_backward, solve_forward
from .qops import check_density_matrix


@dataclass(frozen=True)
class OverlapProblem:
    """Steer ``rho0`` over ``[0, T]`` so that ``<rho(T), rho_target>`` is maximal.

    The gap ``I = b - J1`` uses ``b``, the largest eigenvalue of the target.
    """

    params: object
    rho0: np.ndarray
    rho_target: np.ndarray
    T: float
    N: int
    substeps: int = DEFAULT_SUBSTEPS

    def __post_init__(self):
        object.__setattr__(self, "rho0", check_density_matrix(self.rho0))
        object.__setattr__(self, "rho_target", check_density_matrix(self.rho_target))
        if not self.T > 0 or int(self.N) < 1:
            raise ValueError("need T > 0 and N >= 1")
        object.__setattr__(self, "N", int(self.N))

    @property
    def b(self):
        return overlap_bound_b(self.rho_target)

    def grid(self, values):
        """Control grid on this problem's horizon; ``values`` is a triple or ``(N, 3)``."""
        values = np.asarray(values, dtype=float)
        if values.shape == (3,):
            values = np.tile(values, (self.N, 1))
        return ControlGrid(self.T, values, self.params.mu, self.params.n_max)

    def forward(self, grid, counter=None):
        return solve_forward(self.params, grid, self.rho0, counter, self.substeps)

    def backward(self, grid, counter=None):
        return solve_backward(self.params, grid, self.rho_target, counter, self.substeps)

    def gap(self, traj):
        return self.b - J1(traj.final, self.rho_target)

    def I_beta(self, traj, beta):
        return I_beta(traj.grid, traj.final, self.rho_target, *beta)


@dataclass
class Process:
    """A control together with its state trajectory and, if known, its costate."""

    grid: ControlGrid
    rho: object
    I: float
    chi: object = None


@dataclass
class IterationRecord:
    """One row of a method's history.

    Norms are L2[0, T] per channel. ``switches`` counts value changes between
    adjacent subintervals of a bang-bang control and ``chattering`` the
    subintervals whose midpoint decision did not settle.
    """

    k: int
    I: float
    u_norm: float
    n1_norm: float
    n2_norm: float
    Ku_norm: float
    Kn1_norm: float
    Kn2_norm: float
    cauchy: int
    accepted: bool = True
    switches: int = 0
    chattering: int = 0
    I_aux: float = float("nan")


def make_record(k, process, K, dt, cauchy, **extra):
    """Build a record from a process and switching values sampled on the subintervals."""
    cn = process.grid.channel_norms()
    if K is None:
        kn = np.full(3, np.nan)
    else:
        kn = np.sqrt(dt * np.sum(np.asarray(K) ** 2, axis=0))
    return IterationRecord(k=k, I=float(process.I), u_norm=cn[0], n1_norm=cn[1], n2_norm=cn[2],
                           Ku_norm=kn[0], Kn1_norm=kn[1], Kn2_norm=kn[2], cauchy=int(cauchy),
                           **extra)


@dataclass
class MethodResult:
    """Outcome of an iterative run.

    ``status`` is one of ``"target"``, ``"converged"``, ``"max_iters"`` or
    ``"budget"``.
    """

    history: list
    process: Process
    status: str
    counter: CauchyCounter = field(default_factory=CauchyCounter)

    @property
    def I(self):
        return self.process.I

    @property
    def budget_exhausted(self):
        return self.status == "budget"

    def I_values(self):
        return np.array([r.I for r in self.history])

    def write_csv(self, path):
        write_history_csv(self.history, path)


HISTORY_COLUMNS = [f.name for f in fields(IterationRecord)]


def write_history_csv(history, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for rec in history:
            row = asdict(rec)
            writer.writerow([_fmt(row[c]) for c in HISTORY_COLUMNS])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return f"{float(v):.12g}"
