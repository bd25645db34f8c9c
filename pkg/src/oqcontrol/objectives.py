"""Terminal objectives, the running-cost functional and state diagnostics."""
from dataclasses import asdict, dataclass

import numpy as np

from .qops import check_density_matrix, eig_hermitian


def overlap_bound_b(rho_target):
    """Largest eigenvalue of the target, i.e. ``max_rho <rho, rho_target>``."""
    return float(eig_hermitian(check_density_matrix(rho_target))[-1])


def J1(rho_T, rho_target):
    """Hilbert-Schmidt overlap ``Tr(rho_T rho_target)``."""
    return float(np.real(np.trace(np.asarray(rho_T) @ np.asarray(rho_target))))


def I(rho_T, rho_target, b=None):
    """Overlap gap ``b - J1``; ``b`` defaults to :func:`overlap_bound_b`."""
    if b is None:
        b = overlap_bound_b(rho_target)
    return b - J1(rho_T, rho_target)


def hs_distance(a, b):
    d = np.asarray(a) - np.asarray(b)
    return float(np.sqrt(max(np.real(np.trace(d @ d)), 0.0)))


def J2(rho_T, rho_target, T, P):
    """``T + P * ||rho_T - rho_target||``."""
    if not P > 0:
        raise ValueError("penalty P must be positive")
    return T + P * hs_distance(rho_T, rho_target)


def J3(rho_T, rho_target, T, P, M):
    """``T + P * |<rho_T, rho_target> - M|`` with ``0 < M < 1``."""
    if not 0 < M < 1:
        raise ValueError(f"M must lie in (0, 1), got {M}")
    if not P > 0:
        raise ValueError("penalty P must be positive")
    return T + P * abs(J1(rho_T, rho_target) - M)


def running_cost(grid, beta1, beta2):
    """``int (beta1 u^2 + beta2 (n1 + n2)) dt`` for a piecewise-constant grid."""
    v = grid.values
    return float(grid.dt * np.sum(beta1 * v[:, 0] ** 2 + beta2 * (v[:, 1] + v[:, 2])))


def I_beta(grid, rho_T, rho_target, beta1, beta2):
    """``1 - J1 + running_cost``."""
    if np.any(grid.values[:, 1:] < 0):
        raise ValueError("incoherent controls must be nonnegative")
    return 1.0 - J1(rho_T, rho_target) + running_cost(grid, beta1, beta2)


def _spectrum(rho):
    lam = eig_hermitian(rho, tol=1e-8)
    # absorb integration-level negativity
    return np.clip(lam, 0.0, 1.0)


def entropy(rho):
    """Von Neumann entropy in nats, ``0 ln 0 := 0``."""
    lam = _spectrum(rho)
    lam = lam[lam > 0]
    return float(-np.sum(lam * np.log(lam)))


def purity(rho):
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


@dataclass
class ObjectiveReport:
    J1: float
    I: float
    b: float
    distance: float
    purity: float
    entropy: float
    J2: float = None
    J3: float = None
    I_beta: float = None

    def as_dict(self):
        return asdict(self)


def report(rho_T, rho_target, T=None, P=None, M=None, grid=None, beta=None):
    """Collect every applicable objective for one final state."""
    b = overlap_bound_b(rho_target)
    out = ObjectiveReport(J1=J1(rho_T, rho_target), I=I(rho_T, rho_target, b), b=b,
                          distance=hs_distance(rho_T, rho_target),
                          purity=purity(rho_T), entropy=entropy(rho_T))
    if T is not None and P is not None:
        out.J2 = J2(rho_T, rho_target, T, P)
        if M is not None:
            out.J3 = J3(rho_T, rho_target, T, P, M)
    if grid is not None and beta is not None:
        out.I_beta = I_beta(grid, rho_T, rho_target, *beta)
    return out
