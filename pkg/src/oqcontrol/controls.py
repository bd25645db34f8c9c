"""Piecewise-constant control grids and the Gaussian-envelope Fourier class."""
import csv
from dataclasses import dataclass, field

import numpy as np

CHANNELS = ("u", "n1", "n2")


def project_box(c, mu, n_max):
    """Orthogonal projection onto ``[-mu, mu] x [0, n_max]^2``.

    Works on a single triple or on an ``(..., 3)`` array.
    """
    c = np.asarray(c, dtype=float)
    lo = np.array([-mu, 0.0, 0.0])
    hi = np.array([mu, n_max, n_max])
    return np.clip(c, lo, hi)


@dataclass(frozen=True)
class ControlGrid:
    """Three-channel control, constant on each of ``N`` equal subintervals.

    ``values[i]`` is ``(u, n1, n2)`` on ``[i dt, (i+1) dt)``.
    """

    T: float
    values: np.ndarray
    mu: float
    n_max: float

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim != 2 or vals.shape[1] != 3 or vals.shape[0] < 1:
            raise ValueError(f"control values must have shape (N, 3), got {vals.shape}")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if not np.all(np.isfinite(vals)):
            raise ValueError("control values must be finite")
        tol = 1e-12 * max(self.mu, self.n_max)
        if (np.any(np.abs(vals[:, 0]) > self.mu + tol)
                or np.any(vals[:, 1:] < -tol) or np.any(vals[:, 1:] > self.n_max + tol)):
            raise ValueError("control values violate |u| <= mu, 0 <= n_j <= n_max")
        vals = project_box(vals, self.mu, self.n_max)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, T, N, c, mu, n_max):
        return cls(T, np.tile(np.asarray(c, dtype=float), (N, 1)), mu, n_max)

    @classmethod
    def zeros(cls, T, N, mu, n_max):
        return cls(T, np.zeros((N, 3)), mu, n_max)

    @classmethod
    def projected(cls, T, raw, mu, n_max):
        """Grid from raw values that may lie outside the box."""
        return cls(T, project_box(raw, mu, n_max), mu, n_max)

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def dt(self):
        return self.T / self.N

    @property
    def nodes(self):
        return np.linspace(0.0, self.T, self.N + 1)

    @property
    def midpoints(self):
        return (np.arange(self.N) + 0.5) * self.dt

    def replace_values(self, values):
        return ControlGrid(self.T, values, self.mu, self.n_max)

    def same_shape(self, other):
        return self.N == other.N and np.isclose(self.T, other.T, rtol=1e-14, atol=0)

    def channel_norms(self):
        """L2[0, T] norm of each channel."""
        return np.sqrt(self.dt * np.sum(self.values ** 2, axis=0))

    def to_rows(self):
        return [(t, *v) for t, v in zip(self.midpoints, self.values)]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", *CHANNELS])
            for row in self.to_rows():
                writer.writerow([f"{v:.12g}" for v in row])


def l2_norm_sq(g, reference=None, s=0):
    """``dt * sum_i |c_i - s c_ref,i|^2`` over the grid."""
    diff = np.asarray(g.values)
    if reference is not None:
        if not g.same_shape(reference):
            raise ValueError("grids must share horizon and subinterval count")
        diff = diff - s * reference.values
    return float(g.dt * np.sum(diff ** 2))


@dataclass(frozen=True)
class CrabBounds:
    """Parameter boxes of the analytic control class (one entry per parameter)."""

    h_u: tuple = (0.0, 2.0)
    amp: tuple = (-10.0, 10.0)
    C: tuple = (0.0, 5.0)
    h_n: tuple = (0.0, 2.0)
    T: tuple = (0.5, 2.0)

    def __post_init__(self):
        for name in ("h_u", "amp", "C", "h_n", "T"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ValueError(f"bad bounds for {name}: {(lo, hi)}")
            object.__setattr__(self, name, (lo, hi))
        if self.C[0] < 0:
            raise ValueError("the lower bound of C_j must be nonnegative")
        if self.T[0] <= 0:
            raise ValueError("horizon bounds must be positive")

    def vector_bounds(self, K):
        """Box for the flat vector ``(h_u, A_1..A_K, B_1..B_K, C1, C2, h_n1, h_n2, T)``."""
        return np.array([self.h_u] + [self.amp] * (2 * K) + [self.C] * 2
                        + [self.h_n] * 2 + [self.T])


@dataclass(frozen=True)
class CrabParams:
    """Gaussian-envelope control::

        u(t)   = exp(-h_u (t - T/2)^2) * sum_k (A_k sin(nu_k t) + B_k cos(nu_k t))
        n_j(t) = C_j exp(-h_nj (t - T/2)^2)
    """

    h_u: float
    A: tuple
    B: tuple
    C: tuple
    h_n: tuple
    T: float
    nu: tuple = (0.5, 1.0, 2.0)
    bounds: CrabBounds = field(default_factory=CrabBounds)

    def __post_init__(self):
        for name in ("A", "B", "C", "h_n", "nu"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        K = len(self.nu)
        if len(self.A) != K or len(self.B) != K:
            raise ValueError("need one A_k and one B_k per frequency")
        if len(self.C) != 2 or len(self.h_n) != 2:
            raise ValueError("C and h_n need two entries")
        if min(self.C) < 0:
            raise ValueError("C_j must be nonnegative")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")

    @property
    def K(self):
        return len(self.nu)

    def to_vector(self):
        return np.array([self.h_u, *self.A, *self.B, *self.C, *self.h_n, self.T])

    @classmethod
    def from_vector(cls, x, nu=(0.5, 1.0, 2.0), bounds=None):
        x = np.asarray(x, dtype=float)
        K = len(nu)
        if x.shape != (2 * K + 6,):
            raise ValueError(f"expected {2 * K + 6} parameters, got {x.shape}")
        return cls(h_u=x[0], A=x[1:1 + K], B=x[1 + K:1 + 2 * K],
                   C=x[1 + 2 * K:3 + 2 * K], h_n=x[3 + 2 * K:5 + 2 * K],
                   T=x[5 + 2 * K], nu=nu, bounds=bounds or CrabBounds())

    def in_bounds(self, tol=0.0):
        box = self.bounds.vector_bounds(self.K)
        x = self.to_vector()
        return bool(np.all(x >= box[:, 0] - tol) and np.all(x <= box[:, 1] + tol))


def crab_evaluate(p, t):
    """Control value(s) ``(u, n1, n2)`` of the analytic class at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    tc = t - p.T / 2.0
    nu = np.asarray(p.nu)
    tt = t[..., None]
    series = np.sum(np.asarray(p.A) * np.sin(nu * tt) + np.asarray(p.B) * np.cos(nu * tt), axis=-1)
    u = np.exp(-p.h_u * tc ** 2) * series
    n1 = p.C[0] * np.exp(-p.h_n[0] * tc ** 2)
    n2 = p.C[1] * np.exp(-p.h_n[1] * tc ** 2)
    return np.stack(np.broadcast_arrays(u, n1, n2), axis=-1)


def sample_to_grid(p, N, mu, n_max):
    """Midpoint samples of the analytic control, clipped to the control box."""
    if N < 1:
        raise ValueError("N must be at least 1")
    mids = (np.arange(N) + 0.5) * (p.T / N)
    return ControlGrid.projected(p.T, crab_evaluate(p, mids), mu, n_max)
