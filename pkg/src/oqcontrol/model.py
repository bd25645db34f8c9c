"""Two-qubit open system with one coherent and two incoherent controls.

Dynamics::

    drho/dt = -i[H0 + eps*Heff_n + V*u, rho] + eps * L_n(rho)

with ``H0 = sum_j omega_j/2 W_j``, ``Heff_n = sum_j lamb_j n_j W_j`` and the
controlled dissipator ``L_n`` built from the qubit raising/lowering operators.
A control value is the triple ``c = (u, n1, n2)``.
"""
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .qops import (
    I2,
    I4,
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    anticommutator,
    commutator,
    hs_inner,
    superoperator_matrix,
    tensor,
)

W1 = tensor(SIGMA_Z, I2)
W2 = tensor(I2, SIGMA_Z)
W = (W1, W2)
# (sigma_j^+, sigma_j^-) embedded on qubit j
SIGMA_J = (
    (tensor(SIGMA_PLUS, I2), tensor(SIGMA_MINUS, I2)),
    (tensor(I2, SIGMA_PLUS), tensor(I2, SIGMA_MINUS)),
)

INTERACTIONS = ("V1", "V2")


@dataclass(frozen=True)
class SystemParams:
    """Physical constants and control bounds.

    ``omega`` are the qubit frequencies, ``relax`` the relaxation
    coefficients, ``lamb`` the Lamb-shift coefficients; ``theta``/``phi`` are
    the spherical angles of the unit vectors defining ``Q1`` and ``Q2``.
    """

    eps: float = 0.1
    omega: tuple = (1.0, 0.5)
    relax: tuple = (0.5, 0.5)
    lamb: tuple = (0.5, 0.5)
    theta: tuple = (np.pi / 3, np.pi / 4)
    phi: tuple = (np.pi / 4, np.pi / 3)
    interaction: str = "V1"
    mu: float = 50.0
    n_max: float = 10.0

    def __post_init__(self):
        for name in ("omega", "relax", "lamb", "theta", "phi"):
            val = tuple(float(v) for v in getattr(self, name))
            if len(val) != 2:
                raise ValueError(f"{name} needs two entries, got {len(val)}")
            object.__setattr__(self, name, val)
        if self.interaction not in INTERACTIONS:
            raise ValueError(f"interaction must be one of {INTERACTIONS}")
        positive = [("eps", (self.eps,)), ("omega", self.omega),
                    ("relax", self.relax), ("lamb", self.lamb),
                    ("mu", (self.mu,)), ("n_max", (self.n_max,))]
        for name, vals in positive:
            if not all(np.isfinite(v) and v > 0 for v in vals):
                raise ValueError(f"{name} must be strictly positive, got {vals}")
        if not all(np.isfinite(self.theta + self.phi)):
            raise ValueError("angles must be finite")

    @property
    def bounds(self):
        """Lower and upper corners of the admissible control box."""
        return (np.array([-self.mu, 0.0, 0.0]),
                np.array([self.mu, self.n_max, self.n_max]))

    def with_angles(self, theta, phi):
        return replace(self, theta=tuple(theta), phi=tuple(phi))

    def lambda_vectors(self):
        return np.array([unit_vector(t, p) for t, p in zip(self.theta, self.phi)])


def unit_vector(theta, phi):
    return np.array([np.sin(theta) * np.cos(phi),
                     np.sin(theta) * np.sin(phi),
                     np.cos(theta)])


def angles_from_vector(v):
    """Spherical angles ``(theta, phi)`` of a nonzero 3-vector."""
    x, y, z = np.asarray(v, dtype=float) / np.linalg.norm(v)
    return float(np.arccos(np.clip(z, -1.0, 1.0))), float(np.arctan2(y, x))


def build_Q(theta, phi):
    lx, ly, lz = unit_vector(theta, phi)
    return lx * SIGMA_X + ly * SIGMA_Y + lz * SIGMA_Z


def build_V(params):
    q1 = build_Q(params.theta[0], params.phi[0])
    q2 = build_Q(params.theta[1], params.phi[1])
    if params.interaction == "V1":
        return tensor(q1, I2) + tensor(I2, q2)
    return tensor(q1, q2)


def free_hamiltonian(params):
    return sum(params.omega[j] / 2.0 * W[j] for j in range(2))


def hamiltonian(params, c):
    """``H0 + eps * sum_j lamb_j n_j W_j + V u`` for ``c = (u, n1, n2)``."""
    u, n1, n2 = c
    heff = params.lamb[0] * n1 * W1 + params.lamb[1] * n2 * W2
    return free_hamiltonian(params) + params.eps * heff + build_V(params) * u


def _check_n(n):
    n = tuple(float(v) for v in n)
    if len(n) != 2 or min(n) < 0:
        raise ValueError(f"incoherent controls must be two nonnegative values, got {n}")
    return n


def _decay(j, rho):
    sp, sm = SIGMA_J[j]
    return 2 * sm @ rho @ sp - anticommutator(sp @ sm, rho)


def _excite(j, rho):
    sp, sm = SIGMA_J[j]
    return 2 * sp @ rho @ sm - anticommutator(sm @ sp, rho)


def _decay_adj(j, chi):
    sp, sm = SIGMA_J[j]
    return 2 * sp @ chi @ sm - anticommutator(sp @ sm, chi)


def _excite_adj(j, chi):
    sp, sm = SIGMA_J[j]
    return 2 * sm @ chi @ sp - anticommutator(sm @ sp, chi)


def dissipator(params, n, rho):
    """Controlled dissipator (without the coupling factor ``eps``)."""
    n = _check_n(n)
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros((4, 4), dtype=complex)
    for j in range(2):
        om = params.relax[j]
        out += om * (n[j] + 1) * _decay(j, rho) + om * n[j] * _excite(j, rho)
    return out


def dissipator_adjoint(params, n, chi):
    """Hilbert-Schmidt adjoint of :func:`dissipator`."""
    n = _check_n(n)
    chi = np.asarray(chi, dtype=complex)
    out = np.zeros((4, 4), dtype=complex)
    for j in range(2):
        om = params.relax[j]
        out += om * (n[j] + 1) * _decay_adj(j, chi) + om * n[j] * _excite_adj(j, chi)
    return out


def rhs(params, c, rho):
    """Right-hand side of the master equation at control value ``c``."""
    h = hamiltonian(params, c)
    return -1j * commutator(h, rho) + params.eps * dissipator(params, c[1:], rho)


def rhs_adjoint(params, c, chi):
    """Adjoint generator: the costate obeys ``dchi/dt = -rhs_adjoint``."""
    h = hamiltonian(params, c)
    return -1j * commutator(h, chi) + params.eps * dissipator_adjoint(params, c[1:], chi)


def switching_K(params, chi, rho):
    """Switching functions ``(K^u, K^n1, K^n2)`` at the pair ``(chi, rho)``.

    These are the coefficients of the control in the Pontryagin function,
    i.e. the partial derivatives of ``<chi, rhs(c, rho)>`` with respect to
    ``u``, ``n1`` and ``n2``. The Lamb-shift term therefore carries the
    coupling ``eps`` like the dissipative term.
    """
    chi = np.asarray(chi, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    ku = hs_inner(chi, -1j * commutator(build_V(params), rho))
    out = [ku]
    for j in range(2):
        sp, sm = SIGMA_J[j]
        lamb_term = -1j * commutator(params.lamb[j] * W[j], rho)
        diss = 2 * sm @ rho @ sp + 2 * sp @ rho @ sm - anticommutator(I4, rho)
        out.append(hs_inner(chi, params.eps * (lamb_term + params.relax[j] * diss)))
    return np.real(np.array(out))


def h_bar(params, chi, rho):
    """Control-independent part of the Pontryagin function."""
    drift = -1j * commutator(free_hamiltonian(params), rho)
    diss = sum(params.relax[j] * _decay(j, rho) for j in range(2))
    return float(np.real(hs_inner(chi, drift + params.eps * diss)))


def pontryagin_h(params, chi, rho, c, alpha_hat=0, alpha=1.0, s=0, c_ref=(0.0, 0.0, 0.0)):
    """Pontryagin function with optional quadratic regularization.

    ``<K(chi, rho), c> - alpha_hat/(2 alpha) |c - s c_ref|^2 + h_bar(chi, rho)``
    """
    if alpha_hat and alpha <= 0:
        raise ValueError("alpha must be positive when regularization is on")
    c = np.asarray(c, dtype=float)
    value = float(switching_K(params, chi, rho) @ c) + h_bar(params, chi, rho)
    if alpha_hat:
        diff = c - s * np.asarray(c_ref, dtype=float)
        value -= alpha_hat / (2.0 * alpha) * float(diff @ diff)
    return value


def closed_form_Kn(t, T, eps, relax1, relax2):
    """Incoherent switching functions along the free evolution from the
    maximally mixed state towards ``diag(1, 0, 0, 0)``.

    Valid for ``c = 0``, ``rho0 = I/4`` and ``rho_target = diag(1, 0, 0, 0)``.
    Accepts scalar or array ``t``.
    """
    t = np.asarray(t, dtype=float)
    pref = np.exp(-2 * eps * (relax1 + relax2) * T)
    k1 = -pref * np.expm1(2 * eps * relax1 * t) * (2 * np.exp(2 * eps * relax2 * T) - 1) * eps * relax1
    k2 = -pref * np.expm1(2 * eps * relax2 * t) * (2 * np.exp(2 * eps * relax1 * T) - 1) * eps * relax2
    return k1, k2


def sphere_points(m):
    """``m`` unit vectors spread over the sphere by the generalized spiral.

    Heights are ``-1 + 2(k-1)/(m-1)`` so the first and last points sit on the
    south and north poles.
    """
    if m < 1:
        raise ValueError("need at least one point")
    if m == 1:
        return np.array([[0.0, 0.0, 1.0]])
    k = np.arange(1, m + 1)
    h = -1.0 + 2.0 * (k - 1) / (m - 1)
    theta = np.arccos(np.clip(h, -1.0, 1.0))
    phi = np.zeros(m)
    for i in range(1, m - 1):
        phi[i] = (phi[i - 1] + 3.6 / np.sqrt(m) / np.sqrt(1.0 - h[i] ** 2)) % (2 * np.pi)
    pts = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


@lru_cache(maxsize=256)
def liouvillian_stack(params):
    """Real generator matrices ``[M0, Mu, Mn1, Mn2]`` in Pauli coordinates.

    The generator at control ``c`` is ``M0 + u Mu + n1 Mn1 + n2 Mn2``; the
    costate generator is its transpose.
    """
    base = superoperator_matrix(lambda r: rhs(params, (0.0, 0.0, 0.0), r))
    mats = [base]
    for k in range(3):
        e = [0.0, 0.0, 0.0]
        e[k] = 1.0
        mats.append(superoperator_matrix(lambda r, e=tuple(e): rhs(params, e, r) - rhs(params, (0.0, 0.0, 0.0), r)))
    stack = np.array(mats)
    stack.setflags(write=False)
    return stack


def case1_params(**overrides):
    """Overlap-maximization setting: V1 with the tilted-axis angles."""
    return replace(SystemParams(), **overrides)


def steering_params(interaction="V1", **overrides):
    """State/overlap steering setting: Q1 = Q2 = sigma_x."""
    base = SystemParams(theta=(np.pi / 2, np.pi / 2), phi=(0.0, 0.0), interaction=interaction)
    return replace(base, **overrides)


def free_populations(params, p0, t):
    """Populations at time ``t`` of the uncontrolled evolution (``c = 0``).

    With ``n = 0`` each qubit relaxes into its first level at rate
    ``2 eps relax_j``, so a diagonal state evolves by a product of 2x2
    stochastic maps. ``p0`` is the initial diagonal.
    """
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (4,):
        raise ValueError("p0 must hold four populations")
    maps = []
    for g in params.relax:
        e = np.exp(-2.0 * params.eps * g * float(t))
        maps.append(np.array([[1.0, 1.0 - e], [0.0, e]]))
    return np.kron(maps[0], maps[1]) @ p0
