"""Compiled RK4 loops over the real 16-dimensional Pauli coordinates.

The generator at control ``c`` is stored sparsely: entry ``k`` sits at
``(rows[k], cols[k])`` with value ``vals[0, k] + c0 vals[1, k] + c1 vals[2, k]
+ c2 vals[3, k]``. Passing ``rows`` and ``cols`` swapped gives the transpose,
which is how the costate is integrated.

Each subinterval is split into an even number of RK4 substeps, at least
``min_sub`` and enough that ``h * ||M(c)|| <= kappa`` where ``norms`` holds
the operator norms of the four generator pieces. The count depends only on
the subinterval's control, so forward and transposed solves on the same grid
use identical steps.
"""
import numpy as np
from numba import njit

DIM = 16


@njit(cache=True)
def _assemble(vals, c0, c1, c2, out):
    for k in range(vals.shape[1]):
        out[k] = vals[0, k] + c0 * vals[1, k] + c1 * vals[2, k] + c2 * vals[3, k]


@njit(cache=True)
def _matvec(rows, cols, a, x, out):
    for p in range(DIM):
        out[p] = 0.0
    for k in range(a.shape[0]):
        out[rows[k]] += a[k] * x[cols[k]]


@njit(cache=True)
def _rk4(rows, cols, a, x, h, nsteps, k, acc, tmp):
    """``nsteps`` classical RK4 steps of size ``h`` on ``x' = A x`` (in place)."""
    for _ in range(nsteps):
        _matvec(rows, cols, a, x, k)
        for p in range(DIM):
            acc[p] = k[p]
            tmp[p] = x[p] + 0.5 * h * k[p]
        _matvec(rows, cols, a, tmp, k)
        for p in range(DIM):
            acc[p] += 2.0 * k[p]
            tmp[p] = x[p] + 0.5 * h * k[p]
        _matvec(rows, cols, a, tmp, k)
        for p in range(DIM):
            acc[p] += 2.0 * k[p]
            tmp[p] = x[p] + h * k[p]
        _matvec(rows, cols, a, tmp, k)
        for p in range(DIM):
            x[p] += h / 6.0 * (acc[p] + k[p])


@njit(cache=True)
def _finite(x):
    for p in range(DIM):
        if not np.isfinite(x[p]):
            return False
    return True


@njit(cache=True)
def n_substeps(norms, c0, c1, c2, dt, min_sub, kappa):
    bound = norms[0] + abs(c0) * norms[1] + abs(c1) * norms[2] + abs(c2) * norms[3]
    n = 2 * int(np.ceil(dt * bound / (2.0 * kappa)))
    return max(min_sub, n)


@njit(cache=True)
def interval_step(rows, cols, vals, c, dt, x0, norms, min_sub, kappa):
    """Propagate one subinterval at constant control; returns (end, midpoint)."""
    a = np.empty(vals.shape[1])
    _assemble(vals, c[0], c[1], c[2], a)
    k = np.empty(DIM)
    acc = np.empty(DIM)
    tmp = np.empty(DIM)
    x = x0.copy()
    substeps = n_substeps(norms, c[0], c[1], c[2], dt, min_sub, kappa)
    h = dt / substeps
    half = substeps // 2
    _rk4(rows, cols, a, x, h, half, k, acc, tmp)
    mid = x.copy()
    _rk4(rows, cols, a, x, h, substeps - half, k, acc, tmp)
    return x, mid


@njit(cache=True)
def propagate_pc(rows, cols, vals, ctrl, dt, x0, reverse, norms, min_sub, kappa):
    """Piecewise-constant propagation over all subintervals.

    Forward runs start at node 0; reverse runs start at node N and step
    towards node 0 with ``ctrl[i]`` active on subinterval ``i``. Returns the
    node states, the subinterval midpoint states and the index of the first
    subinterval that produced non-finite values (-1 if none).
    """
    N = ctrl.shape[0]
    xs = np.empty((N + 1, DIM))
    xm = np.empty((N, DIM))
    a = np.empty(vals.shape[1])
    k = np.empty(DIM)
    acc = np.empty(DIM)
    tmp = np.empty(DIM)
    x = x0.copy()
    start = N if reverse else 0
    for p in range(DIM):
        xs[start, p] = x[p]
    for j in range(N):
        i = N - 1 - j if reverse else j
        substeps = n_substeps(norms, ctrl[i, 0], ctrl[i, 1], ctrl[i, 2], dt, min_sub, kappa)
        h = dt / substeps
        half = substeps // 2
        _assemble(vals, ctrl[i, 0], ctrl[i, 1], ctrl[i, 2], a)
        _rk4(rows, cols, a, x, h, half, k, acc, tmp)
        for p in range(DIM):
            xm[i, p] = x[p]
        _rk4(rows, cols, a, x, h, substeps - half, k, acc, tmp)
        node = i if reverse else i + 1
        for p in range(DIM):
            xs[node, p] = x[p]
        if not _finite(x):
            return xs, xm, i
    return xs, xm, -1


@njit(cache=True)
def _law(K, i, kind, ref, s, alpha, lo, hi, tol, policy, out):
    for ch in range(3):
        if kind == 0:
            if K[ch] > tol[ch]:
                v = hi[ch]
            elif K[ch] < -tol[ch]:
                v = lo[ch]
            elif policy == 0:
                v = 0.0
            else:
                v = ref[i, ch]
        else:
            v = s * ref[i, ch] + alpha * K[ch]
        if v < lo[ch]:
            v = lo[ch]
        elif v > hi[ch]:
            v = hi[ch]
        out[ch] = v


@njit(cache=True)
def _switch(W, x, out):
    for ch in range(3):
        v = 0.0
        for p in range(DIM):
            v += W[ch, p] * x[p]
        out[ch] = v


@njit(cache=True)
def propagate_feedback(rows, cols, vals, dt, x0, reverse, norms, min_sub, kappa,
                       w_nodes, w_mid, kind, ref, s, alpha, lo, hi, tol, policy):
    """Closed-loop propagation with a switching-function control law.

    On each subinterval the switching functions are ``K = W(t) . x`` where
    ``W`` comes from the frozen background trajectory. The control is fixed
    per subinterval and chosen at the midpoint: starting from the law at the
    entry node, a half-interval step predicts the midpoint state and the law
    is re-evaluated there. The regularized law (``kind`` 1,
    ``clip(s ref + alpha K)``) uses one such correction. The bang-bang law
    (``kind`` 0; singular value 0 for ``policy`` 0, the reference value for
    ``policy`` 1) repeats the correction until the decision reproduces
    itself, at most three times; subintervals where it does not are flagged
    as chattering.

    Returns node states, midpoint states, realized controls, the switching
    values behind each decision, per-subinterval flags (bit 0: a singular
    branch decided some channel, bit 1: chattering) and the failing
    subinterval index (-1 if none).
    """
    N = ref.shape[0]
    xs = np.empty((N + 1, DIM))
    xm = np.empty((N, DIM))
    ctrl = np.empty((N, 3))
    kmid = np.empty((N, 3))
    flags = np.zeros(N, dtype=np.int64)
    a = np.empty(vals.shape[1])
    k = np.empty(DIM)
    acc = np.empty(DIM)
    tmp = np.empty(DIM)
    xp = np.empty(DIM)
    K = np.empty(3)
    c = np.empty(3)
    cn = np.empty(3)
    x = x0.copy()
    rounds = 3 if kind == 0 else 1
    start = N if reverse else 0
    for p in range(DIM):
        xs[start, p] = x[p]
    for j in range(N):
        i = N - 1 - j if reverse else j
        entry = i + 1 if reverse else i
        _switch(w_nodes[entry], x, K)
        _law(K, i, kind, ref, s, alpha, lo, hi, tol, policy, c)
        settled = False
        for _ in range(rounds):
            substeps = n_substeps(norms, c[0], c[1], c[2], dt, min_sub, kappa)
            h = dt / substeps
            _assemble(vals, c[0], c[1], c[2], a)
            for p in range(DIM):
                xp[p] = x[p]
            _rk4(rows, cols, a, xp, h, substeps // 2, k, acc, tmp)
            _switch(w_mid[i], xp, K)
            _law(K, i, kind, ref, s, alpha, lo, hi, tol, policy, cn)
            same = True
            for ch in range(3):
                if cn[ch] != c[ch]:
                    same = False
                c[ch] = cn[ch]
            if same:
                settled = True
                break
        if kind == 0:
            for ch in range(3):
                if abs(K[ch]) <= tol[ch]:
                    flags[i] |= 1
            if not settled:
                flags[i] |= 2
        for ch in range(3):
            ctrl[i, ch] = c[ch]
            kmid[i, ch] = K[ch]
        substeps = n_substeps(norms, c[0], c[1], c[2], dt, min_sub, kappa)
        h = dt / substeps
        half = substeps // 2
        _assemble(vals, c[0], c[1], c[2], a)
        _rk4(rows, cols, a, x, h, half, k, acc, tmp)
        for p in range(DIM):
            xm[i, p] = x[p]
        _rk4(rows, cols, a, x, h, substeps - half, k, acc, tmp)
        node = i if reverse else i + 1
        for p in range(DIM):
            xs[node, p] = x[p]
        if not _finite(x):
            return xs, xm, ctrl, kmid, flags, i
    return xs, xm, ctrl, kmid, flags, -1
