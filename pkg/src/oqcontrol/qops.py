"""Dense 2x2 / 4x4 complex matrix primitives for the two-qubit model.

Besides the textbook operations this module owns the real coordinate system
used by the propagators: a Hermitian 4x4 matrix ``A`` is mapped to the 16
real numbers ``x_a = Tr(B_a A)`` where ``B_a = (P_i ⊗ P_j) / 2`` runs over the
normalized two-qubit Pauli strings. The basis is orthonormal for the
Hilbert-Schmidt product, so ``Tr(A B) = x(A) · x(B)`` for Hermitian A, B, and
any Hermiticity-preserving superoperator becomes a real 16x16 matrix.
"""
import numpy as np

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-8
TRACE_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# raising / lowering in the convention where index 0 is the ground level
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)

_PAULIS = (I2, SIGMA_X, SIGMA_Y, SIGMA_Z)
PAULI_BASIS = np.array([np.kron(p, q) / 2.0 for p in _PAULIS for q in _PAULIS])


def tensor(a, b):
    """Kronecker product; block (i, j) of the result is ``a[i, j] * b``."""
    return np.kron(np.asarray(a), np.asarray(b))


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def hs_inner(a, b):
    """Hilbert-Schmidt pairing ``Tr(a† b)``."""
    return np.vdot(np.asarray(a), np.asarray(b))


def commutator(a, b):
    return a @ b - b @ a


def anticommutator(a, b):
    return a @ b + b @ a


def hermiticity_error(a):
    a = np.asarray(a)
    return float(np.max(np.abs(a - dagger(a))))


def is_hermitian(a, tol=HERMITIAN_TOL):
    return hermiticity_error(a) <= tol


def eig_hermitian(a, vectors=False, tol=HERMITIAN_TOL):
    """Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.

    Raises:
        ValueError: if ``a`` deviates from Hermitian by more than ``tol``
            (elementwise).
    """
    a = np.asarray(a, dtype=complex)
    err = hermiticity_error(a)
    if err > tol:
        raise ValueError(f"matrix is not Hermitian (max |A - A^H| = {err:.3e})")
    herm = 0.5 * (a + dagger(a))
    if vectors:
        return np.linalg.eigh(herm)
    return np.linalg.eigvalsh(herm)


def check_density_matrix(rho, trace_tol=TRACE_TOL, herm_tol=HERMITIAN_TOL,
                         psd_tol=PSD_TOL):
    """Validate a density matrix, returning it as a complex array.

    Raises:
        ValueError: on wrong shape, non-unit trace, non-Hermiticity or a
            negative eigenvalue below ``-psd_tol``.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"expected a 4x4 density matrix, got shape {rho.shape}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"trace is {tr.real:.12g}, expected 1")
    lam = eig_hermitian(rho, tol=herm_tol)
    if lam[0] < -psd_tol:
        raise ValueError(f"smallest eigenvalue {lam[0]:.3e} is negative")
    return rho


def to_coords(a):
    """Real Pauli coordinates of a Hermitian matrix (or a stack of them)."""
    a = np.asarray(a)
    # Tr(B_a A) = sum_ij B_a[j, i] A[i, j]
    return np.real(np.einsum("kji,...ij->...k", PAULI_BASIS, a))


def from_coords(x):
    """Inverse of :func:`to_coords`."""
    return np.einsum("...k,kij->...ij", np.asarray(x, dtype=float), PAULI_BASIS)


def superoperator_matrix(fn, zero_tol=1e-15):
    """Real 16x16 matrix of a Hermiticity-preserving linear map ``fn``.

    Entries below ``zero_tol`` relative to the largest entry are dropped so
    the sparsity pattern is structural, not round-off.
    """
    images = np.array([to_coords(fn(b)) for b in PAULI_BASIS])  # (col, row)
    mat = images.T.copy()
    scale = np.max(np.abs(mat)) if mat.size else 0.0
    mat[np.abs(mat) <= zero_tol * max(scale, 1.0)] = 0.0
    return mat
