"""Dense kernels for symmetric positive definite matrices.

Everything here goes through a symmetric eigendecomposition. The
matrices handled by the package are small (risk factor counts), so
exactness and symmetry by construction matter more than speed.
"""

import numpy as np

from .errors import NumericalError, ValidationError

# eigenvalues below this fraction of the largest one are rejected
SPD_RTOL = 1e-12
SYM_RTOL = 1e-10


def sym(A):
    """Symmetric part of a square matrix."""
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


def spd_violation(A, name="matrix"):
    """Describe why `A` is not SPD, or return None if it is.

    Parameters
    ----------
    A : array-like, shape (d, d)
    name : str
        Used in the message.

    Returns
    -------
    str or None
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return f"{name} is not square (shape {A.shape})"
    if not np.all(np.isfinite(A)):
        return f"{name} has non-finite entries"
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    if np.linalg.norm(A - A.T) > SYM_RTOL * scale:
        return f"{name} is not symmetric"
    lam = np.linalg.eigvalsh(sym(A))
    if lam[-1] <= 0 or lam[0] <= SPD_RTOL * lam[-1]:
        return f"{name} is not positive definite (eigenvalues in [{lam[0]:.3g}, {lam[-1]:.3g}])"
    return None


def check_spd(A, name="matrix", error=ValidationError):
    """Return the symmetrized matrix or raise `error` if it is not SPD."""
    msg = spd_violation(A, name)
    if msg is not None:
        raise error(msg)
    return sym(A)


def _eig(A, name):
    A = check_spd(A, name)
    lam, Q = np.linalg.eigh(A)
    return lam, Q


def spd_function(A, func, name="matrix"):
    """Apply a scalar function to the eigenvalues of an SPD matrix."""
    lam, Q = _eig(A, name)
    return sym((Q * func(lam)) @ Q.T)


def sqrt_spd(A):
    """Symmetric square root of an SPD matrix.

    Parameters
    ----------
    A : array-like, shape (d, d)

    Returns
    -------
    X : ndarray, shape (d, d)
        Symmetric positive definite with X @ X = A.
    """
    return spd_function(A, np.sqrt)


def inv_sqrt_spd(A):
    """Inverse of the symmetric square root of an SPD matrix."""
    return spd_function(A, lambda lam: 1.0 / np.sqrt(lam))


def sqrt_and_inv_sqrt(A):
    """Both A^{1/2} and A^{-1/2} from a single eigendecomposition."""
    lam, Q = _eig(A, "matrix")
    r = np.sqrt(lam)
    return sym((Q * r) @ Q.T), sym((Q / r) @ Q.T)


def solve_sylvester_spd(G, C):
    """Solve Y G + G Y = C for SPD `G`.

    In the eigenbasis G = Q diag(lam) Q^T the equation decouples into
    Yhat_ij = Chat_ij / (lam_i + lam_j), which is well defined because
    all lam_i > 0. The solution is symmetric whenever C is.

    Parameters
    ----------
    G : array-like, shape (d, d)
        Symmetric positive definite coefficient.
    C : array-like, shape (d, d)
        Right-hand side.

    Returns
    -------
    Y : ndarray, shape (d, d)
    """
    lam, Q = _eig(G, "Sylvester coefficient")
    C = np.asarray(C, dtype=float)
    if C.shape != (len(lam), len(lam)):
        raise ValidationError(f"right-hand side has shape {C.shape}, expected {(len(lam),) * 2}")
    Chat = Q.T @ C @ Q
    Y = Q @ (Chat / (lam[:, None] + lam[None, :])) @ Q.T
    if np.allclose(C, C.T, rtol=0, atol=1e-14 * (1 + np.abs(C).max())):
        Y = sym(Y)
    return Y


def geometric_mean(A, B):
    """Matrix geometric mean A # B = A^{1/2} (A^{-1/2} B A^{-1/2})^{1/2} A^{1/2}.

    Parameters
    ----------
    A, B : array-like, shape (d, d)
        Symmetric positive definite.

    Returns
    -------
    ndarray, shape (d, d)
        The unique SPD solution X of X A^{-1} X = B.
    """
    B = check_spd(B, "second argument")
    Ah, Aih = sqrt_and_inv_sqrt(A)
    inner = sym(Aih @ B @ Aih)
    return sym(Ah @ sqrt_spd(inner) @ Ah)


def sqrt_sandwich(R, S):
    """(R S R)^{1/2} for SPD R, S, with a numerical error on failure."""
    M = sym(R @ S @ R)
    msg = spd_violation(M, "iterate")
    if msg is not None:
        raise NumericalError(msg)
    return sqrt_spd(M)
