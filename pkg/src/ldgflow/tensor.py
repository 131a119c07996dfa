"""Q-tensor linear algebra on the 5-dimensional traceless-symmetric space.

A Q-tensor is stored as 5 real coordinates in the fixed orthonormal basis
``BASIS`` of traceless symmetric 3x3 matrices (Frobenius inner product).
All functions are pure and accept arbitrary leading batch dimensions.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "BASIS",
    "EigenData",
    "as_coords",
    "coords_to_matrix",
    "matrix_to_coords",
    "uniaxial_coords",
    "eigen",
    "eigvals",
    "rho_margin",
    "boundary_distance",
    "eigenvalue_box_projection",
    "PHYSICAL_DIAMETER",
]

_SQ2 = np.sqrt(2.0)
_SQ6 = np.sqrt(6.0)

# E1 = diag(1,-1,0)/sqrt2, E2 = diag(1,1,-2)/sqrt6, E3..E5 = normalized
# symmetric off-diagonal units (12, 13, 23).  Fixed once so that snapshot
# files are portable across builds.
BASIS = np.zeros((5, 3, 3))
BASIS[0] = np.diag([1.0, -1.0, 0.0]) / _SQ2
BASIS[1] = np.diag([1.0, 1.0, -2.0]) / _SQ6
BASIS[2, 0, 1] = BASIS[2, 1, 0] = 1.0 / _SQ2
BASIS[3, 0, 2] = BASIS[3, 2, 0] = 1.0 / _SQ2
BASIS[4, 1, 2] = BASIS[4, 2, 1] = 1.0 / _SQ2

BASIS_ID = "E5-v1"

# Frobenius diameter of the closure of the physical eigenvalue box
# {sum l_i = 0, -1/3 <= l_i <= 2/3}, realized by two oppositely oriented
# uniaxial tensors with s = 1.
PHYSICAL_DIAMETER = np.sqrt(2.0)

_TIE_TOL = 1e-12


class EigenData(NamedTuple):
    """Sorted eigenvalues (ascending) and the rotation whose columns are
    the corresponding eigenvectors."""

    lam: np.ndarray
    frame: np.ndarray


def as_coords(c) -> np.ndarray:
    """Validate and return 5-coordinate data as a float array.

    Rejects NaN/Inf up front so that the quadrature and Newton layers
    never see degenerate input.
    """
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != 5:
        raise ValueError(f"expected trailing dimension 5, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("non-finite Q-tensor coordinates")
    return c


def coords_to_matrix(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    return np.einsum("...a,aij->...ij", c, BASIS)


def matrix_to_coords(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.einsum("...ij,aij->...a", m, BASIS)


def uniaxial_coords(s, axis=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Coordinates of s*(n x n - I/3) for a unit director n."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    m = np.asarray(s)[..., None, None] * (np.einsum("i,j->ij", n, n) - np.eye(3) / 3.0)
    return matrix_to_coords(m)


def _eigh_coords(c):
    """Batched eigen-decomposition (ascending), no frame canonicalization."""
    lam, vec = np.linalg.eigh(coords_to_matrix(c))
    return lam, vec


def eigvals(c) -> np.ndarray:
    """Sorted (ascending) eigenvalues; cheap path when frames are not needed."""
    return np.linalg.eigvalsh(coords_to_matrix(as_coords(c)))


def _canonical_frame(lam, vec):
    """Deterministic frame for a single 3x3 decomposition.

    Near-degenerate eigenspaces are re-spanned by Gram-Schmidt of the fixed
    seed directions e1, e2, e3 so repeated runs and platforms agree.  The
    third column is the cross product of the first two, making det = +1.
    """
    vec = vec.copy()
    # group indices of (near-)equal eigenvalues
    groups = []
    start = 0
    for i in range(1, 3):
        if lam[i] - lam[i - 1] > _TIE_TOL:
            groups.append(range(start, i))
            start = i
    groups.append(range(start, 3))
    for g in groups:
        if len(g) == 1:
            continue
        proj = vec[:, g] @ vec[:, g].T  # projector onto the eigenspace
        cols = []
        for seed in np.eye(3):
            v = proj @ seed
            for u in cols:
                v = v - (u @ v) * u
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                cols.append(v / nv)
            if len(cols) == len(g):
                break
        vec[:, list(g)] = np.stack(cols, axis=1)
    # sign convention: largest-magnitude entry of each of the first two
    # columns is positive; third column completes a rotation
    for j in range(2):
        k = np.argmax(np.abs(vec[:, j]))
        if vec[k, j] < 0:
            vec[:, j] = -vec[:, j]
    vec[:, 2] = np.cross(vec[:, 0], vec[:, 1])
    return vec


def eigen(c) -> EigenData:
    """Eigen-decomposition with deterministic tie-breaking.

    Returns eigenvalues sorted non-decreasingly and a rotation matrix of
    eigenvectors; ``frame @ diag(lam) @ frame.T`` reconstructs the input.
    """
    c = as_coords(c)
    lam, vec = _eigh_coords(c)
    if c.ndim == 1:
        return EigenData(lam, _canonical_frame(lam, vec))
    flat_lam = lam.reshape(-1, 3)
    flat_vec = vec.reshape(-1, 3, 3)
    out = np.empty_like(flat_vec)
    for i in range(flat_lam.shape[0]):
        out[i] = _canonical_frame(flat_lam[i], flat_vec[i])
    return EigenData(lam, out.reshape(vec.shape))


def rho_margin(c) -> np.ndarray:
    """Distance of the eigenvalues to the physical box edges.

    rho(Q) = min_i {lambda_i + 1/3, 2/3 - lambda_i}; positive exactly on
    the physical tensors and at most 1/3 (tracelessness).
    """
    lam = eigvals(c)
    return np.minimum(lam[..., 0] + 1.0 / 3.0, 2.0 / 3.0 - lam[..., 2])


def margin_from_eigvals(lam) -> np.ndarray:
    lam = np.asarray(lam)
    return np.minimum(lam[..., 0] + 1.0 / 3.0, 2.0 / 3.0 - lam[..., 2])


def boundary_distance(c) -> np.ndarray:
    """Frobenius distance to the physical boundary, (sqrt6/2)(lambda_1 + 1/3).

    Raises ValueError on non-physical input (lambda_1 <= -1/3).
    """
    lam = eigvals(c)
    low = lam[..., 0] + 1.0 / 3.0
    if np.any(low <= 0):
        raise ValueError("boundary_distance requires a physical Q-tensor")
    return (np.sqrt(6.0) / 2.0) * low


def eigenvalue_box_projection(lam) -> np.ndarray:
    """Project an eigenvalue triple onto {sum a_i = 0, -1/3 <= a_i <= 2/3}.

    Euclidean projection via dual bisection on the trace multiplier; used
    for distance-to-domain estimates.
    """
    lam = np.asarray(lam, dtype=float)

    def clipped(mu):
        return np.clip(lam - mu, -1.0 / 3.0, 2.0 / 3.0)

    lo, hi = -2.0, 2.0
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        if clipped(mu).sum() > 0:
            lo = mu
        else:
            hi = mu
    return clipped(0.5 * (lo + hi))
