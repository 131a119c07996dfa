"""Anisotropic elastic energy on the periodic unit torus.

The elastic energy

    G(Q) = int L1 dk Qij dk Qij + L2 dj Qik dk Qij + L3 dj Qij dk Qik

is diagonal in Fourier space: on the 5-coordinate representation its
gradient acts per mode k = 2 pi m as a symmetric positive semidefinite
5x5 matrix.  Under periodic boundary conditions the L2 and L3 terms are
equal after integration by parts, so the operator depends on L2 + L3 only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .tensor import BASIS, as_coords

__all__ = [
    "ElasticParams",
    "SpectralGrid",
    "QField",
    "mode_operator",
    "elastic_energy",
    "elastic_gradient",
    "laplacian",
    "gradient_norm",
    "mean_value",
]


@dataclass(frozen=True)
class ElasticParams:
    """Elastic constants, the bulk quadratic coefficient and derived data.

    poincare_constant is optional; when None the decay diagnostics use both
    conventions (see diagnostics module).
    """

    L1: float
    L2: float
    L3: float
    alpha: float = 0.0
    poincare_constant: float | None = None

    def __post_init__(self):
        if not self.L1 > 3.0 * abs(self.L2 + self.L3):
            raise ConfigError(
                f"elastic constants must satisfy L1 > 3|L2+L3| "
                f"(got L1={self.L1}, L2+L3={self.L2 + self.L3})"
            )
        if self.alpha < 0:
            raise ConfigError("alpha must be nonnegative")
        if self.poincare_constant is not None and self.poincare_constant <= 0:
            raise ConfigError("poincare_constant must be positive")

    @property
    def l23(self) -> float:
        return self.L2 + self.L3

    @property
    def coercivity_low(self) -> float:
        """Lower operator coefficient 2(L1 - |L2+L3|)."""
        return 2.0 * (self.L1 - abs(self.l23))

    @property
    def coercivity_high(self) -> float:
        return 2.0 * (self.L1 + abs(self.l23))

    @property
    def C_L(self) -> float:
        """Constant relating ||Laplacian Q|| to the slope and ||Q||."""
        a = abs(self.l23)
        return (
            1.0
            / (2.0 * (self.L1 - a))
            * np.sqrt((self.L1 + a) / (self.L1 + a - 2.0 * np.sqrt(self.L1 * a)))
        )

    def poincare(self, dim: int) -> float:
        """Configured Poincare constant, defaulting to (2 pi)^dim."""
        if self.poincare_constant is not None:
            return self.poincare_constant
        return (2.0 * np.pi) ** dim


class SpectralGrid:
    """Uniform N^dim grid on the unit torus with cached wavevectors.

    Wavevectors are k = 2 pi m with integer m per axis (fftfreq layout).
    All tensor fields carry the 5 coordinates in a trailing axis.
    """

    def __init__(self, dim: int, N: int):
        if dim not in (2, 3):
            raise ConfigError("grid dimension must be 2 or 3")
        if N < 2 or (N & (N - 1)) != 0:
            raise ConfigError("grid size N must be a power of two >= 2")
        self.dim = dim
        self.N = N
        m = np.fft.fftfreq(N, d=1.0 / N)  # integer frequencies
        axes = np.meshgrid(*([m] * dim), indexing="ij")
        k = [2.0 * np.pi * a for a in axes]
        while len(k) < 3:
            k.append(np.zeros_like(k[0]))
        # kvec: grid + (3,) so the 3x3 tensor algebra is uniform in 2D/3D
        self.kvec = np.stack(k, axis=-1)
        self.k2 = np.sum(self.kvec**2, axis=-1)
        self.shape = (N,) * dim
        self.cell_volume = 1.0 / N**dim
        # W[..., a, i] = (E_a k)_i, the symbol's anisotropic factor
        self._W = np.einsum("aij,...j->...ai", BASIS, self.kvec)

    @property
    def n_points(self) -> int:
        return self.N**self.dim

    def coords(self):
        """Per-axis spatial coordinate arrays (meshgrid, ij indexing)."""
        x = np.arange(self.N) / self.N
        return np.meshgrid(*([x] * self.dim), indexing="ij")


@dataclass
class QField:
    """Periodic grid of Q-tensors in 5-coordinate representation."""

    grid: SpectralGrid
    values: np.ndarray  # shape grid.shape + (5,)

    def __post_init__(self):
        self.values = as_coords(self.values)
        if self.values.shape != self.grid.shape + (5,):
            raise ValueError(
                f"field shape {self.values.shape} does not match grid "
                f"{self.grid.shape + (5,)}"
            )

    def copy(self) -> "QField":
        return QField(self.grid, self.values.copy())

    def l2_norm_sq(self) -> float:
        """Squared L2 norm, grid sum times cell volume."""
        return float(np.sum(self.values**2) * self.grid.cell_volume)


def _fft(values, grid):
    return np.fft.fftn(values, axes=tuple(range(grid.dim)))


def _ifft(vhat, grid):
    return np.real(np.fft.ifftn(vhat, axes=tuple(range(grid.dim))))


def mode_operator(k, p: ElasticParams) -> np.ndarray:
    """Fourier symbol of the elastic gradient at wavevector k (length 3).

    M(k) = 2 L1 |k|^2 I + 2 (L2+L3) S with S_ab = (E_a k).(E_b k); the
    trace-correction term of the raw symbol vanishes identically on the
    traceless basis, so no extra projection is needed.
    """
    k = np.asarray(k, dtype=float)
    if k.shape != (3,):
        raise ValueError("wavevector must have length 3")
    W = np.einsum("aij,j->ai", BASIS, k)
    S = W @ W.T
    return 2.0 * p.L1 * (k @ k) * np.eye(5) + 2.0 * p.l23 * S


def _apply_symbol(vhat, grid: SpectralGrid, p: ElasticParams):
    """Apply M(k) to spectral coefficients, vectorized over all modes."""
    u = np.einsum("...ai,...a->...i", grid._W, vhat)
    aniso = np.einsum("...ai,...i->...a", grid._W, u)
    return 2.0 * p.L1 * grid.k2[..., None] * vhat + 2.0 * p.l23 * aniso


def elastic_gradient(f: QField, p: ElasticParams) -> QField:
    """Per-mode application of the elastic symbol; <grad, Q> = 2 G(Q)."""
    vhat = _fft(f.values, f.grid)
    return QField(f.grid, _ifft(_apply_symbol(vhat, f.grid, p), f.grid))


def elastic_energy(f: QField, p: ElasticParams) -> float:
    """Spectral evaluation of G(Q), exact for band-limited fields."""
    grid = f.grid
    vhat = _fft(f.values, grid)
    mv = _apply_symbol(vhat, grid, p)
    # G = (1/2) <M Q, Q>_{L^2}; Parseval with fftn normalization 1/N^dim
    total = np.sum(np.real(np.conj(vhat) * mv))
    return float(0.5 * total / grid.n_points**2)


def laplacian(f: QField) -> QField:
    vhat = _fft(f.values, f.grid)
    return QField(f.grid, _ifft(-f.grid.k2[..., None] * vhat, f.grid))


def gradient_norm(f: QField) -> float:
    """L2 norm of the spatial gradient, ||grad Q||, via Parseval."""
    vhat = _fft(f.values, f.grid)
    s = np.sum(f.grid.k2[..., None] * np.abs(vhat) ** 2)
    return float(np.sqrt(s) / f.grid.n_points)


def mean_value(f: QField) -> np.ndarray:
    """Spatial mean Q-bar (the k=0 Fourier coefficient), 5 coordinates."""
    return f.values.reshape(-1, 5).mean(axis=0)
