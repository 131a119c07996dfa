"""Initial-data generators for flow runs.

Every generator returns a pointwise physical QField, deterministic in the
seed (counter-based Philox stream).  Specs are plain dicts so they map
directly onto the flat run-config keys (initial.kind, initial.s, ...).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .elastic import QField, SpectralGrid
from . import tensor

__all__ = ["generate_initial"]


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def _bandlimited_noise(grid: SpectralGrid, kmax: int, rng) -> np.ndarray:
    """Real random field with modes |m_i| <= kmax, unit peak amplitude."""
    vhat = np.zeros(grid.shape + (5,), dtype=complex)
    m = np.fft.fftfreq(grid.N, 1.0 / grid.N)
    mask = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        shape = [1] * grid.dim
        shape[ax] = -1
        mask &= np.abs(m).reshape(shape) <= kmax
    idx = np.where(mask)
    coef = rng.normal(size=(len(idx[0]), 5)) + 1j * rng.normal(size=(len(idx[0]), 5))
    vhat[idx] = coef
    v = np.real(np.fft.ifftn(vhat, axes=tuple(range(grid.dim))))
    return v / np.max(np.abs(v))


def _scale_to_margin(values, margin_min):
    """Largest amplitude (by bisection) whose min eigenvalue margin stays
    at or above margin_min.  Margin at amplitude 0 is 1/3."""
    def min_margin(a):
        return float(tensor.rho_margin(a * values).min())

    a_hi = 1.0
    while min_margin(a_hi) > margin_min:
        a_hi *= 2.0
        if a_hi > 1e6:
            return a_hi * values
    a_lo = 0.0
    for _ in range(60):
        mid = 0.5 * (a_lo + a_hi)
        if min_margin(mid) >= margin_min:
            a_lo = mid
        else:
            a_hi = mid
    return a_lo * values


def _periodic_dist_sq(grid: SpectralGrid, codim: int) -> np.ndarray:
    """Squared periodic distance to the set {x_i = 1/2 for the last codim
    axes}; codim = dim gives a point, dim-1 a line, dim-2 a plane."""
    axes = grid.coords()
    d2 = np.zeros(grid.shape)
    for ax in axes[grid.dim - codim :]:
        d = np.abs(ax - 0.5)
        d = np.minimum(d, 1.0 - d)
        d2 = d2 + d * d
    return d2


def generate_initial(spec: dict, grid: SpectralGrid, seed: int) -> QField:
    """Build a physical initial field from a generator spec.

    Kinds: zero | uniform_uniaxial | random_bandlimited | near_boundary.
    """
    kind = spec.get("kind")
    if kind == "zero":
        return QField(grid, np.zeros(grid.shape + (5,)))

    if kind == "uniform_uniaxial":
        s = float(spec.get("s", 0.3))
        axis = spec.get("axis", (0.0, 0.0, 1.0))
        q = tensor.uniaxial_coords(s, axis)
        if tensor.rho_margin(q) <= 0:
            raise ConfigError(f"uniaxial parameter s={s} is not physical")
        return QField(grid, np.broadcast_to(q, grid.shape + (5,)).copy())

    if kind == "random_bandlimited":
        kmax = int(spec.get("kmax", 4))
        margin_min = float(spec.get("margin_min", 0.05))
        if not 0 < margin_min < 1.0 / 3.0:
            raise ConfigError("margin_min must lie in (0, 1/3)")
        if kmax < 1 or kmax > grid.N // 2:
            raise ConfigError("kmax must lie in [1, N/2]")
        noise = _bandlimited_noise(grid, kmax, _rng(seed))
        return QField(grid, _scale_to_margin(noise, margin_min))

    if kind == "near_boundary":
        geometry = spec.get("geometry", "point")
        floor = float(spec.get("floor", 1e-3))
        profile = spec.get("profile", "quadratic")
        if profile != "quadratic":
            raise ConfigError(f"unknown margin profile {profile!r}")
        if not 0 < floor < 1.0 / 3.0:
            raise ConfigError("margin floor must lie in (0, 1/3)")
        codim = {"point": grid.dim, "line": grid.dim - 1, "plane": grid.dim - 2}.get(
            geometry
        )
        if codim is None or codim < 1:
            raise ConfigError(
                f"geometry {geometry!r} not available in dimension {grid.dim}"
            )
        d2 = _periodic_dist_sq(grid, codim)
        # quadratic growth away from the set, saturating well inside the
        # physical box so the uniaxial parameter stays in (0, 1)
        m_max = 0.25
        curvature = 40.0
        # tiny upward nudge keeps the recomputed eigenvalue margin at or
        # above the requested floor despite eigensolver rounding
        base = floor * (1.0 + 1e-9)
        margin = base + curvature * d2 / (1.0 + curvature * d2 / (m_max - base))
        s = 1.0 - 3.0 * margin  # uniaxial margin is (1 - s)/3
        values = tensor.uniaxial_coords(s, (0.0, 0.0, 1.0))
        return QField(grid, values)

    raise ConfigError(f"unknown initial-data kind {kind!r}")
