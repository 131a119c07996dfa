import numpy as np
import pytest

from ldgflow import tensor
from ldgflow.elastic import SpectralGrid
from ldgflow.errors import ConfigError
from ldgflow.initial import generate_initial


def test_zero():
    grid = SpectralGrid(2, 8)
    f = generate_initial({"kind": "zero"}, grid, 0)
    assert not f.values.any()
    assert tensor.rho_margin(f.values).min() == pytest.approx(1.0 / 3.0)


def test_uniform_uniaxial():
    grid = SpectralGrid(2, 8)
    f = generate_initial({"kind": "uniform_uniaxial", "s": 0.5}, grid, 0)
    m = tensor.rho_margin(f.values)
    assert np.allclose(m, 1.0 / 6.0, atol=1e-12)
    with pytest.raises(ConfigError):
        generate_initial({"kind": "uniform_uniaxial", "s": 1.2}, grid, 0)


def test_random_bandlimited_margin_and_determinism():
    grid = SpectralGrid(2, 32)
    spec = {"kind": "random_bandlimited", "kmax": 3, "margin_min": 0.1}
    f1 = generate_initial(spec, grid, 42)
    f2 = generate_initial(spec, grid, 42)
    f3 = generate_initial(spec, grid, 43)
    assert np.array_equal(f1.values, f2.values)
    assert not np.array_equal(f1.values, f3.values)
    mins = tensor.rho_margin(f1.values).min()
    # amplitude is pushed to the margin target (bisection to 2^-60)
    assert 0.1 - 1e-9 <= mins <= 0.1 + 1e-3
    # band limit respected
    vhat = np.fft.fftn(f1.values, axes=(0, 1))
    m = np.abs(np.fft.fftfreq(32, 1.0 / 32))
    outside = (m[:, None] > 3) | (m[None, :] > 3)
    assert np.max(np.abs(vhat[outside])) < 1e-8


def test_random_bandlimited_validation():
    grid = SpectralGrid(2, 16)
    with pytest.raises(ConfigError):
        generate_initial({"kind": "random_bandlimited", "margin_min": 0.4}, grid, 0)
    with pytest.raises(ConfigError):
        generate_initial({"kind": "random_bandlimited", "kmax": 100}, grid, 0)


@pytest.mark.parametrize("dim,geometry", [(2, "point"), (2, "line"), (3, "line"), (3, "plane")])
def test_near_boundary_floor_window(dim, geometry):
    grid = SpectralGrid(dim, 32)
    floor = 1e-4
    f = generate_initial(
        {"kind": "near_boundary", "geometry": geometry, "floor": floor}, grid, 0
    )
    margins = tensor.rho_margin(f.values)
    assert floor <= margins.min() <= 2.0 * floor
    # the minimum sits on the prescribed set {x_i = 1/2}: within one cell
    argmin = np.unravel_index(np.argmin(margins), margins.shape)
    codim = {"point": dim, "line": dim - 1, "plane": dim - 2}[geometry]
    for ax in range(dim - codim, dim):
        assert abs(argmin[ax] / grid.N - 0.5) <= 1.0 / grid.N + 1e-12
    assert margins.max() <= 1.0 / 3.0


def test_near_boundary_validation():
    with pytest.raises(ConfigError):
        generate_initial({"kind": "near_boundary", "geometry": "plane"},
                         SpectralGrid(2, 16), 0)
    with pytest.raises(ConfigError):
        generate_initial({"kind": "near_boundary", "floor": 0.5},
                         SpectralGrid(2, 16), 0)


def test_unknown_kind():
    with pytest.raises(ConfigError):
        generate_initial({"kind": "bogus"}, SpectralGrid(2, 8), 0)
