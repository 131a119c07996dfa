import numpy as np
import pytest

from ldgflow import diagnostics, flow, tensor
from ldgflow.elastic import ElasticParams, QField, SpectralGrid
from ldgflow.initial import generate_initial

P = ElasticParams(0.05, 0.005, 0.005, alpha=0.1)


def test_box_counts_full_and_point():
    mask = np.ones((64, 64), dtype=bool)
    counts = diagnostics.box_counts(mask)
    assert counts[4 / 64] == 16 * 16
    assert abs(diagnostics.dim_estimate_from_counts(counts) - 2.0) < 0.1
    point = np.zeros((64, 64), dtype=bool)
    point[32, 32] = True
    cp = diagnostics.box_counts(point)
    assert all(c == 1 for c in cp.values())
    assert abs(diagnostics.dim_estimate_from_counts(cp)) < 1e-12


def test_box_counts_nesting_random():
    rng = np.random.Generator(np.random.Philox(20))
    for dim in (2, 3):
        mask = rng.random((32,) * dim) < 0.03
        counts = diagnostics.box_counts(mask)
        rs = sorted(counts)
        for r_small, r_big in zip(rs[:-1], rs[1:]):
            assert counts[r_big] <= counts[r_small] <= 2**dim * counts[r_big]


def test_box_counts_bad_radius():
    with pytest.raises(ValueError):
        diagnostics.box_counts(np.ones((32, 32), dtype=bool), radii=[3 / 32])


def test_dim_estimate_empty():
    counts = {0.25: 0, 0.125: 0}
    assert diagnostics.dim_estimate_from_counts(counts) is None


def test_holder_seminorm_constant_and_single_mode():
    grid = SpectralGrid(2, 128)
    f0 = QField(grid, np.broadcast_to(tensor.uniaxial_coords(0.3),
                                      grid.shape + (5,)).copy())
    assert diagnostics.holder_seminorm(f0) == 0.0
    x, _ = grid.coords()
    values = np.zeros(grid.shape + (5,))
    amp = 0.2
    values[..., 0] = amp * np.sin(2.0 * np.pi * x)
    f = QField(grid, values)
    measured = diagnostics.holder_seminorm(f, 0.5)
    # analytic: sup_h 2 amp sin(pi h) / h^(1/2) over periodic distances
    h = np.linspace(1e-6, 0.5, 200001)
    analytic = np.max(2.0 * amp * np.sin(np.pi * h) / np.sqrt(h))
    assert abs(measured - analytic) / analytic < 0.05
    # refinement changes the value by < 10%
    grid2 = SpectralGrid(2, 256)
    x2, _ = grid2.coords()
    v2 = np.zeros(grid2.shape + (5,))
    v2[..., 0] = amp * np.sin(2.0 * np.pi * x2)
    measured2 = diagnostics.holder_seminorm(QField(grid2, v2), 0.5)
    assert abs(measured2 - measured) / measured < 0.10


def test_holder_seminorm_validation():
    grid = SpectralGrid(2, 16)
    f = QField(grid, np.zeros(grid.shape + (5,)))
    with pytest.raises(ValueError):
        diagnostics.holder_seminorm(f, 1.5)


def test_blowup_scan_rows_and_bound():
    rows = diagnostics.blowup_rate_scan(n_margins=4, n_configs=5, margin_lo=1e-4,
                                        margin_hi=1e-2)
    assert len(rows) == 20
    from ldgflow.potential import constant_C1

    assert min(r["product"] for r in rows) >= constant_C1()
    # the gradient norm grows as the margin shrinks
    by_margin = {}
    for r in rows:
        by_margin.setdefault(r["margin"], []).append(r["grad_norm"])
    ms = sorted(by_margin)
    assert max(by_margin[ms[0]]) > max(by_margin[ms[-1]])


def test_grad_decay_check_statuses():
    q0 = generate_initial(
        {"kind": "random_bandlimited", "kmax": 2, "margin_min": 0.2},
        SpectralGrid(2, 16), 8,
    )
    traj = flow.run(q0, 0.3, flow.SchemeConfig(tau=5e-3), P)
    rep = diagnostics.grad_decay_check(traj, P)
    assert rep.status == "ok"
    assert rep.rate_measured is not None and rep.rate_measured < 0
    assert rep.rate_bound_spectral == pytest.approx(
        4.0 * (-(P.L1 - abs(P.l23)) * (2.0 * np.pi) ** 2 + P.alpha)
    )
    assert rep.rate_bound_volume_convention > rep.rate_bound_spectral
    d = rep.to_dict()
    assert "rate_measured" in d and len(d["margin_series"]) == len(traj.series["t"])


def test_mean_deviation_check():
    q0 = generate_initial(
        {"kind": "random_bandlimited", "kmax": 2, "margin_min": 0.2},
        SpectralGrid(2, 16), 9,
    )
    traj = flow.run(q0, 0.02, flow.SchemeConfig(tau=5e-3), P)
    ratios = diagnostics.mean_deviation_check(traj)
    assert len(ratios) == len(traj.snap_times)
    assert np.all(np.isfinite(ratios)) and np.all(ratios > 0)


def test_h2_bound_check_holds():
    q0 = generate_initial(
        {"kind": "random_bandlimited", "kmax": 2, "margin_min": 0.2},
        SpectralGrid(2, 16), 10,
    )
    traj = flow.run(q0, 0.05, flow.SchemeConfig(tau=5e-3), P)
    out = diagnostics.h2_bound_check(traj, P, traj.series["energy"][0])
    assert all(row["sharp_ok"] for row in out)
    assert all(row["apriori_ok"] for row in out)


def test_contact_report_empty_and_synthetic():
    grid = SpectralGrid(2, 64)
    q0 = generate_initial(
        {"kind": "near_boundary", "geometry": "line", "floor": 1e-2}, grid, 0
    )
    reports = diagnostics.contact_report(q0, [1e-3, 1.2e-2])
    by_eps = {r.epsilon: r for r in reports}
    assert by_eps[1e-3].status == "empty set"
    rep = by_eps[1.2e-2]
    assert rep.dim_estimate is not None
    assert abs(rep.dim_estimate - 1.0) < 0.3  # thin strip around the line
    assert rep.inequality_ok is True
    d = rep.to_dict()
    assert "mask" not in d and d["epsilon"] == 1.2e-2


def test_gamma_study_zero_initial():
    grid = SpectralGrid(2, 8)
    q0 = QField(grid, np.zeros(grid.shape + (5,)))
    c = flow.SchemeConfig(tau=5e-3)
    rep = diagnostics.gamma_study(q0, 0.02, [4, 16], c, P)
    assert rep["l2_final"] == [0.0, 0.0]
    assert np.allclose(rep["energy_excess_final"], 0.0, atol=1e-12)
    assert rep["l2_monotone"] and rep["excess_monotone"]
