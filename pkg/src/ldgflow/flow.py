"""Time integration of the gradient flow of the total energy.

Two schemes advance the flow dQ/dt = -(elastic gradient + bulk gradient):

* semi-implicit: the elastic operator is treated implicitly per Fourier
  mode, the bulk part explicitly, with backtracking on the time step when
  a step would leave the physical set;
* minimizing movement: each step minimizes
  Phi(v) = ||v - w||^2 / (2 tau) + E(v) exactly (to inner_tol) with a
  Douglas-Rachford splitting whose two proximal maps are both available in
  closed form (quadratic part per mode, entropic part per grid point).

An approximate flow replaces the singular bulk term by the gradient of its
Moreau-Yosida envelope of index n, which is defined on all of space.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError, SolverStallError
from .elastic import (
    ElasticParams,
    QField,
    elastic_energy,
    elastic_gradient,
    gradient_norm,
    mean_value,
)
from . import potential, tensor

__all__ = [
    "FlowState",
    "SchemeConfig",
    "Trajectory",
    "total_energy",
    "total_energy_components",
    "total_gradient",
    "step_semi_implicit",
    "step_minimizing_movement",
    "run",
    "approx_flow_run",
    "energy_identity_residual",
    "evi_residual",
    "SERIES_COLUMNS",
]

SERIES_COLUMNS = (
    "t",
    "energy",
    "elastic",
    "bulk",
    "quad",
    "slope_l2",
    "grad_l2_sq",
    "min_margin",
    "linf_dev_mean",
    "eff_tau",
)


@dataclass
class SchemeConfig:
    kind: str = "semi_implicit"  # | minimizing_movement | approx_flow
    tau: float = 1e-3
    inner_tol: float = 1e-10
    max_inner: int = 500
    backtrack_factor: float = 0.5
    n: int | None = None  # Moreau-Yosida index for approx_flow

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ConfigError("backtrack_factor must lie in (0, 1)")
        if self.kind not in ("semi_implicit", "minimizing_movement", "approx_flow"):
            raise ConfigError(f"unknown scheme kind {self.kind!r}")
        if self.kind == "approx_flow":
            if self.n is None or self.n <= 0:
                raise ConfigError("approx_flow requires a positive index n")
            # grad of the envelope is 2n-Lipschitz; explicit treatment of
            # the bulk term needs tau within the stability window
            if self.tau > 0.5 / self.n:
                raise ConfigError(
                    f"approx_flow with n={self.n} requires tau <= {0.5 / self.n}"
                )

    def validate_against(self, p: ElasticParams):
        if self.kind == "minimizing_movement" and p.alpha > 0:
            if self.tau >= 1.0 / (2.0 * p.alpha):
                raise ConfigError(
                    f"minimizing movement requires tau < 1/(2 alpha) = "
                    f"{1.0 / (2.0 * p.alpha)}"
                )


@dataclass
class FlowState:
    t: float
    field: QField
    energy: float
    slope: float
    step_report: dict = dc_field(default_factory=dict)
    warm_nu: np.ndarray | None = None  # dual warm starts, one per grid point
    psi_grads: np.ndarray | None = None  # cached pointwise psi' over the grid


# quadrature tolerance on the flow's inner loops: one decade above the
# Newton moment tolerance, which saves a node doubling per evaluation
_FLOW_QUAD_TOL = 1e-12


def _bulk_eval(f: QField, warm_nu=None):
    """Pointwise potential values/gradients over the field (flat batch)."""
    flat = f.values.reshape(-1, 5)
    vals, grads, margins, nus = potential.psi_field_eval(
        flat, warm_nu=warm_nu, quad_tol=_FLOW_QUAD_TOL
    )
    return vals, grads.reshape(f.values.shape), margins, nus


def total_energy_components(f: QField, p: ElasticParams, warm_nu=None):
    """(energy, elastic, bulk, quad, warm_nu); energy is +inf when the
    field leaves the strictly physical set (margin below the dual floor)."""
    margins = tensor.rho_margin(f.values)
    if margins.min() <= potential.MARGIN_FLOOR:
        return np.inf, np.nan, np.nan, np.nan, None
    vals, _, _, nus = _bulk_eval(f, warm_nu)
    el = elastic_energy(f, p)
    bulk = float(vals.sum() * f.grid.cell_volume)
    quad = -p.alpha * f.l2_norm_sq()
    return el + bulk + quad, el, bulk, quad, nus


def total_energy(f: QField, p: ElasticParams) -> float:
    return total_energy_components(f, p)[0]


def total_gradient(f: QField, p: ElasticParams, warm_nu=None) -> QField:
    """Gradient of the total energy; requires strict pointwise physicality."""
    _, grads, _, _ = _bulk_eval(f, warm_nu)
    eg = elastic_gradient(f, p)
    return QField(f.grid, eg.values + grads - 2.0 * p.alpha * f.values)


# cache of per-mode resolvent inverses (I + tau*M(k))^-1, keyed by grid
# geometry and the coefficients entering the symbol
_RESOLVENT_CACHE: dict = {}


def _resolvent(grid, p: ElasticParams, tau: float, shift: float = 1.0):
    """Batched inverse of shift*I + tau*M(k) over all modes (real 5x5)."""
    key = (grid.dim, grid.N, p.L1, p.l23, tau, shift)
    inv = _RESOLVENT_CACHE.get(key)
    if inv is None:
        W = grid._W
        M = 2.0 * p.L1 * grid.k2[..., None, None] * np.eye(5) + 2.0 * p.l23 * np.einsum(
            "...ai,...bi->...ab", W, W
        )
        inv = np.linalg.inv(shift * np.eye(5) + tau * M)
        if len(_RESOLVENT_CACHE) > 16:
            _RESOLVENT_CACHE.clear()
        _RESOLVENT_CACHE[key] = inv
    return inv


def _apply_modewise(inv, values, grid):
    vhat = np.fft.fftn(values, axes=tuple(range(grid.dim)))
    out = np.einsum("...ab,...b->...a", inv, vhat)
    return np.real(np.fft.ifftn(out, axes=tuple(range(grid.dim))))


def _state_from_field(f, p, t, warm_nu=None, report=None):
    """Build a FlowState with a single dual solve shared by the energy
    components, the slope and the cached pointwise psi gradient."""
    vals, grads, margins, nus = _bulk_eval(f, warm_nu)
    el = elastic_energy(f, p)
    bulk = float(vals.sum() * f.grid.cell_volume)
    quad = -p.alpha * f.l2_norm_sq()
    gvals = elastic_gradient(f, p).values + grads - 2.0 * p.alpha * f.values
    slope = np.sqrt(np.sum(gvals**2) * f.grid.cell_volume)
    st = FlowState(
        t=t, field=f, energy=el + bulk + quad, slope=float(slope),
        step_report=report or {}, warm_nu=nus, psi_grads=grads,
    )
    st.step_report.setdefault("components", (el, bulk, quad))
    return st


def step_semi_implicit(
    s: FlowState, c: SchemeConfig, p: ElasticParams, max_retries: int = 40
) -> FlowState:
    """One semi-implicit step with physicality backtracking.

    Solves (I + tau*M(k)) v+ = v + tau*(2 alpha v - psi'(v)) per mode; if
    the update leaves the physical set the step is shrunk by
    backtrack_factor and retried.  On retry exhaustion the state is
    returned unchanged with a stall report.
    """
    f = s.field
    if s.psi_grads is not None:
        grads, nus = s.psi_grads, s.warm_nu
    else:
        _, grads, _, nus = _bulk_eval(f, s.warm_nu)
    tau = c.tau
    for attempt in range(max_retries):
        rhs = f.values + tau * (2.0 * p.alpha * f.values - grads)
        inv = _resolvent(f.grid, p, tau)
        new_values = _apply_modewise(inv, rhs, f.grid)
        margins = tensor.rho_margin(new_values)
        if margins.min() > potential.MARGIN_FLOOR:
            report = {"eff_tau": tau, "retries": attempt}
            return _state_from_field(
                QField(f.grid, new_values), p, s.t + tau, warm_nu=nus, report=report
            )
        tau *= c.backtrack_factor
    stalled = FlowState(
        t=s.t, field=s.field, energy=s.energy, slope=s.slope,
        step_report={"stalled": True, "eff_tau": 0.0, "retries": max_retries},
        warm_nu=s.warm_nu,
    )
    return stalled


def _phi_value(v, w, tau, p, warm_nu=None):
    e, *_rest, nus = total_energy_components(QField(w.grid, v), p, warm_nu)
    return (
        float(np.sum((v - w.values) ** 2) * w.grid.cell_volume) / (2.0 * tau) + e,
        nus,
    )


def step_minimizing_movement(s: FlowState, c: SchemeConfig, p: ElasticParams) -> FlowState:
    """One resolvent step: minimize ||v - w||^2/(2 tau) + E(v).

    Douglas-Rachford splitting on f1 + f2 with
      f1(v) = ||v - w||^2/(2 tau) + G(v) - alpha ||v||^2   (quadratic),
      f2(v) = integral of psi(v)                            (entropic);
    prox of f1 is one per-mode linear solve, prox of f2 is the pointwise
    Moreau-Yosida proximal map, which keeps every iterate physical.
    """
    c.validate_against(p)
    w = s.field
    grid = w.grid
    tau = c.tau
    sigma = tau  # splitting step; DR converges for any positive value
    shift = sigma * (1.0 / sigma + 1.0 / tau - 2.0 * p.alpha)
    inv = _resolvent(grid, p, sigma, shift=shift)
    n_prox = 1.0 / (2.0 * sigma)

    z = w.values.copy()
    warm = s.warm_nu
    phi_prev, _ = _phi_value(w.values, w, tau, p, s.warm_nu)
    phi_hist = [phi_prev]
    y = w.values
    for it in range(c.max_inner):
        # prox of the quadratic part: argmin ||v-z||^2/(2 sigma) + f1(v)
        x = _apply_modewise(inv, sigma * (z / sigma + w.values / tau), grid)
        # prox of the entropic part at the reflected point
        refl = (2.0 * x - z).reshape(-1, 5)
        env, _, prox_flat, warm = potential.moreau_field_eval(
            refl, n_prox, warm_nu=warm, quad_tol=_FLOW_QUAD_TOL
        )
        y = prox_flat.reshape(w.values.shape)
        z = z + y - x
        # Phi(y) assembled from the prox data: the entropy of the prox
        # point is env - n |prox - refl|^2, so no extra dual solve is needed
        psi_int = float(
            (env - n_prox * np.sum((prox_flat - refl) ** 2, axis=1)).sum()
            * grid.cell_volume
        )
        phi = (
            float(np.sum((y - w.values) ** 2) * grid.cell_volume) / (2.0 * tau)
            + elastic_energy(QField(grid, y), p)
            - p.alpha * float(np.sum(y**2) * grid.cell_volume)
            + psi_int
        )
        phi_hist.append(phi)
        if it > 0 and abs(phi_hist[-2] - phi) <= c.inner_tol * max(1.0, abs(phi)):
            break
    else:
        it = c.max_inner - 1
    if not np.isfinite(phi) or phi > phi_prev + 1e-9 * max(1.0, abs(phi_prev)):
        raise SolverStallError(
            "minimizing-movement inner solve failed to decrease the step "
            "functional",
            report={"phi_history": phi_hist},
        )
    report = {"eff_tau": tau, "inner_iters": it + 1, "phi_history": phi_hist}
    return _state_from_field(QField(grid, y), p, s.t + tau, warm_nu=warm, report=report)


@dataclass
class Trajectory:
    """Time series plus periodic field snapshots of one run."""

    scheme: SchemeConfig
    series: dict  # column name -> np.ndarray, len = accepted states
    snap_times: list
    snap_values: list  # raw coordinate arrays at snapshot times
    vel_sq: np.ndarray  # per-interval ||dQ/dt||^2 by difference quotients
    grid: object
    final_state: FlowState

    def column(self, name):
        return self.series[name]


def _series_row(st: FlowState, p: ElasticParams):
    f = st.field
    el, bulk, quad = st.step_report.get("components", (np.nan,) * 3)
    gn = gradient_norm(f)
    mbar = mean_value(f)
    dev = f.values - mbar
    linf = float(np.sqrt(np.sum(dev**2, axis=-1)).max())
    return {
        "t": st.t,
        "energy": st.energy,
        "elastic": el,
        "bulk": bulk,
        "quad": quad,
        "slope_l2": st.slope,
        "grad_l2_sq": gn**2,
        "min_margin": float(tensor.rho_margin(f.values).min()),
        "linf_dev_mean": linf,
        "eff_tau": st.step_report.get("eff_tau", np.nan),
    }


def _advance(state, c, p):
    if c.kind == "semi_implicit":
        return step_semi_implicit(state, c, p)
    if c.kind == "minimizing_movement":
        return step_minimizing_movement(state, c, p)
    raise ConfigError(f"run cannot advance scheme kind {c.kind!r}")


def run(
    q0: QField,
    horizon: float,
    c: SchemeConfig,
    p: ElasticParams,
    snapshot_every: int = 10,
) -> Trajectory:
    """Advance the flow from q0 to the given horizon.

    Returns the trajectory time series (one row per accepted state) and
    snapshots every ``snapshot_every`` accepted steps (plus first/last).
    """
    c.validate_against(p)
    if tensor.rho_margin(q0.values).min() <= 0:
        raise ConfigError("initial data must be pointwise physical")
    state = _state_from_field(q0, p, 0.0)
    rows = [_series_row(state, p)]
    snap_times = [0.0]
    snap_values = [q0.values.copy()]
    vel_sq = []
    nsteps = int(round(horizon / c.tau))
    for k in range(nsteps):
        new = _advance(state, c, p)
        if new.step_report.get("stalled"):
            raise SolverStallError(
                f"flow stalled at t={state.t:.6g}",
                report={"t": state.t, "step": k, **new.step_report},
            )
        dt = new.t - state.t
        dv = (new.field.values - state.field.values) / dt
        vel_sq.append(float(np.sum(dv**2) * q0.grid.cell_volume))
        state = new
        rows.append(_series_row(state, p))
        if (k + 1) % snapshot_every == 0 or k == nsteps - 1:
            snap_times.append(state.t)
            snap_values.append(state.field.values.copy())
    series = {name: np.array([r[name] for r in rows]) for name in SERIES_COLUMNS}
    return Trajectory(
        scheme=c,
        series=series,
        snap_times=snap_times,
        snap_values=snap_values,
        vel_sq=np.array(vel_sq),
        grid=q0.grid,
        final_state=state,
    )


def _moreau_energy_and_grad(f: QField, n, p, warm_nu=None):
    flat = f.values.reshape(-1, 5)
    vals, grads, _, nus = potential.moreau_field_eval(
        flat, n, warm_nu=warm_nu, quad_tol=_FLOW_QUAD_TOL
    )
    env_grad = grads.reshape(f.values.shape)
    el = elastic_energy(f, p)
    energy = el + float(vals.sum() * f.grid.cell_volume) - p.alpha * f.l2_norm_sq()
    gf = elastic_gradient(f, p).values + env_grad - 2.0 * p.alpha * f.values
    return energy, el, gf, env_grad, nus


def approx_flow_run(
    q0: QField,
    horizon: float,
    n: int,
    c: SchemeConfig,
    p: ElasticParams,
    snapshot_every: int = 10,
) -> Trajectory:
    """Run the regularized flow with the envelope gradient of index n.

    Semi-implicit in the elastic part, explicit in the (2n-Lipschitz)
    envelope gradient; no physicality constraint since the regularized
    energy is finite everywhere.
    """
    cfg = SchemeConfig(
        kind="approx_flow", tau=c.tau, inner_tol=c.inner_tol,
        max_inner=c.max_inner, backtrack_factor=c.backtrack_factor, n=n,
    )
    grid = q0.grid
    inv = _resolvent(grid, p, cfg.tau)
    values = q0.values.copy()
    warm = None
    nsteps = int(round(horizon / cfg.tau))
    rows = []
    snap_times, snap_values, vel_sq = [0.0], [values.copy()], []
    energy, el, gf, env_grad, warm = _moreau_energy_and_grad(
        QField(grid, values), n, p, warm
    )
    t = 0.0

    def row(t, values, energy, el, gf):
        f = QField(grid, values)
        gn = gradient_norm(f)
        mbar = mean_value(f)
        dev = values - mbar
        return {
            "t": t,
            "energy": energy,
            "elastic": el,
            "bulk": energy - el + p.alpha * f.l2_norm_sq(),
            "quad": -p.alpha * f.l2_norm_sq(),
            "slope_l2": float(np.sqrt(np.sum(gf**2) * grid.cell_volume)),
            "grad_l2_sq": gn**2,
            "min_margin": float(tensor.rho_margin(values).min()),
            "linf_dev_mean": float(np.sqrt(np.sum(dev**2, axis=-1)).max()),
            "eff_tau": cfg.tau,
        }

    rows.append(row(t, values, energy, el, gf))
    for k in range(nsteps):
        rhs = values + cfg.tau * (2.0 * p.alpha * values - env_grad)
        new_values = _apply_modewise(inv, rhs, grid)
        vel_sq.append(float(np.sum(((new_values - values) / cfg.tau) ** 2) * grid.cell_volume))
        values = new_values
        t += cfg.tau
        energy, el, gf, env_grad, warm = _moreau_energy_and_grad(
            QField(grid, values), n, p, warm
        )
        rows.append(row(t, values, energy, el, gf))
        if (k + 1) % snapshot_every == 0 or k == nsteps - 1:
            snap_times.append(t)
            snap_values.append(values.copy())
    series = {name: np.array([r[name] for r in rows]) for name in SERIES_COLUMNS}
    final = FlowState(
        t=t, field=QField(grid, values), energy=energy,
        slope=rows[-1]["slope_l2"], warm_nu=warm,
    )
    return Trajectory(
        scheme=cfg, series=series, snap_times=snap_times, snap_values=snap_values,
        vel_sq=np.array(vel_sq), grid=grid, final_state=final,
    )


def energy_identity_residual(traj: Trajectory, t0: float, T: float):
    """Residual of the dissipation identity over [t0, T].

    LHS: trapezoid of ||dE(Q)||^2 plus midpoint sum of the difference-
    quotient velocities; RHS: 2 E(t0) - 2 E(T).  Returns (raw, relative).
    """
    t = traj.series["t"]
    i0 = int(np.searchsorted(t, t0 - 1e-12))
    i1 = int(np.searchsorted(t, T - 1e-12))
    tt = t[i0 : i1 + 1]
    slope_sq = traj.series["slope_l2"][i0 : i1 + 1] ** 2
    # velocity at node k is the forward difference quotient over [t_k,
    # t_{k+1}] (backward at the final node), integrated like the slope
    vel_nodes = np.concatenate([traj.vel_sq, traj.vel_sq[-1:]])[i0 : i1 + 1]
    lhs = np.trapezoid(slope_sq + vel_nodes, tt)
    e = traj.series["energy"]
    rhs = 2.0 * (e[i0] - e[i1])
    raw = abs(lhs - rhs)
    denom = abs(e[i0] - e[i1])
    rel = raw / denom if denom > 0 else raw
    return raw, rel


def evi_residual(traj: Trajectory, probe: QField, p: ElasticParams):
    """Discrete residuals of the evolution variational inequality against a
    fixed physical probe, one value per snapshot interval."""
    e_probe = total_energy(probe, p)
    cell = probe.grid.cell_volume
    dist_sq = [
        float(np.sum((v - probe.values) ** 2) * cell) for v in traj.snap_values
    ]
    t = traj.snap_times
    # energies at snapshot times from the step series
    ts = traj.series["t"]
    energies = [
        float(traj.series["energy"][int(np.argmin(np.abs(ts - tk)))]) for tk in t
    ]
    res = []
    for k in range(len(t) - 1):
        dt = t[k + 1] - t[k]
        d_half = 0.5 * (dist_sq[k + 1] - dist_sq[k]) / dt
        res.append(
            d_half + 2.0 * p.alpha * dist_sq[k + 1] + energies[k + 1] - e_probe
        )
    return np.array(res)
