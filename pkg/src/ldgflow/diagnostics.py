"""Quantitative checks on computed trajectories and fields.

Covers decay-rate fits against the Gronwall bound, the uniform H2
mechanism, the sup-norm interpolation ratio, near-boundary blow-up scans
of the potential gradient, and box-counting estimates for near-contact
sets.  Every operation is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import potential, tensor
from .elastic import ElasticParams, QField, gradient_norm, laplacian
from .flow import Trajectory, approx_flow_run, run as flow_run

__all__ = [
    "DecayReport",
    "ContactReport",
    "grad_decay_check",
    "mean_deviation_check",
    "h2_bound_check",
    "blowup_rate_scan",
    "box_counts",
    "dim_estimate_from_counts",
    "contact_report",
    "holder_seminorm",
    "gamma_study",
]

GRAD_FLOOR = 1e-14


@dataclass
class DecayReport:
    rate_measured: float | None
    rate_bound: float
    rate_bound_spectral: float
    rate_bound_volume_convention: float
    margin_series: np.ndarray
    T0_detected: float | None
    kappa: float
    status: str  # "ok" | "decayed to floor" | "hypothesis not met"

    def to_dict(self):
        d = {
            "rate_measured": self.rate_measured,
            "rate_bound": self.rate_bound,
            "rate_bound_spectral": self.rate_bound_spectral,
            "rate_bound_volume_convention": self.rate_bound_volume_convention,
            "T0_detected": self.T0_detected,
            "kappa": self.kappa,
            "status": self.status,
            "margin_series": self.margin_series.tolist(),
        }
        return d


@dataclass
class ContactReport:
    epsilon: float
    mask: np.ndarray
    box_counts: dict  # radius -> count
    dim_estimate: float | None
    content2: float | None
    slope_norm_sq: float
    holder_half: float = np.nan
    c_tilde: float = np.nan
    inequality_ok: bool | None = None
    status: str = "ok"

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "box_counts": {str(r): int(c) for r, c in self.box_counts.items()},
            "dim_estimate": self.dim_estimate,
            "content2": self.content2,
            "slope_norm_sq": self.slope_norm_sq,
            "holder_half": self.holder_half,
            "c_tilde": self.c_tilde,
            "inequality_ok": self.inequality_ok,
            "status": self.status,
        }


def _rate_bound(p: ElasticParams, C: float) -> float:
    return 4.0 * (-(p.L1 - abs(p.l23)) / C**2 + p.alpha)


def grad_decay_check(traj: Trajectory, p: ElasticParams, kappa: float = 1.0 / 12.0) -> DecayReport:
    """Fit the decay rate of ||grad Q||^2 and compare with the Gronwall bound.

    The log-linear fit uses the tail half of the samples that still sit
    above the numerical floor.  The bound is evaluated under the
    configured Poincare constant plus both fixed conventions: the
    spectral-gap value 1/(2 pi) for mean-zero fields on the unit torus
    (asserted in the acceptance suite) and (2 pi)^dim (reported only; see
    the elastic module for the discrepancy).
    """
    t = traj.series["t"]
    g2 = traj.series["grad_l2_sq"]
    margins = traj.series["min_margin"]
    dim = traj.grid.dim
    bound_cfg = _rate_bound(p, p.poincare(dim))
    bound_spec = _rate_bound(p, 1.0 / (2.0 * np.pi))
    bound_vol = _rate_bound(p, (2.0 * np.pi) ** dim)
    above = np.where(g2 > GRAD_FLOOR)[0]
    cross = margins >= kappa
    T0 = float(t[np.argmax(cross)]) if cross.any() else None

    def report(rate, status):
        return DecayReport(
            rate_measured=rate,
            rate_bound=bound_cfg,
            rate_bound_spectral=bound_spec,
            rate_bound_volume_convention=bound_vol,
            margin_series=margins,
            T0_detected=T0,
            kappa=kappa,
            status=status,
        )

    if len(above) < 4:
        return report(None, "decayed to floor")
    tail = above[len(above) // 2 :]
    slope = np.polyfit(t[tail], np.log(g2[tail]), 1)[0]
    if bound_cfg >= 0 and bound_spec >= 0:
        return report(float(slope), "hypothesis not met")
    return report(float(slope), "ok")


def mean_deviation_check(traj: Trajectory):
    """Per-snapshot ratio ||Q - Qbar||_inf / (||grad Q||^(1/2) ||Lap Q||^(1/2)).

    Constant snapshots (0/0) are skipped and reported as NaN.
    """
    ratios = []
    for values in traj.snap_values:
        f = QField(traj.grid, values)
        gn = gradient_norm(f)
        ln = np.sqrt(laplacian(f).l2_norm_sq())
        dev = values - values.reshape(-1, 5).mean(axis=0)
        linf = float(np.sqrt(np.sum(dev**2, axis=-1)).max())
        if gn < 1e-15 or ln < 1e-15:
            ratios.append(np.nan)
        else:
            ratios.append(linf / np.sqrt(gn * ln))
    return np.array(ratios)


def h2_bound_check(traj: Trajectory, p: ElasticParams, E_t0: float):
    """Check the H2 bounds at every snapshot.

    Two bounds on ||Lap Q||: the a-priori one from the energy level at t0,
    C_L (e^{4 alpha} sqrt(E(t0) - inf E + 1) + 2 alpha ||Q||), and the
    sharper mechanism C_L (||dE(Q)|| + 2 alpha ||Q||).  inf E is estimated
    by -ln(4 pi) - alpha * (2/3), using sup |Q|^2 = 2/3 over the closed
    physical set.
    """
    inf_E = -potential.LOG_4PI - p.alpha * (2.0 / 3.0)
    out = []
    ts = traj.series["t"]
    for tk, values in zip(traj.snap_times, traj.snap_values):
        f = QField(traj.grid, values)
        lap = np.sqrt(laplacian(f).l2_norm_sq())
        qn = np.sqrt(f.l2_norm_sq())
        idx = int(np.argmin(np.abs(ts - tk)))
        slope = traj.series["slope_l2"][idx]
        apriori = p.C_L * (
            np.exp(4.0 * p.alpha) * np.sqrt(max(E_t0 - inf_E, 0.0) + 1.0)
            + 2.0 * p.alpha * qn
        )
        sharp = p.C_L * (slope + 2.0 * p.alpha * qn)
        out.append(
            {
                "t": tk,
                "lap_norm": float(lap),
                "apriori_bound": float(apriori),
                "apriori_ok": bool(lap <= apriori * (1.0 + 1e-9)),
                "sharp_bound": float(sharp),
                "sharp_ok": bool(lap <= sharp * (1.0 + 1e-9)),
            }
        )
    return out


def blowup_rate_scan(n_margins: int = 11, n_configs: int = 20, margin_lo: float = 1e-6,
                     margin_hi: float = 1e-1):
    """Tabulate |psi_grad| * (lambda_1 + 1/3) near the lower boundary.

    For each margin m on a log grid and each of n_configs eigenvalue
    shapes interpolating from the biaxial edge (lambda_2 = lambda_1) to
    the uniaxial edge (lambda_2 = lambda_3), record the product whose
    lower bound is constant_C1.  Returns a list of row dicts.
    """
    margins = np.logspace(np.log10(margin_lo), np.log10(margin_hi), n_margins)
    weights = np.linspace(0.0, 1.0, n_configs)
    rows = []
    for m in margins:
        lam1 = -1.0 / 3.0 + m
        lam2_max = -lam1 / 2.0
        for j, w in enumerate(weights):
            lam2 = lam1 + w * (lam2_max - lam1)
            lam3 = -lam1 - lam2
            lam = np.array([lam1, lam2, lam3])
            st = potential.solve_dual(lam)
            gn = float(np.linalg.norm(st.nu))
            rows.append(
                {
                    "margin": float(m),
                    "config": j,
                    "lambda1": lam1,
                    "lambda2": float(lam2),
                    "lambda3": float(lam3),
                    "grad_norm": gn,
                    "product": gn * m,
                }
            )
    return rows


def box_counts(mask: np.ndarray, radii=None) -> dict:
    """Dyadic covering counts N(r) of a boolean grid mask.

    Radii default to the scaling window [4/N, 1/4]; each must be b/N with
    b a power-of-two number of cells.
    """
    N = mask.shape[0]
    n = mask.ndim
    if radii is None:
        radii = []
        b = 4
        while b <= N // 4:
            radii.append(b / N)
            b *= 2
    counts = {}
    for r in radii:
        b = int(round(r * N))
        if b < 1 or N % b != 0:
            raise ValueError(f"radius {r} does not tile an N={N} grid")
        shape = []
        for _ in range(n):
            shape.extend([N // b, b])
        blocks = mask.reshape(shape)
        # collapse the cell axes (odd positions) by any()
        for ax in reversed(range(1, 2 * n, 2)):
            blocks = blocks.any(axis=ax)
        counts[r] = int(blocks.sum())
    return counts


def dim_estimate_from_counts(counts: dict) -> float | None:
    rs = np.array(sorted(counts))
    ns = np.array([counts[r] for r in rs], dtype=float)
    if np.any(ns == 0):
        return None
    slope = np.polyfit(np.log(1.0 / rs), np.log(ns), 1)[0]
    return float(slope)


def holder_seminorm(f: QField, exponent: float = 0.5, n_random: int = 4000,
                    seed: int = 0) -> float:
    """Empirical Holder seminorm sup |Q(x)-Q(y)| / d(x,y)^exponent.

    Uses all axis-aligned shifts up to 4 cells plus seeded random
    long-range pairs, with periodic distance.
    """
    if not 0.0 < exponent < 1.0:
        raise ValueError("exponent must lie in (0, 1)")
    values = f.values
    grid = f.grid
    N = grid.N
    best = 0.0
    for ax in range(grid.dim):
        for shift in range(1, 5):
            diff = np.roll(values, -shift, axis=ax) - values
            dq = np.sqrt(np.sum(diff**2, axis=-1)).max()
            best = max(best, float(dq) / (shift / N) ** exponent)
    rng = np.random.Generator(np.random.Philox(seed))
    idx_a = rng.integers(0, N, size=(n_random, grid.dim))
    idx_b = rng.integers(0, N, size=(n_random, grid.dim))
    d = np.abs(idx_a - idx_b) / N
    d = np.minimum(d, 1.0 - d)
    dist = np.sqrt(np.sum(d**2, axis=1))
    keep = dist > 0
    qa = values[tuple(idx_a[keep].T)]
    qb = values[tuple(idx_b[keep].T)]
    dq = np.sqrt(np.sum((qa - qb) ** 2, axis=-1))
    if keep.any():
        best = max(best, float(np.max(dq / dist[keep] ** exponent)))
    return best


def contact_report(f: QField, epsilons, radii=None, beta: float = 0.5) -> list:
    """Near-contact-set reports for a list of margin thresholds.

    For each epsilon: the mask {rho(Q) <= epsilon}, dyadic box counts and
    the fitted box dimension, the covering content with exponent 2 (for
    n = 3) or 2 - 2*beta (n = 2), and the inequality surrogate
    ||psi_grad||^2 >= (C~/25) * content with C~ = (4 pi / 3) C1^2 / C_H^2.
    """
    margins = tensor.rho_margin(f.values)
    flat = f.values.reshape(-1, 5)
    _, grads, _, _ = potential.psi_field_eval(flat)
    slope_sq = float(np.sum(grads**2) * f.grid.cell_volume)
    c_h = holder_seminorm(f, 0.5)
    c1 = potential.constant_C1()
    exponent = 2.0 if f.grid.dim == 3 else 2.0 - 2.0 * beta
    reports = []
    for eps in sorted(epsilons, reverse=True):
        mask = margins <= eps
        if not mask.any():
            reports.append(
                ContactReport(
                    epsilon=float(eps), mask=mask, box_counts={},
                    dim_estimate=None, content2=None, slope_norm_sq=slope_sq,
                    status="empty set",
                )
            )
            continue
        counts = box_counts(mask, radii)
        dim_est = dim_estimate_from_counts(counts)
        content = min(c * r**exponent for r, c in counts.items())
        c_tilde = (4.0 * np.pi / 3.0) * c1**2 / c_h**2 if c_h > 0 else np.nan
        ok = None
        if np.isfinite(c_tilde):
            ok = bool(slope_sq >= (c_tilde / 25.0) * content)
        reports.append(
            ContactReport(
                epsilon=float(eps), mask=mask, box_counts=counts,
                dim_estimate=dim_est, content2=float(content),
                slope_norm_sq=slope_sq, holder_half=c_h, c_tilde=c_tilde,
                inequality_ok=ok,
            )
        )
    return reports


def gamma_study(q0: QField, horizon: float, n_list, c, p: ElasticParams) -> dict:
    """Compare regularized flows of increasing index with the singular flow.

    Runs the singular-potential flow once and the envelope flow for each
    n, all at the same time step, and reports final-time L2 distances,
    energy excess, and the L2-in-time distance between the velocity-norm
    series.  The tested property is monotone decrease of all three in n.
    """
    ref = flow_run(q0, horizon, c, p, snapshot_every=max(1, int(round(horizon / c.tau)) // 10))
    cell = q0.grid.cell_volume
    report = {"n": [], "l2_final": [], "energy_excess_final": [], "velocity_gap": []}
    for n in sorted(n_list):
        tr = approx_flow_run(q0, horizon, n, c, p,
                             snapshot_every=max(1, int(round(horizon / c.tau)) // 10))
        d = np.sqrt(
            np.sum((tr.final_state.field.values - ref.final_state.field.values) ** 2)
            * cell
        )
        excess = tr.series["energy"][-1] - ref.series["energy"][-1]
        va = np.sqrt(tr.vel_sq)
        vb = np.sqrt(ref.vel_sq)
        k = min(len(va), len(vb))
        vgap = float(np.sqrt(np.sum((va[:k] - vb[:k]) ** 2) * c.tau))
        report["n"].append(int(n))
        report["l2_final"].append(float(d))
        report["energy_excess_final"].append(float(excess))
        report["velocity_gap"].append(vgap)
    report["l2_monotone"] = bool(np.all(np.diff(report["l2_final"]) <= 1e-12))
    report["excess_monotone"] = bool(
        np.all(np.diff(np.abs(report["energy_excess_final"])) <= 1e-12)
    )
    report["velocity_monotone"] = bool(np.all(np.diff(report["velocity_gap"]) <= 1e-12))
    return report
