"""Command-line entry point.

Subcommands: run | check-potential | check-elastic | scan-blowup |
boxdim | gamma-study.  Every command reads an optional flat config file,
applies --override key=value pairs, validates before computing, and
writes its artifacts into the configured output directory.  Errors are
reported as a single machine-readable JSON line on stderr with the exit
code taken from the error class (2 = configuration, 3 = solver).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import diagnostics, potential, tensor
from .config import RunConfig, parse_config
from .elastic import mode_operator
from .errors import ConfigError, LdgflowError
from .flow import approx_flow_run, run as flow_run
from .initial import generate_initial
from .io import error_json, read_snapshot, write_csv, write_series_csv, write_snapshot

__all__ = ["main"]


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ldgflow",
        description="Gradient flow of the anisotropic Landau-de Gennes energy "
        "with the Ball-Majumdar singular potential on the periodic torus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (
        "run",
        "check-potential",
        "check-elastic",
        "scan-blowup",
        "boxdim",
        "gamma-study",
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", help="path to a flat key/value config file")
        p.add_argument("--output", help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=0,
                       help="worker thread hint for BLAS/FFT backends")
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="config override, repeatable")
    return parser


def _load_config(args) -> RunConfig:
    cfg = {}
    if args.config:
        with open(args.config, "r") as fh:
            cfg = parse_config(fh.read())
    for item in args.override:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        cfg.update(parse_config(item))
    if args.output:
        cfg["output_dir"] = args.output
    return RunConfig(cfg)


def _outdir(rc: RunConfig) -> str:
    os.makedirs(rc.output_dir, exist_ok=True)
    return rc.output_dir


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"), default=float)
        fh.write("\n")


def cmd_run(rc: RunConfig) -> None:
    out = _outdir(rc)
    grid = rc.make_grid()
    q0 = generate_initial(rc.initial_spec, grid, rc.seed)
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(rc.serialize())
    if rc.scheme.kind == "approx_flow":
        traj = approx_flow_run(q0, rc.horizon, rc.scheme.n, rc.scheme, rc.params,
                               snapshot_every=rc.snapshot_every)
    else:
        traj = flow_run(q0, rc.horizon, rc.scheme, rc.params,
                        snapshot_every=rc.snapshot_every)
    write_series_csv(os.path.join(out, "series.csv"), traj.series)
    h = rc.config_hash()
    for k, (t, values) in enumerate(zip(traj.snap_times, traj.snap_values)):
        base = os.path.join(out, f"snap_{k:06d}")
        write_snapshot(base, type(q0)(grid, values), t, h)
    _write_json(
        os.path.join(out, "summary.json"),
        {
            "final_time": traj.series["t"][-1],
            "final_energy": traj.series["energy"][-1],
            "final_slope": traj.series["slope_l2"][-1],
            "min_margin": traj.series["min_margin"].min(),
            "snapshots": len(traj.snap_times),
            "config_hash": h,
        },
    )


def cmd_check_potential(rc: RunConfig) -> None:
    out = _outdir(rc)
    rows = []
    for s in np.linspace(-0.45, 0.95, 29):
        lam = np.sort(np.array([-s / 3.0, -s / 3.0, 2.0 * s / 3.0]))
        st = potential.solve_dual(lam)
        psi = st.nu @ (lam + 1.0 / 3.0) - st.logZ
        margin = tensor.margin_from_eigvals(lam)
        rows.append((lam[0], lam[1], lam[2], psi, np.linalg.norm(st.nu), margin))
    write_csv(
        os.path.join(out, "potential.csv"),
        "lambda1,lambda2,lambda3,psi,grad_norm,margin",
        rows,
    )


def cmd_check_elastic(rc: RunConfig) -> None:
    out = _outdir(rc)
    grid = rc.make_grid()
    p = rc.params
    kflat = grid.kvec.reshape(-1, 3)
    rows = []
    for k in kflat:
        ev = np.linalg.eigvalsh(mode_operator(k, p))
        k2 = float(k @ k)
        rows.append(
            (k[0], k[1], k[2], ev[0], ev[-1],
             p.coercivity_low * k2, p.coercivity_high * k2)
        )
    write_csv(
        os.path.join(out, "elastic.csv"),
        "kx,ky,kz,min_eig,max_eig,lower_bound,upper_bound",
        rows,
    )


def cmd_scan_blowup(rc: RunConfig) -> None:
    out = _outdir(rc)
    rows = diagnostics.blowup_rate_scan()
    write_csv(
        os.path.join(out, "blowup.csv"),
        "margin,config,lambda1,lambda2,lambda3,grad_norm,product",
        (
            (r["margin"], r["config"], r["lambda1"], r["lambda2"], r["lambda3"],
             r["grad_norm"], r["product"])
            for r in rows
        ),
    )
    window = [r["product"] for r in rows if r["margin"] <= 1e-2]
    _write_json(
        os.path.join(out, "blowup_summary.json"),
        {
            "min_product_window": min(window),
            "constant_C1": potential.constant_C1(),
            "bound_satisfied": min(window) >= potential.constant_C1(),
        },
    )


def cmd_boxdim(rc: RunConfig) -> None:
    out = _outdir(rc)
    snap = rc.raw.get("boxdim.snapshot")
    if snap:
        field, _ = read_snapshot(snap)
    else:
        field = generate_initial(rc.initial_spec, rc.make_grid(), rc.seed)
    eps = [float(e) for e in rc.raw.get("boxdim.epsilons", [1e-2, 1e-3])]
    reports = diagnostics.contact_report(field, eps)
    rows = []
    for rep in reports:
        for r, c in sorted(rep.box_counts.items()):
            rows.append((rep.epsilon, r, c))
    write_csv(os.path.join(out, "boxdim.csv"), "epsilon,r,count", rows)
    _write_json(os.path.join(out, "boxdim.json"), [rep.to_dict() for rep in reports])


def cmd_gamma_study(rc: RunConfig) -> None:
    out = _outdir(rc)
    grid = rc.make_grid()
    q0 = generate_initial(rc.initial_spec, grid, rc.seed)
    report = diagnostics.gamma_study(q0, rc.horizon, rc.n_list, rc.scheme, rc.params)
    _write_json(os.path.join(out, "gamma.json"), report)


_COMMANDS = {
    "run": cmd_run,
    "check-potential": cmd_check_potential,
    "check-elastic": cmd_check_elastic,
    "scan-blowup": cmd_scan_blowup,
    "boxdim": cmd_boxdim,
    "gamma-study": cmd_gamma_study,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads > 0:
        # hint only; honored by backends that read these at thread-pool start
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))
    try:
        rc = _load_config(args)
        _COMMANDS[args.command](rc)
    except LdgflowError as exc:
        sys.stderr.write(error_json(exc) + "\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(error_json(exc) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
