import json
import math
import os

import numpy as np
import pytest

from ldgflow import cli
from ldgflow.config import RunConfig, parse_config, serialize_config
from ldgflow.elastic import QField, SpectralGrid
from ldgflow.errors import ConfigError
from ldgflow.io import SERIES_HEADER, read_snapshot, write_snapshot


def test_parse_and_serialize_round_trip():
    text = (
        "dim = 2\nN = 16\nparams.L1 = 0.05\nparams.alpha = 0.1\n"
        "scheme.tau = 0.001\ninitial.kind = uniform_uniaxial\ninitial.s = 0.4\n"
        "scheme.n_list = 4,16\nflag = true\n"
    )
    cfg = parse_config(text)
    assert cfg["dim"] == 2 and isinstance(cfg["dim"], int)
    assert cfg["scheme.tau"] == 1e-3 and isinstance(cfg["scheme.tau"], float)
    assert cfg["scheme.n_list"] == [4, 16]
    assert cfg["flag"] is True
    out = serialize_config(cfg)
    assert parse_config(out) == cfg
    assert serialize_config(parse_config(out)) == out  # byte-identical fixpoint


def test_parse_errors_and_comments():
    assert parse_config("# only a comment\n\n") == {}
    with pytest.raises(ConfigError):
        parse_config("no equals sign here")
    with pytest.raises(ConfigError):
        parse_config(" = 3")


def test_runconfig_validation():
    with pytest.raises(ConfigError):
        RunConfig({"horizon": -1.0})
    with pytest.raises(ConfigError):
        RunConfig({"params.L1": 0.01, "params.L2": 0.05, "params.L3": 0.0})
    with pytest.raises(ConfigError):
        RunConfig({"N": 12})
    with pytest.raises(ConfigError):
        RunConfig({"scheme.kind": "minimizing_movement", "scheme.tau": 100.0,
                   "params.alpha": 0.1})
    rc = RunConfig({"dim": 3, "N": 8, "initial.kind": "zero"})
    assert rc.make_grid().shape == (8, 8, 8)
    assert rc.initial_spec["kind"] == "zero"
    assert len(rc.config_hash()) == 16


def test_snapshot_round_trip_byte_identical(tmp_path):
    grid = SpectralGrid(2, 8)
    rng = np.random.Generator(np.random.Philox(3))
    f = QField(grid, rng.normal(size=grid.shape + (5,)) * 0.05)
    base = tmp_path / "snap"
    write_snapshot(base, f, 0.25, "abc123")
    g, header = read_snapshot(base)
    assert np.array_equal(g.values, f.values)
    assert header["time"] == 0.25 and header["basis"] == "E5-v1"
    base2 = tmp_path / "snap2"
    write_snapshot(base2, g, header["time"], header["config_hash"])
    assert (tmp_path / "snap.json").read_bytes() == (tmp_path / "snap2.json").read_bytes()
    assert (tmp_path / "snap.bin").read_bytes() == (tmp_path / "snap2.bin").read_bytes()


def _run_cli(args):
    return cli.main(args)


def test_cli_run_zero_field(tmp_path):
    out = tmp_path / "run0"
    code = _run_cli([
        "run", "--output", str(out),
        "--override", "N=8",
        "--override", "horizon=0.01",
        "--override", "scheme.tau=0.002",
        "--override", "params.L1=0.05",
        "--override", "params.L2=0.005",
        "--override", "params.L3=0.005",
    ])
    assert code == 0
    lines = (out / "series.csv").read_text().strip().splitlines()
    assert lines[0] == SERIES_HEADER
    # zero initial data: constant energy column
    energies = {line.split(",")[1] for line in lines[1:]}
    assert len(energies) == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["min_margin"] == pytest.approx(1.0 / 3.0)
    assert (out / "config.txt").exists()
    assert (out / "snap_000000.json").exists()


def test_cli_reproducibility(tmp_path):
    common = [
        "run",
        "--override", "N=8",
        "--override", "horizon=0.01",
        "--override", "scheme.tau=0.002",
        "--override", "params.L1=0.05",
        "--override", "params.alpha=0.1",
        "--override", "initial.kind=random_bandlimited",
        "--override", "initial.kmax=2",
        "--override", "initial.margin_min=0.2",
        "--override", "seed=7",
    ]
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert _run_cli(common + ["--output", str(out_a)]) == 0
    assert _run_cli(common + ["--output", str(out_b)]) == 0
    for name in sorted(os.listdir(out_a)):
        if name == "config.txt":
            continue  # differs only in output_dir, by construction
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_cli_check_potential_isotropic_row(tmp_path):
    out = tmp_path / "pot"
    assert _run_cli(["check-potential", "--output", str(out)]) == 0
    rows = (out / "potential.csv").read_text().strip().splitlines()[1:]
    best = min(rows, key=lambda r: abs(float(r.split(",")[0])))
    psi0 = float(best.split(",")[3])
    assert abs(psi0 + math.log(4.0 * math.pi)) < 1e-10


def test_cli_check_elastic(tmp_path):
    out = tmp_path / "el"
    assert _run_cli([
        "check-elastic", "--output", str(out),
        "--override", "N=8", "--override", "dim=2",
        "--override", "params.L1=0.05",
        "--override", "params.L2=0.005",
        "--override", "params.L3=0.005",
    ]) == 0
    rows = (out / "elastic.csv").read_text().strip().splitlines()[1:]
    assert len(rows) == 64
    for r in rows:
        _, _, _, lo_eig, hi_eig, lo, hi = map(float, r.split(","))
        assert lo - 1e-12 <= lo_eig <= hi_eig <= hi + 1e-12


def test_cli_config_error_exit_code(tmp_path, capsys):
    code = _run_cli(["run", "--output", str(tmp_path / "x"),
                     "--override", "N=7"])
    assert code == 2
    err = capsys.readouterr().err
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "ConfigError" and payload["exit_code"] == 2


def test_cli_bad_override(tmp_path, capsys):
    code = _run_cli(["run", "--output", str(tmp_path / "y"), "--override", "oops"])
    assert code == 2


def test_cli_boxdim(tmp_path):
    out = tmp_path / "bd"
    assert _run_cli([
        "boxdim", "--output", str(out),
        "--override", "N=64",
        "--override", "initial.kind=near_boundary",
        "--override", "initial.geometry=line",
        "--override", "initial.floor=0.01",
        "--override", "boxdim.epsilons=0.012,0.001",
    ]) == 0
    reports = json.loads((out / "boxdim.json").read_text())
    by_eps = {r["epsilon"]: r for r in reports}
    assert by_eps[0.001]["status"] == "empty set"
    assert abs(by_eps[0.012]["dim_estimate"] - 1.0) < 0.3
    assert (out / "boxdim.csv").exists()


def test_cli_gamma_study(tmp_path):
    out = tmp_path / "gs"
    assert _run_cli([
        "gamma-study", "--output", str(out),
        "--override", "N=8",
        "--override", "horizon=0.02",
        "--override", "scheme.tau=0.002",
        "--override", "scheme.n_list=4,16",
        "--override", "params.L1=0.05",
        "--override", "params.alpha=0.1",
        "--override", "initial.kind=random_bandlimited",
        "--override", "initial.kmax=2",
        "--override", "initial.margin_min=0.2",
    ]) == 0
    rep = json.loads((out / "gamma.json").read_text())
    assert rep["n"] == [4, 16]
    assert rep["l2_final"][1] <= rep["l2_final"][0]
