"""Flat dotted key/value run configuration.

Grammar: one ``key = value`` pair per line; ``#`` starts a comment; blank
lines ignored.  Keys are dotted paths (``params.L1``, ``initial.kind``).
Values are integers, floats, booleans (true/false), comma-separated lists
(only ``scheme.n_list`` and ``initial.axis`` need them), or bare strings.
Serialization is canonical (sorted keys, repr-formatted numbers), so a
load/serialize round trip is byte-identical.
"""

from __future__ import annotations

import hashlib

from .errors import ConfigError
from .elastic import ElasticParams, SpectralGrid
from .flow import SchemeConfig

__all__ = ["RunConfig", "parse_config", "serialize_config"]

_LIST_KEYS = {"scheme.n_list", "initial.axis", "boxdim.epsilons"}


def _parse_scalar(text: str):
    t = text.strip()
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    return t


def _format_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in _LIST_KEYS:
            out[key] = [_parse_scalar(v) for v in value.split(",") if v.strip()]
        else:
            out[key] = _parse_scalar(value)
    return out


def serialize_config(cfg: dict) -> str:
    lines = []
    for key in sorted(cfg):
        v = cfg[key]
        if isinstance(v, (list, tuple)):
            lines.append(f"{key} = {','.join(_format_scalar(x) for x in v)}")
        else:
            lines.append(f"{key} = {_format_scalar(v)}")
    return "\n".join(lines) + "\n"


_DEFAULTS = {
    "dim": 2,
    "N": 32,
    "horizon": 1.0,
    "snapshot_every": 10,
    "seed": 12345,
    "output_dir": "out",
    "params.L1": 1.0,
    "params.L2": 0.0,
    "params.L3": 0.0,
    "params.alpha": 0.0,
    "scheme.kind": "semi_implicit",
    "scheme.tau": 1e-3,
    "scheme.inner_tol": 1e-10,
    "scheme.max_inner": 500,
    "scheme.backtrack_factor": 0.5,
    "initial.kind": "zero",
}


class RunConfig:
    """Validated view over a flat config dict.

    Unknown keys are preserved (they ride along through serialization),
    known keys are type-checked and the derived objects are constructed
    eagerly so invalid configurations fail before any compute.
    """

    def __init__(self, cfg: dict):
        merged = dict(_DEFAULTS)
        merged.update(cfg)
        self.raw = merged
        self.dim = int(merged["dim"])
        self.N = int(merged["N"])
        self.horizon = float(merged["horizon"])
        self.snapshot_every = int(merged["snapshot_every"])
        self.seed = int(merged["seed"])
        self.output_dir = str(merged["output_dir"])
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be >= 1")
        pc = merged.get("params.poincare_constant")
        self.params = ElasticParams(
            L1=float(merged["params.L1"]),
            L2=float(merged["params.L2"]),
            L3=float(merged["params.L3"]),
            alpha=float(merged["params.alpha"]),
            poincare_constant=None if pc is None else float(pc),
        )
        n = merged.get("scheme.n")
        self.scheme = SchemeConfig(
            kind=str(merged["scheme.kind"]),
            tau=float(merged["scheme.tau"]),
            inner_tol=float(merged["scheme.inner_tol"]),
            max_inner=int(merged["scheme.max_inner"]),
            backtrack_factor=float(merged["scheme.backtrack_factor"]),
            n=None if n is None else int(n),
        )
        self.scheme.validate_against(self.params)
        self.n_list = [int(x) for x in merged.get("scheme.n_list", [4, 16, 64, 256])]
        self.initial_spec = {
            k.split(".", 1)[1]: v for k, v in merged.items() if k.startswith("initial.")
        }
        # construct the grid last: it validates dim and N
        self.grid_args = (self.dim, self.N)
        SpectralGrid(self.dim, self.N)

    def make_grid(self) -> SpectralGrid:
        return SpectralGrid(self.dim, self.N)

    def serialize(self) -> str:
        return serialize_config(self.raw)

    def config_hash(self) -> str:
        """Hash of the run-defining keys; output_dir is excluded so the same
        run written to two places produces identical snapshot headers."""
        keyed = {k: v for k, v in self.raw.items() if k != "output_dir"}
        return hashlib.sha256(serialize_config(keyed).encode()).hexdigest()[:16]

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls(parse_config(text))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r") as fh:
            return cls.from_text(fh.read())
