"""Experiment configuration: flat key=value sections, documented in
docs/config_schema.md.  Parsing is strict: unknown sections or keys and
violated invariants raise ConfigError so experiments stay reproducible files.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .kinetics import KineticsSpec
from .transform import TransformParams

_ALLOWED_INV_EPS = (1, 2, 4, 8, 16)

_KNOWN_KEYS = {
    "geometry": {"r_min", "r_max", "r0", "delta"},
    "kinetics": {"family", "rate_slope", "u_eq", "f_cap", "c_s", "gate_width"},
    "source": {"name"},          # plus param.* keys
    "initial": {"u_field", "r_field"},  # plus u_param.* / r_param.*
    "discretization": {"macro_n", "epsilon_inverses", "n_boundary", "target_h", "dt", "t_end"},
    "table": {"radius_count", "radii", "path"},
    "micro": {"pinned_radii", "source_at_reference"},
    "output": {"directory", "snapshot_every"},
    "run": {"seed", "diffusion", "cg_tol"},
}

DEFAULT_CONFIG = """\
[geometry]
r_min = 0.15
r_max = 0.35
r0 = 0.25
delta = 0.12

[kinetics]
family = gated_affine
rate_slope = 1.0
u_eq = 0.5
f_cap = 1.0
c_s = 2.0
gate_width = 0.05

[source]
name = zero

[initial]
u_field = constant
u_param.value = 0.9
r_field = constant
r_param.value = 0.2

[discretization]
macro_n = 32
epsilon_inverses = 2,4,8
n_boundary = 64
target_h = 0.05
dt = 0.005
t_end = 0.5

[table]
radius_count = 11

[micro]
pinned_radii = false
source_at_reference = false

[output]
directory = out
snapshot_every = 25

[run]
seed = 0
diffusion = 1.0
cg_tol = 1e-10
"""


@dataclass
class ExperimentConfig:
    params: TransformParams
    spec: KineticsSpec
    source_name: str
    source_params: dict
    u_field: str
    u_params: dict
    r_field: str
    r_params: dict
    macro_n: int
    epsilon_inverses: tuple
    n_boundary: int
    target_h: float
    dt: float
    t_end: float
    table_radii: np.ndarray
    table_path: str | None
    micro_pinned_radii: bool
    micro_source_at_reference: bool
    out_dir: str
    snapshot_every: int
    seed: int
    diffusion: float
    cg_tol: float
    sha256: str = field(default="")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


def _params_from(section, prefix: str) -> dict:
    out = {}
    for key, val in section.items():
        if key.startswith(prefix):
            out[key[len(prefix):]] = float(val)
    return out


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    base = configparser.ConfigParser()
    base.read_string(DEFAULT_CONFIG)
    for sec in cp.sections():
        if sec not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{sec}]")
        for key in cp[sec]:
            known = _KNOWN_KEYS[sec]
            if key in known or (sec == "source" and key.startswith("param.")) \
                    or (sec == "initial" and (key.startswith("u_param.") or key.startswith("r_param."))):
                base[sec][key] = cp[sec][key]
            else:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")

    g = base["geometry"]
    try:
        params = TransformParams(float(g["r_min"]), float(g["r_max"]),
                                 float(g["r0"]), float(g["delta"]))
    except ValueError as exc:
        raise ConfigError(f"invalid geometry: {exc}") from exc

    k = base["kinetics"]
    try:
        spec = KineticsSpec(
            r_min=params.r_min, r_max=params.r_max,
            gate_width=float(k["gate_width"]), rate_slope=float(k["rate_slope"]),
            u_eq=float(k["u_eq"]), f_cap=float(k["f_cap"]), c_s=float(k["c_s"]),
            family=k["family"])
    except ValueError as exc:
        raise ConfigError(f"invalid kinetics: {exc}") from exc

    d = base["discretization"]
    macro_n = int(d["macro_n"])
    try:
        inverses = tuple(int(tok) for tok in d["epsilon_inverses"].split(","))
    except ValueError as exc:
        raise ConfigError(f"bad epsilon_inverses: {exc}") from exc
    for inv in inverses:
        if inv not in _ALLOWED_INV_EPS:
            raise ConfigError(f"1/epsilon must be one of {_ALLOWED_INV_EPS}, got {inv}")
    n_boundary = int(d["n_boundary"])
    target_h = float(d["target_h"])
    dt = float(d["dt"])
    t_end = float(d["t_end"])
    if dt <= 0 or t_end <= 0:
        raise ConfigError("dt and t_end must be positive")
    travel = dt * spec.f_cap / spec.c_s
    if travel >= (params.r_max - params.r_min) / 4.0:
        raise ConfigError(
            f"dt too large: one step can move the radius by {travel:.3g}, "
            f"more than a quarter of the admissible range")

    t = base["table"]
    if "radii" in t:
        radii = np.array([float(tok) for tok in t["radii"].split(",")])
    else:
        count = int(t["radius_count"])
        if count < 5:
            raise ConfigError("table needs at least 5 radii")
        radii = np.linspace(params.r_min, params.r_max, count)
    if radii.size < 5:
        raise ConfigError("table needs at least 5 radii")
    if np.any(radii < params.r_min) or np.any(radii > params.r_max):
        raise ConfigError("table radii outside [r_min, r_max]")
    if np.any(np.diff(radii) <= 0):
        raise ConfigError("table radii must be strictly increasing")

    o = base["output"]
    run = base["run"]
    micro = base["micro"]
    cfg = ExperimentConfig(
        params=params, spec=spec,
        source_name=base["source"]["name"],
        source_params=_params_from(base["source"], "param."),
        u_field=base["initial"]["u_field"],
        u_params=_params_from(base["initial"], "u_param."),
        r_field=base["initial"]["r_field"],
        r_params=_params_from(base["initial"], "r_param."),
        macro_n=macro_n, epsilon_inverses=inverses, n_boundary=n_boundary,
        target_h=target_h, dt=dt, t_end=t_end,
        table_radii=radii, table_path=t.get("path"),
        micro_pinned_radii=micro.getboolean("pinned_radii"),
        micro_source_at_reference=micro.getboolean("source_at_reference"),
        out_dir=o["directory"], snapshot_every=int(o["snapshot_every"]),
        seed=int(run["seed"]), diffusion=float(run["diffusion"]),
        cg_tol=float(run["cg_tol"]),
        sha256=hashlib.sha256(text.encode()).hexdigest(),
    )
    if cfg.macro_n < 2:
        raise ConfigError("macro_n must be at least 2")
    if cfg.snapshot_every < 1:
        raise ConfigError("snapshot_every must be at least 1")
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config(text)
