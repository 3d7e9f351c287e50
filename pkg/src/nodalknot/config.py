"""Experiment configuration: a TOML file with embedded defaults.

Every key has a default (see :data:`DEFAULT_TOML`); a user file only needs
the keys it changes.  Unknown keys are rejected so that typos do not pass
silently.
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from . import knotgeom

DEFAULT_TOML = """\
# nodalknot experiment configuration
seed = 0

[knot]
# "circle", "trefoil", "figure-eight", or "custom" (then give center/cos/sin,
# one row of (x, y, z) coefficients per Fourier mode)
name = "trefoil"
center = [0.5, 0.5, 0.5]
cos = []
sin = []
# Alexander determinant the extracted curve must have; "auto" uses the catalog
expected_determinant = "auto"

[metric]
A = 1.0
rho = 0.05
width = 0.5
eps = 0.01
eps_list = [0.1, 0.01, 0.001, 0.0001]
# collar sharpness; "auto" means t = 1/eps
t = "auto"
# start of the conformal parameters (constant, cos and sin collar modes)
s_start = [0.0, 0.0, 0.0]

[mesh]
base = 16
elements_across = 8
quadrature_order = 2
frame_samples = 2048
# standalone tube meshes: rings per unit radius, coarsest first
tube_rings = [8, 12, 16]

[solver]
count = 8
newton_max_iters = 10
newton_tol_split = 1e-9
newton_tol_target = 1e-9
step_cap = 0.5
fd_delta = 1e-4
random_states = 5
random_radius = 0.05
conformal_shift = 0.3

[extract]
trials = 20
delta = 0.01
projection_retries = 50

[highdim]
a = 1.0
mu_max = 40.0
cases = [[3, 2], [4, 2], [5, 3]]

[output]
dir = "nodalknot-out"
"""

CATALOG_DETERMINANTS = {"circle": 1, "trefoil": 3, "figure-eight": 5}


class ConfigError(ValueError):
    """Malformed or inadmissible configuration."""


def defaults() -> dict:
    return tomllib.loads(DEFAULT_TOML)


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration; ``data`` is the full nested dictionary."""

    data: dict

    @classmethod
    def from_dict(cls, overrides: Optional[dict] = None) -> "ExperimentConfig":
        cfg = cls(_merge(defaults(), overrides or {}))
        cfg.validate_values()
        return cfg

    @classmethod
    def load(cls, path=None, seed: Optional[int] = None, out: Optional[str] = None) -> "ExperimentConfig":
        over: dict = {}
        if path is not None:
            try:
                over = tomllib.loads(Path(path).read_text())
            except (OSError, tomllib.TOMLDecodeError) as exc:
                raise ConfigError(f"cannot read {path}: {exc}") from exc
        if seed is not None:
            over["seed"] = int(seed)
        if out is not None:
            over.setdefault("output", {})["dir"] = str(out)
        return cls.from_dict(over)

    def __getitem__(self, key):
        return self.data[key]

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with some keys changed, e.g. ``replace(knot={"name": "circle"})``."""
        return ExperimentConfig.from_dict(_merge(self.data, sections))

    # -- derived values -----------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def out_dir(self) -> Path:
        return Path(self.data["output"]["dir"])

    def to_toml(self) -> str:
        return tomli_w.dumps(self.data)

    def digest(self) -> str:
        """SHA-256 of the configuration, ignoring the output directory."""
        d = copy.deepcopy(self.data)
        d.pop("output", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def curve(self) -> knotgeom.KnotCurve:
        k = self.data["knot"]
        if k["name"] == "custom":
            if not k["cos"] or len(k["cos"]) != len(k["sin"]):
                raise ConfigError("custom knot needs cos and sin rows of equal count")
            return knotgeom.KnotCurve(k["center"], k["cos"], k["sin"], "custom")
        try:
            return knotgeom.knot_catalog(k["name"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"unknown knot '{k['name']}'") from exc

    def expected_determinant(self) -> Optional[int]:
        k = self.data["knot"]
        if k["expected_determinant"] == "auto":
            return CATALOG_DETERMINANTS.get(k["name"])
        return int(k["expected_determinant"])

    def metric_config(self, eps: Optional[float] = None) -> knotgeom.MetricConfig:
        m = self.data["metric"]
        t = None if m["t"] == "auto" else float(m["t"])
        return knotgeom.MetricConfig(A=float(m["A"]), eps=float(m["eps"] if eps is None else eps), t=t)

    # -- validation ---------------------------------------------------------
    def validate_values(self) -> None:
        m = self.data["metric"]
        try:
            self.metric_config()
            for e in m["eps_list"]:
                self.metric_config(e)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if len(m["s_start"]) != 3:
            raise ConfigError("metric.s_start needs three entries")
        if m["rho"] <= 0 or m["width"] <= 0:
            raise ConfigError("metric.rho and metric.width must be positive")
        if sorted(m["eps_list"], reverse=True) != list(m["eps_list"]) or len(m["eps_list"]) < 2:
            raise ConfigError("metric.eps_list must hold at least two decreasing values")
        if len(self.data["mesh"]["tube_rings"]) < 3:
            raise ConfigError("mesh.tube_rings needs three refinement levels")
        if self.data["solver"]["count"] < 6:
            raise ConfigError("solver.count must be at least 6")
        self.curve()

    def validate_geometry(self, tube) -> float:
        """Reach margin of the framed tube; raises if the chart is not embedded."""
        margin = knotgeom.reach_check(tube)
        if margin <= 0:
            raise ConfigError(f"tube radius rho (1 + w) exceeds the reach of the knot (margin {margin:.4g})")
        return margin

    def as_dict(self) -> dict[str, Any]:
        return copy.deepcopy(self.data)
