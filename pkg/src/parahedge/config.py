"""JSON run configuration: defaults, merging and validation."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from ._validation import ContractError
from .diffusion_models import model_from_config
from .geometry import HalfSpaceDomain, payoff_from_config, PAYOFF_FAMILIES
from .quadrature import QuadratureScheme
from .simulation import PathConfig

EXPERIMENTS = ("verify", "price", "hedge", "convergence", "bounds")
MODEL_FAMILIES = ("constant", "diagonal", "rotated_constant", "grid")

DEFAULTS: dict = {
    "experiment": "verify",
    "model": {"family": "constant", "params": {"A": [[1.0]], "b": [0.0]}},
    "domain": {"gamma": [1.0], "k": 0.0},
    "payoff": {"family": "constant", "params": {"value": 1.0}},
    "x0": [1.0],
    "T": 1.0,
    "r": 0.0,
    "quadrature": {"space_order": 48, "time_order": 32, "truncation_sigmas": 8.6,
                   "singularity_substitution": "sin2", "grid_points": 201},
    "montecarlo": {"n_paths": 10000, "n_steps": 256, "seed": 0, "bridge_correction": True,
                   "dump_paths": 0},
    "hedge": {"n_max": 2, "csv_grid": 41},
    "bounds": {"h0_samples": 100000, "det_n_max": 6, "det_random": 100, "beta_m_max": 3,
               "t1_samples": 300, "model_samples": 4000},
    "convergence": {"commutator_values": [0.0, 0.005, 0.01, 0.02, 0.025, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
                    "start": [0.5, 0.0], "omega": [0.0, 1.0], "n_paths": 4000, "n_steps": 128,
                    "time_order": 16, "ratio_slack": 0.1},
    "verify": {"symmetry_samples": 1000, "parametrix_grid": 3, "identity_paths": None},
    "tolerances": {"symmetry_rel": 1e-12, "parametrix_rel": 0.02, "mc_sigmas": 3.0, "det_rel": 1e-10,
                   "beta_rel": 1e-6},
    "tolerance_scale": 1.0,
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ContractError(f"{where}: unknown field")
        # params blocks are family specific and replaced wholesale
        if isinstance(val, dict) and isinstance(base[key], dict) and key != "params":
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class RunConfig:
    """Fully materialized configuration plus the objects built from it."""

    raw: dict

    @property
    def experiment(self) -> str:
        return self.raw["experiment"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def domain(self) -> HalfSpaceDomain:
        return HalfSpaceDomain.normalized(np.asarray(self.raw["domain"]["gamma"], dtype=float),
                                          float(self.raw["domain"]["k"]))

    def model(self):
        return model_from_config(self.raw["model"], len(self.raw["domain"]["gamma"]))

    def payoff(self, dom=None):
        return payoff_from_config(self.raw["payoff"], dom or self.domain())

    def quadrature(self) -> QuadratureScheme:
        return QuadratureScheme(**self.raw["quadrature"])

    def paths(self) -> PathConfig:
        mc = {k: v for k, v in self.raw["montecarlo"].items() if k != "dump_paths"}
        return PathConfig(**mc)


def validate(raw: dict) -> RunConfig:
    """Check names and ranges; errors carry the offending field path."""
    if raw["experiment"] not in EXPERIMENTS:
        raise ContractError(f"experiment: unknown experiment {raw['experiment']!r}")
    if raw["model"].get("family") not in MODEL_FAMILIES:
        raise ContractError(f"model.family: unknown family {raw['model'].get('family')!r} for model")
    if raw["payoff"].get("family") not in PAYOFF_FAMILIES:
        raise ContractError(f"payoff.family: unknown family {raw['payoff'].get('family')!r} for payoff")
    try:
        T = float(raw["T"])
    except (TypeError, ValueError):
        raise ContractError("T: not a number") from None
    if not T > 0:
        raise ContractError("T: must be positive")
    if raw["tolerance_scale"] <= 0:
        raise ContractError("tolerance_scale: must be positive")
    cfg = RunConfig(raw)
    for name, build in (("domain", cfg.domain), ("quadrature", cfg.quadrature), ("montecarlo", cfg.paths)):
        try:
            build()
        except (ContractError, TypeError) as exc:
            raise ContractError(f"{name}: {exc}") from None
    dom = cfg.domain()
    model = cfg.model()
    if model.d != dom.d:
        raise ContractError("model: dimension differs from domain.gamma")
    if len(raw["x0"]) != dom.d:
        raise ContractError("x0: dimension differs from domain.gamma")
    cfg.payoff(dom)
    return cfg


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    """Read a JSON file, merge it over the defaults and validate."""
    try:
        with open(path) as fh:
            user = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ContractError(f"config: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(user, dict):
        raise ContractError("config: top level must be an object")
    return from_dict(user, overrides)


def from_dict(user: dict, overrides: dict | None = None) -> RunConfig:
    raw = _merge(DEFAULTS, user)
    # a config that moves to another dimension should not inherit 1-D defaults
    if "domain" in user and "x0" not in user:
        raise ContractError("x0: required when domain is given")
    for key, val in (overrides or {}).items():
        _set_path(raw, key, val)
    return validate(raw)


def _set_path(raw: dict, dotted: str, val: Any):
    node = raw
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node[p]
    node[parts[-1]] = val
