"""Run configuration: a YAML file plus ``--section.key value`` overrides."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dynamics import NoiseModel
from .optimizer import ConstraintConfig, CostConfig, OptimizerSettings, RobustnessConfig
from .targets import TABLE_STATES, BinomialSpec, GkpSpec, SqueezeSpec
from .tomography import SdfConfig

TASKS = ("optimize", "propagate", "tomography", "reconstruct", "analyze", "compare-gates", "error-budget")
STOCHASTIC = {"optimize", "tomography", "error-budget", "compare-gates"}


class ConfigError(ValueError):
    """The configuration is malformed or references missing inputs."""


DEFAULTS = {
    "task": None,
    "seed": None,
    "output": "out",
    "target": {"state": "bin_s1_+z"},
    "space": {"dim": 30},
    "optimizer": {"n_starts": 4, "t_grid_us": None, "n_t": 8, "maxiter": 3000, "n_seg_opt": 90,
                  "n_seg_out": 240, "omega_hz": 2000.0, "initial_qubit": "auto", "epsilon": 0.05,
                  "t_max_us": 2400.0},
    "constraints": {"enabled": True, "slew_rate_times_t_hz": 267.0, "cutoff_times_t": 15.0},
    "robustness": {"sigma_hz": 75.0, "n": 2},
    "noise": {"gamma": 0.0, "delta_hz": 0.0, "nbar": 0.0},
    "sdf": {"omega_hz": 2000.0, "shots": None, "sim_dim": None, "quadrant_n": 25, "extent": None},
    "reconstruct": {"dims": [30, 40, 50, 60], "max_iter": 3000},
    "lamb_dicke": {"enabled": False, "eta": 0.083, "mode_hz": 1.33e6, "order": 4},
    "inputs": {"waveform": None, "state": None, "grid": None, "rho": None, "hastrup": None},
    "gates": {"db": [9, 10, 11, 12, 13], "dim": 150, "optimized": True},
    "budget": {"states": list(TABLE_STATES), "recon": True, "gamma": 18.0, "delta_hz": 18.0, "nbar": 0.05},
}


def _merge(base: dict, extra: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        key = f"{path}{k}"
        if k not in out:
            raise ConfigError(f"unknown config key '{key}'")
        if isinstance(out[k], dict) and k != "target":
            if not isinstance(v, dict):
                raise ConfigError(f"'{key}' must be a mapping")
            out[k] = _merge(out[k], v, key + ".")
        else:
            out[k] = v
    return out


def parse_overrides(items) -> dict:
    """['--a.b', '3', ...] -> {'a': {'b': 3}} with YAML scalar typing."""
    out: dict = {}
    items = list(items)
    if len(items) % 2:
        raise ConfigError(f"override flags need a value each: {items}")
    for flag, raw in zip(items[::2], items[1::2]):
        if not flag.startswith("--"):
            raise ConfigError(f"expected --key.path, got {flag!r}")
        node = out
        parts = flag[2:].split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return out


@dataclass
class RunConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def load(cls, path=None, overrides=None, task: str | None = None) -> "RunConfig":
        raw = {}
        if path is not None:
            p = Path(path)
            if not p.exists():
                raise ConfigError(f"config file {p} not found")
            raw = yaml.safe_load(p.read_text()) or {}
        data = _merge(DEFAULTS, raw)
        data = _merge(data, overrides or {})
        if task is not None:
            data["task"] = task
        cfg = cls(data)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.data[key]

    @property
    def task(self) -> str:
        return self.data["task"]

    @property
    def seed(self):
        return self.data["seed"]

    @property
    def output(self) -> Path:
        return Path(self.data["output"])

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.task in STOCHASTIC and self.seed is None:
            raise ConfigError(f"task '{self.task}' needs an explicit seed")
        for key, val in self.data["inputs"].items():
            if val is not None and key != "hastrup" and not Path(val).exists():
                raise ConfigError(f"input '{key}' points to missing file {val}")
        if self.data["inputs"]["hastrup"] is not None and not Path(self.data["inputs"]["hastrup"]).exists():
            raise ConfigError(f"hastrup parameter file {self.data['inputs']['hastrup']} not found")
        if int(self.data["space"]["dim"]) < 2:
            raise ConfigError("space.dim must be >= 2")
        try:
            self.target_spec()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad target: {exc}") from exc

    def hash(self) -> str:
        """Digest of everything that can change results (the output directory cannot)."""
        data = {k: v for k, v in self.data.items() if k != "output"}
        blob = json.dumps(data, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # --- typed views ---------------------------------------------------------

    def target_spec(self):
        t = dict(self.data["target"])
        if "state" in t:
            name = t["state"]
            if name not in TABLE_STATES:
                raise ValueError(f"unknown table state {name!r}")
            return TABLE_STATES[name]
        kind = t.pop("kind", None)
        if kind == "squeezed":
            return SqueezeSpec(**t)
        if kind == "gkp":
            return GkpSpec(**t)
        if kind == "binomial":
            return BinomialSpec(**t)
        raise ValueError(f"target.kind must be squeezed, gkp or binomial, got {kind!r}")

    def cost(self) -> CostConfig:
        o = self.data["optimizer"]
        return CostConfig(float(o["epsilon"]), float(o["t_max_us"]) * 1e-6)

    def constraints(self) -> ConstraintConfig:
        c = self.data["constraints"]
        return ConstraintConfig(2 * np.pi * float(c["slew_rate_times_t_hz"]), 2 * np.pi * float(c["cutoff_times_t"]),
                                bool(c["enabled"]))

    def robustness(self) -> RobustnessConfig:
        r = self.data["robustness"]
        return RobustnessConfig(2 * np.pi * float(r["sigma_hz"]), int(r["n"]))

    def settings(self) -> OptimizerSettings:
        o = self.data["optimizer"]
        grid = None if o["t_grid_us"] is None else tuple(float(t) * 1e-6 for t in o["t_grid_us"])
        return OptimizerSettings(n_starts=int(o["n_starts"]), t_grid=grid, n_t=int(o["n_t"]), maxiter=int(o["maxiter"]))

    def noise(self) -> NoiseModel:
        n = self.data["noise"]
        return NoiseModel(float(n["gamma"]), 2 * np.pi * float(n["delta_hz"]), float(n["nbar"]))

    def sdf(self, noise: NoiseModel | None = None) -> SdfConfig:
        s = self.data["sdf"]
        shots = None if s["shots"] is None else int(s["shots"])
        sim = None if s["sim_dim"] is None else int(s["sim_dim"])
        return SdfConfig(2 * np.pi * float(s["omega_hz"]), noise if noise is not None else self.noise(), shots, sim)
