"""Scenario configuration: JSON schema, validation and loading.

Schema (all times in seconds, agents indexed from 0)::

    {
      "name": "example",
      "plant": {"A": [[...], ...], "B": [[...], ...]},
      "topology": {"agents": 4, "edges": [[0, 1], [1, 2], [2, 3]]},
      "initial_states": [[...], ...],        # one row per agent
      "mode": "delay" | "no_delay",
      "h": 0.002,
      "d": 0.014,                            # delay mode only, multiple of h
      "delays": [0.010, 0.012, 0.014],       # delay mode only
      "per_recipient_delays": false,
      "sigma": 0.5, "b": 1.0,
      "alpha": null, "eps": null,            # Riccati shift and margin
      "c": null,                             # coupling override (>= 1/lambda_2)
      "P": null,                             # Lyapunov matrix witness
      "eta": null,                           # threshold override
      "duration": 20.0,
      "seed": 0,
      "substeps": 1
    }
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DisconnectedGraphError
from .graph import Topology, is_connected
from .synthesis import MODES, PlantModel, delay_steps

_KNOWN = {"name", "plant", "topology", "initial_states", "mode", "h", "d", "delays",
          "per_recipient_delays", "sigma", "b", "alpha", "eps", "c", "P", "eta",
          "duration", "seed", "substeps"}


@dataclass(frozen=True)
class ScenarioConfig:
    plant: PlantModel
    topology: Topology
    initial_states: np.ndarray
    mode: str
    h: float
    d: float = 0.0
    delays: tuple = ()
    per_recipient_delays: bool = False
    sigma: float = 0.5
    b: float = 1.0
    alpha: float | None = None
    eps: float | None = None
    c: float | None = None
    P: np.ndarray | None = None
    eta: float | None = None
    duration: float = 20.0
    seed: int = 0
    substeps: int = 1
    name: str = "scenario"
    source_hash: str = field(default="", compare=False)

    @property
    def N(self) -> int:
        return self.topology.agent_count

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.h))

    @property
    def p_max(self) -> int:
        return delay_steps(self.d, self.h) if self.mode == "delay" else 0

    def with_overrides(self, **kw) -> "ScenarioConfig":
        cfg = replace(self, **{k: v for k, v in kw.items() if v is not None})
        cfg.validate()
        return cfg

    def validate(self) -> None:
        n = self.plant.n
        N = self.N
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ConfigError(f"h must be positive, got {self.h}")
        if self.initial_states.shape != (N, n):
            raise ConfigError(f"initial_states must be {N}x{n}, got {self.initial_states.shape}")
        if not np.all(np.isfinite(self.initial_states)):
            raise ConfigError("initial_states must be finite")
        if N > 1 and not is_connected(self.topology):
            raise DisconnectedGraphError("graph not connected")
        if not self.plant.is_controllable():
            raise ConfigError("(A, B) is not controllable")
        if self.duration < 0:
            raise ConfigError("duration must be >= 0")
        if abs(self.duration / self.h - self.steps) > 1e-6:
            raise ConfigError(f"duration {self.duration} is not a multiple of h={self.h}")
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")
        if not 0 < self.sigma < 1:
            raise ConfigError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not self.b > 0:
            raise ConfigError(f"b must be positive, got {self.b}")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.mode == "delay":
            p_max = delay_steps(self.d, self.h)
            if not self.delays:
                raise ConfigError("delay mode needs a non-empty delay set")
            from .netsim import round_delay
            for raw in self.delays:
                if raw < 0:
                    raise ConfigError(f"negative delay {raw}")
                p = round_delay(raw, self.h, p_max)
                if p < 1:
                    raise ConfigError("delays must be at least one sampling period in delay mode")

    def plant_dict(self) -> dict:
        return {"A": self.plant.A.tolist(), "B": self.plant.B.tolist()}


def _matrix(value, name):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} is not a numeric array") from exc
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a 2-D array")
    return arr


def from_dict(raw: dict, source_hash: str = "") -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        plant = PlantModel(_matrix(raw["plant"]["A"], "A"), _matrix(raw["plant"]["B"], "B"))
        topo_raw = raw["topology"]
        topology = Topology.from_edges(int(topo_raw["agents"]), topo_raw.get("edges", []))
        x0 = np.array(raw["initial_states"], dtype=float)
        if x0.ndim == 1:
            x0 = x0.reshape(-1, 1)
        mode = raw.get("mode", "no_delay")
        opt = lambda k: None if raw.get(k) is None else float(raw[k])  # noqa: E731
        cfg = ScenarioConfig(
            plant=plant, topology=topology, initial_states=x0, mode=mode,
            h=float(raw["h"]), d=float(raw.get("d", 0.0) or 0.0),
            delays=tuple(float(v) for v in raw.get("delays", ()) or ()),
            per_recipient_delays=bool(raw.get("per_recipient_delays", False)),
            sigma=float(raw.get("sigma", 0.5)), b=float(raw.get("b", 1.0)),
            alpha=opt("alpha"), eps=opt("eps"), c=opt("c"),
            P=None if raw.get("P") is None else _matrix(raw["P"], "P"),
            eta=opt("eta"), duration=float(raw.get("duration", 20.0)),
            seed=int(raw.get("seed", 0)), substeps=int(raw.get("substeps", 1)),
            name=str(raw.get("name", "scenario")), source_hash=source_hash,
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def load(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return from_dict(raw, hashlib.sha256(data).hexdigest())


def to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "name": cfg.name,
        "plant": cfg.plant_dict(),
        "topology": {"agents": cfg.N, "edges": [list(e) for e in cfg.topology.edges]},
        "initial_states": cfg.initial_states.tolist(),
        "mode": cfg.mode, "h": cfg.h, "d": cfg.d, "delays": list(cfg.delays),
        "per_recipient_delays": cfg.per_recipient_delays,
        "sigma": cfg.sigma, "b": cfg.b, "alpha": cfg.alpha, "eps": cfg.eps, "c": cfg.c,
        "P": None if cfg.P is None else cfg.P.tolist(), "eta": cfg.eta,
        "duration": cfg.duration, "seed": cfg.seed, "substeps": cfg.substeps,
    }


def reference_path() -> Path:
    return Path(__file__).with_name("scenarios") / "reference.json"
