"""Scenario files: YAML mappings validated into a ``ScenarioConfig``.

Omitted fields take the 10-node, 1 km x 1 km, 600 s, exponential(1) s /
exponential(1024) bit, SHA-1 defaults.
"""
from __future__ import annotations

import math
import random
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .adversary import FORGED_SEQ_DEFAULT


class ScenarioError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FlowConfig(_Strict):
    source: int
    destination: int
    mean_interarrival: float = Field(1.0, gt=0)
    mean_size_bits: float = Field(1024.0, gt=0)
    start: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _distinct(self):
        if self.source == self.destination:
            raise ValueError("flow source and destination must differ")
        return self


AttackKindName = Literal["none", "internal-black-hole", "external-black-hole", "gray-hole"]


class AttackerConfig(_Strict):
    node: int
    kind: AttackKindName
    colluders: list[int] = Field(default_factory=list)
    gray_drop_fraction: float = Field(0.0, ge=0.0, le=1.0)
    defense_packets: Literal["drop", "relay", "forge"] = "drop"
    forged_seq: int = Field(FORGED_SEQ_DEFAULT, ge=0, lt=2 ** 32)
    forge_holdoff: float = Field(0.0, ge=0.0)


class DefenseConfig(_Strict):
    enabled: bool = False
    probe_interval: int = Field(10, ge=1)
    timeout: float = Field(2.0, gt=0)
    gray_threshold: float = Field(0.2, ge=0.0, le=1.0)


class AodvConfig(_Strict):
    hello_interval: float = Field(1.0, gt=0)
    allowed_hello_loss: int = Field(2, ge=1)
    route_expiry: float = Field(10.0, gt=0)
    strict_freshness: bool = True
    rreq_wait: float = Field(1.0, gt=0)
    rreq_retries: int = Field(2, ge=0)


class RadioConfig(_Strict):
    radius: float = Field(250.0, gt=0)
    link_rate: float = Field(1e6, gt=0)
    processing_delay: float = Field(0.001, ge=0)
    # carried through for reference; no propagation model uses it
    transmit_power_w: float = Field(0.0001, gt=0)


class LinkEventConfig(_Strict):
    a: int
    b: int
    state: Literal["up", "down"]
    time: float = Field(ge=0)


class ScenarioConfig(_Strict):
    name: str = "scenario"
    seed: int = 1
    duration: float = Field(600.0, gt=0)
    bin_width: float = Field(10.0, gt=0)
    nodes: int = Field(10, ge=2)
    arena_size: float = Field(1000.0, gt=0)
    positions: Optional[list[tuple[float, float]]] = None
    placement: Optional[Literal["fixed", "uniform", "connected"]] = None
    placement_seed: Optional[int] = None
    hash: Literal["sha1"] = "sha1"
    flows: list[FlowConfig] = Field(min_length=1)
    attackers: list[AttackerConfig] = Field(default_factory=list)
    defense: DefenseConfig = DefenseConfig()
    aodv: AodvConfig = AodvConfig()
    radio: RadioConfig = RadioConfig()
    link_events: list[LinkEventConfig] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_references(self):
        ids = range(self.nodes)
        placement = self.placement or ("fixed" if self.positions is not None else "connected")
        if placement == "fixed":
            if self.positions is None:
                raise ValueError("placement 'fixed' needs positions")
            if len(self.positions) != self.nodes:
                raise ValueError(f"{len(self.positions)} positions given for {self.nodes} nodes")
            for i, (x, y) in enumerate(self.positions):
                if not (0 <= x <= self.arena_size and 0 <= y <= self.arena_size):
                    raise ValueError(f"node {i} at ({x}, {y}) lies outside the "
                                     f"{self.arena_size:g} m arena")
        for f in self.flows:
            for end in (f.source, f.destination):
                if end not in ids:
                    raise ValueError(f"flow endpoint {end} is not a node (0..{self.nodes - 1})")
        attackers = [a.node for a in self.attackers]
        if len(set(attackers)) != len(attackers):
            raise ValueError("a node may carry at most one attack profile")
        for a in self.attackers:
            if a.node not in ids:
                raise ValueError(f"attacker {a.node} is not a node (0..{self.nodes - 1})")
            for c in a.colluders:
                if c not in attackers:
                    raise ValueError(f"colluder {c} of attacker {a.node} has no attack profile")
        for e in self.link_events:
            for end in (e.a, e.b):
                if end not in ids:
                    raise ValueError(f"link event endpoint {end} is not a node")
        return self

    @property
    def placement_mode(self) -> str:
        return self.placement or ("fixed" if self.positions is not None else "connected")


def parse_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: expected a mapping of scenario keys")
    return scenario_from_dict(data, source=str(path))


def scenario_from_dict(data: dict[str, Any], source: str = "<scenario>") -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors())
        raise ScenarioError(f"{source}: {problems}") from None


def with_overrides(config: ScenarioConfig, *, seed: Optional[int] = None,
                   duration: Optional[float] = None, defense: Optional[bool] = None) -> ScenarioConfig:
    data = config.model_dump()
    if seed is not None:
        data["seed"] = seed
    if duration is not None:
        data["duration"] = duration
    if defense is not None:
        data["defense"]["enabled"] = defense
    return scenario_from_dict(data, source=config.name)


def resolve_positions(config: ScenarioConfig, seed: Optional[int] = None) -> dict[int, tuple[float, float]]:
    mode = config.placement_mode
    if mode == "fixed":
        return {i: (float(x), float(y)) for i, (x, y) in enumerate(config.positions)}
    pseed = config.placement_seed if config.placement_seed is not None else (
        config.seed if seed is None else seed)
    rng = random.Random(f"placement:{pseed}")
    size = config.arena_size
    if mode == "uniform":
        return {i: (rng.uniform(0, size), rng.uniform(0, size)) for i in range(config.nodes)}
    return connected_placement(config.nodes, size, config.radio.radius, rng)


def connected_placement(n: int, size: float, radius: float,
                        rng: random.Random) -> dict[int, tuple[float, float]]:
    """Drop each node within radio range of a random earlier node, inside the arena."""
    pos = {0: (rng.uniform(0, size), rng.uniform(0, size))}
    for i in range(1, n):
        while True:
            ax, ay = pos[rng.randrange(i)]
            r = rng.uniform(0.3, 0.95) * radius
            theta = rng.uniform(0, 2 * math.pi)
            x, y = ax + r * math.cos(theta), ay + r * math.sin(theta)
            if 0 <= x <= size and 0 <= y <= size:
                pos[i] = (x, y)
                break
    return pos
