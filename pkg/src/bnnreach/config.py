"""Experiment configuration: YAML documents mapped onto nested dataclasses.

Every section rejects keys it does not know, and :meth:`ExperimentConfig.validate`
checks that dimensions agree across sections, so a bad file fails before any
training or certification starts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .abstraction import Obstacle, Partition, RegionSpec, build_partition
from .certifier import CertConfig
from .core import Box
from .posterior import VIConfig
from .simulation import ENVIRONMENTS, Environment
from .synthesis import ActionGrid

__all__ = ["ConfigError", "ExperimentConfig", "load_config"]


class ConfigError(ValueError):
    """The configuration document is malformed or inconsistent."""


def _build(cls, data: Any, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _box(d: Any, where: str) -> Box:
    if not isinstance(d, dict) or set(d) != {"lo", "hi"}:
        raise ConfigError(f"{where}: a box needs exactly the keys 'lo' and 'hi'")
    try:
        return Box(np.asarray(d["lo"], dtype=float), np.asarray(d["hi"], dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class EnvSection:
    name: str = "chain1d"
    params: dict = field(default_factory=dict)


@dataclass
class RegionSection:
    bounds: dict = field(default_factory=dict)
    goal: dict = field(default_factory=dict)
    obstacles: list = field(default_factory=list)


@dataclass
class PartitionSection:
    cells_per_dim: list = field(default_factory=lambda: [20])
    discretized_dims: list | None = None


@dataclass
class DataSection:
    behavior: str = "scripted-proportional"
    episodes: int = 40
    steps: int = 20
    exploration_noise: float = 0.1
    start: dict | None = None


@dataclass
class BNNSection:
    hidden: list = field(default_factory=lambda: [8])
    activation: str = "relu"
    epochs: int = 2000
    lr: float = 0.01
    mc_samples: int = 4
    prior_stddev: float = 1.0
    likelihood_sigma: float = 0.05
    init_stddev: float = 0.01


@dataclass
class PolicySection:
    hidden: list = field(default_factory=lambda: [8])
    activation: str = "tanh"
    epochs: int = 1000
    lr: float = 0.01
    samples: int = 400


@dataclass
class CertifySection:
    n_s: int = 20
    rho_w: float = 0.0
    rho_x: float = 0.0
    eta: float = 0.99
    thresholds: Any = "heuristic"
    rho_w_relative: bool = False
    max_fragments: int | None = 512


@dataclass
class SynthesisSection:
    actions: list | None = None
    grid_per_dim: int = 3
    steps: int = 0
    step_size: float = 0.1


@dataclass
class SimulateSection:
    n_traj: int = 1000
    starts_per_cell: int = 1
    trajectories_dump: int = 0


@dataclass
class ExperimentConfig:
    environment: EnvSection
    region: RegionSection
    partition: PartitionSection
    horizon: int
    data: DataSection
    bnn: BNNSection
    policy: PolicySection
    certify: CertifySection
    synthesis: SynthesisSection
    simulate: SimulateSection
    seed: int = 0
    out: str = "out"

    # ------------------------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a mapping at the top level")
        sections = {
            "environment": EnvSection,
            "region": RegionSection,
            "partition": PartitionSection,
            "data": DataSection,
            "bnn": BNNSection,
            "policy": PolicySection,
            "certify": CertifySection,
            "synthesis": SynthesisSection,
            "simulate": SimulateSection,
        }
        allowed = set(sections) | {"horizon", "seed", "out"}
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise ConfigError(f"unknown top-level keys {unknown}")
        if "region" not in d:
            raise ConfigError("the 'region' section is required")
        built = {name: _build(sc, d.get(name), name) for name, sc in sections.items()}
        cfg = cls(horizon=d.get("horizon", 10), seed=d.get("seed", 0), out=str(d.get("out", "out")), **built)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.horizon, int) or self.horizon < 0:
            raise ConfigError("horizon must be a non-negative integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        env = self.env()
        n, c = env.state_dim, env.control_dim
        spec = self.region_spec()
        if spec.dim != n:
            raise ConfigError(f"region is {spec.dim}-D but {env.name} has a {n}-D state")
        dd = self.discretized_dims()
        if len(self.partition.cells_per_dim) != len(dd):
            raise ConfigError(
                f"partition.cells_per_dim has {len(self.partition.cells_per_dim)} entries "
                f"for {len(dd)} discretized dims"
            )
        if any(d < 0 or d >= n for d in dd) or len(set(dd)) != len(dd):
            raise ConfigError(f"partition.discretized_dims {dd} invalid for a {n}-D state")
        if any(int(m) < 1 for m in self.partition.cells_per_dim):
            raise ConfigError("partition.cells_per_dim entries must be >= 1")
        if self.data.start is not None and _box(self.data.start, "data.start").dim != n:
            raise ConfigError(f"data.start must be {n}-D")
        if self.data.episodes < 1 or self.data.steps < 1:
            raise ConfigError("data.episodes and data.steps must be positive")
        if self.data.behavior not in ("random", "scripted-proportional"):
            raise ConfigError(f"data.behavior {self.data.behavior!r} unknown")
        for sec in ("bnn", "policy"):
            act = getattr(self, sec).activation
            if act not in ("relu", "tanh"):
                raise ConfigError(f"{sec}.activation must be relu or tanh")
        if self.policy.samples < 1 or self.policy.epochs < 0:
            raise ConfigError("policy.samples must be >= 1 and policy.epochs >= 0")
        self.vi_config()
        self.cert_config()
        grid = self.action_grid()
        if grid.control_dim != c:
            raise ConfigError(f"synthesis actions are {grid.control_dim}-D but {env.name} has {c} controls")
        if self.synthesis.steps < 0 or not self.synthesis.step_size > 0:
            raise ConfigError("synthesis.steps must be >= 0 and step_size positive")
        if self.simulate.n_traj < 1 or self.simulate.starts_per_cell < 1 or self.simulate.trajectories_dump < 0:
            raise ConfigError("simulate.n_traj and starts_per_cell must be >= 1")

    # ------------------------------------------------------------------
    def env(self) -> Environment:
        if self.environment.name not in ENVIRONMENTS:
            raise ConfigError(f"environment.name must be one of {ENVIRONMENTS}")
        try:
            return Environment(self.environment.name, dict(self.environment.params or {}))
        except ValueError as exc:
            raise ConfigError(f"environment: {exc}") from exc

    def region_spec(self) -> RegionSpec:
        r = self.region
        bounds = _box(r.bounds, "region.bounds")
        g = r.goal
        if not isinstance(g, dict) or set(g) != {"lo", "hi"}:
            raise ConfigError("region.goal needs 'lo' and 'hi'")
        if len(g["lo"]) != bounds.dim or len(g["hi"]) != bounds.dim:
            raise ConfigError(f"region.goal must be {bounds.dim}-D")
        lo = np.array(bounds.lo)
        hi = np.array(bounds.hi)
        # goal coordinates given as null default to the bounds
        for i, (a, b) in enumerate(zip(g["lo"], g["hi"])):
            if a is not None:
                lo[i] = a
            if b is not None:
                hi[i] = b
        obstacles = []
        for i, ob in enumerate(r.obstacles or []):
            where = f"region.obstacles[{i}]"
            if not isinstance(ob, dict):
                raise ConfigError(f"{where}: expected a mapping")
            dims = tuple(ob.get("dims", (0, 1)))
            if any(int(d) >= bounds.dim or int(d) < 0 for d in dims):
                raise ConfigError(f"{where}: dims {dims} invalid for a {bounds.dim}-D state")
            extra = set(ob) - {"vertices", "A", "b", "dims"}
            if extra:
                raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
            try:
                if "vertices" in ob:
                    obstacles.append(Obstacle.from_vertices(ob["vertices"], dims))
                else:
                    obstacles.append(Obstacle(ob["A"], ob["b"], dims))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"{where}: {exc}") from exc
        try:
            return RegionSpec(bounds, Box(lo, hi), tuple(obstacles))
        except ValueError as exc:
            raise ConfigError(f"region: {exc}") from exc

    def discretized_dims(self) -> list[int]:
        dd = self.partition.discretized_dims
        if dd is None:
            dd = list(range(len(self.partition.cells_per_dim)))
        return [int(d) for d in dd]

    def build_partition(self) -> Partition:
        return build_partition(self.region_spec(), [int(m) for m in self.partition.cells_per_dim], self.discretized_dims())

    def vi_config(self) -> VIConfig:
        b = self.bnn
        try:
            return VIConfig(b.epochs, b.lr, b.mc_samples, b.prior_stddev, b.likelihood_sigma, b.init_stddev, self.seed)
        except ValueError as exc:
            raise ConfigError(f"bnn: {exc}") from exc

    def cert_config(self) -> CertConfig:
        c = self.certify
        t = c.thresholds if isinstance(c.thresholds, str) else tuple(c.thresholds)
        try:
            return CertConfig(
                n_s=c.n_s,
                rho_w=c.rho_w,
                rho_x=c.rho_x,
                eta=c.eta,
                thresholds=t,
                rho_w_relative=c.rho_w_relative,
                max_fragments=c.max_fragments,
                seed=self.seed,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"certify: {exc}") from exc

    def action_grid(self) -> ActionGrid:
        env = self.env()
        try:
            if self.synthesis.actions is not None:
                return ActionGrid(np.asarray(self.synthesis.actions, dtype=float), env.control_box)
            return ActionGrid.uniform(env.control_box, int(self.synthesis.grid_per_dim))
        except ValueError as exc:
            raise ConfigError(f"synthesis: {exc}") from exc

    def data_start(self) -> Box:
        if self.data.start is None:
            return self.region_spec().bounds
        return _box(self.data.start, "data.start")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a YAML config file; ``overrides`` replace top-level keys (e.g. ``seed``)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc}") from exc
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if d is None:
        d = {}
    for k, v in (overrides or {}).items():
        if v is not None:
            d[k] = v
    return ExperimentConfig.from_dict(d)
