"""Experimental designs: which conditions to run and how episodes are seeded."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product
from typing import Optional, Sequence

from ..belief import SensorModel
from ..engine import EpisodeConfig
from ..grid import GridConfig
from ..metrics import MehConfig
from ..network import ChannelConfig
from ..protocols import ProtocolConfig, Variant
from ..rng import derive_seed

ALL_PROTOCOLS = (Variant.C0, Variant.C1, Variant.C2, Variant.C3)
STANDARD_LOSS_RATES = (0.0, 0.1, 0.3)
STANDARD_LATENCIES = (0, 1, 3)
STANDARD_KS = (2, 3, 4)
STANDARD_THETAS = tuple(round(0.05 * i, 2) for i in range(9))
STANDARD_SCALING_GRIDS = ((25, 50), (50, 200), (75, 350), (100, 500))
DESK_EPISODES = 200
FULL_EPISODES = 1000


@dataclass(frozen=True, order=True)
class ConditionKey:
    protocol: Variant
    p_base: float
    latency: int
    k: int
    side: int = 50
    max_steps: int = 200
    theta: float = 0.20

    def label(self) -> str:
        s = f"{self.protocol.value} p={self.p_base:g} l={self.latency} k={self.k} N={self.side} T={self.max_steps}"
        if self.protocol is Variant.C3:
            s += f" theta={self.theta:g}"
        return s


def _ppm(x: float) -> int:
    return int(round(x * 1_000_000))


def seed_group(key: ConditionKey) -> tuple:
    """Fields that select an episode's seed.

    Protocol and theta are deliberately left out so every protocol (and every
    gate threshold) faces the same targets, perturbations and tie-break
    streams in a given network/k/grid cell.
    """
    return (_ppm(key.p_base), key.latency, key.k, key.side, key.max_steps)


def episode_seed(base_seed: int, key: ConditionKey, episode: int) -> int:
    return derive_seed(base_seed, *seed_group(key), episode)


@dataclass(frozen=True)
class FactorialDesign:
    protocols: Sequence[Variant] = ALL_PROTOCOLS
    loss_rates: Sequence[float] = STANDARD_LOSS_RATES
    latencies: Sequence[int] = STANDARD_LATENCIES
    coordination_ks: Sequence[int] = STANDARD_KS
    episodes_per_condition: int = DESK_EPISODES
    base_seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    sensor: SensorModel = field(default_factory=SensorModel)
    meh: MehConfig = field(default_factory=MehConfig)

    def __post_init__(self):
        object.__setattr__(self, "protocols", tuple(Variant(p) for p in self.protocols))
        for name in ("loss_rates", "latencies", "coordination_ks"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.episodes_per_condition < 1:
            raise ValueError("episodes_per_condition must be positive")
        # validate every level up front rather than mid-run
        for p in self.loss_rates:
            ChannelConfig(p_base=p)
        for lat in self.latencies:
            ChannelConfig(latency=lat)
        for k in self.coordination_ks:
            replace(self.grid, coordination_k=k)

    def conditions(self) -> list[ConditionKey]:
        g = self.grid
        return [
            ConditionKey(v, p, lat, k, g.side_length, g.max_steps, self.protocol.theta)
            for v, p, lat, k in product(self.protocols, self.loss_rates, self.latencies, self.coordination_ks)
        ]

    def __len__(self) -> int:
        return len(self.protocols) * len(self.loss_rates) * len(self.latencies) * len(self.coordination_ks)

    def episode_config(self, key: ConditionKey, episode: int, record_trace: bool = False) -> EpisodeConfig:
        grid = replace(
            self.grid, side_length=key.side, max_steps=key.max_steps, coordination_k=key.k
        )
        return EpisodeConfig(
            grid=grid,
            protocol=replace(self.protocol, variant=key.protocol, theta=key.theta),
            channel=ChannelConfig(key.p_base, key.latency),
            sensor=self.sensor,
            seed=episode_seed(self.base_seed, key, episode),
            record_trace=record_trace,
            meh=self.meh,
        )

    def with_episodes(self, n: int) -> "FactorialDesign":
        return replace(self, episodes_per_condition=n)


def desk_condition(
    protocol: Variant = Variant.C3, k: int = 3, p_base: float = 0.0, latency: int = 0,
    side: int = 50, max_steps: int = 200, theta: Optional[float] = None,
) -> ConditionKey:
    """The zero-loss, zero-latency condition most comparisons use."""
    return ConditionKey(Variant(protocol), p_base, latency, k, side, max_steps, 0.20 if theta is None else theta)
