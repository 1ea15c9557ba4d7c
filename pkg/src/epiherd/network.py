"""Shared broadcast channel with congestion-dependent loss and fixed latency."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .protocols import Message


@dataclass(frozen=True)
class ChannelConfig:
    p_base: float = 0.0
    latency: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_base <= 1.0:
            raise ValueError(f"p_base must lie in [0, 1], got {self.p_base}")
        if self.latency < 0:
            raise ValueError(f"latency must be >= 0, got {self.latency}")


def drop_probability(p_base: float, concurrent_senders: int) -> float:
    return 1.0 - (1.0 - p_base) ** concurrent_senders


@dataclass
class InFlight:
    """Messages accepted by the channel and not yet delivered.

    A broadcast is dropped or delivered as a whole: a survivor reaches every
    agent except its sender.
    """

    agent_count: int
    queue: list = field(default_factory=list)  # (deliver_at, seq, message)
    _seq: int = 0

    def broadcast(self, cfg: ChannelConfig, msgs: Sequence[Message], t: int, rng: np.random.Generator) -> int:
        if not msgs:
            return 0
        p = drop_probability(cfg.p_base, len(msgs))
        dropped = 0
        for m in msgs:
            if m.sent_at != t:
                raise ValueError(f"message sent_at {m.sent_at} does not match step {t}")
            # always draw so the channel stream advances identically for any p_base
            if rng.random() < p:
                dropped += 1
                continue
            self.queue.append((t + cfg.latency, self._seq, m))
            self._seq += 1
        return dropped

    def deliver(self, t: int) -> list[list[Message]]:
        """Pop everything due at ``t``; per-recipient lists ordered by sender, then enqueue order."""
        due = [e for e in self.queue if e[0] <= t]
        if due:
            self.queue = [e for e in self.queue if e[0] > t]
        due.sort(key=lambda e: (e[2].sender, e[1]))
        out: list[list[Message]] = [[] for _ in range(self.agent_count)]
        for _, _, m in due:
            for r in range(self.agent_count):
                if r != m.sender:
                    out[r].append(m)
        return out

    def __len__(self) -> int:
        return len(self.queue)


def broadcast(ch: InFlight, cfg: ChannelConfig, msgs: Sequence[Message], t: int, rng: np.random.Generator) -> int:
    return ch.broadcast(cfg, msgs, t, rng)


def deliver(ch: InFlight, t: int) -> list[list[Message]]:
    return ch.deliver(t)
