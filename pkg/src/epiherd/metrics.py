"""Task and epistemic metrics: JSD, alignment to truth, MEH, bandwidth efficiency."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .belief import PROB_FLOOR, Belief
from .grid import Cell

LN2 = math.log(2.0)
DEFAULT_EPSILON = 0.1


@dataclass(frozen=True)
class MehConfig:
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not 0 < self.epsilon < LN2:
            raise ValueError(f"epsilon must lie in (0, ln 2), got {self.epsilon}")


@dataclass
class TimestepRecord:
    t: int
    mean_pairwise_jsd: float
    mean_alignment: float
    per_agent_entropy: list
    positions: list = field(default_factory=list)
    messages_sent: int = 0
    messages_dropped: int = 0


@dataclass
class EpisodeResult:
    success: bool
    time_to_success: Optional[int]
    final_jsd: float
    final_alignment: float
    meh: bool
    messages_sent: int
    bytes_sent: int
    messages_dropped: int = 0
    messages_delivered: int = 0
    # copies still queued when the episode ended (latency > 0 only)
    messages_in_flight: int = 0
    alignment_per_byte: Optional[float] = None
    trace: Optional[list] = None

    # one flag per MEH denominator; both are set on the same episodes, the
    # denominators differ only at aggregation time
    @property
    def meh_failed_denominator(self) -> bool:
        return self.meh

    @property
    def meh_all_denominator(self) -> bool:
        return self.meh


def _as_probs(b) -> np.ndarray:
    if isinstance(b, Belief):
        return b.probs
    p = np.asarray(b, dtype=float)
    return p / p.sum()


def jsd(p, q) -> float:
    """Jensen-Shannon divergence in nats; accepts beliefs or probability vectors."""
    p = _as_probs(p)
    q = _as_probs(q)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    p = np.maximum(p, PROB_FLOOR)
    q = np.maximum(q, PROB_FLOOR)
    m = 0.5 * (p + q)
    log_m = np.log(m)
    kl_p = float(np.dot(p, np.log(p) - log_m))
    kl_q = float(np.dot(q, np.log(q) - log_m))
    return min(max(0.5 * kl_p + 0.5 * kl_q, 0.0), LN2)


def mean_pairwise_jsd(beliefs: Sequence) -> float:
    if len(beliefs) < 2:
        raise ValueError("mean pairwise JSD needs at least two beliefs")
    # sum pairs in a permutation-invariant order
    vals = sorted(jsd(a, b) for a, b in combinations(beliefs, 2))
    return math.fsum(vals) / len(vals)


def mean_alignment(beliefs: Sequence[Belief], target: Cell) -> float:
    return math.fsum(b.prob(target) for b in beliefs) / len(beliefs)


def classify_meh(success: bool, final_jsd: float, cfg: MehConfig = MehConfig()) -> bool:
    """Herding: the team failed while its beliefs had converged."""
    return (not success) and final_jsd < cfg.epsilon


def alignment_per_byte(final_mean_alignment: float, bytes_sent: int) -> Optional[float]:
    if bytes_sent <= 0:
        return None
    return final_mean_alignment / bytes_sent


def meh_rates(results: Sequence[EpisodeResult]) -> tuple[float, float]:
    """(MEH over all episodes, MEH over failed episodes); the latter is 0 with no failures."""
    n = len(results)
    meh = sum(r.meh for r in results)
    failed = sum(not r.success for r in results)
    return (meh / n if n else 0.0, meh / failed if failed else 0.0)
