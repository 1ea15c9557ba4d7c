"""Run designs, aggregate episodes into condition summaries.

Episodes are independent and seeded from their condition key and index, so
they can run in any order on any number of worker processes. Results are
collected back in job order, which makes summaries identical for every
worker count.
"""

from __future__ import annotations

import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from ..engine import EpisodeConfig, phase_order_audit, run_episode
from ..grid import GridConfig
from ..metrics import EpisodeResult, TimestepRecord
from ..protocols import Variant
from .design import ALL_PROTOCOLS, STANDARD_THETAS, ConditionKey, FactorialDesign, desk_condition

log = logging.getLogger(__name__)


class AuditFailure(RuntimeError):
    """An invariant audit failed on some episode."""


@dataclass(frozen=True)
class EpisodeOutcome:
    """The slice of an :class:`EpisodeResult` that aggregation needs."""

    success: bool
    time_to_success: Optional[int]
    final_jsd: float
    final_alignment: float
    meh: bool
    messages_sent: int
    bytes_sent: int
    messages_dropped: int
    messages_delivered: int
    messages_in_flight: int
    alignment_per_byte: Optional[float]
    records: Optional[tuple] = None  # TimestepRecords when traced
    audit_ok: Optional[bool] = None
    audit_violation: Optional[tuple] = None

    @classmethod
    def from_result(cls, r: EpisodeResult, records=None, audit=None) -> "EpisodeOutcome":
        return cls(
            r.success, r.time_to_success, r.final_jsd, r.final_alignment, r.meh,
            r.messages_sent, r.bytes_sent, r.messages_dropped, r.messages_delivered,
            r.messages_in_flight, r.alignment_per_byte,
            records,
            None if audit is None else audit.ok,
            None if audit is None else audit.violation,
        )


def run_job(cfg: EpisodeConfig) -> EpisodeOutcome:
    """Run one episode; traced episodes are audited here and their heavy snapshots dropped."""
    r = run_episode(cfg)
    if r.trace is None:
        return EpisodeOutcome.from_result(r)
    audit = phase_order_audit(r.trace)
    return EpisodeOutcome.from_result(r, tuple(r.trace.records), audit)


def _mean(xs: Sequence[float]) -> Optional[float]:
    return math.fsum(xs) / len(xs) if xs else None


def _sd(xs: Sequence[float]) -> Optional[float]:
    # sample SD; a single observation has no spread by convention
    if not xs:
        return None
    if len(xs) == 1:
        return 0.0
    return statistics.stdev(xs)


@dataclass(frozen=True)
class ConditionSummary:
    key: ConditionKey
    episodes: int
    success_rate: float
    tts_mean: Optional[float]
    tts_sd: Optional[float]
    final_jsd_mean: float
    final_jsd_sd: float
    final_alignment_mean: float
    final_alignment_sd: float
    meh_rate_all: float
    meh_rate_failed: float
    msgs_mean: float
    bytes_mean: float
    apb_mean: Optional[float]
    # raw per-episode outcomes, kept for statistical tests and plot data
    outcomes: tuple = field(default=(), repr=False, compare=False)

    @classmethod
    def aggregate(cls, key: ConditionKey, outcomes: Sequence[EpisodeOutcome]) -> "ConditionSummary":
        n = len(outcomes)
        if n == 0:
            raise ValueError(f"no episodes for {key.label()}")
        successes = [o for o in outcomes if o.success]
        failures = n - len(successes)
        tts = [float(o.time_to_success) for o in successes]
        jsd = [o.final_jsd for o in outcomes]
        align = [o.final_alignment for o in outcomes]
        meh = sum(o.meh for o in outcomes)
        apb = [o.alignment_per_byte for o in outcomes if o.alignment_per_byte is not None]
        s = cls(
            key=key,
            episodes=n,
            success_rate=len(successes) / n,
            tts_mean=_mean(tts),
            tts_sd=_sd(tts),
            final_jsd_mean=_mean(jsd),
            final_jsd_sd=_sd(jsd),
            final_alignment_mean=_mean(align),
            final_alignment_sd=_sd(align),
            meh_rate_all=meh / n,
            meh_rate_failed=meh / failures if failures else 0.0,
            msgs_mean=math.fsum(o.messages_sent for o in outcomes) / n,
            bytes_mean=math.fsum(o.bytes_sent for o in outcomes) / n,
            apb_mean=_mean(apb),
            outcomes=tuple(outcomes),
        )
        s.check()
        return s

    def check(self) -> None:
        """Re-verify aggregation invariants; raises :class:`AuditFailure`."""
        expect = self.meh_rate_failed * (1.0 - self.success_rate)
        if abs(self.meh_rate_all - expect) > 1e-9:
            raise AuditFailure(f"{self.key.label()}: MEH denominator identity broken ({self.meh_rate_all} vs {expect})")
        for o in self.outcomes:
            if o.messages_sent != o.messages_delivered + o.messages_dropped + o.messages_in_flight:
                raise AuditFailure(f"{self.key.label()}: message conservation broken")
            if o.audit_ok is False:
                raise AuditFailure(f"{self.key.label()}: phase-order audit failed at (agent, t) = {o.audit_violation}")


def _run_configs(configs: list[EpisodeConfig], workers: int) -> list[EpisodeOutcome]:
    if workers <= 1 or len(configs) < 2:
        return [run_job(c) for c in configs]
    chunk = max(1, len(configs) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map yields in submission order regardless of completion order
        return list(pool.map(run_job, configs, chunksize=chunk))


def run_conditions(
    design: FactorialDesign, keys: Sequence[ConditionKey], workers: int = 1, trace: bool = False
) -> list[ConditionSummary]:
    n = design.episodes_per_condition
    configs = [design.episode_config(key, e, record_trace=trace) for key in keys for e in range(n)]
    log.info("running %d conditions x %d episodes on %d worker(s)", len(keys), n, workers)
    outcomes = _run_configs(configs, workers)
    return [ConditionSummary.aggregate(key, outcomes[i * n:(i + 1) * n]) for i, key in enumerate(keys)]


def run_condition(design: FactorialDesign, key: ConditionKey, workers: int = 1, trace: bool = False) -> ConditionSummary:
    return run_conditions(design, [key], workers, trace)[0]


def run_factorial(design: FactorialDesign, workers: int = 1, trace: bool = False) -> list[ConditionSummary]:
    return run_conditions(design, design.conditions(), workers, trace)


def theta_sweep(
    design: FactorialDesign, base: Optional[ConditionKey] = None, thetas: Iterable[float] = STANDARD_THETAS,
    workers: int = 1, include_c2: bool = False,
) -> list[ConditionSummary]:
    """One C3 summary per theta on shared seeds; optionally a trailing C2 reference row."""
    base = base or desk_condition(Variant.C3)
    if base.protocol is not Variant.C3:
        raise ValueError("theta sweep needs a C3 base condition")
    keys = [replace(base, theta=float(th)) for th in thetas]
    if include_c2:
        keys.append(replace(base, protocol=Variant.C2))
    return run_conditions(design, keys, workers)


def scaling_sweep(
    design: FactorialDesign, grids: Iterable[tuple[int, int]], protocols: Sequence[Variant] = ALL_PROTOCOLS,
    workers: int = 1, k: int = 3,
) -> list[ConditionSummary]:
    """Per-grid, per-protocol summaries at zero loss and latency."""
    keys = []
    for side, steps in grids:
        GridConfig(side_length=side, max_steps=steps, coordination_k=k)  # validate
        for v in protocols:
            keys.append(desk_condition(v, k=k, side=side, max_steps=steps, theta=design.protocol.theta))
    return run_conditions(design, keys, workers)


def coverage_bound(side: int, steps: int) -> float:
    """Upper bound on the fraction of the grid one agent can newly expose: 5T/N^2."""
    return 5.0 * steps / (side * side)
