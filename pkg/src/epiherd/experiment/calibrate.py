"""Sensor/boost calibration sweep and the protocol-ordering checks it asserts."""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import product
from typing import Mapping, Sequence

from ..belief import SensorModel
from ..protocols import Variant
from .design import ALL_PROTOCOLS, FactorialDesign, desk_condition
from .runner import ConditionSummary, run_conditions

MISS_LEVELS = (1.0, 2.0, 4.0)
HIT_LEVELS = (10.0, 20.0, 40.0)
BOOST_FACTORS = (0.5, 1.0, 2.0)  # multiples of the configured c1_boost

# headline success rates at k=3, zero loss and latency, used for the +-0.15 band
REFERENCE_SUCCESS = {Variant.C0: 0.128, Variant.C1: 0.339, Variant.C2: 0.629, Variant.C3: 0.698}
REFERENCE_TOLERANCE = 0.15


@dataclass(frozen=True)
class Check:
    criterion: int
    name: str
    passed: bool
    detail: str


def ordering_checks(by_protocol: Mapping[Variant, ConditionSummary]) -> list[Check]:
    """Ordinal claims on success, message volume, final JSD and MEH (criteria 10-13)."""
    s = {v: by_protocol[v] for v in ALL_PROTOCOLS}
    c0, c1, c2, c3 = (s[v] for v in ALL_PROTOCOLS)
    sr = {v: x.success_rate for v, x in s.items()}
    checks = [
        Check(10, "success C3 > C2 > C1 > C0", c3.success_rate > c2.success_rate > c1.success_rate > c0.success_rate,
              " / ".join(f"{v.value}={sr[v]:.3f}" for v in ALL_PROTOCOLS)),
        Check(10, "success C2 - C1 >= 0.10", c2.success_rate - c1.success_rate >= 0.10,
              f"gap={c2.success_rate - c1.success_rate:.3f}"),
        Check(10, "success C0 <= 0.25", c0.success_rate <= 0.25, f"C0={c0.success_rate:.3f}"),
    ]
    reduction = 1.0 - c3.msgs_mean / c2.msgs_mean if c2.msgs_mean else 0.0
    checks += [
        Check(11, "C3 msgs <= 60", c3.msgs_mean <= 60, f"C3={c3.msgs_mean:.1f}"),
        Check(11, "C2 msgs >= 1000", c2.msgs_mean >= 1000, f"C2={c2.msgs_mean:.1f}"),
        Check(11, "C3 reduction vs C2 >= 95%", reduction >= 0.95, f"reduction={reduction:.4f}"),
    ]
    j = {v: x.final_jsd_mean for v, x in s.items()}
    checks += [
        Check(12, "JSD C1, C2 < 0.02", j[Variant.C1] < 0.02 and j[Variant.C2] < 0.02,
              f"C1={j[Variant.C1]:.4f} C2={j[Variant.C2]:.4f}"),
        Check(12, "JSD C3 in [0.02, 0.10]", 0.02 <= j[Variant.C3] <= 0.10, f"C3={j[Variant.C3]:.4f}"),
        Check(12, "JSD C0 > 0.30", j[Variant.C0] > 0.30, f"C0={j[Variant.C0]:.4f}"),
    ]
    checks += [
        Check(13, "MEH(all) C3 <= 0.10", c3.meh_rate_all <= 0.10, f"C3={c3.meh_rate_all:.3f}"),
        Check(13, "MEH(all) C2 >= 0.25", c2.meh_rate_all >= 0.25, f"C2={c2.meh_rate_all:.3f}"),
        Check(13, "MEH(all) C1 > C2", c1.meh_rate_all > c2.meh_rate_all,
              f"C1={c1.meh_rate_all:.3f} C2={c2.meh_rate_all:.3f}"),
        Check(13, "MEH(failed) C1, C2 >= 0.90", c1.meh_rate_failed >= 0.90 and c2.meh_rate_failed >= 0.90,
              f"C1={c1.meh_rate_failed:.3f} C2={c2.meh_rate_failed:.3f}"),
        Check(13, "MEH(failed) C3 <= 0.25", c3.meh_rate_failed <= 0.25, f"C3={c3.meh_rate_failed:.3f}"),
    ]
    return checks


def reference_band_checks(by_protocol: Mapping[Variant, ConditionSummary]) -> list[Check]:
    return [
        Check(10, f"success {v.value} within +-{REFERENCE_TOLERANCE} of {REFERENCE_SUCCESS[v]}",
              abs(by_protocol[v].success_rate - REFERENCE_SUCCESS[v]) <= REFERENCE_TOLERANCE,
              f"{v.value}={by_protocol[v].success_rate:.3f}")
        for v in ALL_PROTOCOLS
    ]


@dataclass(frozen=True)
class CalibrationPoint:
    miss: float
    hit: float
    c1_boost: float
    summaries: tuple
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def calibration_grid(design: FactorialDesign) -> list[tuple[float, float, float]]:
    base = design.protocol.c1_boost
    return [(m, h, base * f) for m, h, f in product(MISS_LEVELS, HIT_LEVELS, BOOST_FACTORS)]


def calibrate(
    design: FactorialDesign, points: Sequence[tuple[float, float, float]] | None = None, workers: int = 1, k: int = 3,
) -> list[CalibrationPoint]:
    """Run all four protocols at each (miss, hit, c1_boost) point and check the ordering."""
    out = []
    for miss, hit, boost in points if points is not None else calibration_grid(design):
        d = replace(
            design, sensor=SensorModel(miss, hit), protocol=replace(design.protocol, c1_boost=boost),
        )
        keys = [desk_condition(v, k=k, side=d.grid.side_length, max_steps=d.grid.max_steps, theta=d.protocol.theta)
                for v in ALL_PROTOCOLS]
        summaries = run_conditions(d, keys, workers)
        checks = ordering_checks({s.key.protocol: s for s in summaries})
        out.append(CalibrationPoint(miss, hit, boost, tuple(summaries), tuple(checks)))
    return out
