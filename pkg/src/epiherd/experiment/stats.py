"""Hypothesis tests used to compare protocols, plus FDR control."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from ..protocols import Variant

# both samples at or below this size are tested by exact enumeration
EXACT_MAX_N = 8


def _exact_p(a: np.ndarray, b: np.ndarray) -> float:
    """P(|U - mean| >= observed) over every way to split the pooled midranks."""
    ranks = stats.rankdata(np.concatenate([a, b]))
    na, n = a.size, a.size + b.size
    offset = na * (na + 1) / 2.0
    centre = na * b.size / 2.0
    splits = np.array(list(combinations(range(n), na)), dtype=np.intp)
    dist = np.abs(ranks[splits].sum(axis=1) - offset - centre)
    observed = abs(ranks[:na].sum() - offset - centre)
    # midranks are multiples of 0.5, so a small tolerance is exact
    return float(np.mean(dist >= observed - 1e-9))


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """Two-sided Mann-Whitney U p-value.

    Small samples (both sizes <= 8) get the exact permutation p-value over
    every split of the pooled data, ties included. Larger samples use the
    normal approximation with tie-corrected variance and continuity
    correction.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("Mann-Whitney U needs two nonempty samples")
    if a.size <= EXACT_MAX_N and b.size <= EXACT_MAX_N:
        return _exact_p(a, b)
    if np.ptp(np.concatenate([a, b])) == 0:
        return 1.0  # every value tied: no evidence of a shift
    return float(stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True).pvalue)


def two_proportion_z(successes_a: int, n_a: int, successes_b: int, n_b: int) -> float:
    """Two-sided pooled two-proportion z-test p-value."""
    if n_a <= 0 or n_b <= 0:
        raise ValueError("two-proportion z-test needs positive trial counts")
    if not (0 <= successes_a <= n_a and 0 <= successes_b <= n_b):
        raise ValueError("success counts must lie within [0, n]")
    return float(2.0 * stats.norm.sf(abs(two_proportion_z_stat(successes_a, n_a, successes_b, n_b))))


def two_proportion_z_stat(successes_a: int, n_a: int, successes_b: int, n_b: int) -> float:
    """Pooled z statistic; 0 when the pooled rate is 0 or 1 (both samples agree exactly)."""
    pooled = (successes_a + successes_b) / (n_a + n_b)
    var = pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b)
    if var == 0.0:
        return 0.0
    return (successes_a / n_a - successes_b / n_b) / math.sqrt(var)


def benjamini_hochberg(p_values: Sequence[float], q: float = 0.05) -> list[bool]:
    """Step-up FDR decisions in input order."""
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return []
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    adjusted = stats.false_discovery_control(p, method="bh")
    return [bool(x) for x in adjusted <= q]


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    label: str
    p_value: float
    rejected: bool


@dataclass(frozen=True)
class TestReport:
    __test__ = False

    q: float
    results: tuple

    def check_monotone(self) -> bool:
        """Every hypothesis with a smaller p than a rejected one is rejected too."""
        rejected = [r.p_value for r in self.results if r.rejected]
        if not rejected:
            return True
        cut = max(rejected)
        return all(r.rejected for r in self.results if r.p_value <= cut)


# metric name -> (kind, extractor)
_METRICS: dict[str, tuple[str, Callable]] = {
    "success": ("proportion", lambda o: o.success),
    "meh": ("proportion", lambda o: o.meh),
    "final_alignment": ("continuous", lambda o: o.final_alignment),
    "final_jsd": ("continuous", lambda o: o.final_jsd),
}


def compare_protocols(summaries: Sequence, q: float = 0.05) -> TestReport:
    """All protocol pairs per metric within each (loss, latency, k, grid, theta) cell.

    The family for the FDR correction is every test produced here.
    """
    cells: dict[tuple, dict[Variant, object]] = {}
    for s in summaries:
        k = s.key
        cells.setdefault((k.p_base, k.latency, k.k, k.side, k.max_steps), {})[k.protocol] = s
    labels, pvals = [], []
    for cell, by_proto in sorted(cells.items()):
        for pa, pb in combinations(sorted(by_proto), 2):
            sa, sb = by_proto[pa], by_proto[pb]
            if not sa.outcomes or not sb.outcomes:
                continue
            for name, (kind, get) in _METRICS.items():
                xa = [get(o) for o in sa.outcomes]
                xb = [get(o) for o in sb.outcomes]
                if kind == "proportion":
                    p = two_proportion_z(sum(xa), len(xa), sum(xb), len(xb))
                else:
                    p = mann_whitney_u(xa, xb)
                labels.append(f"{name}: {pa.value} vs {pb.value} @ p={cell[0]:g} l={cell[1]} k={cell[2]} N={cell[3]}")
                pvals.append(p)
    decisions = benjamini_hochberg(pvals, q)
    report = TestReport(q, tuple(TestResult(l, p, d) for l, p, d in zip(labels, pvals, decisions)))
    if not report.check_monotone():
        raise RuntimeError("BH decisions are not monotone in p")
    return report
