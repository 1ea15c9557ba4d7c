"""Log-space categorical belief over grid cells.

A :class:`Belief` is immutable from the caller's point of view: every
operation returns a new, normalized belief. Probabilities are floored at
``PROB_FLOOR`` so entropies and divergences stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import Cell, GridConfig, Observation

PROB_FLOOR = 1e-12
ENTROPY_FLOOR = 1e-6
DEFAULT_PERTURB_SCALE = 1e-3


class FusionError(ValueError):
    """Raised for invalid fusion inputs (nothing to fuse, bad cap)."""


@dataclass(frozen=True)
class SensorModel:
    miss_log_decrement: float = 2.0
    hit_log_increment: float = 20.0

    def __post_init__(self):
        for name in ("miss_log_decrement", "hit_log_increment"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class BeliefSummary:
    """Top-k cells of a belief with their raw probabilities, plus its entropy."""

    entries: tuple  # ((Cell, prob), ...) in descending probability
    sender_entropy: float
    indices: np.ndarray  # flat indices matching ``entries``
    probs: np.ndarray


class Belief:
    __slots__ = ("side", "log_mass", "_probs", "_entropy")

    def __init__(self, log_mass: np.ndarray, side: int, probs: np.ndarray | None = None):
        self.side = side
        self.log_mass = log_mass
        self._probs = probs
        self._entropy = None

    @classmethod
    def from_probs(cls, probs, side: int) -> "Belief":
        """Normalize a non-negative mass vector (floor applied)."""
        p = np.asarray(probs, dtype=float)
        total = p.sum()
        if not total > 0:
            raise ValueError("probability mass must be positive")
        p = p / total
        np.maximum(p, PROB_FLOOR, out=p)
        p /= p.sum()
        return cls(np.log(p), side, p)

    @classmethod
    def from_log(cls, log_mass, side: int) -> "Belief":
        lm = np.asarray(log_mass, dtype=float)
        return cls.from_probs(np.exp(lm - lm.max()), side)

    @property
    def probs(self) -> np.ndarray:
        if self._probs is None:
            self._probs = np.exp(self.log_mass)
        return self._probs

    @property
    def n_cells(self) -> int:
        return self.log_mass.shape[0]

    def prob(self, cell: Cell) -> float:
        return float(self.probs[cell.row * self.side + cell.col])

    def copy(self) -> "Belief":
        return Belief(self.log_mass.copy(), self.side, None if self._probs is None else self._probs.copy())

    def __repr__(self) -> str:
        return f"Belief(side={self.side}, entropy={entropy(self):.4f})"


def init_uniform_perturbed(
    cfg: GridConfig, rng: np.random.Generator, perturb_scale: float = DEFAULT_PERTURB_SCALE
) -> Belief:
    if perturb_scale < 0:
        raise ValueError(f"perturb_scale must be >= 0, got {perturb_scale}")
    n = cfg.n_cells
    log_mass = np.full(n, -math.log(n))
    if perturb_scale > 0:
        log_mass += rng.uniform(-perturb_scale, perturb_scale, size=n)
    return Belief.from_log(log_mass, cfg.side_length)


def entropy(b: Belief) -> float:
    """Shannon entropy in nats."""
    if b._entropy is None:
        p = b.probs
        h = -float(np.dot(p, b.log_mass))
        b._entropy = min(max(h, 0.0), math.log(b.n_cells))
    return b._entropy


def argmax_cell(b: Belief) -> Cell:
    # np.argmax returns the first maximum, i.e. the row-major tie-break
    return Cell(*divmod(int(np.argmax(b.log_mass)), b.side))


def top_k_indices(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest values, descending, ties by lower index."""
    n = values.shape[0]
    if k >= n:
        return np.argsort(-values, kind="stable")
    kth = np.partition(values, n - k)[n - k]
    cand = np.flatnonzero(values >= kth)
    order = np.argsort(-values[cand], kind="stable")
    return cand[order[:k]]


def top_k_summary(b: Belief, k_msg: int) -> BeliefSummary:
    if not 1 <= k_msg <= b.n_cells:
        raise ValueError(f"k_msg must lie in [1, {b.n_cells}], got {k_msg}")
    idx = top_k_indices(b.log_mass, k_msg)
    probs = b.probs[idx].copy()
    entries = tuple((Cell(*divmod(int(i), b.side)), float(p)) for i, p in zip(idx, probs))
    return BeliefSummary(entries, entropy(b), idx, probs)


def apply_observation(b: Belief, obs: Observation, sm: SensorModel) -> Belief:
    if obs.visible.size == 0:
        return b
    lm = b.log_mass.copy()
    lm[obs.visible] -= sm.miss_log_decrement
    if obs.target_detected is not None:
        t = obs.target_detected.row * b.side + obs.target_detected.col
        # the detected cell is not a miss
        lm[t] += sm.miss_log_decrement + sm.hit_log_increment
    return Belief.from_log(lm, b.side)


def fusion_weights(entropies: Sequence[float], w_max: float) -> np.ndarray:
    """Inverse-entropy weights with a per-sender cap.

    Excess weight above ``w_max`` is handed to the uncapped senders in
    proportion to their raw weights, repeating until nothing exceeds the cap
    or every sender is capped.
    """
    if not 0 < w_max <= 1:
        raise FusionError(f"w_max must lie in (0, 1], got {w_max}")
    h = np.maximum(np.asarray(entropies, dtype=float), ENTROPY_FLOOR)
    if h.size == 0:
        raise FusionError("nothing to fuse")
    raw = 1.0 / h
    raw /= raw.sum()
    w = raw.copy()
    capped = np.zeros(w.shape, dtype=bool)
    for _ in range(w.size):
        over = (w > w_max) & ~capped
        if not over.any():
            break
        capped |= over
        w[capped] = w_max
        free = ~capped
        if not free.any():
            break
        w[free] = raw[free] / raw[free].sum() * (1.0 - w_max * capped.sum())
    return w


def fuse_weighted(b: Belief, summaries: Sequence[BeliefSummary], w_max: float) -> Belief:
    if not summaries:
        raise FusionError("nothing to fuse")
    w = fusion_weights([s.sender_entropy for s in summaries], w_max)
    p = b.probs.copy()
    for wj, s in zip(w, summaries):
        # np.add.at is unnecessary: summary indices are distinct
        p[s.indices] += wj * s.probs
    return Belief.from_probs(p, b.side)


def boost_cells(b: Belief, indices: Sequence[int], amounts: Sequence[float]) -> Belief:
    """Add probability ``amounts`` at ``indices`` (repeats accumulate), renormalize."""
    p = b.probs.copy()
    np.add.at(p, np.asarray(indices, dtype=np.intp), np.asarray(amounts, dtype=float))
    return Belief.from_probs(p, b.side)
