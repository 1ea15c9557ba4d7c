"""Bounded grid world: target placement, field of view, movement."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np


class Cell(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class GridConfig:
    side_length: int = 50
    fov_radius: int = 2
    agent_count: int = 4
    max_steps: int = 200
    coordination_k: int = 3

    def __post_init__(self):
        if self.side_length < 1:
            raise ValueError(f"side_length must be positive, got {self.side_length}")
        if self.fov_radius < 0:
            raise ValueError(f"fov_radius must be non-negative, got {self.fov_radius}")
        if self.agent_count < 1:
            raise ValueError(f"agent_count must be positive, got {self.agent_count}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be positive, got {self.max_steps}")
        if not 1 <= self.coordination_k <= self.agent_count:
            raise ValueError(
                f"coordination_k must lie in [1, {self.agent_count}], got {self.coordination_k}"
            )

    @property
    def n_cells(self) -> int:
        return self.side_length * self.side_length

    def index(self, cell: Cell) -> int:
        return cell.row * self.side_length + cell.col

    def cell(self, index: int) -> Cell:
        return Cell(*divmod(int(index), self.side_length))

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell.row < self.side_length and 0 <= cell.col < self.side_length


@dataclass(frozen=True)
class Observation:
    """What one agent sees in one timestep.

    ``visible`` holds flat (row-major) indices; ``visible_cells`` is the same
    set as :class:`Cell` values.
    """

    visible: np.ndarray
    target_detected: Optional[Cell]
    side_length: int

    @property
    def visible_cells(self) -> frozenset:
        n = self.side_length
        return frozenset(Cell(int(i) // n, int(i) % n) for i in self.visible)


def chebyshev(a: Cell, b: Cell) -> int:
    return max(abs(a.row - b.row), abs(a.col - b.col))


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a.row - b.row) + abs(a.col - b.col)


@lru_cache(maxsize=65536)
def _fov_indices(row: int, col: int, side: int, radius: int) -> np.ndarray:
    rows = np.arange(max(0, row - radius), min(side, row + radius + 1))
    cols = np.arange(max(0, col - radius), min(side, col + radius + 1))
    idx = (rows[:, None] * side + cols[None, :]).ravel()
    idx.setflags(write=False)
    return idx


def visible_indices(pos: Cell, cfg: GridConfig) -> np.ndarray:
    """Flat indices of every in-bounds cell within Chebyshev radius of ``pos``."""
    return _fov_indices(pos.row, pos.col, cfg.side_length, cfg.fov_radius)


def observe(pos: Cell, target: Cell, cfg: GridConfig) -> Observation:
    detected = target if chebyshev(pos, target) <= cfg.fov_radius else None
    return Observation(visible_indices(pos, cfg), detected, cfg.side_length)


def place_target(cfg: GridConfig, rng: np.random.Generator) -> Cell:
    return cfg.cell(rng.integers(cfg.n_cells))


def step_toward(pos: Cell, goal: Cell, rng: np.random.Generator) -> Cell:
    """One cardinal step that shortens the Manhattan distance to ``goal``.

    When both axes would help, the axis is picked with a fair coin from
    ``rng``; the coin is only drawn in that case.
    """
    dr = (goal.row > pos.row) - (goal.row < pos.row)
    dc = (goal.col > pos.col) - (goal.col < pos.col)
    if dr and dc:
        if rng.random() < 0.5:
            dc = 0
        else:
            dr = 0
    return Cell(pos.row + dr, pos.col + dc)


def start_positions(cfg: GridConfig) -> list[Cell]:
    """Corner starts for four agents, evenly spaced perimeter cells otherwise."""
    last = cfg.side_length - 1
    if cfg.agent_count == 4:
        return [Cell(0, 0), Cell(0, last), Cell(last, 0), Cell(last, last)]
    if last == 0:
        return [Cell(0, 0)] * cfg.agent_count
    # clockwise walk of the boundary starting at the origin
    ring = (
        [Cell(0, c) for c in range(last)]
        + [Cell(r, last) for r in range(last)]
        + [Cell(last, c) for c in range(last, 0, -1)]
        + [Cell(r, 0) for r in range(last, 0, -1)]
    )
    return [ring[(i * len(ring)) // cfg.agent_count] for i in range(cfg.agent_count)]
