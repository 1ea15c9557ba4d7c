"""The four communication protocols: when to send, what to send, how to fuse.

``C0`` sends nothing. ``C1`` broadcasts the argmax cell and entropy every
step and receivers boost that cell. ``C2`` broadcasts a top-k summary every
step, fused by inverse-entropy weights. ``C3`` is ``C2`` gated on the change
in entropy since the sender's last transmission.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .belief import Belief, BeliefSummary, argmax_cell, boost_cells, entropy, fuse_weighted, top_k_summary
from .grid import Cell

SEMANTIC_BYTES = 7
EPISTEMIC_BYTES = 35


class ProtocolError(RuntimeError):
    """A protocol was asked to do something it does not do."""


class Variant(str, enum.Enum):
    C0 = "C0"
    C1 = "C1"
    C2 = "C2"
    C3 = "C3"


@dataclass(frozen=True)
class ProtocolConfig:
    variant: Variant = Variant.C3
    theta: float = 0.20
    k_msg: int = 5
    w_max: float = 0.8
    c1_boost: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if self.k_msg < 1:
            raise ValueError(f"k_msg must be positive, got {self.k_msg}")
        if not 0 < self.w_max <= 1:
            raise ValueError(f"w_max must lie in (0, 1], got {self.w_max}")
        if not self.c1_boost > 0:
            raise ValueError(f"c1_boost must be positive, got {self.c1_boost}")


@dataclass(frozen=True)
class Semantic:
    argmax: Cell
    entropy: float


@dataclass(frozen=True)
class Epistemic:
    summary: BeliefSummary


@dataclass(frozen=True)
class Message:
    sender: int
    sent_at: int
    payload: Union[Semantic, Epistemic]

    @property
    def size_bytes(self) -> int:
        return SEMANTIC_BYTES if isinstance(self.payload, Semantic) else EPISTEMIC_BYTES


@dataclass
class TransmitState:
    """Gate bookkeeping for one agent.

    ``peer_shift`` accumulates the entropy change caused by fusing peer
    messages since the last transmission. The gate discounts it, so only the
    agent's own evidence counts as novelty and received content is not echoed
    straight back onto the channel.
    """

    entropy_at_last_tx: float
    has_transmitted: bool = False
    peer_shift: float = 0.0

    def novelty(self, current_entropy: float) -> float:
        return abs(current_entropy - self.entropy_at_last_tx - self.peer_shift)


def should_transmit(cfg: ProtocolConfig, current_entropy: float, tx: TransmitState) -> bool:
    """Transmission decision; on ``True`` the caller must call :func:`mark_sent`."""
    v = cfg.variant
    if v is Variant.C0:
        return False
    if v is Variant.C3:
        return tx.novelty(current_entropy) >= cfg.theta
    return True


def mark_sent(tx: TransmitState, current_entropy: float) -> None:
    tx.entropy_at_last_tx = current_entropy
    tx.has_transmitted = True
    tx.peer_shift = 0.0


def note_fusion(tx: TransmitState, entropy_before: float, entropy_after: float) -> None:
    tx.peer_shift += entropy_after - entropy_before


def encode_message(cfg: ProtocolConfig, b: Belief, sender: int, t: int) -> Message:
    if cfg.variant is Variant.C0:
        raise ProtocolError("C0 never transmits")
    if cfg.variant is Variant.C1:
        return Message(sender, t, Semantic(argmax_cell(b), entropy(b)))
    return Message(sender, t, Epistemic(top_k_summary(b, cfg.k_msg)))


def c1_gain(sender_entropy: float, c1_boost: float) -> float:
    """Probability mass added for one semantic message; largest for confident senders."""
    return c1_boost / (1.0 + sender_entropy)


def apply_incoming(cfg: ProtocolConfig, b: Belief, msgs: Sequence[Message]) -> Belief:
    if not msgs:
        return b
    if cfg.variant is Variant.C0:
        raise ProtocolError("C0 received messages")
    kinds = {type(m.payload) for m in msgs}
    if len(kinds) > 1:
        raise ProtocolError("malformed batch: mixed semantic and epistemic payloads")
    if Semantic in kinds:
        side = b.side
        idx = [m.payload.argmax.row * side + m.payload.argmax.col for m in msgs]
        gains = [c1_gain(m.payload.entropy, cfg.c1_boost) for m in msgs]
        return boost_cells(b, idx, gains)
    return fuse_weighted(b, [m.payload.summary for m in msgs], cfg.w_max)


# --- replay-log serialization -------------------------------------------------
#
# Little-endian. Header: sender u8, sent_at u16, kind u8.
#   kind 1 (semantic):  row u16, col u16, entropy f64
#   kind 2 (epistemic): count u8, entropy f64, count x (row u16, col u16, prob f64)
# This layout is for logs only; accounted sizes stay at 7 / 35 bytes.

_HEADER = struct.Struct("<BHB")
_SEMANTIC = struct.Struct("<HHd")
_EPI_HEAD = struct.Struct("<Bd")
_EPI_ENTRY = struct.Struct("<HHd")


def to_bytes(msg: Message) -> bytes:
    p = msg.payload
    if isinstance(p, Semantic):
        return _HEADER.pack(msg.sender, msg.sent_at, 1) + _SEMANTIC.pack(p.argmax.row, p.argmax.col, p.entropy)
    s = p.summary
    out = [_HEADER.pack(msg.sender, msg.sent_at, 2), _EPI_HEAD.pack(len(s.entries), s.sender_entropy)]
    out += [_EPI_ENTRY.pack(c.row, c.col, pr) for c, pr in s.entries]
    return b"".join(out)


def from_bytes(buf: bytes, side: int) -> Message:
    sender, sent_at, kind = _HEADER.unpack_from(buf, 0)
    off = _HEADER.size
    if kind == 1:
        row, col, h = _SEMANTIC.unpack_from(buf, off)
        return Message(sender, sent_at, Semantic(Cell(row, col), h))
    if kind != 2:
        raise ValueError(f"unknown payload kind {kind}")
    count, h = _EPI_HEAD.unpack_from(buf, off)
    off += _EPI_HEAD.size
    entries = []
    for _ in range(count):
        row, col, pr = _EPI_ENTRY.unpack_from(buf, off)
        off += _EPI_ENTRY.size
        entries.append((Cell(row, col), pr))
    idx = np.array([c.row * side + c.col for c, _ in entries], dtype=np.intp)
    probs = np.array([pr for _, pr in entries])
    return Message(sender, sent_at, Epistemic(BeliefSummary(tuple(entries), h, idx, probs)))
