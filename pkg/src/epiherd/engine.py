"""Synchronous episode loop.

Each timestep runs every phase for all agents before the next phase starts:
observe, decide/encode, broadcast, deliver, fuse, move, check success.
Nothing an agent transmits at step ``t`` can depend on a message delivered
at step ``t``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .belief import Belief, SensorModel, apply_observation, argmax_cell, entropy, init_uniform_perturbed, DEFAULT_PERTURB_SCALE
from .grid import Cell, GridConfig, observe, place_target, start_positions, step_toward
from .metrics import EpisodeResult, MehConfig, TimestepRecord, alignment_per_byte, classify_meh, mean_alignment, mean_pairwise_jsd
from .network import ChannelConfig, InFlight
from .protocols import Message, ProtocolConfig, TransmitState, Variant, apply_incoming, encode_message, mark_sent, note_fusion, should_transmit, to_bytes
from .rng import stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpisodeConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sensor: SensorModel = field(default_factory=SensorModel)
    seed: int = 0
    record_trace: bool = False
    meh: MehConfig = field(default_factory=MehConfig)
    perturb_scale: float = DEFAULT_PERTURB_SCALE
    # arrived agents hold position by default; they still observe and transmit
    arrived_keep_moving: bool = False


@dataclass
class AgentState:
    id: int
    position: Cell
    belief: Belief
    tx: TransmitState
    arrived: bool = False


@dataclass
class StepAudit:
    """Per-step snapshots kept only when tracing, for the phase-order audit."""

    t: int
    positions: list  # where each agent observed from
    observed: list  # belief after the observation phase
    sent: list  # Message or None per agent
    gate_reference: list  # (entropy_at_last_tx, peer_shift) before the decision
    fused: list  # belief after the fusion phase


@dataclass
class EpisodeTrace:
    config: EpisodeConfig
    target: Cell
    initial_beliefs: list
    records: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    def write_csv(self, path) -> Path:
        """One row per timestep; see README for the column layout."""
        path = Path(path)
        n = self.config.grid.agent_count
        header = ["t"]
        header += [f"a{i}_{ax}" for i in range(n) for ax in ("row", "col")]
        header += [f"a{i}_entropy" for i in range(n)]
        header += ["mean_jsd", "mean_alignment", "msgs_sent", "msgs_dropped"]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in self.records:
                row = [r.t]
                for c in r.positions:
                    row += [c.row, c.col]
                row += [repr(h) for h in r.per_agent_entropy]
                row += [repr(r.mean_pairwise_jsd), repr(r.mean_alignment), r.messages_sent, r.messages_dropped]
                w.writerow(row)
        return path


class Episode:
    """One seeded episode. ``run()`` drives it to termination."""

    def __init__(self, cfg: EpisodeConfig):
        self.cfg = cfg
        g = cfg.grid
        self.target = place_target(g, stream(cfg.seed, "target"))
        self.move_rngs = [stream(cfg.seed, "move", i) for i in range(g.agent_count)]
        self.channel_rng = stream(cfg.seed, "channel")
        self.agents = []
        for i, pos in enumerate(start_positions(g)):
            b = init_uniform_perturbed(g, stream(cfg.seed, "perturb", i), cfg.perturb_scale)
            self.agents.append(AgentState(i, pos, b, TransmitState(entropy(b))))
        self.channel = InFlight(g.agent_count)
        self.t = 0
        self.broadcasts = 0
        self.messages_sent = 0
        self.bytes_sent = 0
        self.messages_dropped = 0
        self.messages_delivered = 0
        self.time_to_success: Optional[int] = None
        self.trace = None
        if cfg.record_trace:
            self.trace = EpisodeTrace(cfg, self.target, [a.belief for a in self.agents])
        self._audit: Optional[StepAudit] = None

    # -- phases ---------------------------------------------------------------

    def observe_phase(self):
        g, sm = self.cfg.grid, self.cfg.sensor
        for a in self.agents:
            a.belief = apply_observation(a.belief, observe(a.position, self.target, g), sm)
        if self._audit is not None:
            self._audit.positions = [a.position for a in self.agents]
            self._audit.observed = [a.belief for a in self.agents]

    def transmit_phase(self) -> list:
        pc = self.cfg.protocol
        out = []
        sent = [None] * len(self.agents)
        refs = [(a.tx.entropy_at_last_tx, a.tx.peer_shift) for a in self.agents]
        if pc.variant is not Variant.C0:
            for a in self.agents:
                h = entropy(a.belief)
                if should_transmit(pc, h, a.tx):
                    m = encode_message(pc, a.belief, a.id, self.t)
                    mark_sent(a.tx, h)
                    out.append(m)
                    sent[a.id] = m
        if self._audit is not None:
            self._audit.sent = sent
            self._audit.gate_reference = refs
        return out

    def network_phase(self, outgoing: list) -> list:
        # a broadcast is one transmission per peer: counts and bytes are per copy
        fanout = self.cfg.grid.agent_count - 1
        self.broadcasts += len(outgoing)
        self.messages_sent += fanout * len(outgoing)
        self.bytes_sent += fanout * sum(m.size_bytes for m in outgoing)
        dropped = self.channel.broadcast(self.cfg.channel, outgoing, self.t, self.channel_rng)
        self.messages_dropped += fanout * dropped
        self._step_sent, self._step_dropped = fanout * len(outgoing), fanout * dropped
        inbox = self.channel.deliver(self.t)
        self.messages_delivered += sum(len(box) for box in inbox)
        return inbox

    def fuse_phase(self, inbox: list):
        pc = self.cfg.protocol
        for a in self.agents:
            if inbox[a.id]:
                before = entropy(a.belief)
                a.belief = apply_incoming(pc, a.belief, inbox[a.id])
                note_fusion(a.tx, before, entropy(a.belief))
        if self._audit is not None:
            self._audit.fused = [a.belief for a in self.agents]

    def move_phase(self):
        keep_moving = self.cfg.arrived_keep_moving
        for a in self.agents:
            if a.arrived and not keep_moving:
                continue
            a.position = step_toward(a.position, argmax_cell(a.belief), self.move_rngs[a.id])
            if a.position == self.target:
                a.arrived = True

    # -- loop -----------------------------------------------------------------

    def step(self):
        """Advance one timestep; phases run to completion for all agents in order."""
        self.observe_phase()
        outgoing = self.transmit_phase()
        inbox = self.network_phase(outgoing)
        self.fuse_phase(inbox)
        self.move_phase()

    @property
    def arrived_count(self) -> int:
        return sum(a.arrived for a in self.agents)

    def run(self) -> EpisodeResult:
        cfg = self.cfg
        g = cfg.grid
        for t in range(1, g.max_steps + 1):
            self.t = t
            if self.trace is not None:
                self._audit = StepAudit(t, [], [], [], [], [])
            self.step()
            if self.trace is not None:
                self._record()
            if self.arrived_count >= g.coordination_k:
                self.time_to_success = t
                break
        return self._result()

    def _record(self):
        beliefs = [a.belief for a in self.agents]
        self.trace.steps.append(self._audit)
        self.trace.records.append(
            TimestepRecord(
                t=self.t,
                mean_pairwise_jsd=mean_pairwise_jsd(beliefs) if len(beliefs) > 1 else 0.0,
                mean_alignment=mean_alignment(beliefs, self.target),
                per_agent_entropy=[entropy(b) for b in beliefs],
                positions=[a.position for a in self.agents],
                messages_sent=self._step_sent,
                messages_dropped=self._step_dropped,
            )
        )

    def _result(self) -> EpisodeResult:
        beliefs = [a.belief for a in self.agents]
        success = self.time_to_success is not None
        final_jsd = mean_pairwise_jsd(beliefs) if len(beliefs) > 1 else 0.0
        final_alignment = mean_alignment(beliefs, self.target)
        return EpisodeResult(
            success=success,
            time_to_success=self.time_to_success,
            final_jsd=final_jsd,
            final_alignment=final_alignment,
            meh=classify_meh(success, final_jsd, self.cfg.meh),
            messages_sent=self.messages_sent,
            bytes_sent=self.bytes_sent,
            messages_dropped=self.messages_dropped,
            messages_delivered=self.messages_delivered,
            messages_in_flight=(self.cfg.grid.agent_count - 1) * len(self.channel),
            alignment_per_byte=alignment_per_byte(final_alignment, self.bytes_sent),
            trace=self.trace,
        )


def run_episode(cfg: EpisodeConfig) -> EpisodeResult:
    return Episode(cfg).run()


@dataclass(frozen=True)
class AuditResult:
    ok: bool
    violation: Optional[tuple] = None  # (agent, t)
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def phase_order_audit(trace: EpisodeTrace) -> AuditResult:
    """Recompute every transmission from the pre-fusion belief of its step.

    For each agent and step the observation update is replayed from the
    previous step's post-fusion belief, the gate decision is re-evaluated and
    the message is re-encoded. Any mismatch means step-t content leaked into
    a step-t transmission (or the log is inconsistent).
    """
    if trace is None:
        raise ValueError("phase_order_audit needs an episode run with record_trace=True")
    cfg = trace.config
    pc, g = cfg.protocol, cfg.grid
    prev = list(trace.initial_beliefs)
    for st in trace.steps:
        for i in range(g.agent_count):
            obs = observe(st.positions[i], trace.target, g)
            expect = apply_observation(prev[i], obs, cfg.sensor)
            if not np.array_equal(expect.log_mass, st.observed[i].log_mass):
                return AuditResult(False, (i, st.t), "observation update does not replay")
            h = entropy(st.observed[i])
            ref, shift = st.gate_reference[i]
            tx = TransmitState(ref, peer_shift=shift)
            fire = should_transmit(pc, h, tx)
            sent = st.sent[i]
            if fire != (sent is not None):
                return AuditResult(False, (i, st.t), "gate decision does not replay")
            if sent is not None:
                again = encode_message(pc, st.observed[i], i, st.t)
                if to_bytes(again) != to_bytes(sent):
                    return AuditResult(False, (i, st.t), "message content differs from the pre-fusion belief")
        prev = list(st.fused)
    return AuditResult(True)
