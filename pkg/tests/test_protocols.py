import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from epiherd.belief import Belief, entropy, top_k_summary
from epiherd.grid import Cell
from epiherd.protocols import (
    EPISTEMIC_BYTES, SEMANTIC_BYTES, Epistemic, Message, ProtocolConfig, ProtocolError, Semantic, TransmitState,
    Variant, apply_incoming, c1_gain, encode_message, from_bytes, mark_sent, note_fusion, should_transmit, to_bytes,
)


def uniform(n=100, side=10):
    return Belief.from_probs(np.ones(n), side)


def point(idx, n=100, side=10):
    p = np.zeros(n)
    p[idx] = 1.0
    return Belief.from_probs(p, side)


def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(theta=-0.1)
    with pytest.raises(ValueError):
        ProtocolConfig(k_msg=0)
    with pytest.raises(ValueError):
        ProtocolConfig(w_max=1.5)
    with pytest.raises(ValueError):
        ProtocolConfig(c1_boost=0)
    assert ProtocolConfig(variant="C2").variant is Variant.C2


def test_gate_examples():
    cfg = ProtocolConfig(Variant.C3, theta=0.20)
    assert should_transmit(cfg, 0.75, TransmitState(1.00))
    assert not should_transmit(cfg, 0.85, TransmitState(0.90))
    assert should_transmit(ProtocolConfig(Variant.C3, theta=0.0), 5.0, TransmitState(5.0))


def test_fixed_variants():
    tx = TransmitState(1.0)
    assert not should_transmit(ProtocolConfig(Variant.C0), 0.0, tx)
    assert should_transmit(ProtocolConfig(Variant.C1), 1.0, tx)
    assert should_transmit(ProtocolConfig(Variant.C2), 1.0, tx)


def test_peer_shift_is_discounted():
    cfg = ProtocolConfig(Variant.C3, theta=0.2)
    tx = TransmitState(7.8)
    # a fused peer report drops entropy by 3 nats: not own evidence, no send
    note_fusion(tx, 7.8, 4.8)
    assert not should_transmit(cfg, 4.8, tx)
    # own observation then moves it by 0.25 more
    assert should_transmit(cfg, 4.55, tx)
    mark_sent(tx, 4.55)
    assert tx.peer_shift == 0.0 and tx.entropy_at_last_tx == 4.55 and tx.has_transmitted


def test_encode_c1_point_mass():
    m = encode_message(ProtocolConfig(Variant.C1), point(37), sender=2, t=5)
    assert isinstance(m.payload, Semantic)
    assert m.payload.argmax == Cell(3, 7)
    assert m.payload.entropy < 1e-6
    assert m.size_bytes == SEMANTIC_BYTES == 7


def test_encode_c2_summary():
    m = encode_message(ProtocolConfig(Variant.C2, k_msg=5), uniform(), 0, 1)
    assert isinstance(m.payload, Epistemic)
    assert len(m.payload.summary.entries) == 5
    assert m.size_bytes == EPISTEMIC_BYTES == 35


def test_encode_c0_raises():
    with pytest.raises(ProtocolError):
        encode_message(ProtocolConfig(Variant.C0), uniform(), 0, 1)


def test_apply_incoming_identity_and_errors():
    b = uniform()
    for v in Variant:
        assert apply_incoming(ProtocolConfig(v), b, []) is b
    msg = encode_message(ProtocolConfig(Variant.C1), b, 1, 1)
    with pytest.raises(ProtocolError):
        apply_incoming(ProtocolConfig(Variant.C0), b, [msg])
    mixed = [msg, encode_message(ProtocolConfig(Variant.C2), b, 2, 1)]
    with pytest.raises(ProtocolError):
        apply_incoming(ProtocolConfig(Variant.C2), b, mixed)


def test_c1_boost_rule():
    cfg = ProtocolConfig(Variant.C1, c1_boost=0.5)
    b = uniform()
    msg = Message(1, 1, Semantic(Cell(2, 2), 0.0))
    out = apply_incoming(cfg, b, [msg])
    # 0.5 of probability added to cell 22 before renormalizing
    ref = b.probs.copy()
    ref[22] += 0.5
    ref /= ref.sum()
    assert np.allclose(out.probs, ref)
    assert c1_gain(0.0, 0.5) == 0.5
    assert c1_gain(1.0, 0.5) == 0.25
    # confident senders move the receiver more
    weak = apply_incoming(cfg, b, [Message(1, 1, Semantic(Cell(2, 2), 4.0))])
    assert out.prob(Cell(2, 2)) > weak.prob(Cell(2, 2))


def test_c2_fusion_weights_via_apply():
    cfg = ProtocolConfig(Variant.C2, k_msg=1)
    b = uniform()
    msgs = []
    for sender, h in zip((1, 2, 3), (1.0, 2.0, 4.0)):
        s = top_k_summary(point(sender), 1)
        s = type(s)(s.entries, h, s.indices, s.probs)
        msgs.append(Message(sender, 1, Epistemic(s)))
    out = apply_incoming(cfg, b, msgs)
    added = out.probs * (1 + 1.0) - b.probs  # total added mass is 1
    assert np.allclose(added[[1, 2, 3]], [4 / 7, 2 / 7, 1 / 7], atol=1e-9)


@given(st.sampled_from([Variant.C1, Variant.C2]), st.integers(0, 99), st.integers(0, 255), st.integers(0, 65535),
       st.integers(1, 10))
def test_serialization_roundtrip(v, idx, sender, t, k):
    p = np.random.default_rng(idx).random(100)
    b = Belief.from_probs(p, 10)
    m = encode_message(ProtocolConfig(v, k_msg=k), b, sender, t)
    back = from_bytes(to_bytes(m), 10)
    assert back.sender == sender and back.sent_at == t
    assert to_bytes(back) == to_bytes(m)
    if v is Variant.C1:
        assert back.payload == m.payload
    else:
        assert back.payload.summary.entries == m.payload.summary.entries
        assert np.array_equal(back.payload.summary.indices, m.payload.summary.indices)


def test_serialization_layout():
    m = Message(3, 258, Semantic(Cell(1, 2), 0.5))
    raw = to_bytes(m)
    assert raw[:4] == bytes([3, 2, 1, 1])  # sender, sent_at little-endian, kind
    with pytest.raises(ValueError):
        from_bytes(raw[:3] + bytes([9]) + raw[4:], 10)
