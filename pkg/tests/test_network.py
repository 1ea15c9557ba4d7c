import numpy as np
import pytest

from epiherd.belief import Belief
from epiherd.grid import Cell
from epiherd.network import ChannelConfig, InFlight, broadcast, deliver, drop_probability
from epiherd.protocols import Message, Semantic


def msg(sender, t):
    return Message(sender, t, Semantic(Cell(0, sender), 1.0))


def test_config_validation():
    with pytest.raises(ValueError):
        ChannelConfig(p_base=1.5)
    with pytest.raises(ValueError):
        ChannelConfig(latency=-1)


@pytest.mark.parametrize("p,n,expected", [(0.0, 4, 0.0), (0.1, 4, 0.3439), (0.3, 1, 0.3), (0.5, 0, 0.0)])
def test_drop_probability(p, n, expected):
    assert drop_probability(p, n) == pytest.approx(expected, abs=1e-12)


def test_lossless_never_drops():
    ch = InFlight(4)
    rng = np.random.default_rng(0)
    for t in range(50):
        assert broadcast(ch, ChannelConfig(), [msg(i, t) for i in range(4)], t, rng) == 0
        deliver(ch, t)


def test_empty_broadcast_is_noop():
    ch = InFlight(4)
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    assert ch.broadcast(ChannelConfig(0.5), [], 0, rng) == 0
    assert rng.bit_generator.state == state
    assert deliver(ch, 0) == [[], [], [], []]


def test_monte_carlo_drop_rate():
    rng = np.random.default_rng(42)
    cfg = ChannelConfig(p_base=0.1)
    dropped = 0
    trials = 100_000
    for t in range(trials // 4):
        ch = InFlight(4)
        dropped += ch.broadcast(cfg, [msg(i, t) for i in range(4)], t, rng)
    assert abs(dropped / trials - 0.3439) <= 0.005


def test_same_step_delivery_excludes_sender_and_orders_by_sender():
    ch = InFlight(3)
    ch.broadcast(ChannelConfig(), [msg(2, 1), msg(0, 1)], 1, np.random.default_rng(0))
    boxes = ch.deliver(1)
    assert [m.sender for m in boxes[0]] == [2]
    assert [m.sender for m in boxes[1]] == [0, 2]
    assert [m.sender for m in boxes[2]] == [0]
    assert len(ch) == 0


def test_latency_delays_delivery():
    ch = InFlight(2)
    ch.broadcast(ChannelConfig(latency=3), [msg(0, 5)], 5, np.random.default_rng(0))
    for t in (5, 6, 7):
        assert ch.deliver(t) == [[], []]
    assert [m.sender for m in ch.deliver(8)[1]] == [0]
    assert ch.deliver(9) == [[], []]


def test_sent_at_must_match_step():
    with pytest.raises(ValueError):
        InFlight(2).broadcast(ChannelConfig(), [msg(0, 3)], 4, np.random.default_rng(0))


def test_whole_message_drop_and_determinism():
    cfg = ChannelConfig(p_base=0.3, latency=1)

    def run(seed):
        ch = InFlight(4)
        rng = np.random.default_rng(seed)
        log = []
        for t in range(30):
            d = ch.broadcast(cfg, [msg(i, t) for i in range(4)], t, rng)
            boxes = ch.deliver(t)
            # every surviving broadcast reaches all three peers or none
            senders = [m.sender for box in boxes for m in box]
            for s in set(senders):
                assert senders.count(s) == 3
            log.append((d, tuple(tuple(m.sender for m in b) for b in boxes)))
        return log

    assert run(7) == run(7)
