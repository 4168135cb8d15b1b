import json

import numpy as np
import pytest

from dknn.core import SENTINEL, DistKey
from dknn.simulator import (
    LEADER,
    Kind,
    Machine,
    Message,
    MessageLog,
    ProtocolViolation,
    RoundLimitExceeded,
    broadcast,
    default_bandwidth,
    elect_leader,
    gather,
    payload_bits,
    run_protocol,
    stream_to_leader,
)


def machines(k):
    return [Machine(index=i, k=k) for i in range(k)]


def idle(machine):
    return machine.index
    yield  # pragma: no cover


def test_idle_protocol_costs_nothing():
    outputs, metrics = run_protocol(machines(4), idle)
    assert outputs == [0, 1, 2, 3]
    assert (metrics.rounds, metrics.messages) == (0, 0)


@pytest.mark.parametrize("k", [2, 3, 16])
def test_broadcast_is_one_round(k):
    def program(m):
        return (yield from broadcast(m, Kind.Broadcast, 42))

    outputs, metrics = run_protocol(machines(k), program)
    assert outputs == [42] * k
    assert metrics.rounds == 1
    assert metrics.messages == k - 1
    assert metrics.messages_by_kind == {"Broadcast": k - 1}


def test_broadcast_then_gather():
    def program(m):
        v = yield from broadcast(m, Kind.GetCount, 7)
        return (yield from gather(m, Kind.CountReply, v + m.index))

    outputs, metrics = run_protocol(machines(5), program)
    assert outputs[LEADER] == {i: 7 + i for i in range(5)}
    assert (metrics.rounds, metrics.messages) == (2, 8)


def test_silent_gather_members_are_absent():
    def program(m):
        return (yield from gather(m, Kind.CountReply, None if m.index == 2 else 1))

    outputs, metrics = run_protocol(machines(4), program)
    assert outputs[LEADER] == {0: 1, 1: 1, 3: 1}
    assert metrics.messages == 2


def test_stream_takes_one_round_per_item():
    items = [DistKey(i, i) for i in range(6)]

    def program(m):
        return (yield from stream_to_leader(m, Kind.SampleItem, items, len(items)))

    outputs, metrics = run_protocol(machines(3), program)
    assert metrics.rounds == 6
    assert metrics.messages == 12
    assert sorted(outputs[LEADER]) == sorted(items * 2)


def test_election():
    def program(m):
        return (yield from elect_leader(m))

    outputs, metrics = run_protocol(machines(6), program)
    assert outputs == [LEADER] * 6
    assert (metrics.rounds, metrics.messages) == (1, 5)
    assert metrics.phase_rounds["election"] == 1


def test_two_messages_on_one_link_rejected():
    def program(m):
        if m.index == 1:
            yield [Message(Kind.CountReply, 1, 0, 1), Message(Kind.CountReply, 1, 0, 2)]
        else:
            yield []

    with pytest.raises(ProtocolViolation, match="two messages"):
        run_protocol(machines(2), program)


def test_both_directions_of_a_link_allowed():
    def program(m):
        inbox = yield [Message(Kind.CountReply, m.index, 1 - m.index, m.index)]
        return inbox[0].payload

    outputs, metrics = run_protocol(machines(2), program)
    assert outputs == [1, 0]
    assert metrics.rounds == 1


@pytest.mark.parametrize("payload", [
    (1, 2, 3),
    [5, 6],
    np.int64(3),
    -1,
    2**64,
    DistKey(2**64, 0),
    1.5,
    "x",
])
def test_non_key_payloads_refused(payload):
    def program(m):
        if m.index == 1:
            yield [Message(Kind.DataItem, 1, 0, payload)]
        else:
            yield []

    with pytest.raises(ProtocolViolation):
        run_protocol(machines(2), program)


def test_payload_sizes():
    assert payload_bits(None) == 0
    assert payload_bits(5) == 64
    assert payload_bits(DistKey(3, 4)) == 128
    assert payload_bits(SENTINEL) == 128


def test_bandwidth_cap_enforced():
    def program(m):
        if m.index == 1:
            yield [Message(Kind.DataItem, 1, 0, DistKey(1, 1))]
        else:
            yield []

    with pytest.raises(ProtocolViolation, match="exceeds"):
        run_protocol(machines(2), program, bandwidth=64)


def test_default_bandwidth_fits_a_key():
    for n in (2, 100, 2**18, 2**40):
        b = default_bandwidth(n)
        assert b >= 128 and b % max(1, (n - 1).bit_length()) == 0


def test_self_and_out_of_range_destinations():
    for dst in (0, 5, -1):
        def program(m, dst=dst):
            if m.index == 0:
                yield [Message(Kind.Broadcast, 0, dst, 1)]
            else:
                yield []

        with pytest.raises(ProtocolViolation):
            run_protocol(machines(3), program)


def test_spoofed_source_rejected():
    def program(m):
        if m.index == 2:
            yield [Message(Kind.Broadcast, 1, 0, 1)]
        else:
            yield []

    with pytest.raises(ProtocolViolation, match="as 1"):
        run_protocol(machines(3), program)


def test_message_to_finished_machine_rejected():
    def program(m):
        if m.index == 0:
            yield []
            yield [Message(Kind.Broadcast, 0, 1, 1)]
        return None

    with pytest.raises(ProtocolViolation, match="terminated"):
        run_protocol(machines(2), program)


def test_round_limit():
    def forever(m):
        while True:
            yield []

    with pytest.raises(RoundLimitExceeded):
        run_protocol(machines(2), forever, max_rounds=50)


def test_round_limit_is_inclusive():
    def program(m):
        for _ in range(10):
            yield []

    _, metrics = run_protocol(machines(2), program, max_rounds=10)
    assert metrics.rounds == 10


def test_needs_two_machines():
    with pytest.raises(ValueError):
        run_protocol(machines(1), idle)


def test_rng_streams_deterministic_and_distinct():
    def program(m):
        return int(m.rng.integers(2**62))
        yield  # pragma: no cover

    a, _ = run_protocol(machines(4), program, seed=9, trial=1)
    b, _ = run_protocol(machines(4), program, seed=9, trial=1)
    c, _ = run_protocol(machines(4), program, seed=9, trial=2)
    assert a == b and a != c and len(set(a)) == 4


def test_messages_conserved_and_logged(tmp_path):
    def program(m):
        v = yield from broadcast(m, Kind.GetCount, 3)
        yield from gather(m, Kind.CountReply, v)
        return (yield from stream_to_leader(m, Kind.DataItem, [DistKey(m.index, 0)] * 2, 2))

    log = MessageLog()
    _, metrics = run_protocol(machines(4), program, log=log)
    assert metrics.messages == len(log) == sum(metrics.messages_by_kind.values())
    assert metrics.rounds == max(r for r, _ in log) == 4
    assert sum(metrics.phase_rounds.values()) == metrics.rounds
    path = tmp_path / "log.csv"
    log.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "round,kind,src,dst"
    assert lines[1] == "1,GetCount,0,1"
    assert len(lines) == len(log) + 1


def test_metrics_flatten_to_json():
    def program(m):
        return (yield from broadcast(m, Kind.Broadcast, 1))

    _, metrics = run_protocol(machines(3), program)
    flat = json.loads(metrics.to_json())
    assert flat["rounds"] == 1 and flat["messages_Broadcast"] == 2
    assert all(isinstance(v, int) for v in flat.values())
