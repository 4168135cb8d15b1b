"""Synchronous k-machine engine with exact round and message accounting.

Each machine runs a generator.  Every ``yield`` is one round: the machine
yields the messages it sends this round and receives, as the value of the
``yield``, the messages other machines sent to it in the same round::

    inbox = yield [Message(Kind.Broadcast, me, 0, key)]

A machine finishes by returning its local output.  Rounds in which nothing
is sent and every machine terminates are not counted.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Generator, Iterable, NamedTuple

import numpy as np

from .core import DistKey, Metric, UINT64_MAX

MAX_ROUNDS = 10**6
PHASES = ("election", "truncate", "sample", "prune", "select", "finish")
LEADER = 0

DISTKEY_BITS = 128
SCALAR_BITS = 64


class SimulationError(RuntimeError):
    pass


class ProtocolViolation(SimulationError):
    """A machine broke the model: link capacity, payload size or addressing."""


class RoundLimitExceeded(SimulationError):
    pass


class Kind(enum.Enum):
    GetCount = "GetCount"
    CountReply = "CountReply"
    PickPivot = "PickPivot"
    PivotReply = "PivotReply"
    BoundReply = "BoundReply"
    Broadcast = "Broadcast"
    Finished = "Finished"
    SampleItem = "SampleItem"
    DataItem = "DataItem"
    LeaderId = "LeaderId"


DATA_PLANE = frozenset({Kind.SampleItem, Kind.PivotReply, Kind.DataItem})


class Message(NamedTuple):
    kind: Kind
    src: int
    dst: int
    payload: DistKey | int | None = None


def payload_bits(payload: Any) -> int:
    """Size of a payload; anything other than a key, a scalar or nothing is refused."""
    if payload is None:
        return 0
    if type(payload) is DistKey:
        dist, pid = payload
        if type(dist) is int and type(pid) is int and 0 <= dist <= UINT64_MAX and 0 <= pid <= UINT64_MAX:
            return DISTKEY_BITS
    elif type(payload) is int and 0 <= payload <= UINT64_MAX:
        return SCALAR_BITS
    raise ProtocolViolation(f"payload {payload!r} is not a DistKey or a 64-bit scalar")


def default_bandwidth(n: int) -> int:
    """B = c * ceil(log2 n) with the smallest c that fits one DistKey."""
    logn = max(1, math.ceil(math.log2(max(n, 2))))
    return math.ceil(DISTKEY_BITS / logn) * logn


def machine_rng(seed: int, index: int, trial: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, trial, index])


@dataclass
class Machine:
    """One simulated node.  Protocol code only touches its own fields."""

    index: int
    k: int
    ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    coords: np.ndarray = field(default_factory=lambda: np.empty((0, 0), dtype=np.int64))
    labels: np.ndarray | None = None
    query: np.ndarray | None = None
    keys: list[DistKey] | None = None
    rng: np.random.Generator | None = None
    phase: str = "idle"
    state: dict = field(default_factory=dict)

    @property
    def is_leader(self) -> bool:
        return self.index == LEADER

    @property
    def n_local(self) -> int:
        return len(self.keys) if self.keys is not None else int(self.ids.shape[0])


def build_machines(ds, parts: list[np.ndarray], query=None) -> list[Machine]:
    k = len(parts)
    q = None if query is None else np.asarray(query, dtype=np.int64)
    out = []
    for i, idx in enumerate(parts):
        out.append(Machine(
            index=i,
            k=k,
            ids=ds.ids[idx],
            coords=ds.coords[idx],
            labels=None if ds.labels is None else ds.labels[idx],
            query=q,
        ))
    return out


def machines_from_keys(key_sets: Iterable[Iterable[DistKey]]) -> list[Machine]:
    key_sets = [sorted(DistKey(int(a), int(b)) for a, b in keys) for keys in key_sets]
    k = len(key_sets)
    return [Machine(index=i, k=k, keys=keys) for i, keys in enumerate(key_sets)]


@dataclass
class RunMetrics:
    rounds: int = 0
    messages: int = 0
    messages_by_kind: dict[str, int] = field(default_factory=dict)
    phase_rounds: dict[str, int] = field(default_factory=lambda: dict.fromkeys(PHASES, 0))

    def to_flat(self) -> dict[str, int]:
        flat = {"rounds": self.rounds, "messages": self.messages}
        for kind in Kind:
            flat[f"messages_{kind.value}"] = self.messages_by_kind.get(kind.value, 0)
        for phase in sorted(self.phase_rounds):
            flat[f"rounds_{phase}"] = self.phase_rounds[phase]
        return flat

    def to_json(self) -> str:
        return json.dumps(self.to_flat(), sort_keys=True)


Program = Callable[[Machine], Generator[list, list, Any]]


class MessageLog(list):
    """(round, Message) pairs recorded by the engine."""

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["round", "kind", "src", "dst"])
            for rnd, msg in self:
                writer.writerow([rnd, msg.kind.value, msg.src, msg.dst])


def run_protocol(
    machines: list[Machine],
    program: Program,
    seed: int = 0,
    trial: int = 0,
    *,
    bandwidth: int = DISTKEY_BITS,
    max_rounds: int = MAX_ROUNDS,
    log: MessageLog | None = None,
) -> tuple[list[Any], RunMetrics]:
    """Run ``program`` on every machine until all of them return."""
    k = len(machines)
    if k < 2:
        raise ValueError(f"need at least 2 machines, got k={k}")
    for m in machines:
        m.rng = machine_rng(seed, m.index, trial)
        m.state = {}
        m.phase = "idle"

    metrics = RunMetrics()
    by_kind: Counter = Counter()
    gens = [program(m) for m in machines]
    outputs: list[Any] = [None] * k
    alive = list(range(k))
    inboxes: list[list[Message]] = [[] for _ in range(k)]
    started = False
    ticks = 0

    while alive:
        ticks += 1
        if ticks > max_rounds + 1:
            raise RoundLimitExceeded(f"protocol still running after {max_rounds} rounds")
        sent: list[Message] = []
        still = []
        for i in alive:
            gen = gens[i]
            try:
                out = gen.send(inboxes[i] if started else None)
            except StopIteration as stop:
                outputs[i] = stop.value
                continue
            still.append(i)
            if not out:
                continue
            links = set()
            for msg in out:
                if msg.src != i:
                    raise ProtocolViolation(f"machine {i} sent a message as {msg.src}")
                dst = msg.dst
                if dst == i or not 0 <= dst < k:
                    raise ProtocolViolation(f"machine {i} sent to invalid destination {dst}")
                if dst in links:
                    raise ProtocolViolation(
                        f"machine {i} sent two messages to {dst} in round {metrics.rounds + 1}")
                links.add(dst)
                if payload_bits(msg.payload) > bandwidth:
                    raise ProtocolViolation(f"{msg.kind.value} payload exceeds {bandwidth} bits")
                sent.append(msg)
        started = True
        alive = still
        if not sent and not alive:
            break

        metrics.rounds += 1
        lead = machines[alive[0]] if alive else machines[0]
        metrics.phase_rounds[lead.phase] = metrics.phase_rounds.get(lead.phase, 0) + 1
        inboxes = [[] for _ in range(k)]
        live = set(alive)
        for msg in sent:
            if msg.dst not in live:
                raise ProtocolViolation(f"message {msg.kind.value} to terminated machine {msg.dst}")
            inboxes[msg.dst].append(msg)
            by_kind[msg.kind] += 1
        metrics.messages += len(sent)
        if log is not None:
            rnd = metrics.rounds
            log.extend((rnd, msg) for msg in sent)

    metrics.messages_by_kind = {kind.value: by_kind[kind] for kind in Kind if by_kind[kind]}
    return outputs, metrics


# -- collective building blocks (use with ``yield from``) ------------------

def elect_leader(machine: Machine):
    """Min-index election: every machine reports its index to machine 0.

    Indices are common knowledge, so every machine already knows the
    winner; the round is still spent so its cost shows up in the metrics.
    """
    machine.phase = "election"
    if machine.index == LEADER:
        inbox = yield []
        return min([LEADER] + [msg.payload for msg in inbox])
    yield [Message(Kind.LeaderId, machine.index, LEADER, machine.index)]
    return LEADER


def broadcast(machine: Machine, kind: Kind, payload=None, leader: int = LEADER):
    """One round; the leader's payload ends up at every machine."""
    if machine.index == leader:
        yield [Message(kind, leader, j, payload) for j in range(machine.k) if j != leader]
        return payload
    inbox = yield []
    for msg in inbox:
        if msg.kind is kind and msg.src == leader:
            return msg.payload
    raise ProtocolViolation(f"machine {machine.index} expected {kind.value} from leader")


def gather(machine: Machine, kind: Kind, value, leader: int = LEADER):
    """One round; the leader gets ``{index: value}`` (its own value is free).

    A machine passing ``value=None`` stays silent and is absent from the map.
    """
    if machine.index == leader:
        inbox = yield []
        got = {msg.src: msg.payload for msg in inbox if msg.kind is kind}
        if value is not None:
            got[leader] = value
        return got
    yield [] if value is None else [Message(kind, machine.index, leader, value)]
    return None


def stream_to_leader(machine: Machine, kind: Kind, items: list, rounds: int, leader: int = LEADER):
    """``rounds`` rounds; each machine sends one item per round to the leader."""
    if machine.index == leader:
        received = []
        for _ in range(rounds):
            inbox = yield []
            received.extend(msg.payload for msg in inbox if msg.kind is kind)
        return received
    for t in range(rounds):
        yield [Message(kind, machine.index, leader, items[t])] if t < len(items) else []
    return None
