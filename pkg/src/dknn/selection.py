"""Distributed randomized selection of the l smallest keys.

The leader keeps the candidate range as a half-open key interval (lo, hi]
and the number of keys still wanted inside it.  Each iteration draws a
uniform pivot from the range (machine chosen by weight, then a uniform key
on that machine), counts keys in (lo, pivot], and moves one bound.

Followers track (lo, hi) without extra messages: every GetCount carries the
new pivot, and a pivot drawn after a lo-move is above the previous pivot
while one drawn after a hi-move is not.  The chosen machine of the next
draw learns the last decision from the PickPivot payload.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

from .core import DistKey
from .simulator import (
    LEADER,
    Kind,
    Machine,
    Message,
    MessageLog,
    ProtocolViolation,
    RunMetrics,
    SimulationError,
    broadcast,
    elect_leader,
    gather,
    machines_from_keys,
    run_protocol,
)

# Local range bounds, never sent over a link.
BOTTOM = DistKey(-1, -1)
TOP = DistKey(2**64, 2**64)

NO_UPDATE, LO_MOVED, HI_MOVED = 0, 1, 2


class Shortfall:
    """Returned by :func:`select_smallest` when fewer than l candidates exist."""


SHORTFALL = Shortfall()


def count_in(keys: list[DistKey], lo: DistKey, hi: DistKey) -> int:
    """Number of sorted ``keys`` with lo < key <= hi."""
    return max(0, bisect_right(keys, hi) - bisect_right(keys, lo))


def _draw_local(machine: Machine, keys: list[DistKey], lo: DistKey, hi: DistKey) -> DistKey:
    a = bisect_right(keys, lo)
    b = bisect_right(keys, hi)
    if b <= a:
        raise SimulationError(f"machine {machine.index} asked for a pivot from an empty range")
    return keys[a + int(machine.rng.integers(b - a))]


def pick_pivot(machine: Machine, keys: list[DistKey], weights: list[int], total: int,
               lo: DistKey, hi: DistKey, direction: int = NO_UPDATE):
    """Leader side of one pivot draw; two rounds unless the leader draws itself.

    Machine j is chosen with probability weights[j] / total and returns a
    key uniform over its in-range keys, so every in-range key has
    probability 1 / total.
    """
    if total <= 0:
        raise SimulationError("pivot requested from an empty range")
    t = int(machine.rng.integers(total))
    chosen = 0
    for chosen, w in enumerate(weights):
        if t < w:
            break
        t -= w
    if chosen == machine.index:
        return _draw_local(machine, keys, lo, hi)
    yield [Message(Kind.PickPivot, machine.index, chosen, direction)]
    inbox = yield []
    for msg in inbox:
        if msg.kind is Kind.PivotReply and msg.src == chosen:
            return msg.payload
    raise ProtocolViolation(f"no pivot reply from machine {chosen}")


def follow(machine: Machine, keys: list[DistKey]):
    """Non-leader event loop; answers the leader until Finished (or a fallback Broadcast)."""
    lo, hi, pending = BOTTOM, TOP, None
    out: list[Message] = []
    me = machine.index
    while True:
        inbox = yield out
        out = []
        for msg in inbox:
            kind = msg.kind
            if kind is Kind.GetCount:
                pivot = msg.payload
                if pending is not None:
                    if pivot > pending:
                        lo = pending
                    else:
                        hi = pending
                pending = pivot
                out = [Message(Kind.CountReply, me, msg.src, count_in(keys, lo, pivot))]
            elif kind is Kind.PickPivot:
                if msg.payload == LO_MOVED:
                    lo = pending
                elif msg.payload == HI_MOVED:
                    hi = pending
                elif msg.payload != NO_UPDATE or pending is not None:
                    raise ProtocolViolation(f"machine {me}: inconsistent range update {msg.payload}")
                pending = None
                out = [Message(Kind.PivotReply, me, msg.src, _draw_local(machine, keys, lo, hi))]
            elif kind is Kind.Finished:
                if msg.payload is None:
                    return []
                return keys[:bisect_right(keys, msg.payload)]
            elif kind is Kind.Broadcast:
                return SHORTFALL
            else:
                raise ProtocolViolation(f"machine {me}: unexpected {kind.value}")


def select_smallest(machine: Machine, keys: list[DistKey], l: int, allow_shortfall: bool = False):
    """Both roles of the selection protocol; returns this machine's share of the answer.

    ``keys`` must be sorted.  Starts with three gathers (count, local min,
    local max).  With ``allow_shortfall`` the leader answers a candidate
    total below ``l`` with a Broadcast and every machine returns SHORTFALL.
    """
    machine.phase = "select"
    counts = yield from gather(machine, Kind.CountReply, len(keys))
    mins = yield from gather(machine, Kind.BoundReply, keys[0] if keys else None)
    maxs = yield from gather(machine, Kind.BoundReply, keys[-1] if keys else None)
    if machine.index != LEADER:
        return (yield from follow(machine, keys))

    state = machine.state
    weights = [counts.get(j, 0) for j in range(machine.k)]
    s = sum(weights)
    state.setdefault("candidates", []).append(s)
    if s < l:
        if not allow_shortfall:
            raise SimulationError(f"only {s} keys for l={l}")
        yield from broadcast(machine, Kind.Broadcast, None)
        return SHORTFALL

    lo = BOTTOM
    hi = max(maxs.values()) if maxs else BOTTOM
    state["global_min"] = min(mins.values()) if mins else None
    remaining = l
    direction = NO_UPDATE
    trace = state.setdefault("trace", [])
    while remaining > 0 and s > remaining:
        trace.append((lo, hi, s, remaining))
        pivot = yield from pick_pivot(machine, keys, weights, s, lo, hi, direction)
        yield [Message(Kind.GetCount, machine.index, j, pivot) for j in range(machine.k) if j != machine.index]
        inbox = yield []
        below = [0] * machine.k
        for msg in inbox:
            if msg.kind is Kind.CountReply:
                below[msg.src] = msg.payload
        below[machine.index] = count_in(keys, lo, pivot)
        s_below = sum(below)
        if s_below < remaining:
            remaining -= s_below
            s -= s_below
            lo = pivot
            weights = [w - b for w, b in zip(weights, below)]
            direction = LO_MOVED
        else:
            hi = pivot
            s = s_below
            weights = below
            direction = HI_MOVED
    trace.append((lo, hi, s, remaining))

    machine.phase = "finish"
    bound = hi if l > 0 else None
    yield from broadcast(machine, Kind.Finished, bound)
    if bound is None:
        return []
    return keys[:bisect_right(keys, bound)]


@dataclass
class SelectionResult:
    keys: list[DistKey]
    outputs: list[list[DistKey]]
    metrics: RunMetrics
    iterations: int
    trace: list = field(default_factory=list)

    @property
    def ids(self) -> set[int]:
        return {key.id for key in self.keys}


def _selection_program(l: int):
    def program(machine: Machine):
        yield from elect_leader(machine)
        return (yield from select_smallest(machine, machine.keys, l))
    return program


def run_selection(machines: list[Machine] | list[list[DistKey]], l: int, seed: int = 0,
                  trial: int = 0, *, log: MessageLog | None = None,
                  max_rounds: int | None = None) -> SelectionResult:
    """Select the ``l`` smallest keys held across the machines.

    ``machines`` may be Machine objects with ``keys`` set, or plain key lists.
    """
    if machines and not isinstance(machines[0], Machine):
        machines = machines_from_keys(machines)
    for m in machines:
        if m.keys is None:
            raise ValueError(f"machine {m.index} has no keys")
        m.keys = sorted(m.keys)
    total = sum(len(m.keys) for m in machines)
    if not 0 <= l <= total:
        raise ValueError(f"l={l} must be between 0 and the number of keys {total}")
    kwargs = {} if max_rounds is None else {"max_rounds": max_rounds}
    outputs, metrics = run_protocol(machines, _selection_program(l), seed, trial, log=log, **kwargs)
    trace = machines[LEADER].state.get("trace", [])
    return SelectionResult(
        keys=sorted(key for out in outputs for key in out),
        outputs=outputs,
        metrics=metrics,
        iterations=max(0, len(trace) - 1),
        trace=trace,
    )


def _pivot_program(draws: int):
    def program(machine: Machine):
        yield from elect_leader(machine)
        machine.phase = "select"
        keys = machine.keys
        counts = yield from gather(machine, Kind.CountReply, len(keys))
        if machine.index != LEADER:
            return (yield from follow(machine, keys))
        weights = [counts.get(j, 0) for j in range(machine.k)]
        total = sum(weights)
        picked = []
        for _ in range(draws):
            picked.append((yield from pick_pivot(machine, keys, weights, total, BOTTOM, TOP)))
        machine.phase = "finish"
        yield from broadcast(machine, Kind.Finished, None)
        return picked
    return program


def run_pivot_draws(key_sets: list[list[DistKey]], draws: int, seed: int = 0, trial: int = 0):
    """Repeated pivot draws over a fixed full range; returns (pivots, metrics)."""
    machines = machines_from_keys(key_sets)
    outputs, metrics = run_protocol(machines, _pivot_program(draws), seed, trial)
    return outputs[LEADER], metrics
