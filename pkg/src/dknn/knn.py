"""Distributed l-nearest-neighbors: truncate, sample, prune, select.

Only (distance, id) keys ever cross a link.  The query point is installed on
every machine before the run starts.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import SENTINEL, DistKey, Metric, check_query
from .kernels import distance_keys, smallest_keys
from .selection import SHORTFALL, select_smallest
from .simulator import (
    LEADER,
    Kind,
    Machine,
    MessageLog,
    RunMetrics,
    broadcast,
    elect_leader,
    gather,
    run_protocol,
    stream_to_leader,
)

# Below this l the sampling step is skipped and selection runs on the
# truncated sets directly.
MIN_SAMPLED_L = 4


def ceil_log2(x: int) -> int:
    return (x - 1).bit_length() if x > 1 else 0


@dataclass(frozen=True)
class KnnConfig:
    l: int
    sample_factor: int = 12
    rank_factor: int = 21
    metric: Metric = Metric.L2
    seed: int = 0

    def __post_init__(self):
        if self.l < 0:
            raise ValueError(f"l must be non-negative, got {self.l}")
        if self.sample_factor < 1 or self.rank_factor < 1:
            raise ValueError("sample_factor and rank_factor must be >= 1")
        object.__setattr__(self, "metric", Metric.parse(self.metric))

    @property
    def samples_per_machine(self) -> int:
        return self.sample_factor * ceil_log2(self.l)

    def pruning_rank(self, total_samples: int) -> int:
        """1-based rank of the pruning key in the leader's sorted sample."""
        return min(self.rank_factor * ceil_log2(self.l), total_samples)

    @property
    def uses_sampling(self) -> bool:
        return self.l >= MIN_SAMPLED_L


@dataclass
class KnnResult:
    ids: list[int]
    outputs: list[list[int]]
    metrics: RunMetrics
    survivors: int
    fallback_taken: bool = False
    pruning_key: DistKey | None = None
    extra: dict = field(default_factory=dict)


def local_keys(machine: Machine, metric: Metric, limit: int | None = None) -> list[DistKey]:
    """This machine's keys against its installed query, ascending, at most ``limit``."""
    if machine.query is None:
        raise ValueError(f"machine {machine.index} has no query installed")
    n = int(machine.ids.shape[0])
    if n == 0:
        return []
    dist = distance_keys(machine.coords, machine.query, int(metric))
    idx = smallest_keys(dist, machine.ids, n if limit is None else limit)
    return [DistKey(d, i) for d, i in zip(dist[idx].tolist(), machine.ids[idx].tolist())]


def local_truncate(machine: Machine, l: int, metric: Metric) -> list[DistKey]:
    """Exactly ``l`` keys: the machine's closest real keys, then sentinels."""
    real = local_keys(machine, metric, l)
    return real + [SENTINEL] * (l - len(real))


def prune(keys: list[DistKey], r: DistKey) -> list[DistKey]:
    """Keys <= r, sentinels dropped.  ``keys`` must be sorted."""
    kept = keys[:bisect_right(keys, r)]
    while kept and kept[-1] == SENTINEL:
        kept.pop()
    return kept


def sample_phase(machine: Machine, padded: list[DistKey], cfg: KnnConfig):
    """Stream uniform samples (with replacement) to the leader, get back the pruning key."""
    machine.phase = "sample"
    m = cfg.samples_per_machine
    picks = machine.rng.integers(0, len(padded), size=m).tolist()
    mine = [padded[j] for j in picks]
    received = yield from stream_to_leader(machine, Kind.SampleItem, mine, m)
    r = None
    if machine.index == LEADER:
        pool = sorted(received + mine)
        r = pool[cfg.pruning_rank(len(pool)) - 1]
        machine.state["samples"] = len(pool)
        machine.state["pruning_key"] = r
    machine.phase = "prune"
    r = yield from broadcast(machine, Kind.Broadcast, r)
    return r


def _knn_program(cfg: KnnConfig):
    def program(machine: Machine):
        yield from elect_leader(machine)
        machine.phase = "truncate"
        real = local_keys(machine, cfg.metric, cfg.l)
        if cfg.uses_sampling:
            padded = real + [SENTINEL] * (cfg.l - len(real))
            r = yield from sample_phase(machine, padded, cfg)
            candidates = prune(real, r)
        else:
            candidates = real
        out = yield from select_smallest(machine, candidates, cfg.l, allow_shortfall=True)
        if out is SHORTFALL:
            machine.state["fallback"] = True
            out = yield from select_smallest(machine, real, cfg.l)
        return [key.id for key in out]
    return program


def install_query(machines: list[Machine], query: Sequence[int]) -> None:
    d = machines[0].coords.shape[1] if machines else 0
    q = np.asarray(check_query(query, d), dtype=np.int64)
    for m in machines:
        m.query = q


def _check_l(machines: list[Machine], l: int) -> None:
    n = sum(int(m.ids.shape[0]) for m in machines)
    if not 0 <= l <= n:
        raise ValueError(f"l={l} must be between 0 and n={n}")


def run_knn(machines: list[Machine], query: Sequence[int], cfg: KnnConfig, trial: int = 0,
            *, log: MessageLog | None = None) -> KnnResult:
    _check_l(machines, cfg.l)
    install_query(machines, query)
    outputs, metrics = run_protocol(machines, _knn_program(cfg), cfg.seed, trial, log=log)
    state = machines[LEADER].state
    return KnnResult(
        ids=sorted(i for out in outputs for i in out),
        outputs=outputs,
        metrics=metrics,
        survivors=state["candidates"][0],
        fallback_taken=state.get("fallback", False),
        pruning_key=state.get("pruning_key"),
    )


def _baseline_program(l: int, metric: Metric):
    def program(machine: Machine):
        yield from elect_leader(machine)
        machine.phase = "truncate"
        real = local_keys(machine, metric, l)
        machine.phase = "select"
        counts = yield from gather(machine, Kind.CountReply, len(real))
        if machine.index != LEADER:
            yield from stream_to_leader(machine, Kind.DataItem, real, len(real))
            while True:
                inbox = yield []
                for msg in inbox:
                    if msg.kind is Kind.Finished:
                        bound = msg.payload
                        return [] if bound is None else [key.id for key in real if key <= bound]
        rounds = max((c for j, c in counts.items() if j != LEADER), default=0)
        received = yield from stream_to_leader(machine, Kind.DataItem, real, rounds)
        pool = sorted(received + real)
        machine.state["candidates"] = [len(pool)]
        bound = pool[l - 1] if l > 0 else None
        machine.phase = "finish"
        yield from broadcast(machine, Kind.Finished, bound)
        return [] if bound is None else [key.id for key in real if key <= bound]
    return program


def run_baseline(machines: list[Machine], query: Sequence[int], l: int, metric: Metric = Metric.L2,
                 seed: int = 0, trial: int = 0, *, log: MessageLog | None = None) -> KnnResult:
    """Every machine ships its local l nearest keys to the leader."""
    _check_l(machines, l)
    install_query(machines, query)
    metric = Metric.parse(metric)
    outputs, metrics = run_protocol(machines, _baseline_program(l, metric), seed, trial, log=log)
    return KnnResult(
        ids=sorted(i for out in outputs for i in out),
        outputs=outputs,
        metrics=metrics,
        survivors=machines[LEADER].state["candidates"][0],
    )


def run_select_all(machines: list[Machine], query: Sequence[int], l: int, metric: Metric = Metric.L2,
                   seed: int = 0, trial: int = 0, *, log: MessageLog | None = None) -> KnnResult:
    """Plain selection over every point's key, no truncation or sampling."""
    from .selection import run_selection

    _check_l(machines, l)
    install_query(machines, query)
    metric = Metric.parse(metric)
    for m in machines:
        m.keys = local_keys(m, metric)
    res = run_selection(machines, l, seed, trial, log=log)
    return KnnResult(
        ids=sorted(res.ids),
        outputs=[[key.id for key in out] for out in res.outputs],
        metrics=res.metrics,
        survivors=sum(len(m.keys) for m in machines),
    )
