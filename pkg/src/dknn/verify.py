"""Verification helpers: trial reports, chi-square test, adversarial instances, log scans."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .core import COORD_LIMIT, SENTINEL, Dataset, DistKey, Metric, make_id, oracle_knn
from .datagen import generate
from .simulator import DATA_PLANE, Kind, Message, RunMetrics

CSV_FIELDS = ("k", "l", "n", "algo", "trial", "rounds", "messages", "survivors", "fallback", "correct", "d")


@dataclass
class TrialReport:
    k: int
    l: int
    n: int
    d: int
    algo: str
    trial: int
    seed: int
    metric: str
    metrics: RunMetrics
    survivors: int
    fallback_taken: bool = False
    # None when the instance was too large to verify
    correct: bool | None = None

    def row(self) -> dict:
        return {
            "k": self.k, "l": self.l, "n": self.n, "algo": self.algo, "trial": self.trial,
            "rounds": self.metrics.rounds, "messages": self.metrics.messages,
            "survivors": self.survivors, "fallback": int(self.fallback_taken),
            "correct": "" if self.correct is None else int(self.correct), "d": self.d,
        }

    def to_dict(self) -> dict:
        out = asdict(self)
        out["metrics"] = self.metrics.to_flat()
        return out


def chi_square_uniform(observed: Sequence[int], trials: int | None = None) -> float:
    """p-value of a chi-square goodness-of-fit test against equal cell probabilities."""
    obs = np.asarray(observed, dtype=np.float64)
    if obs.ndim != 1 or obs.size < 2:
        raise ValueError("need at least two cells")
    if (obs < 0).any():
        raise ValueError("negative frequency")
    total = obs.sum() if trials is None else float(trials)
    if total != obs.sum():
        raise ValueError(f"frequencies sum to {obs.sum():.0f}, expected {total:.0f}")
    expected = total / obs.size
    if expected < 5:
        raise ValueError(f"expected count {expected:.2f} per cell is below 5")
    stat = float(((obs - expected) ** 2 / expected).sum())
    return float(stats.chi2.sf(stat, obs.size - 1))


@dataclass
class Instance:
    name: str
    dataset: Dataset
    owner: np.ndarray
    k: int
    query: list[int]
    l: int
    metric: Metric = Metric.L2
    expected: set[int] = field(default_factory=set)


def _owners(n: int, k: int, rng, allowed: Sequence[int] | None = None) -> np.ndarray:
    choices = np.arange(k) if allowed is None else np.asarray(allowed)
    return choices[rng.integers(0, len(choices), size=n)]


def adversarial_instances(seed: int = 2024) -> list[Instance]:
    """Hand-built corner cases, each with its oracle answer attached."""
    rng = np.random.default_rng(seed)
    out: list[Instance] = []

    def add(name, ds, owner, k, query, l, metric=Metric.L2):
        out.append(Instance(name, ds, np.asarray(owner, dtype=np.int64), k, list(query), l, metric,
                            oracle_knn(ds, query, l, metric)))

    n = 200
    ids = rng.permutation(np.arange(10_000))[:n]
    same = Dataset(ids, np.full((n, 2), 777), labels=None)
    add("all-duplicates", same, _owners(n, 4, rng), 4, [5, 5], n // 2)
    add("all-duplicates-at-query", same, _owners(n, 4, rng), 4, [777, 777], 7, Metric.LINF)

    ds = generate(500, 2, 8, seed=seed)
    add("one-machine-holds-all", ds, np.full(500, 3), 8, [2**29, 2**29], 40)
    add("leader-holds-all", ds, np.zeros(500, dtype=np.int64), 8, [2**29, 2**29], 40, Metric.L1)
    add("empty-machines", ds, _owners(500, 8, rng, allowed=[1, 5]), 8, [1, 2**30 - 1], 33)

    ds = generate(1000, 1, 4, seed=seed + 1)
    add("l-equals-1", ds, _owners(1000, 4, rng), 4, [2**29], 1)
    add("l-equals-2", ds, _owners(1000, 4, rng), 4, [2**29], 2, Metric.L1)
    add("l-equals-3", ds, _owners(1000, 4, rng), 4, [0], 3)
    add("l-equals-4", ds, _owners(1000, 4, rng), 4, [2**30 - 1], 4, Metric.LINF)

    ds = generate(300, 3, 4, seed=seed + 2)
    add("l-equals-n", ds, _owners(300, 4, rng), 4, [0, 0, 0], 300)

    ds = generate(4000, 2, 8, seed=seed + 3, distribution="clustered")
    add("clustered", ds, _owners(4000, 8, rng), 8, ds.coords[17].tolist(), 64)
    ds = generate(4000, 1, 8, seed=seed + 4, distribution="geometric")
    add("geometric-duplicate-distances", ds, _owners(4000, 8, rng), 8, [0], 100, Metric.L1)
    ds = generate(3000, 8, 16, seed=seed + 5, distribution="geometric")
    add("geometric-8d", ds, _owners(3000, 16, rng), 16, [500] * 8, 256, Metric.LINF)

    # points mirrored around the query: every distance appears twice
    half = np.arange(1, 151, dtype=np.int64)
    coords = np.concatenate([1000 + half, 1000 - half]).reshape(-1, 1)
    mirror = Dataset([make_id(i % 4, i) for i in range(300)], coords)
    add("mirrored-ties", mirror, _owners(300, 4, rng), 4, [1000], 75)

    # squared L2 close to the 64-bit limit
    far = Dataset(np.arange(400), rng.integers(0, COORD_LIMIT, size=(400, 3)))
    add("large-distances", far, _owners(400, 4, rng), 4, [-COORD_LIMIT] * 3, 50)

    add("two-machines-skewed", ds, np.where(np.arange(3000) < 2990, 1, 0), 2, [400] * 8, 20)

    empty = Dataset(np.empty(0, dtype=np.int64), np.empty((0, 1), dtype=np.int64))
    add("empty-dataset", empty, np.empty(0, dtype=np.int64), 4, [0], 0)
    return out


def coordinate_leaks(log: Iterable[tuple[int, Message]], d: int | None = None) -> list[Message]:
    """Messages whose payload is anything but nothing, a 64-bit scalar or a DistKey."""
    leaks = []
    for _, msg in log:
        p = msg.payload
        if p is None or type(p) is int:
            if msg.kind in DATA_PLANE:
                leaks.append(msg)
            continue
        if type(p) is DistKey and type(p.dist) is int and type(p.id) is int:
            continue
        leaks.append(msg)
    return leaks


def sentinel_leaks(log: Iterable[tuple[int, Message]]) -> list[Message]:
    """Sentinels outside the sample stream and the pruning-key broadcast."""
    return [msg for _, msg in log
            if msg.payload == SENTINEL and msg.kind not in (Kind.SampleItem, Kind.Broadcast)]
