"""Points, metrics, the (distance, id) total order, partitioning and the oracle.

All arithmetic is on integers.  L2 is kept squared so that every comparison
is exact and runs are bit-for-bit reproducible.
"""
from __future__ import annotations

import csv
import enum
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

COORD_LIMIT = 2**30
MAX_DIM = 16
MAX_POINTS = 2**40
UINT64_MAX = 2**64 - 1
# Largest legal distance; UINT64_MAX is reserved for the sentinel.
DIST_MAX = UINT64_MAX - 1


class DatasetError(ValueError):
    """Malformed dataset or dataset-dependent argument."""


class Metric(enum.IntEnum):
    L1 = 1
    L2 = 2  # squared
    LINF = 3

    @classmethod
    def parse(cls, name: str | "Metric") -> "Metric":
        if isinstance(name, Metric):
            return name
        key = name.strip().lower().replace("-", "").replace("_", "")
        aliases = {"l1": cls.L1, "manhattan": cls.L1, "l2": cls.L2, "l2squared": cls.L2,
                   "euclidean": cls.L2, "linf": cls.LINF, "chebyshev": cls.LINF}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown metric {name!r}") from None

    @property
    def label(self) -> str:
        return {Metric.L1: "l1", Metric.L2: "l2", Metric.LINF: "linf"}[self]


class DistKey(NamedTuple):
    """Distance of a point to the query, with the point id as tie-breaker.

    Tuple comparison gives the lexicographic (dist, id) order.
    """

    dist: int
    id: int


SENTINEL = DistKey(UINT64_MAX, UINT64_MAX)


@dataclass(frozen=True)
class Point:
    id: int
    coords: tuple[int, ...]
    label: int | None = None


def _check_coords(coords: Sequence[int]) -> None:
    for c in coords:
        if not -COORD_LIMIT <= c <= COORD_LIMIT:
            raise DatasetError(f"coordinate {c} outside [-2^30, 2^30]")


def distance(p: Point | Sequence[int], q: Point | Sequence[int], metric: Metric = Metric.L2) -> int:
    """Exact integer distance between two points (squared for L2)."""
    a = p.coords if isinstance(p, Point) else p
    b = q.coords if isinstance(q, Point) else q
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    diffs = [abs(int(x) - int(y)) for x, y in zip(a, b)]
    if metric == Metric.L1:
        value = sum(diffs)
    elif metric == Metric.L2:
        value = sum(t * t for t in diffs)
    elif metric == Metric.LINF:
        value = max(diffs, default=0)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    if value > DIST_MAX:
        raise OverflowError(f"distance {value} does not fit in 64 bits")
    return value


def dist_key(p: Point, q: Point | Sequence[int], metric: Metric = Metric.L2) -> DistKey:
    return DistKey(distance(p, q, metric), p.id)


class Dataset:
    """Columnar point store: ``ids`` (n,), ``coords`` (n, d), optional ``labels`` (n,)."""

    def __init__(self, ids, coords, labels=None, d: int | None = None):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        coords = np.asarray(coords, dtype=np.int64)
        if coords.size == 0:
            coords = coords.reshape(len(ids), d if d is not None else (coords.shape[-1] if coords.ndim == 2 else 0))
        if coords.ndim != 2 or coords.shape[0] != ids.shape[0]:
            raise DatasetError(f"coords shape {coords.shape} does not match {ids.shape[0]} ids")
        if d is not None and coords.shape[1] != d:
            raise DatasetError(f"expected dimension {d}, got {coords.shape[1]}")
        if coords.shape[1] > MAX_DIM:
            raise DatasetError(f"dimension {coords.shape[1]} exceeds {MAX_DIM}")
        if len(ids) > MAX_POINTS:
            raise DatasetError("too many points")
        if len(ids) and (ids.min() < 0):
            raise DatasetError("point ids must be non-negative")
        if len(np.unique(ids)) != len(ids):
            raise DatasetError("point ids are not unique")
        if coords.size and np.abs(coords).max() > COORD_LIMIT:
            raise DatasetError("coordinate magnitude exceeds 2^30")
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64).reshape(-1)
            if labels.shape != ids.shape:
                raise DatasetError("labels do not match ids")
        self.ids = ids
        self.coords = coords
        self.labels = labels

    @property
    def n(self) -> int:
        return int(self.ids.shape[0])

    @property
    def d(self) -> int:
        return int(self.coords.shape[1])

    def __len__(self) -> int:
        return self.n

    def point(self, i: int) -> Point:
        label = None if self.labels is None else int(self.labels[i])
        return Point(int(self.ids[i]), tuple(int(c) for c in self.coords[i]), label)

    @property
    def points(self) -> list[Point]:
        return [self.point(i) for i in range(self.n)]

    @classmethod
    def from_points(cls, points: Iterable[Point], d: int | None = None) -> "Dataset":
        points = list(points)
        if d is None:
            d = len(points[0].coords) if points else 0
        for p in points:
            if len(p.coords) != d:
                raise DatasetError(f"point {p.id} has dimension {len(p.coords)}, expected {d}")
        has_labels = bool(points) and all(p.label is not None for p in points)
        return cls(
            [p.id for p in points],
            np.array([p.coords for p in points], dtype=np.int64).reshape(len(points), d),
            [p.label for p in points] if has_labels else None,
            d=d,
        )

    def subset(self, index) -> "Dataset":
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.ids[index], self.coords[index], labels, d=self.d)

    def label_of(self) -> dict[int, int]:
        if self.labels is None:
            return {}
        return dict(zip(self.ids.tolist(), self.labels.tolist()))


def make_id(origin: int, local_index: int) -> int:
    return (origin << 32) + local_index


def check_query(query: Sequence[int], d: int) -> tuple[int, ...]:
    q = tuple(int(c) for c in query)
    if len(q) != d:
        raise DatasetError(f"query has dimension {len(q)}, dataset has {d}")
    _check_coords(q)
    return q


# -- partitioning ---------------------------------------------------------

PARTITION_STREAM = 0x9A27


def partition(ds: Dataset, k: int, seed: int = 0, policy: str = "uniform") -> list[np.ndarray]:
    """Split row indices of ``ds`` over ``k`` machines.

    ``uniform`` draws an independent machine per point; ``round-robin`` deals
    points in dataset order.  Returns one sorted index array per machine.
    """
    if k < 2:
        raise ValueError(f"need at least 2 machines, got k={k}")
    n = ds.n
    if policy == "uniform":
        rng = np.random.default_rng([seed, PARTITION_STREAM])
        owner = rng.integers(0, k, size=n)
    elif policy in ("round-robin", "roundrobin"):
        owner = np.arange(n) % k
    else:
        raise ValueError(f"unknown partition policy {policy!r}")
    return assign(owner, k)


def assign(owner, k: int) -> list[np.ndarray]:
    """Index arrays from an explicit owner vector (owner[i] = machine of row i)."""
    owner = np.asarray(owner, dtype=np.int64)
    if owner.size and (owner.min() < 0 or owner.max() >= k):
        raise ValueError("owner index out of range")
    order = np.argsort(owner, kind="stable")
    bounds = np.searchsorted(owner[order], np.arange(k + 1))
    return [order[bounds[i]:bounds[i + 1]] for i in range(k)]


# -- oracle ---------------------------------------------------------------

def oracle_ranking(ds: Dataset, query: Sequence[int], metric: Metric = Metric.L2) -> list[DistKey]:
    """Every point's key, fully sorted.  Plain Python ints, no numpy arithmetic."""
    q = check_query(query, ds.d)
    rows = ds.coords.tolist()
    ids = ds.ids.tolist()
    return sorted(DistKey(distance(row, q, metric), pid) for row, pid in zip(rows, ids))


def oracle_knn(ds: Dataset, query: Sequence[int], l: int, metric: Metric = Metric.L2) -> set[int]:
    if l < 0 or l > ds.n:
        raise DatasetError(f"l={l} must be between 0 and n={ds.n}")
    return {key.id for key in oracle_ranking(ds, query, metric)[:l]}


def assign_label(neighbor_labels: Sequence[int], mode: str = "classify") -> int:
    """Majority vote (ties to the smaller label) or floor of the mean."""
    labels = [int(x) for x in neighbor_labels]
    if not labels:
        raise ValueError("no labels to aggregate")
    if mode == "classify":
        counts = Counter(labels)
        best = max(counts.values())
        return min(label for label, c in counts.items() if c == best)
    if mode == "regress":
        return sum(labels) // len(labels)
    raise ValueError(f"unknown label mode {mode!r}")


# -- CSV ------------------------------------------------------------------

def write_dataset(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "label"] + [f"c{j}" for j in range(ds.d)])
            labels = ds.labels.tolist() if ds.labels is not None else [""] * ds.n
            for pid, label, row in zip(ds.ids.tolist(), labels, ds.coords.tolist()):
                writer.writerow([pid, label, *row])
    except OSError as exc:
        raise OSError(f"cannot write dataset {path}: {exc.strerror}") from exc


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["id", "label"]:
            raise DatasetError(f"{path}: header must start with 'id,label'")
        coord_cols = header[2:]
        if coord_cols != [f"c{j}" for j in range(len(coord_cols))]:
            raise DatasetError(f"{path}: coordinate columns must be c0..c{{d-1}}")
        d = len(coord_cols)
        ids, labels, coords = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise DatasetError(f"{path}:{lineno}: expected {d + 2} fields, got {len(row)}")
            try:
                ids.append(int(row[0]))
                labels.append(int(row[1]) if row[1] != "" else None)
                coords.append([int(c) for c in row[2:]])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer field") from None
    if any(x is None for x in labels):
        if not all(x is None for x in labels):
            raise DatasetError(f"{path}: labels must be present on every row or none")
        labels = None
    try:
        return Dataset(ids, np.array(coords, dtype=np.int64).reshape(len(ids), d), labels, d=d)
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from None
