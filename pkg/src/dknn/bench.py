"""Benchmark sweeps over (k, l, n, d) and algorithm, with oracle scoring."""
from __future__ import annotations

import csv
import io
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Metric, oracle_ranking, partition
from .datagen import DISTRIBUTIONS, generate, random_query
from .knn import KnnConfig, run_baseline, run_knn, run_select_all
from .simulator import build_machines
from .verify import CSV_FIELDS, TrialReport

ALGORITHMS = ("knn", "baseline", "selection")
VERIFY_LIMIT = 10**6


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint64)[0])


@dataclass
class BenchSpec:
    ks: list[int]
    ls: list[int]
    ns: list[int]
    ds: list[int] = field(default_factory=lambda: [1])
    trials: int = 30
    seed: int = 0
    metric: Metric = Metric.L2
    algorithms: tuple[str, ...] = ("knn", "baseline")
    distribution: str = "uniform"
    partition: str = "uniform"
    verify: bool | None = None  # None: verify when n <= VERIFY_LIMIT
    sample_factor: int = 12
    rank_factor: int = 21

    def __post_init__(self):
        self.metric = Metric.parse(self.metric)
        for name in ("ks", "ls", "ns", "ds"):
            values = getattr(self, name)
            if not values or any(v < 1 for v in values):
                raise ValueError(f"{name} must be a non-empty list of positive values")
        if any(k < 2 for k in self.ks):
            raise ValueError("every k must be at least 2")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad or not self.algorithms:
            raise ValueError(f"unknown algorithms {sorted(bad)}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")


def run_one(algo: str, machines, query, l: int, spec: BenchSpec, trial: int):
    if algo == "knn":
        cfg = KnnConfig(l, spec.sample_factor, spec.rank_factor, spec.metric, spec.seed)
        return run_knn(machines, query, cfg, trial)
    if algo == "baseline":
        return run_baseline(machines, query, l, spec.metric, spec.seed, trial)
    if algo == "selection":
        return run_select_all(machines, query, l, spec.metric, spec.seed, trial)
    raise ValueError(f"unknown algorithm {algo!r}")


def _run_unit(spec: BenchSpec, n: int, d: int, trial: int) -> list[TrialReport]:
    """All (k, l, algo) cells sharing one generated dataset and query."""
    data = generate(n, d, k=max(spec.ks), seed=derive_seed(spec.seed, trial), distribution=spec.distribution)
    query = random_query(d, spec.seed, trial)
    verify = spec.verify if spec.verify is not None else n <= VERIFY_LIMIT
    ranking = [key.id for key in oracle_ranking(data, query, spec.metric)] if verify else None
    reports = []
    for k in spec.ks:
        parts = partition(data, k, derive_seed(spec.seed, trial, k), spec.partition)
        for l in spec.ls:
            if l > n:
                continue
            expected = set(ranking[:l]) if verify else None
            for algo in spec.algorithms:
                res = run_one(algo, build_machines(data, parts), query, l, spec, trial)
                reports.append(TrialReport(
                    k=k, l=l, n=n, d=d, algo=algo, trial=trial, seed=spec.seed,
                    metric=spec.metric.label, metrics=res.metrics, survivors=res.survivors,
                    fallback_taken=res.fallback_taken,
                    correct=None if expected is None else set(res.ids) == expected,
                ))
    return reports


def _sort_key(r: TrialReport):
    return (r.k, r.l, r.n, r.d, ALGORITHMS.index(r.algo), r.trial)


@dataclass
class BenchResult:
    reports: list[TrialReport]

    @property
    def failures(self) -> list[TrialReport]:
        return [r for r in self.reports if r.correct is False]

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in self.reports:
            writer.writerow(r.row())
        return buf.getvalue()

    def cells(self) -> dict[tuple, list[TrialReport]]:
        out: dict[tuple, list[TrialReport]] = {}
        for r in self.reports:
            out.setdefault((r.k, r.l, r.n, r.d, r.algo), []).append(r)
        return out

    def summary(self) -> dict:
        cells = []
        medians: dict[tuple, dict[str, float]] = {}
        for (k, l, n, d, algo), reps in self.cells().items():
            rounds = [r.metrics.rounds for r in reps]
            msgs = [r.metrics.messages for r in reps]
            cell = {
                "k": k, "l": l, "n": n, "d": d, "algo": algo, "trials": len(reps),
                "rounds_median": statistics.median(rounds), "rounds_mean": statistics.fmean(rounds),
                "rounds_max": max(rounds),
                "messages_median": statistics.median(msgs), "messages_mean": statistics.fmean(msgs),
                "messages_max": max(msgs),
                "survivors_median": statistics.median(r.survivors for r in reps),
                "fallbacks": sum(r.fallback_taken for r in reps),
                "correct": sum(r.correct is True for r in reps),
                "verified": sum(r.correct is not None for r in reps),
            }
            cells.append(cell)
            medians.setdefault((k, l, n, d), {})[algo] = cell
        ratios = []
        for (k, l, n, d), by_algo in sorted(medians.items()):
            if "knn" in by_algo and "baseline" in by_algo:
                knn, base = by_algo["knn"], by_algo["baseline"]
                ratios.append({
                    "k": k, "l": l, "n": n, "d": d,
                    "round_ratio": base["rounds_median"] / knn["rounds_median"],
                    "message_ratio": base["messages_median"] / knn["messages_median"],
                })
        return {"cells": cells, "baseline_over_knn": ratios}

    def write(self, out: str | Path) -> tuple[Path, Path]:
        out = Path(out)
        if out.suffix in (".csv", ".json"):
            out = out.with_suffix("")
        csv_path, json_path = out.with_suffix(".csv"), out.with_suffix(".json")
        try:
            csv_path.write_text(self.csv_text())
            json_path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write bench results to {out}: {exc.strerror}") from exc
        return csv_path, json_path


def run_bench(spec: BenchSpec, jobs: int = 1) -> BenchResult:
    units = [(n, d, t) for n in spec.ns for d in spec.ds for t in range(spec.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_unit, [spec] * len(units), *zip(*units)))
    else:
        chunks = [_run_unit(spec, n, d, t) for n, d, t in units]
    reports = sorted((r for chunk in chunks for r in chunk), key=_sort_key)
    return BenchResult(reports)
