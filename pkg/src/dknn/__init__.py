"""Simulated k-machine model with distributed selection and l-nearest-neighbor queries."""

from .core import SENTINEL, Dataset, DistKey, Metric, Point, assign_label, distance, dist_key, oracle_knn, partition
from .kernels import BACKEND
from .knn import KnnConfig, KnnResult, run_baseline, run_knn, run_select_all
from .selection import run_selection
from .simulator import Kind, Machine, Message, ProtocolViolation, RunMetrics, build_machines, run_protocol

__all__ = [
    "BACKEND", "SENTINEL", "Dataset", "DistKey", "Kind", "KnnConfig", "KnnResult", "Machine", "Message",
    "Metric", "Point", "ProtocolViolation", "RunMetrics", "assign_label", "build_machines", "dist_key",
    "distance", "oracle_knn", "partition", "run_baseline", "run_knn", "run_protocol", "run_select_all",
    "run_selection",
]
