import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dknn import _kernels_py, kernels
from dknn.core import COORD_LIMIT, Metric, distance

BACKENDS = [pytest.param(_kernels_py, id="python")]
try:
    from dknn import _kernels

    BACKENDS.append(pytest.param(_kernels, id="compiled"))
except ImportError:
    pass


def test_backend_reported():
    assert kernels.BACKEND in ("compiled", "python")


def test_pure_python_switch():
    code = "import dknn.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, DKNN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("impl", BACKENDS)
@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 40), st.sampled_from(list(Metric)), st.integers(0, 2**32))
def test_distances_match_exact_python(impl, d, n, metric, seed):
    rng = np.random.default_rng(seed)
    coords = rng.integers(-COORD_LIMIT, COORD_LIMIT + 1, size=(n, d))
    query = rng.integers(-COORD_LIMIT, COORD_LIMIT + 1, size=d)
    try:
        expected = [distance(row, query.tolist(), metric) for row in coords.tolist()]
    except OverflowError:
        with pytest.raises(OverflowError):
            impl.distance_keys(coords, query, int(metric))
        return
    got = impl.distance_keys(coords, query, int(metric))
    assert got.dtype == np.uint64
    assert got.tolist() == expected


@pytest.mark.parametrize("impl", BACKENDS)
def test_overflow_raises(impl):
    coords = np.full((1, 16), COORD_LIMIT)
    query = np.full(16, -COORD_LIMIT)
    with pytest.raises(OverflowError):
        impl.distance_keys(coords, query, int(Metric.L2))


@pytest.mark.parametrize("impl", BACKENDS)
def test_largest_legal_distance_fits(impl):
    # 16 * (2^30 - 1)^2 is the generator's worst case
    coords = np.full((1, 16), COORD_LIMIT - 1)
    query = np.zeros(16, dtype=np.int64)
    assert int(impl.distance_keys(coords, query, int(Metric.L2))[0]) == 16 * (COORD_LIMIT - 1) ** 2


@pytest.mark.parametrize("impl", BACKENDS)
def test_dimension_mismatch(impl):
    with pytest.raises(ValueError):
        impl.distance_keys(np.zeros((3, 2), dtype=np.int64), np.zeros(3, dtype=np.int64), 2)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 30), max_size=80), st.integers(0, 100), st.integers(0, 2**32))
def test_smallest_keys_matches_sort(dists, l, seed):
    ids = np.random.default_rng(seed).permutation(len(dists) * 3)[:len(dists)]
    dist = np.array(dists, dtype=np.uint64)
    expected = sorted(zip(dists, ids.tolist()))[:l]
    idx = kernels.smallest_keys(dist, ids, l)
    assert list(zip(dist[idx].tolist(), ids[idx].tolist())) == expected
