import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dknn.core import DistKey
from dknn.selection import BOTTOM, TOP, count_in, run_pivot_draws, run_selection
from dknn.simulator import RoundLimitExceeded


def keys(values):
    return [DistKey(v, v) for v in values]


def test_small_example():
    res = run_selection([keys([1, 5, 9]), keys([3, 7])], 2)
    assert res.keys == keys([1, 3])


def test_l_equals_total_returns_everything():
    sets = [keys([4, 8]), keys([1]), keys([6, 2, 9])]
    res = run_selection(sets, 6)
    assert res.keys == keys([1, 2, 4, 6, 8, 9])
    assert res.iterations == 0


def test_l_equals_one_is_global_minimum():
    sets = [keys(range(100, 200)), keys(range(50, 90)), keys([77])]
    assert run_selection(sets, 1, seed=3).keys == keys([50])


def test_l_zero():
    res = run_selection([keys([1]), keys([2])], 0)
    assert res.keys == []


def test_empty_machines():
    res = run_selection([[], keys([5, 3, 1]), [], []], 2)
    assert res.keys == keys([1, 3])


def test_l_out_of_range():
    with pytest.raises(ValueError):
        run_selection([keys([1]), keys([2])], 3)


def test_count_in_half_open():
    ks = keys([1, 2, 3, 4])
    assert count_in(ks, DistKey(1, 1), DistKey(3, 3)) == 2
    assert count_in(ks, BOTTOM, TOP) == 4
    assert count_in(ks, DistKey(3, 3), DistKey(1, 1)) == 0


def test_outputs_stay_on_their_machines():
    sets = [keys([1, 6]), keys([2, 5]), keys([3, 4])]
    res = run_selection(sets, 4, seed=1)
    assert res.outputs == [keys([1]), keys([2]), keys([3, 4])]


def test_range_shrinks_every_iteration():
    rng = np.random.default_rng(0)
    values = rng.permutation(5000)
    sets = [keys(values[i::8].tolist()) for i in range(8)]
    res = run_selection(sets, 300, seed=5)
    assert res.keys == keys(range(300))
    for (lo, hi, s, want), (lo2, hi2, s2, want2) in zip(res.trace, res.trace[1:]):
        assert s2 < s
        assert lo <= lo2 and hi2 <= hi
        assert 0 < want2 <= want <= s


def test_iterations_logarithmic():
    sets = [keys(range(i, 2**16, 16)) for i in range(16)]
    iters = [run_selection(sets, 1000, seed=s).iterations for s in range(10)]
    assert max(iters) <= 4 * 16


def test_round_cost_per_iteration():
    # 1 election + 3 init gathers + 4 per iteration (fewer when the leader draws) + 1 finish
    sets = [keys(range(i, 4000, 4)) for i in range(4)]
    res = run_selection(sets, 100, seed=2)
    assert 5 + 2 * res.iterations <= res.metrics.rounds <= 5 + 4 * res.iterations
    by_kind = res.metrics.messages_by_kind
    assert by_kind["GetCount"] == 3 * res.iterations
    assert by_kind.get("PickPivot", 0) == by_kind.get("PivotReply", 0) <= res.iterations


def test_round_limit_surfaces():
    sets = [keys(range(i, 4000, 4)) for i in range(4)]
    with pytest.raises(RoundLimitExceeded):
        run_selection(sets, 100, max_rounds=6)


def test_deterministic_given_seed():
    sets = [keys(range(i, 3000, 5)) for i in range(5)]
    a = run_selection(sets, 77, seed=4, trial=2)
    b = run_selection(sets, 77, seed=4, trial=2)
    assert a.metrics == b.metrics and a.trace == b.trace


@settings(max_examples=120, deadline=None)
@given(st.integers(2, 7), st.lists(st.integers(0, 40), min_size=1, max_size=120), st.data())
def test_matches_sort_with_duplicate_distances(k, dists, data):
    owners = data.draw(st.lists(st.integers(0, k - 1), min_size=len(dists), max_size=len(dists)))
    all_keys = [DistKey(d, i) for i, d in enumerate(dists)]
    sets = [[key for key, o in zip(all_keys, owners) if o == j] for j in range(k)]
    l = data.draw(st.integers(0, len(all_keys)))
    res = run_selection(sets, l, seed=data.draw(st.integers(0, 2**31)))
    assert res.keys == sorted(all_keys)[:l]


class TestPivotDraws:
    def test_one_pivot_costs_two_rounds(self):
        sets = [keys([10]), keys([20]), keys([30])]
        _, base = run_pivot_draws(sets, 0, seed=1)
        pivots, metrics = run_pivot_draws(sets, 1, seed=1)
        remote = pivots[0] != DistKey(10, 10)
        assert metrics.rounds - base.rounds == (2 if remote else 0)
        assert metrics.messages - base.messages == (2 if remote else 0)

    def test_single_holder_always_chosen(self):
        sets = [[], keys([3, 1, 2]), [], []]
        pivots, metrics = run_pivot_draws(sets, 60, seed=8)
        assert set(pivots) <= set(keys([1, 2, 3]))
        assert metrics.messages_by_kind["PickPivot"] == 60

    def test_all_keys_reachable(self):
        sets = [keys([1, 2]), keys([3]), keys([4, 5, 6])]
        pivots, _ = run_pivot_draws(sets, 400, seed=0)
        assert set(pivots) == set(keys(range(1, 7)))
