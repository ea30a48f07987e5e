import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from competing_growth.fenwick import FenwickSampler


def test_search_examples():
    fs = FenwickSampler([1.0, 0.0, 3.0])
    assert fs.total() == 4.0
    assert fs.search(0.0) == 0
    assert fs.search(0.999) == 0
    assert fs.search(1.0) == 2
    assert fs.search(3.999) == 2


def test_search_clips_overshoot_to_last_live_slot():
    fs = FenwickSampler([1.0, 2.0], capacity=8)
    assert fs.search(3.5) == 1


@settings(max_examples=60, deadline=None)
@given(weights=st.lists(st.floats(0.0, 10.0), min_size=1, max_size=70), seed=st.integers(0, 2**32 - 1))
def test_search_matches_cumsum_searchsorted(weights, seed):
    w = np.array(weights)
    if w.sum() <= 0:
        return
    fs = FenwickSampler(w)
    cum = np.cumsum(w)
    rng = np.random.default_rng(seed)
    for u in rng.random(50) * w.sum():
        expected = min(int(np.searchsorted(cum, u, side="right")), len(w) - 1)
        got = fs.search(u)
        # rounding may shift a boundary hit by one slot, never onto a zero-weight slot
        assert got == expected or abs(cum[min(got, expected)] - u) < 1e-9 * cum[-1]
        assert w[got] > 0


def test_updates_and_appends_track_prefix_sums():
    rng = np.random.default_rng(5)
    w = list(rng.random(10))
    fs = FenwickSampler(w, capacity=4)
    for step in range(300):
        if step % 3 == 0:
            v = float(rng.random())
            fs.append(v)
            w.append(v)
        else:
            k = int(rng.integers(len(w)))
            v = float(rng.random())
            fs.update(k, v)
            w[k] = v
        k = int(rng.integers(len(w) + 1))
        assert fs.prefix(k) == pytest.approx(sum(w[:k]), abs=1e-10)
    fs.rebuild()
    assert fs.total() == pytest.approx(sum(w), abs=1e-12)


def test_sample_frequencies():
    fs = FenwickSampler([1.0, 2.0, 0.0, 5.0])
    rng = np.random.default_rng(0)
    counts = np.bincount([fs.sample(rng) for _ in range(40_000)], minlength=4)
    assert counts[2] == 0
    assert np.allclose(counts / counts.sum(), [1 / 8, 2 / 8, 0, 5 / 8], atol=0.01)
