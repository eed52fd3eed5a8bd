import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from exdyna.selector import accumulate, cap_selection, clear_selected, select_indices
from exdyna.threshold import initial_threshold, scale_threshold, scaling_factor

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_accumulate_examples():
    np.testing.assert_array_equal(accumulate(np.array([1.0, 2.0]), 0.5, np.array([1.0, -2.0])), [1.5, 1.0])
    g = np.array([0.3, -4.0])
    np.testing.assert_array_equal(accumulate(np.zeros(2), 0.25, g), 0.25 * g)
    e = np.array([7.0, -1.0])
    np.testing.assert_array_equal(accumulate(e, 3.0, np.zeros(2)), e)


def test_accumulate_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        accumulate(np.zeros(3), 1.0, np.zeros(2))


ACC = np.array([0.1, -0.5, 0.3, 0.9])


@pytest.mark.parametrize("st_, end, delta, expected", [
    (0, 4, 0.3, [1, 2, 3]),
    (2, 4, 0.3, [2, 3]),
    (0, 4, 10.0, []),
])
def test_select_examples(st_, end, delta, expected):
    assert select_indices(ACC, st_, end, delta).tolist() == expected


def test_select_rejects_bad_range():
    with pytest.raises(ValueError):
        select_indices(ACC, 3, 2, 0.1)


@given(acc=hnp.arrays(np.float64, st.integers(0, 60), elements=finite),
       delta=st.floats(1e-3, 1e3), data=st.data())
def test_select_matches_predicate(acc, delta, data):
    lo = data.draw(st.integers(0, len(acc)))
    hi = data.draw(st.integers(lo, len(acc)))
    expected = [j for j in range(lo, hi) if abs(acc[j]) >= delta]
    assert select_indices(acc, lo, hi, delta).tolist() == expected


@given(acc=hnp.arrays(np.float64, st.integers(1, 60), elements=finite),
       d1=st.floats(1e-3, 1e3), d2=st.floats(1e-3, 1e3))
def test_selection_count_monotone_in_delta(acc, d1, d2):
    lo, hi = sorted((d1, d2))
    assert len(select_indices(acc, 0, len(acc), hi)) <= len(select_indices(acc, 0, len(acc), lo))


def test_cap_keeps_largest_lower_index_on_ties():
    acc = np.array([0.5, -0.9, 0.5, 0.7, 0.5])
    idx = np.arange(5)
    assert cap_selection(acc, idx, 3).tolist() == [0, 1, 3]
    assert cap_selection(acc, idx, 10) is idx


@pytest.mark.parametrize("idx, expected", [
    ([1], [1.0, 0.0, 3.0]),
    ([0, 1, 2], [0.0, 0.0, 0.0]),
    ([], [1.0, 2.0, 3.0]),
])
def test_clear_examples(idx, expected):
    acc = np.array([1.0, 2.0, 3.0])
    assert clear_selected(acc, np.array(idx, dtype=np.int64)).tolist() == expected
    assert acc.tolist() == [1.0, 2.0, 3.0]


@given(acc=hnp.arrays(np.float64, st.integers(1, 80), elements=finite), delta=st.floats(1e-3, 1e3))
def test_error_feedback_conservation(acc, delta):
    idx = select_indices(acc, 0, len(acc), delta)
    contribution = acc[idx]
    residual = clear_selected(acc, idx)
    rebuilt = residual.copy()
    rebuilt[idx] += contribution
    np.testing.assert_array_equal(rebuilt, acc)


@pytest.mark.parametrize("k_prime, expected", [
    (300, 0.505),
    (150, 0.50125),
    (40, 0.495),
])
def test_scale_threshold_examples(k_prime, expected):
    assert scale_threshold(100, k_prime, 0.5, 2.0, 0.01) == pytest.approx(expected, rel=1e-12)


def test_band_edges():
    # exam == beta is in-band, exam == 1/beta falls to the decrease branch
    assert scaling_factor(100, 200, 2.0, 0.01) == 1.0025
    assert scaling_factor(100, 50, 2.0, 0.01) == 0.99
    assert scaling_factor(100, 0, 2.0, 0.01) == 0.99


@given(k=st.integers(1, 10**6), k_prime=st.integers(0, 10**7), delta=st.floats(1e-12, 1e6),
       beta=st.floats(1.01, 10), gamma=st.floats(1e-4, 0.99))
def test_threshold_stays_positive_and_steps_bounded(k, k_prime, delta, beta, gamma):
    nxt = scale_threshold(k, k_prime, delta, beta, gamma)
    assert nxt > 0
    assert abs(nxt / delta - 1) <= gamma * (1 + 1e-12)


def quantile_oracle(sample, d):
    # smallest threshold that keeps exactly round(d * N) entries when there are no ties
    mags = sorted(abs(v) for v in sample)
    m = max(1, int(np.floor(d * len(mags) + 0.5)))
    return mags[len(mags) - m]


@pytest.mark.parametrize("sample, d, expected", [
    ([1, 2, 3, 4], 0.25, 4.0),
    ([1, -2, 3, 4], 1.0, 1.0),
    ([2.5, 2.5, 2.5], 0.3, 2.5),
])
def test_initial_threshold_examples(sample, d, expected):
    assert quantile_oracle(sample, d) == expected
    assert initial_threshold(sample, d) == expected


@given(sample=st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=200, unique=True),
       d=st.floats(0.001, 1.0))
def test_initial_threshold_matches_oracle(sample, d):
    assert initial_threshold(sample, d) == quantile_oracle(sample, d)


def test_initial_threshold_empty():
    with pytest.raises(ValueError, match="empty"):
        initial_threshold([], 0.1)
