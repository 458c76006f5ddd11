import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedistil import prng
from fedistil.prng import SplitMix64, next_f64, next_u64, round_seed, select_subset

U64 = st.integers(min_value=0, max_value=2**64 - 1)


def reference_splitmix64(seed, count):
    """Textbook SplitMix64 with explicit modular arithmetic."""
    out = []
    x = seed
    for _ in range(count):
        x = (x + 0x9E3779B97F4A7C15) % 2**64
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2**64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2**64
        out.append(z ^ (z >> 31))
    return out


def test_seed_zero_first_output():
    value, state = next_u64(0)
    assert value == 0xE220A8397B1DCDAF
    assert state == 0x9E3779B97F4A7C15


def test_seed_zero_known_sequence():
    # values computed with reference_splitmix64
    assert reference_splitmix64(0, 4) == [
        0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F, 0xF88BB8A8724C81EC]
    stream = SplitMix64(0)
    assert [stream.u64() for _ in range(4)] == reference_splitmix64(0, 4)


def test_second_output_differs():
    s = SplitMix64(0)
    assert s.u64() != s.u64()


@given(U64)
def test_matches_reference(seed):
    s = SplitMix64(seed)
    assert [s.u64() for _ in range(8)] == reference_splitmix64(seed, 8)


@given(U64, st.integers(0, 300))
def test_vectorized_draws_match_scalar(seed, n):
    a, b = SplitMix64(seed), SplitMix64(seed)
    vec = a.u64_array(n).tolist()
    assert vec == [b.u64() for _ in range(n)]
    assert a.state == b.state


def test_equal_seeds_equal_streams_long():
    a, b = SplitMix64(123), SplitMix64(123)
    assert np.array_equal(a.u64_array(1_000_000), b.u64_array(1_000_000))


def test_next_f64_seed_zero():
    value, _ = next_f64(0)
    assert value == (0xE220A8397B1DCDAF >> 11) * 2.0**-53


@given(U64)
def test_f64_in_unit_interval(seed):
    vals = SplitMix64(seed).f64_array(64)
    assert np.all(vals >= 0.0) and np.all(vals < 1.0)


def test_f64_top_of_range_below_one():
    # the largest possible draw maps strictly below 1
    assert ((2**64 - 1) >> 11) * 2.0**-53 < 1.0


def test_round_seed_examples():
    assert round_seed(0, 0) == 0xE220A8397B1DCDAF
    assert round_seed(12345, 0) != round_seed(12345, 1)
    assert round_seed(12345, 7) == round_seed(12345, 7)


def test_round_seed_definition():
    s, t = 0xDEADBEEF, 5
    state = s ^ ((t * 0x9E3779B97F4A7C15) % 2**64)
    assert round_seed(s, t) == reference_splitmix64(state, 1)[0]


def test_select_subset_exhaustive_and_empty():
    assert select_subset(9, 10, 10) == list(range(10))
    assert select_subset(9, 10, 0) == []
    with pytest.raises(ValueError):
        select_subset(9, 10, 11)


@given(st.integers(0, 2**64 - 1), st.integers(1, 300), st.data())
def test_select_subset_follows_partial_fisher_yates(seed, m, data):
    n = data.draw(st.integers(0, m - 1))
    draws = reference_splitmix64(seed, n)
    a = list(range(m))
    for i in range(n):
        j = i + draws[i] % (m - i)
        a[i], a[j] = a[j], a[i]
    assert select_subset(seed, m, n) == sorted(a[:n])


def test_ten_devices_agree():
    key = round_seed(2024, 3)
    lists = [select_subset(key, 1000, 100) for _ in range(10)]
    assert all(l == lists[0] for l in lists)


@given(U64, st.integers(1, 400), st.data())
def test_subset_distinct_sorted_in_range(seed, m, data):
    n = data.draw(st.integers(0, m))
    idx = select_subset(seed, m, n)
    assert len(idx) == n == len(set(idx))
    assert idx == sorted(idx)
    assert all(0 <= i < m for i in idx)


def test_permutation_is_permutation():
    p = SplitMix64(4).permutation(50)
    assert sorted(p.tolist()) == list(range(50))


def test_normal_array_moments():
    z = SplitMix64(8).normal_array(200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01


def test_normal_array_consumes_two_draws_each():
    s = SplitMix64(1)
    s.normal_array(10)
    t = SplitMix64(1)
    t.u64_array(20)
    assert s.state == t.state


@pytest.mark.parametrize("text,value", [("0", 0), ("42", 42), ("0x2A", 42), (" 0XFF ", 255), (7, 7)])
def test_parse_seed(text, value):
    assert prng.parse_seed(text) == value


@pytest.mark.parametrize("bad", ["-1", str(2**64), "zz", True])
def test_parse_seed_rejects(bad):
    with pytest.raises(ValueError):
        prng.parse_seed(bad)


def test_stream_seed_tags_do_not_collide_with_rounds():
    keys = {round_seed(5, t) for t in range(100)}
    assert prng.stream_seed(5, 2**32 + 1) not in keys
