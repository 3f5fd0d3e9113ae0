import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from docprompt.rng import Rng, splitmix64

# First three outputs of the reference C implementation (splitmix64-seeded
# xoshiro256**), compiled and run once.
GOLDEN = {
    42: (1546998764402558742, 6990951692964543102, 12544586762248559009),
    0: (11091344671253066420, 13793997310169335082, 1900383378846508768),
    7: (12923355070828475994, 5142052590334782674, 15488392906492639638),
}


@pytest.mark.parametrize("seed", sorted(GOLDEN))
def test_reference_stream(seed):
    r = Rng(seed)
    assert tuple(r.next_u64() for _ in range(3)) == GOLDEN[seed]


def test_splitmix64_known_value():
    # splitmix64 from state 0: widely published first output
    assert splitmix64(0)[1] == 0xE220A8397B1DCDAF


def test_equal_seeds_equal_streams():
    a, b = Rng(123), Rng(123)
    assert [a.next_u64() for _ in range(1000)] == [b.next_u64() for _ in range(1000)]


def test_range_one_is_zero():
    r = Rng(5)
    assert all(r.next_range(1) == 0 for _ in range(100))


@given(st.integers(0, 2**64 - 1), st.integers(1, 10**9))
def test_range_bounds(seed, n):
    r = Rng(seed)
    for _ in range(5):
        assert 0 <= r.next_range(n) < n


@given(st.integers(0, 2**64 - 1))
def test_f64_unit_interval(seed):
    r = Rng(seed)
    for _ in range(10):
        assert 0.0 <= r.next_f64() < 1.0


def test_range_is_unbiased_for_small_n():
    r = Rng(9)
    n = 300_000
    counts = np.bincount([r.next_range(3) for _ in range(n)], minlength=3)
    chi2 = ((counts - n / 3) ** 2 / (n / 3)).sum()
    assert chi2 < 13.8  # df=2, p=0.001


def test_integers_inclusive():
    r = Rng(1)
    vals = {r.integers(2, 4) for _ in range(200)}
    assert vals == {2, 3, 4}


def test_bulk_arrays_deterministic_and_distributed():
    a = Rng(3).uniform_array((64, 64))
    b = Rng(3).uniform_array((64, 64))
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0 and a.max() < 1 and abs(a.mean() - 0.5) < 0.02
    n = Rng(4).normal_array((100, 100))
    assert abs(n.mean()) < 0.05 and abs(n.std() - 1) < 0.05


def test_bulk_draw_advances_scalar_stream_once():
    r1, r2 = Rng(11), Rng(11)
    r1.uniform_array((5, 5))
    r2.next_u64()
    assert r1.next_u64() == r2.next_u64()
