import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clustered_sampling.alloc_size import (
    allocate_by_size, size_order, support_bound_check, support_is_contiguous)
from oracles import prefix_sum_allocation


def test_worked_example():
    a = allocate_by_size([3, 2, 1], 2)
    assert a.r_prime.tolist() == [[6, 0, 0], [0, 4, 2]]
    assert a.support().tolist() == [1, 1, 1]
    assert support_bound_check(a)


def test_equal_pair_each_owns_a_distribution():
    assert allocate_by_size([1, 1], 2).r_prime.tolist() == [[2, 0], [0, 2]]


def test_hundred_equal_clients():
    a = allocate_by_size([1] * 100, 10)
    assert (a.support() == 1).all()
    assert ((a.r_prime > 0).sum(axis=1) == 10).all()
    assert (a.probabilities[a.r_prime > 0] == 0.1).all()


def test_order_is_descending_with_index_ties():
    assert size_order([2, 5, 2, 5, 1]).tolist() == [1, 3, 0, 2, 4]


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        allocate_by_size([1, 2], 0)
    with pytest.raises(ValueError):
        allocate_by_size([1, 0], 2)
    with pytest.raises(ValueError):
        allocate_by_size([], 2)


def test_split_client_is_contiguous():
    # M = 10, m = 3: masses 21, 6, 3 -> client 0 spans three bins
    a = allocate_by_size([7, 2, 1], 3)
    assert a.r_prime.tolist() == [[10, 0, 0], [10, 0, 0], [1, 6, 3]]
    assert support_is_contiguous(a)


def test_noncontiguous_detected():
    from clustered_sampling.sampling import AllocationMatrix
    a = AllocationMatrix([[1, 1], [2, 0], [0, 2]], [1, 1])
    assert not support_is_contiguous(a)


@settings(max_examples=300, deadline=None)
@given(sizes=st.lists(st.integers(1, 10_000), min_size=1, max_size=80), m=st.integers(1, 40))
def test_matches_prefix_sum_oracle(sizes, m):
    a = allocate_by_size(sizes, m)
    np.testing.assert_array_equal(a.r_prime, prefix_sum_allocation(sizes, m))
    assert support_bound_check(a) and support_is_contiguous(a)


def test_deterministic():
    sizes = [5, 3, 5, 1, 9, 9]
    assert allocate_by_size(sizes, 4) == allocate_by_size(sizes, 4)
