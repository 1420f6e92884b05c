import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from somd.errors import ReductionError
from somd.frontend import ast as A
from somd.partition import (IndexRange, Registry, apply_reduction, assemble, block_block_partition,
                            check_ranges, factor_grid, fold_prim, index_partition, registry,
                            row_disjoint_partition)

from conftest import engine


def owned(ranges):
    return [(r.lo, r.hi) for r in ranges]


def views(ranges):
    return [(r.view_lo, r.view_hi) for r in ranges]


def test_single_slave_owns_everything():
    assert index_partition(10, 1) == [IndexRange(0, 10, 0, 10)]


def test_three_way_split_of_ten():
    assert owned(index_partition(10, 3)) == [(0, 4), (4, 7), (7, 10)]


def test_views_are_clamped():
    parts = index_partition(10, 3, (1, 1))
    assert owned(parts) == [(0, 4), (4, 7), (7, 10)]
    assert views(parts) == [(0, 5), (3, 8), (6, 10)]


def test_zero_length_gives_empty_ranges_at_zero():
    assert owned(index_partition(0, 4)) == [(0, 0)] * 4


def test_more_slaves_than_elements():
    parts = index_partition(2, 5)
    assert owned(parts) == [(0, 1), (1, 2), (2, 2), (2, 2), (2, 2)]


def test_aligned_partition_never_splits_a_run():
    parts = index_partition(21, 3, align=8)
    assert owned(parts) == [(0, 8), (8, 16), (16, 21)]


def test_bad_arguments():
    with pytest.raises(ValueError):
        index_partition(4, 0)
    with pytest.raises(ValueError):
        index_partition(-1, 2)


def test_block_block_two_by_two():
    grid = block_block_partition(4, 4, 4)
    assert grid.shape == (2, 2)
    cells = []
    for rank in range(4):
        rows, cols = grid.block(rank)
        assert rows.size == 2 and cols.size == 2
        cells += [(i, j) for i in range(rows.lo, rows.hi) for j in range(cols.lo, cols.hi)]
    assert sorted(cells) == [(i, j) for i in range(4) for j in range(4)]


def test_block_block_single_slave_with_views():
    grid = block_block_partition(6, 6, 1, ((1, 1), (1, 1)))
    rows, cols = grid.block(0)
    assert (rows.lo, rows.hi, rows.view_lo, rows.view_hi) == (0, 6, 0, 6)
    assert (cols.lo, cols.hi, cols.view_lo, cols.view_hi) == (0, 6, 0, 6)


def test_block_block_prime_count_is_one_by_three():
    grid = block_block_partition(5, 7, 3)
    assert grid.shape == (1, 3)
    assert [c.size for c in grid.cols] == [3, 2, 2]


@pytest.mark.parametrize("n,shape", [(1, (1, 1)), (4, (2, 2)), (6, (2, 3)), (8, (2, 4)), (9, (3, 3)),
                                     (12, (3, 4)), (7, (1, 7))])
def test_factor_grid(n, shape):
    assert factor_grid(n) == shape


def test_row_disjoint_never_splits_a_row():
    parts = row_disjoint_partition([0, 0, 1, 1, 1, 2], 2)
    assert parts[0].hi in (2, 5)
    assert owned(parts) in ([(0, 2), (2, 6)], [(0, 5), (5, 6)])


def test_row_disjoint_single_row():
    assert owned(row_disjoint_partition([0], 1)) == [(0, 1)]


def test_row_disjoint_one_row_each():
    assert owned(row_disjoint_partition([0, 1, 2, 3], 4)) == [(0, 1), (1, 2), (2, 3), (3, 4)]


def test_prim_reduction_folds_in_order():
    assert apply_reduction(A.ReduceSpec("prim", "+"), [1, 2, 3], base="int") == 6
    assert fold_prim("-", [10, 2, 3], "int") == 5
    assert fold_prim("*", [2**20, 2**20], "int") == 0  # wraps like a 32-bit int


def test_assembly_concatenates_in_rank_order():
    assert apply_reduction(A.ASSEMBLY, [[1, 2], [3], [4, 5]]) == [1, 2, 3, 4, 5]
    assert assemble([[[1], [4]], [[2, 3], [5, 6]]], axis=1) == [[1, 2, 3], [4, 5, 6]]


def test_assembly_size_mismatch():
    with pytest.raises(ReductionError):
        assemble([[1], [2]], expected=3)


def test_self_reduction_re_applies_the_method():
    e = engine("array_sum.somd")
    got = apply_reduction(A.ReduceSpec("self"), [10, 20, 12],
                          method_runner=lambda parts: e.run("sum", [parts], "seq"))
    assert got == 42


def test_unregistered_reducer():
    with pytest.raises(ReductionError):
        apply_reduction(A.ReduceSpec("user", name="Missing"), [1], reg=Registry())


def test_user_strategy_output_is_validated():
    reg = Registry()
    reg.register_strategy("Gappy", lambda n, k: [(0, 1), (2, n)])
    with pytest.raises(ReductionError):
        reg.partition("Gappy", 5, 2)
    reg.register_strategy("Halves", lambda n, k: [(0, n // 2), (n // 2, n)])
    assert owned(reg.partition("Halves", 5, 2)) == [(0, 2), (2, 5)]


def test_builtin_registry_has_the_sparse_strategy_and_reducer():
    assert owned(registry.partition("RowDisjoint", 4, 2, ([0, 0, 1, 1],))) == [(0, 2), (2, 4)]
    assert registry.reduce("VectorSum", [[1.0, 2.0], [0.5, 0.5]]) == [1.5, 2.5]


def test_check_ranges_rejects_wrong_count():
    with pytest.raises(ReductionError):
        check_ranges([IndexRange(0, 3, 0, 3)], 3, 2)


# -- properties -------------------------------------------------------------------------


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 64), st.integers(0, 3), st.integers(0, 3))
def test_index_partition_properties(length, n, before, after):
    parts = index_partition(length, n, (before, after))
    assert len(parts) == n
    pos = 0
    for r in parts:
        assert r.lo == pos and r.lo <= r.hi
        assert 0 <= r.view_lo <= r.lo <= r.hi <= r.view_hi <= length
        if r.size:
            assert r.view_lo == max(0, r.lo - before) and r.view_hi == min(length, r.hi + after)
        pos = r.hi
    assert pos == length
    sizes = [r.size for r in parts]
    assert max(sizes) - min(sizes) <= 1
    assert sizes == sorted(sizes, reverse=True)  # the extra indices go to the first ranges
    assert sizes[0] == math.ceil(length / n)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 30), max_size=200).map(sorted), st.integers(1, 16))
def test_row_disjoint_properties(rows, n):
    parts = row_disjoint_partition(rows, n)
    assert len(parts) == n
    check_ranges(parts, len(rows), n)
    for r in parts:
        if 0 < r.lo < len(rows):
            assert rows[r.lo] != rows[r.lo - 1]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(1, 16))
def test_block_block_covers_each_cell_once(rows, cols, n):
    grid = block_block_partition(rows, cols, n)
    assert len(grid) == n
    count = 0
    for rank in range(n):
        r, c = grid.block(rank)
        count += r.size * c.size
    assert count == rows * cols


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_reduction_is_deterministic(parts):
    spec = A.ReduceSpec("prim", "+")
    assert repr(apply_reduction(spec, parts)) == repr(apply_reduction(spec, parts))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-1000, 1000), max_size=40), st.integers(1, 8))
def test_self_reduction_over_blocks_equals_whole_sum(values, n):
    e = engine("array_sum.somd")
    partials = [e.run("sum", [values[r.lo:r.hi]], "seq") for r in index_partition(len(values), n)]
    got = apply_reduction(A.ReduceSpec("self"), partials, method_runner=lambda p: e.run("sum", [p], "seq"))
    assert got == sum(values)
