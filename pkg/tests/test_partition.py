import pytest
from hypothesis import given
from hypothesis import strategies as st

from crossbar_sim.config import NetworkTopology, default_config
from crossbar_sim.exceptions import PartitionTooFine, ValidationError
from crossbar_sim.partition import (
    balanced_split,
    plan_for_subarray,
    plan_from_config,
    plan_partitions,
)


@given(total=st.integers(1, 500), data=st.data())
def test_balanced_split(total, data):
    parts = data.draw(st.integers(1, total))
    counts = balanced_split(total, parts)
    assert sum(counts) == total and len(counts) == parts
    assert max(counts) - min(counts) <= 1
    assert list(counts) == sorted(counts, reverse=True)


def test_too_many_partitions():
    with pytest.raises(PartitionTooFine):
        balanced_split(3, 4)
    with pytest.raises(ValidationError):
        balanced_split(3, 0)


def test_plan_layout():
    plan = plan_partitions(NetworkTopology((400, 120, 84, 10)), [2, 1, 1], [1, 2, 1])
    assert plan[0].row_counts == (201, 200)
    assert plan[1].col_counts == (42, 42)
    assert plan.horizontal == (2, 1, 1) and plan.vertical == (1, 2, 1)
    blocks = list(plan[0].blocks())
    assert len(blocks) == 2 and 0 in blocks[0][2]      # bias row in the first partition


@given(sizes=st.lists(st.integers(1, 60), min_size=2, max_size=4), data=st.data())
def test_blocks_tile_the_crossbar(sizes, data):
    n = len(sizes) - 1
    h = [data.draw(st.integers(1, sizes[j] + 1)) for j in range(n)]
    v = [data.draw(st.integers(1, sizes[j + 1])) for j in range(n)]
    for j, grid in enumerate(plan_partitions(sizes, h, v)):
        cells = set()
        for _, _, rows, cols in grid.blocks():
            cells.update((r, c) for r in rows for c in cols)
        assert len(cells) == (sizes[j] + 1) * sizes[j + 1]
        assert grid.n_rows == sizes[j] + 1 and grid.n_cols == sizes[j + 1]


@given(sizes=st.lists(st.integers(1, 200), min_size=2, max_size=4),
       rows=st.integers(1, 64), cols=st.integers(1, 64))
def test_subarray_plan_is_minimal(sizes, rows, cols):
    h, v = plan_for_subarray(sizes, rows, cols)
    for j, grid in enumerate(plan_partitions(sizes, h, v)):
        assert max(grid.row_counts) <= rows and max(grid.col_counts) <= cols
        if h[j] > 1:
            assert sizes[j] + 1 > rows * (h[j] - 1)
        if v[j] > 1:
            assert sizes[j + 1] > cols * (v[j] - 1)


def test_plan_length_mismatch():
    with pytest.raises(ValidationError):
        plan_partitions([4, 3, 2], [1], [1, 1])


def test_plan_from_config():
    cfg = default_config([100, 32, 10], partitions__subarray=[16, 16])
    plan = plan_from_config(cfg)
    assert plan.horizontal == (7, 3) and plan.vertical == (2, 1)
