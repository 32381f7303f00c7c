"""Horizontal/vertical partitioning of layer crossbars into subarrays.

Row index 0 of every layer is the bias row; rows 1..L_j carry the inputs.
Splits are balanced: the first ``total % k`` partitions get one extra row
(or column), so the bias row always lands in the first horizontal
partition.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import NetworkTopology
from .exceptions import PartitionTooFine, ValidationError


def balanced_split(total: int, parts: int) -> tuple[int, ...]:
    if parts < 1:
        raise ValidationError(f"partition count must be >= 1, got {parts}")
    if parts > total:
        raise PartitionTooFine(f"{parts} partitions over {total} lines leaves empty partitions")
    base, extra = divmod(total, parts)
    return tuple(base + 1 if i < extra else base for i in range(parts))


def _ranges(counts):
    out, start = [], 0
    for c in counts:
        out.append(range(start, start + c))
        start += c
    return tuple(out)


@dataclass(frozen=True)
class PartitionGrid:
    h_p: int
    v_p: int
    row_counts: tuple[int, ...]
    col_counts: tuple[int, ...]

    @property
    def n_rows(self) -> int:
        return sum(self.row_counts)

    @property
    def n_cols(self) -> int:
        return sum(self.col_counts)

    @property
    def row_ranges(self) -> tuple[range, ...]:
        return _ranges(self.row_counts)

    @property
    def col_ranges(self) -> tuple[range, ...]:
        return _ranges(self.col_counts)

    def blocks(self):
        """Yield ``(i, j, rows, cols)`` for every partition P_ij."""
        for i, rows in enumerate(self.row_ranges):
            for j, cols in enumerate(self.col_ranges):
                yield i, j, rows, cols


@dataclass(frozen=True)
class PartitionPlan:
    grids: tuple[PartitionGrid, ...]

    def __len__(self):
        return len(self.grids)

    def __getitem__(self, j) -> PartitionGrid:
        return self.grids[j]

    def __iter__(self):
        return iter(self.grids)

    @property
    def horizontal(self) -> tuple[int, ...]:
        return tuple(g.h_p for g in self.grids)

    @property
    def vertical(self) -> tuple[int, ...]:
        return tuple(g.v_p for g in self.grids)


def plan_partitions(topology, h_list, v_list) -> PartitionPlan:
    """Split every layer's (L_j + 1) x L_{j+1} bitcell matrix into subarrays.

    >>> plan_partitions(NetworkTopology((400, 120)), [2], [1])[0].row_counts
    (201, 200)
    """
    if not isinstance(topology, NetworkTopology):
        topology = NetworkTopology(tuple(topology))
    sizes = topology.layer_sizes
    n = topology.n_layers
    if len(h_list) != n or len(v_list) != n:
        raise ValidationError(f"need {n} horizontal and vertical partition counts", "partitions")
    grids = []
    for j in range(n):
        h, v = int(h_list[j]), int(v_list[j])
        grids.append(PartitionGrid(h, v, balanced_split(sizes[j] + 1, h),
                                   balanced_split(sizes[j + 1], v)))
    return PartitionPlan(tuple(grids))


def plan_for_subarray(topology, max_rows: int, max_cols: int) -> tuple[list[int], list[int]]:
    """Fewest partitions per layer such that every block fits a max_rows x max_cols subarray."""
    if max_rows < 1 or max_cols < 1:
        raise ValidationError("subarray dimensions must be >= 1", "partitions.subarray")
    sizes = topology.layer_sizes if isinstance(topology, NetworkTopology) else tuple(topology)
    h = [-(-(sizes[j] + 1) // max_rows) for j in range(len(sizes) - 1)]
    v = [-(-sizes[j + 1] // max_cols) for j in range(len(sizes) - 1)]
    return h, v


def plan_from_config(cfg) -> PartitionPlan:
    return plan_partitions(cfg.topology, cfg.horizontal_partitions, cfg.vertical_partitions)
