"""Index-range partitioning, reductions and the strategy registry.

A partitioner turns the length of one array dimension into ``n_slaves``
contiguous, ascending, disjoint ranges covering ``[0, length)``.  Views widen
each range into a visible window (clamped to the array).  Reducers fold the
per-instance partial results in rank order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .errors import ReductionError
from .values import wrap32, wrap64


@dataclass(frozen=True)
class IndexRange:
    lo: int
    hi: int
    view_lo: int
    view_hi: int

    @property
    def size(self) -> int:
        return self.hi - self.lo

    def owns(self, i: int) -> bool:
        return self.lo <= i < self.hi

    def sees(self, i: int) -> bool:
        return self.view_lo <= i < self.view_hi

    def as_pair(self) -> tuple:
        return (self.lo, self.hi)


def _with_view(lo: int, hi: int, length: int, view) -> IndexRange:
    before, after = view
    if lo == hi:
        # an empty partition sees nothing beyond itself
        return IndexRange(lo, hi, lo, hi)
    return IndexRange(lo, hi, max(0, lo - before), min(length, hi + after))


def index_partition(length: int, n_slaves: int, view=(0, 0), align: int = 1) -> list:
    """Block partition of ``[0, length)``; the first ``length % n`` blocks get one extra index.

    With ``align > 1`` the unit of distribution is a run of ``align`` indices
    (the last run may be shorter), so no range boundary splits a run.
    """
    if n_slaves < 1:
        raise ValueError("n_slaves must be positive")
    if length < 0:
        raise ValueError("length must be non-negative")
    units = -(-length // align) if align > 1 else length
    base, rem = divmod(units, n_slaves)
    out = []
    lo = 0
    for r in range(n_slaves):
        size = base + (1 if r < rem else 0)
        hi = lo + size
        out.append(_with_view(min(lo * align, length), min(hi * align, length), length, view))
        lo = hi
    return out


def factor_grid(n_slaves: int) -> tuple:
    """Near-square factorization r x c = n with r the largest divisor <= floor(sqrt(n))."""
    r = math.isqrt(n_slaves)
    while n_slaves % r:
        r -= 1
    return r, n_slaves // r


@dataclass(frozen=True)
class BlockGrid:
    """2D (block, block) partition: rank k owns rows[k // cols] x columns[k % cols]."""

    shape: tuple  # (r, c) grid of blocks
    rows: list  # r IndexRanges over dimension 1
    cols: list  # c IndexRanges over dimension 2

    def block(self, rank: int) -> tuple:
        c = self.shape[1]
        return self.rows[rank // c], self.cols[rank % c]

    def __len__(self) -> int:
        return self.shape[0] * self.shape[1]


def block_block_partition(rows: int, cols: int, n_slaves: int, view=((0, 0), (0, 0))) -> BlockGrid:
    r, c = factor_grid(n_slaves)
    views = list(view) + [(0, 0)] * (2 - len(view))
    return BlockGrid((r, c), index_partition(rows, r, views[0]), index_partition(cols, c, views[1]))


def row_disjoint_partition(row_index: Sequence[int], n_slaves: int) -> list:
    """Split element positions so no range cuts through the elements of one row.

    ``row_index[k]`` is the (non-decreasing) row of element ``k``.  Cut points
    are the row boundaries nearest to the balanced targets ``k * n / n_slaves``.
    """
    if n_slaves < 1:
        raise ValueError("n_slaves must be positive")
    n = len(row_index)
    cuts = [0] + [k for k in range(1, n) if row_index[k] != row_index[k - 1]] + [n]
    cuts = sorted(set(cuts))
    bounds = [0]
    for k in range(1, n_slaves):
        target = k * n / n_slaves
        prev = bounds[-1]
        best = min((c for c in cuts if c >= prev), key=lambda c: (abs(c - target), c))
        bounds.append(best)
    bounds.append(n)
    return [IndexRange(bounds[r], bounds[r + 1], bounds[r], bounds[r + 1]) for r in range(n_slaves)]


def check_ranges(ranges: Sequence[IndexRange], length: int, n_slaves: int, who: str = "strategy"):
    """Reject strategy output that is not an ascending cover of ``[0, length)``."""
    if len(ranges) != n_slaves:
        raise ReductionError(f"{who} returned {len(ranges)} ranges for {n_slaves} method instances")
    pos = 0
    for r in ranges:
        if r.lo != pos or r.hi < r.lo:
            raise ReductionError(f"{who} ranges do not tile [0, {length}): got {[x.as_pair() for x in ranges]}")
        pos = r.hi
    if pos != length:
        raise ReductionError(f"{who} ranges cover [0, {pos}) instead of [0, {length})")


# -- reductions ---------------------------------------------------------------------


def fold_prim(op: str, partials: Sequence, base: str = "double"):
    if not partials:
        raise ReductionError("nothing to reduce")
    acc = partials[0]
    for p in partials[1:]:
        if op == "+":
            acc = acc + p
        elif op == "-":
            acc = acc - p
        elif op == "*":
            acc = acc * p
        else:
            raise ReductionError(f"unknown reduction operator {op!r}")
        if base == "int":
            acc = wrap32(acc)
        elif base == "long":
            acc = wrap64(acc)
    return acc


def assemble(partials: Sequence, axis: int = 0, expected: Optional[int] = None):
    """Concatenate rank-ordered partial arrays along ``axis`` (0 or 1)."""
    if axis == 0:
        out = []
        for p in partials:
            out.extend(p)
        n = len(out)
    else:
        nrows = {len(p) for p in partials if len(p)}
        if len(nrows) > 1:
            raise ReductionError(f"column blocks have different row counts {sorted(nrows)}")
        rows = nrows.pop() if nrows else 0
        out = [[] for _ in range(rows)]
        for p in partials:
            for i, row in enumerate(p):
                out[i].extend(row)
        n = len(out[0]) if out else 0
    if expected is not None and n != expected:
        raise ReductionError(f"assembled {n} elements along dimension {axis + 1}, expected {expected}")
    return out


class Registry:
    """Name -> user partitioning strategies and reducers."""

    def __init__(self):
        self.strategies: dict = {}
        self.reducers: dict = {}

    def register_strategy(self, name: str, fn: Callable):
        """``fn(length, n_slaves, *args) -> list of IndexRange or (lo, hi)`` pairs."""
        self.strategies[name] = fn

    def register_reducer(self, name: str, fn: Callable):
        """``fn(partials, *args) -> result``; partials are in rank order."""
        self.reducers[name] = fn

    def partition(self, name: str, length: int, n_slaves: int, args: Sequence = ()) -> list:
        try:
            fn = self.strategies[name]
        except KeyError:
            raise ReductionError(f"no partitioning strategy registered under {name!r}") from None
        out = []
        for r in fn(length, n_slaves, *args):
            if not isinstance(r, IndexRange):
                lo, hi = r
                r = IndexRange(lo, hi, lo, hi)
            out.append(r)
        check_ranges(out, length, n_slaves, name)
        return out

    def reduce(self, name: str, partials: Sequence, args: Sequence = ()):
        try:
            fn = self.reducers[name]
        except KeyError:
            raise ReductionError(f"no reducer registered under {name!r}") from None
        return fn(list(partials), *args)

    def copy(self) -> "Registry":
        r = Registry()
        r.strategies.update(self.strategies)
        r.reducers.update(self.reducers)
        return r


def apply_reduction(spec, partials: Sequence, method_runner: Optional[Callable] = None,
                    base: str = "double", axis: int = 0, expected: Optional[int] = None,
                    args: Sequence = (), reg: Optional[Registry] = None):
    """Combine rank-ordered partial results according to a ReduceSpec."""
    if not partials and spec.kind != "assembly":
        raise ReductionError("nothing to reduce")
    if spec.kind == "prim":
        return fold_prim(spec.op, partials, base)
    if spec.kind == "assembly":
        return assemble(partials, axis, expected)
    if spec.kind == "self":
        if method_runner is None:
            raise ReductionError("reduce(self) needs the method to re-apply")
        return method_runner(list(partials))
    if spec.kind == "user":
        return (reg or registry).reduce(spec.name, partials, args)
    raise ReductionError(f"unknown reduction kind {spec.kind!r}")


def _row_disjoint_strategy(length: int, n_slaves: int, row_index=None):
    rows = row_index if row_index is not None else list(range(length))
    if len(rows) != length:
        raise ReductionError(f"RowDisjoint: row index has {len(rows)} entries for {length} elements")
    return row_disjoint_partition(rows, n_slaves)


def _vector_sum(partials: list):
    """Elementwise sum of equally long vectors, folded in rank order."""
    sizes = {len(p) for p in partials}
    if len(sizes) > 1:
        raise ReductionError(f"VectorSum over vectors of different lengths {sorted(sizes)}")
    acc = list(partials[0])
    for p in partials[1:]:
        for i, x in enumerate(p):
            acc[i] = acc[i] + x
    return acc


registry = Registry()
registry.register_strategy("RowDisjoint", _row_disjoint_strategy)
registry.register_reducer("VectorSum", _vector_sum)
