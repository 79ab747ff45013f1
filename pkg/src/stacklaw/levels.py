"""Compact integer level sets for tower rectangles.

An APItem is a union of equal-width intervals laid out along nested
arithmetic strides (innermost stride first); stacking a set through a
cut-and-stack refinement just appends one more stride, and contiguous
strides collapse back into the inner count. A ListItem is an explicit sorted
list of starts sharing one small offset pattern, used for correction points
and irregular per-window selections. Both support O(depth) counting below a
level, which is what prefix-sum window arithmetic needs.

Invariants (kept by constructors): interval width fits inside the innermost
stride, each stride is at least the span of what it repeats, list starts are
spaced at least a pattern span apart. Under these, levels never overlap and
iteration is sorted.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Iterator, Union

from .errors import BudgetExceeded


@dataclass(frozen=True)
class APItem:
    start: int
    width: int
    dims: tuple[tuple[int, int], ...] = ()   # (period, count), innermost first

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("width must be positive")
        span = self.width
        for period, count in self.dims:
            if count < 1 or period < span:
                raise ValueError("stride shorter than inner span")
            span = period * (count - 1) + span

    @property
    def span(self) -> int:
        span = self.width
        for period, count in self.dims:
            span = period * (count - 1) + span
        return span

    @property
    def total(self) -> int:
        n = self.width
        for _, count in self.dims:
            n *= count
        return n

    @property
    def end(self) -> int:
        return self.start + self.span

    def count_below(self, v: int) -> int:
        rel = v - self.start
        if rel <= 0:
            return 0
        return _ap_count(rel, self.width, self.dims)

    def contains(self, v: int) -> bool:
        rel = v - self.start
        if rel < 0:
            return False
        for period, count in reversed(self.dims):
            t = rel // period
            if t >= count:
                t = count - 1
            rel -= t * period
            if rel < 0:
                return False
        return rel < self.width

    def shifted(self, offset: int) -> "APItem":
        return APItem(self.start + offset, self.width, self.dims)

    def stacked(self, base: int, stride: int, count: int) -> "APItem":
        """Levels repeated at `stride` for `count` copies, shifted by `base`."""
        if count == 1:
            return self.shifted(base)
        if not self.dims and stride == self.width:
            return APItem(self.start + base, self.width * count)
        if self.dims:
            period, inner_count = self.dims[-1]
            if period * inner_count == stride:
                dims = self.dims[:-1] + ((period, inner_count * count),)
                return APItem(self.start + base, self.width, dims)
        return APItem(self.start + base, self.width, self.dims + ((stride, count),))

    def intervals(self) -> Iterator[tuple[int, int]]:
        """Sorted maximal intervals [lo, hi)."""
        def rec(base: int, dims) -> Iterator[tuple[int, int]]:
            if not dims:
                yield (base, base + self.width)
                return
            period, count = dims[-1]
            for t in range(count):
                yield from rec(base + t * period, dims[:-1])
        yield from rec(self.start, self.dims)

    def interval_count(self) -> int:
        n = 1
        for _, count in self.dims:
            n *= count
        return n


def _ap_count(rel: int, width: int, dims) -> int:
    if rel <= 0:
        return 0
    if not dims:
        return min(rel, width)
    period, count = dims[-1]
    inner = dims[:-1]
    unit = width
    for _, c in inner:
        unit *= c
    full = min(rel // period, count)
    got = full * unit
    if full < count:
        got += _ap_count(rel - full * period, width, inner)
    return got


@dataclass(frozen=True)
class ListItem:
    starts: tuple[int, ...]                    # sorted
    pattern: tuple[tuple[int, int], ...]       # (offset, width), sorted, disjoint

    def __post_init__(self):
        span = self.pattern_span
        prev = None
        for s in self.starts:
            if prev is not None and s - prev < span:
                raise ValueError("list starts closer than pattern span")
            prev = s

    @property
    def pattern_span(self) -> int:
        off, width = self.pattern[-1]
        return off + width

    @property
    def pattern_total(self) -> int:
        return sum(w for _, w in self.pattern)

    @property
    def total(self) -> int:
        return len(self.starts) * self.pattern_total

    @property
    def end(self) -> int:
        return self.starts[-1] + self.pattern_span

    def count_below(self, v: int) -> int:
        i = bisect_right(self.starts, v - self.pattern_span)
        got = i * self.pattern_total
        for s in self.starts[i:]:
            if s >= v:
                break
            rel = v - s
            for off, width in self.pattern:
                if rel <= off:
                    break
                got += min(rel - off, width)
        return got

    def contains(self, v: int) -> bool:
        i = bisect_right(self.starts, v) - 1
        if i < 0:
            return False
        rel = v - self.starts[i]
        for off, width in self.pattern:
            if off <= rel < off + width:
                return True
        return False

    def shifted(self, offset: int) -> "ListItem":
        return ListItem(tuple(s + offset for s in self.starts), self.pattern)

    def stacked(self, base: int, stride: int, count: int,
                cap: int = 1_000_000) -> list["ListItem"]:
        if count * len(self.starts) > cap:
            raise BudgetExceeded("list item stacking", cap, count * len(self.starts))
        return [self.shifted(base + r * stride) for r in range(count)]

    def intervals(self) -> Iterator[tuple[int, int]]:
        for s in self.starts:
            for off, width in self.pattern:
                yield (s + off, s + off + width)

    def interval_count(self) -> int:
        return len(self.starts) * len(self.pattern)


@dataclass(frozen=True)
class MultiListItem:
    """Sorted starts, each carrying its own small offset pattern.

    Used for per-window selections whose pattern varies window by window;
    one object per rectangle keeps counting logarithmic regardless of how
    many windows there are.
    """

    starts: tuple[int, ...]
    patterns: tuple[tuple[tuple[int, int], ...], ...]
    _cum: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.starts) != len(self.patterns):
            raise ValueError("starts and patterns lengths differ")
        cum = [0]
        prev_end = None
        for s, pat in zip(self.starts, self.patterns):
            if not pat:
                raise ValueError("empty pattern")
            span = pat[-1][0] + pat[-1][1]
            if prev_end is not None and s < prev_end:
                raise ValueError("overlapping pattern spans")
            prev_end = s + span
            cum.append(cum[-1] + sum(w for _, w in pat))
        object.__setattr__(self, "_cum", tuple(cum))

    @property
    def total(self) -> int:
        return self._cum[-1]

    @property
    def end(self) -> int:
        pat = self.patterns[-1]
        return self.starts[-1] + pat[-1][0] + pat[-1][1]

    def count_below(self, v: int) -> int:
        i = bisect_right(self.starts, v) - 1
        got = self._cum[max(i, 0)]
        if i >= 0:
            rel = v - self.starts[i]
            for off, width in self.patterns[i]:
                if rel <= off:
                    break
                got += min(rel - off, width)
        return got

    def contains(self, v: int) -> bool:
        i = bisect_right(self.starts, v) - 1
        if i < 0:
            return False
        rel = v - self.starts[i]
        for off, width in self.patterns[i]:
            if off <= rel < off + width:
                return True
        return False

    def shifted(self, offset: int) -> "MultiListItem":
        return MultiListItem(tuple(s + offset for s in self.starts), self.patterns)

    def stacked(self, base: int, stride: int, count: int,
                cap: int = 1_000_000) -> list["MultiListItem"]:
        if count * len(self.starts) > cap:
            raise BudgetExceeded("multi list stacking", cap, count * len(self.starts))
        return [self.shifted(base + r * stride) for r in range(count)]

    def intervals(self) -> Iterator[tuple[int, int]]:
        for s, pat in zip(self.starts, self.patterns):
            for off, width in pat:
                yield (s + off, s + off + width)

    def interval_count(self) -> int:
        return sum(len(p) for p in self.patterns)


Item = Union[APItem, ListItem, MultiListItem]


def stack_item(item: Item, base: int, stride: int, count: int) -> list[Item]:
    if isinstance(item, APItem):
        return [item.stacked(base, stride, count)]
    return item.stacked(base, stride, count)  # list/multi items materialize


def items_count_below(items, v: int) -> int:
    return sum(it.count_below(v) for it in items)


def items_total(items) -> int:
    return sum(it.total for it in items)


def intervals_touching(item: Item, lo: int, hi: int):
    """Unclipped maximal intervals [a, b) of the item that intersect (lo, hi)."""
    if hi <= lo:
        return
    if isinstance(item, MultiListItem):
        i = bisect_left(item.starts, lo)
        if i > 0:
            i -= 1
        for s, pat in zip(item.starts[i:], item.patterns[i:]):
            if s >= hi:
                break
            for off, width in pat:
                a, b = s + off, s + off + width
                if b > lo and a < hi:
                    yield (a, b)
        return
    if isinstance(item, ListItem):
        span = item.pattern_span
        i = bisect_right(item.starts, lo - span)
        for s in item.starts[i:]:
            if s >= hi:
                break
            for off, width in item.pattern:
                a, b = s + off, s + off + width
                if b > lo and a < hi:
                    yield (a, b)
        return
    width = item.width

    def rec(base: int, dims):
        if not dims:
            if base + width > lo and base < hi:
                yield (base, base + width)
            return
        period, count = dims[-1]
        rest = dims[:-1]
        copy_span = width
        for p, c in rest:
            copy_span = p * (c - 1) + copy_span
        t0 = max(0, (lo - base - copy_span) // period) if lo > base else 0
        for t in range(t0, count):
            start = base + t * period
            if start >= hi:
                break
            yield from rec(start, rest)

    yield from rec(item.start, item.dims)


def interval_count_touching(item: Item, lo: int, hi: int) -> int:
    """Upper bound on what intervals_touching will yield."""
    lo = max(lo, item.start if isinstance(item, APItem) else item.starts[0])
    hi = min(hi, item.end)
    if hi <= lo:
        return 0
    if isinstance(item, MultiListItem):
        i = max(0, bisect_left(item.starts, lo) - 1)
        j = bisect_right(item.starts, hi)
        return sum(len(p) for p in item.patterns[i:j])
    if isinstance(item, ListItem):
        span = item.pattern_span
        i = bisect_right(item.starts, lo - span)
        j = bisect_right(item.starts, hi)
        return max(0, j - i) * len(item.pattern)
    if not item.dims:
        return 1
    per_copy = 1
    for _, c in item.dims[:-1]:
        per_copy *= c
    period, count = item.dims[-1]
    copies = min(count, (hi - lo) // period + 2)
    return per_copy * copies


def free_intervals(items, lo: int, hi: int):
    """Sorted maximal intervals of [lo, hi) not covered by any item."""
    occ = sorted(iv for it in items for iv in intervals_touching(it, lo, hi))
    out = []
    cur = lo
    for a, b in occ:
        a, b = max(a, lo), min(b, hi)
        if a > cur:
            out.append((cur, a))
        cur = max(cur, b)
    if cur < hi:
        out.append((cur, hi))
    return out
