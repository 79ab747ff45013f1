"""Measurable sets over a castle: per-column rectangles of base-interval
times compact level set.

Rectangles within one TowerSet are maintained pairwise disjoint by the
constructions that produce them; `audit_disjoint` re-verifies this from
scratch on demand (budgeted), and `measure` is exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .errors import BudgetExceeded
from .levels import APItem, Item, items_count_below, items_total


@dataclass(frozen=True)
class Rect:
    x_lo: Fraction
    x_hi: Fraction
    items: tuple[Item, ...]

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise ValueError("empty rectangle")

    @property
    def width(self) -> Fraction:
        return self.x_hi - self.x_lo

    def level_total(self) -> int:
        return items_total(self.items)


@dataclass(frozen=True)
class TowerSet:
    rects: dict[int, tuple[Rect, ...]] = field(default_factory=dict)

    @staticmethod
    def empty() -> "TowerSet":
        return TowerSet({})

    @staticmethod
    def of(rects_by_col) -> "TowerSet":
        return TowerSet({col: tuple(rs) for col, rs in rects_by_col.items() if rs})

    def measure(self, delta_scale: Fraction = Fraction(1)) -> Fraction:
        total = Fraction(0)
        for rs in self.rects.values():
            for r in rs:
                total += r.width * r.level_total()
        return total * delta_scale

    def count_range(self, col: int, x: Fraction, v_lo: int, v_hi: int) -> int:
        got = 0
        for r in self.rects.get(col, ()):
            if r.x_lo <= x < r.x_hi:
                got += items_count_below(r.items, v_hi) - items_count_below(r.items, v_lo)
        return got

    def contains(self, col: int, x: Fraction, v: int) -> bool:
        for r in self.rects.get(col, ()):
            if r.x_lo <= x < r.x_hi:
                if any(it.contains(v) for it in r.items):
                    return True
        return False

    def union(self, *others: "TowerSet") -> "TowerSet":
        merged: dict[int, list[Rect]] = {c: list(rs) for c, rs in self.rects.items()}
        for o in others:
            for c, rs in o.rects.items():
                merged.setdefault(c, []).extend(rs)
        return TowerSet({c: tuple(rs) for c, rs in merged.items()})

    def columns(self):
        return self.rects.keys()

    def interval_budget(self) -> int:
        return sum(it.interval_count() for rs in self.rects.values()
                   for r in rs for it in r.items)

    def audit_disjoint(self, cap: int = 2_000_000) -> bool:
        """Recheck pairwise disjointness of all rectangles, exactly."""
        if self.interval_budget() > cap:
            raise BudgetExceeded("disjointness audit intervals", cap,
                                 self.interval_budget())
        for col, rs in self.rects.items():
            marks: list[tuple[Fraction, Fraction, int, int]] = []
            for r in rs:
                for lo, hi in _iter_intervals(r.items):
                    marks.append((r.x_lo, r.x_hi, lo, hi))
            marks.sort(key=lambda m: (m[2], m[3]))
            for i, (ax0, ax1, alo, ahi) in enumerate(marks):
                for bx0, bx1, blo, bhi in marks[i + 1:]:
                    if blo >= ahi:
                        break
                    if ax0 < bx1 and bx0 < ax1:
                        return False
        return True


def _iter_intervals(items):
    for it in items:
        yield from it.intervals()


def full_column_rect(width: Fraction, height: int) -> Rect:
    return Rect(Fraction(0), width, (APItem(0, height),))
