"""Exact cutting-and-stacking castles.

A castle is a finite family of columns (height n or n+1) whose bases are
subdivided into equal arcs of width delta. The stacking map sends the top of
every arc to the base of the next arc along one global cyclic order, so the
transformation is a measure-preserving bijection defined everywhere. The
junk set is the top level of every height-(n+1) column; its image is a base
arc, which gives sojourn time 1 for free.

Refinement cuts the arc cycle into consecutive blocks whose total heights
are exactly N or N+1 and stacks each block into one new column. The new
transformation is literally the old one (agreement is exact, not
approximate), which is possible precisely when the block heights tile the
orbit period; build_initial_castle therefore accepts alignment hints
(refine_multiple, gap_unit, min_period) so a planned cascade tiles at every
stage. Junk arcs are laid out in clusters of n consecutive arcs: a block of
m-1 arcs across one cluster sums to (n+1)n + (m-1-n)n = mn exactly, which is
how old junk is absorbed into new column interiors (the seams that later
corrections repair).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd

from .errors import RefinementInfeasible
from .levels import stack_item
from .towerset import Rect, TowerSet


@dataclass(frozen=True)
class Segment:
    """A maximal run of consecutive parent arcs stacked into a child column."""

    src_col: int
    src_x_lo: Fraction
    arcs: int
    arc_height: int
    base_level: int


@dataclass(frozen=True)
class Column:
    id: int
    height: int
    cells: tuple[tuple[str, Fraction], ...]
    segments: tuple[Segment, ...] = ()

    @property
    def width(self) -> Fraction:
        return sum((w for _, w in self.cells), Fraction(0))


@dataclass(frozen=True)
class CycleRun:
    col: int
    x_lo: Fraction
    arcs: int


@dataclass(frozen=True)
class Edge:
    src_col: int
    src_lo: Fraction
    width: Fraction
    dst_col: int
    dst_lo: Fraction


@dataclass(frozen=True)
class Pt:
    col: int
    level: int
    x: Fraction

    def cell_address(self, castle: "Castle") -> tuple[str, Fraction]:
        off = self.x
        for cid, w in castle.columns[self.col].cells:
            if off < w:
                return cid, off
            off -= w
        raise ValueError("offset outside column base")


@dataclass(frozen=True)
class Castle:
    columns: tuple[Column, ...]
    main_height: int
    delta: Fraction
    cycle: tuple[CycleRun, ...]
    edges: tuple[Edge, ...]
    mass: Fraction = Fraction(1)
    _edge_index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        idx: dict[int, list[Edge]] = {}
        for e in sorted(self.edges, key=lambda e: (e.src_col, e.src_lo)):
            idx.setdefault(e.src_col, []).append(e)
        object.__setattr__(self, "_edge_index", idx)

    # -- global invariants -------------------------------------------------

    def total_measure(self) -> Fraction:
        return sum((c.height * c.width for c in self.columns), Fraction(0))

    def junk_columns(self) -> list[Column]:
        return [c for c in self.columns if c.height == self.main_height + 1]

    def junk_measure(self) -> Fraction:
        return sum((c.width for c in self.junk_columns()), Fraction(0))

    def junk_set(self) -> TowerSet:
        from .levels import APItem

        rects = {}
        for c in self.junk_columns():
            rects[c.id] = (Rect(Fraction(0), c.width, (APItem(self.main_height, 1),)),)
        return TowerSet(rects)

    def full_set(self) -> TowerSet:
        from .towerset import full_column_rect

        return TowerSet({c.id: (full_column_rect(c.width, c.height),) for c in self.columns})

    def orbit_period(self) -> int:
        """T-period of every point: total measure in units of delta."""
        period = self.mass / self.delta
        assert period.denominator == 1
        return period.numerator

    def validate(self) -> None:
        assert self.total_measure() == self.mass, "height*width sum mismatch"
        for c in self.columns:
            assert c.height in (self.main_height, self.main_height + 1)
        covered: dict[int, Fraction] = {}
        for run in self.cycle:
            covered[run.col] = covered.get(run.col, Fraction(0)) + run.arcs * self.delta
        for c in self.columns:
            assert covered.get(c.id, Fraction(0)) == c.width, f"cycle misses column {c.id}"
        for col in self.columns:
            es = self._edge_index.get(col.id, [])
            pos = Fraction(0)
            for e in es:
                assert e.src_lo == pos, "edge gap on tops"
                pos += e.width
            assert pos == col.width, "edges do not cover column top"
        landed: dict[int, list[tuple[Fraction, Fraction]]] = {}
        for e in self.edges:
            landed.setdefault(e.dst_col, []).append((e.dst_lo, e.dst_lo + e.width))
        for c in self.columns:
            spans = sorted(landed.get(c.id, []))
            pos = Fraction(0)
            for lo, hi in spans:
                assert lo == pos, "edge image gap on bases"
                pos = hi
            assert pos == c.width, "edges do not cover column base"

    # -- dynamics ----------------------------------------------------------

    def step_from_top(self, col: int, x: Fraction) -> Pt:
        for e in self._edge_index[col]:
            if e.src_lo <= x < e.src_lo + e.width:
                return Pt(e.dst_col, 0, e.dst_lo + (x - e.src_lo))
        raise ValueError("stacking map gap")

    def apply_T(self, p: Pt) -> Pt:
        c = self.columns[p.col]
        if p.level + 1 < c.height:
            return Pt(p.col, p.level + 1, p.x)
        return self.step_from_top(p.col, p.x)

    def sample_point(self, rng: random.Random) -> Pt:
        r = self.mass * Fraction(rng.getrandbits(63), 1 << 63)
        for c in self.columns:
            block = c.width * c.height
            if r < block:
                level = int(r / c.width)
                x = r - level * c.width
                return Pt(c.id, level, x)
            r -= block
        last = self.columns[-1]
        return Pt(last.id, last.height - 1, last.width / 2)

    def birkhoff_sum(self, A: TowerSet, p: Pt, n: int) -> int:
        """Window count via per-column prefix jumps plus seam handling."""
        total = 0
        col, level, x = p.col, p.level, p.x
        remaining = n
        while remaining > 0:
            h = self.columns[col].height
            step = min(remaining, h - level)
            total += A.count_range(col, x, level, level + step)
            remaining -= step
            if remaining > 0:
                nxt = self.step_from_top(col, x)
                col, level, x = nxt.col, nxt.level, nxt.x
        return total


def set_measure(A: TowerSet) -> Fraction:
    return A.measure()


def _rat(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


def build_initial_castle(n: int, gamma, *, refine_multiple: int = 1,
                         gap_unit: int | None = None, min_period: int = 1,
                         junk_width=None, mass=Fraction(1)) -> Castle:
    """Two-column castle of heights n and n+1 with sojourn-1 junk.

    Junk width defaults to min(gamma, 1/(2n+2)) scaled by the component
    mass; an explicit junk_width at most that value may be passed to align
    the orbit period with a whole planned cascade, in which case every later
    refinement tiles exactly and the transformation never changes.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gamma = _rat(gamma)
    mass = _rat(mass)
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0,1)")
    if gap_unit is not None and gap_unit < n + 2:
        raise RefinementInfeasible(
            f"gap unit {gap_unit} cannot absorb clusters of {n} junk arcs")
    w2_rule = mass * min(gamma, Fraction(1, 2 * n + 2))
    if junk_width is not None:
        w2_rule = _rat(junk_width)
        if not 0 < w2_rule <= mass * min(gamma, Fraction(1, 2 * n + 2)):
            raise ValueError("junk_width above the admissible rule value")
    # one cluster of n junk arcs per period unit; P = mass * c * n / w2
    base = mass * n / w2_rule                  # period for c = 1, possibly fractional
    c_step = base.denominator                  # smallest c making c*base integral
    p1 = int(base * c_step)                    # period at c = c_step
    modulus = n * refine_multiple
    if gap_unit:
        modulus = modulus * (n * gap_unit) // gcd(modulus, n * gap_unit)
    k0 = modulus // gcd(modulus, p1)
    period = p1 * k0
    clusters = c_step * k0
    while period < min_period:
        period += p1 * k0
        clusters += c_step * k0
    delta = mass / period
    junk_arcs = clusters * n
    w2 = junk_arcs * delta
    assert w2 <= w2_rule
    shorts = (period - (n + 1) * junk_arcs)
    assert shorts % n == 0
    shorts //= n
    w1 = shorts * delta
    assert n * w1 + (n + 1) * w2 == mass

    head = (gap_unit - 1 - n) if gap_unit else 0
    spread = shorts - clusters * head
    if spread < 0:
        raise RefinementInfeasible("junk too wide for the requested gap unit")
    if gap_unit:
        assert spread % gap_unit == 0
        units = spread // gap_unit
        gaps = []
        for i in range(clusters):
            share = units // clusters + (1 if i < units % clusters else 0)
            gaps.append(head + share * gap_unit)
    else:
        gaps = [shorts // clusters + (1 if i < shorts % clusters else 0)
                for i in range(clusters)]
    assert sum(gaps) == shorts

    short_col = Column(id=0, height=n, cells=(("s", w1),))
    long_col = Column(id=1, height=n + 1, cells=(("j", w2),))
    cycle = []
    long_pos = Fraction(0)
    short_pos = Fraction(0)
    for i in range(clusters):
        cycle.append(CycleRun(col=1, x_lo=long_pos, arcs=n))
        long_pos += n * delta
        if gaps[i]:
            cycle.append(CycleRun(col=0, x_lo=short_pos, arcs=gaps[i]))
            short_pos += gaps[i] * delta
    castle = Castle(columns=(short_col, long_col), main_height=n, delta=delta,
                    cycle=tuple(cycle), edges=_edges_from_cycle(cycle, delta),
                    mass=mass)
    castle.validate()
    return castle


def _edges_from_cycle(cycle, delta: Fraction) -> tuple[Edge, ...]:
    edges = []
    for i, run in enumerate(cycle):
        if run.arcs > 1:
            edges.append(Edge(run.col, run.x_lo, (run.arcs - 1) * delta,
                              run.col, run.x_lo + delta))
        nxt = cycle[(i + 1) % len(cycle)]
        edges.append(Edge(run.col, run.x_lo + (run.arcs - 1) * delta, delta,
                          nxt.col, nxt.x_lo))
    return tuple(edges)


@dataclass(frozen=True)
class RefineResult:
    castle: Castle
    preserved: tuple[TowerSet, ...]
    parent: Castle

    def to_parent(self, p: Pt) -> Pt:
        col = self.castle.columns[p.col]
        for seg in col.segments:
            top = seg.base_level + seg.arcs * seg.arc_height
            if seg.base_level <= p.level < top:
                arc, inner = divmod(p.level - seg.base_level, seg.arc_height)
                return Pt(seg.src_col, inner, seg.src_x_lo + arc * self.castle.delta + p.x)
        raise ValueError("level outside column")

    def to_child(self, p: Pt) -> Pt:
        delta = self.castle.delta
        for col in self.castle.columns:
            for seg in col.segments:
                if seg.src_col != p.col:
                    continue
                rel = p.x - seg.src_x_lo
                if 0 <= rel < seg.arcs * delta and p.level < seg.arc_height:
                    arc = int(rel / delta)
                    return Pt(col.id, seg.base_level + arc * seg.arc_height + p.level,
                              rel - arc * delta)
        raise ValueError("point not covered by any segment")


def refine_castle(prev: Castle, new_height: int, gamma,
                  preserve: tuple[TowerSet, ...] = ()) -> RefineResult:
    """Cut the arc cycle into blocks of height N or N+1 and stack them.

    The transformation is unchanged at every point; sets in `preserve` come
    back re-expressed exactly over the new castle.
    """
    n = prev.main_height
    gamma = _rat(gamma)
    m, rem = divmod(new_height, n)
    if rem:
        raise RefinementInfeasible(
            f"new height {new_height} not a multiple of {n}")
    if m < 1:
        raise RefinementInfeasible("new height below current height")

    # flatten the cycle into (col, x_lo, arcs, is_long) chunks and cut blocks
    chunks = [(r.col, r.x_lo, r.arcs, prev.columns[r.col].height == n + 1)
              for r in prev.cycle]
    blocks: list[list[Segment]] = []
    block_heights: list[int] = []
    pos = 0
    off = 0
    delta = prev.delta

    def take(count: int, want_long: bool | None) -> list[Segment]:
        nonlocal pos, off
        taken = []
        while count > 0:
            if pos >= len(chunks):
                raise RefinementInfeasible("cycle exhausted mid-block")
            col, x_lo, arcs, is_long = chunks[pos]
            if want_long is not None and is_long != want_long:
                raise RefinementInfeasible("junk arcs not arranged for this cut")
            avail = arcs - off
            grab = min(avail, count)
            h = n + 1 if is_long else n
            taken.append(Segment(src_col=col, src_x_lo=x_lo + off * delta,
                                 arcs=grab, arc_height=h, base_level=0))
            off += grab
            count -= grab
            if off == arcs:
                pos += 1
                off = 0
        return taken

    def shorts_ahead() -> int:
        got = 0
        p, o = pos, off
        while p < len(chunks) and not chunks[p][3]:
            got += chunks[p][2] - o
            p += 1
            o = 0
        return got

    # how many height-(N+1) carrier blocks the orbit period forces
    total_steps = sum((n + 1 if lng else n) * arcs for _, _, arcs, lng in chunks)
    carriers_needed = total_steps % new_height
    if (total_steps - carriers_needed * (new_height + 1)) % new_height \
            or total_steps < carriers_needed * (new_height + 1):
        raise RefinementInfeasible(
            f"period {total_steps} does not tile into blocks of {new_height} "
            f"and {new_height + 1}")

    while pos < len(chunks):
        col, x_lo, arcs, is_long = chunks[pos]
        if is_long:
            run_len = arcs - off
            if run_len == 1 and carriers_needed > 0:
                segs = take(1, True) + take(m - 1, False)
                blocks.append(segs)
                block_heights.append(m * n + 1)
                carriers_needed -= 1
                continue
            if m < n + 1:
                raise RefinementInfeasible(
                    f"multiplier {m} cannot absorb a cluster of {n} junk arcs")
            segs = take(n, True) + take(m - 1 - n, False)
            blocks.append(segs)
            block_heights.append(m * n)
        else:
            avail = shorts_ahead()
            if avail >= m:
                segs = take(m, False)
                blocks.append(segs)
                block_heights.append(m * n)
            else:
                # isolated junk arc: carrier block of m arcs with one long
                segs = take(avail, False)
                if (carriers_needed <= 0 or pos >= len(chunks)
                        or not chunks[pos][3] or chunks[pos][2] - off != 1):
                    raise RefinementInfeasible("short run remainder cannot close a block")
                segs += take(1, True)
                if m - avail - 1 > 0:
                    segs += take(m - avail - 1, False)
                blocks.append(segs)
                block_heights.append(m * n + 1)
                carriers_needed -= 1

    new_junk = sum(delta for h in block_heights if h == m * n + 1)
    if new_junk > gamma * prev.mass:
        raise RefinementInfeasible(
            f"new junk {new_junk} exceeds gamma budget {gamma * prev.mass}")

    columns = []
    for i, segs in enumerate(blocks):
        level = 0
        placed = []
        for s in segs:
            placed.append(Segment(s.src_col, s.src_x_lo, s.arcs, s.arc_height, level))
            level += s.arcs * s.arc_height
        assert level == block_heights[i]
        columns.append(Column(id=i, height=level, cells=((f"b{i}", delta),),
                              segments=tuple(placed)))
    cycle = tuple(CycleRun(col=i, x_lo=Fraction(0), arcs=1) for i in range(len(columns)))
    edges = tuple(Edge(i, Fraction(0), delta, (i + 1) % len(columns), Fraction(0))
                  for i in range(len(columns)))
    child = Castle(columns=tuple(columns), main_height=m * n, delta=delta,
                   cycle=cycle, edges=edges, mass=prev.mass)
    child.validate()
    re_sets = tuple(reexpress(ts, child) for ts in preserve)
    return RefineResult(castle=child, preserved=re_sets, parent=prev)


def reexpress(A: TowerSet, child: Castle) -> TowerSet:
    """Rewrite a parent-castle set exactly in child-castle coordinates."""
    delta = child.delta
    out: dict[int, list[Rect]] = {}
    for col in child.columns:
        rects: list[Rect] = []
        for seg in col.segments:
            seg_lo = seg.src_x_lo
            seg_hi = seg.src_x_lo + seg.arcs * delta
            for r in A.rects.get(seg.src_col, ()):
                lo = max(r.x_lo, seg_lo)
                hi = min(r.x_hi, seg_hi)
                if not lo < hi:
                    continue
                first = (lo - seg_lo) / delta
                last = (hi - seg_lo) / delta
                a0 = -((-first.numerator) // first.denominator)  # ceil
                a1 = last.numerator // last.denominator          # floor
                # partial arc before the full range
                if first < a0:
                    arc = a0 - 1
                    rects.append(_arc_piece(r, seg, arc, delta, lo, min(hi, seg_lo + a0 * delta)))
                if a1 > a0:
                    items = []
                    for it in r.items:
                        items.extend(stack_item(
                            it, seg.base_level + a0 * seg.arc_height,
                            seg.arc_height, a1 - a0))
                    rects.append(Rect(Fraction(0), delta, tuple(items)))
                if a1 >= a0 and last > a1 and hi > seg_lo + a1 * delta:
                    rects.append(_arc_piece(r, seg, a1, delta,
                                            max(lo, seg_lo + a1 * delta), hi))
        if rects:
            out[col.id] = rects
    return TowerSet({c: tuple(rs) for c, rs in out.items()})


def _arc_piece(r: Rect, seg: Segment, arc: int, delta: Fraction,
               lo: Fraction, hi: Fraction) -> Rect:
    arc_lo = seg.src_x_lo + arc * delta
    base = seg.base_level + arc * seg.arc_height
    items = []
    for it in r.items:
        items.extend(stack_item(it, base, seg.arc_height, 1))
    return Rect(lo - arc_lo, hi - arc_lo, tuple(items))
