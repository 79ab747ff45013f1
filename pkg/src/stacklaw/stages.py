"""Stage set construction and correction.

A stage set is built over a castle whose main height is a multiple p of the
stage window n: the base splits into q equal quantile slices labeled by the
lattice law, labels rotate by one slice per subtower, and over a slice
labeled i the set takes i levels at the bottom of the subtower. For the
first stage these are literally the first i levels; later stages take the
first i levels not already used by earlier stages, which keeps all stages
pairwise disjoint and stays inside the first 4d levels of each subtower
because earlier stages are density-capped.

Because the lattice law has mean exactly zero, the sum of labels over one
label cycle is exactly d*q, so every aligned window of length n*q carries
d*q set points, and full-height windows carry p*d. Junk seams inherited
from refinement shift some block sums by one; correct_stage restores every
aligned block sum exactly by adding points at the leftmost eligible free
levels (subject to the 2d density cap) or removing the first excess points,
per window.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right, insort
from dataclasses import dataclass, field
from fractions import Fraction

from .builder import ConstructionSchedule
from .castle import Castle
from .errors import DisjointnessInfeasible, OverlapDetected, RepairInfeasible
from .lattice import BaseLabeling, realize_on_base
from .levels import (APItem, ListItem, MultiListItem, free_intervals,
                     intervals_touching)
from .towerset import Rect, TowerSet


@dataclass
class StageSet:
    stage: int
    pass_index: int
    tower: TowerSet
    labeling: BaseLabeling
    measure: Fraction
    correction_added: int = 0
    correction_removed: int = 0
    sym_diff_measure: Fraction = Fraction(0)
    max_extent: int = 0          # largest selected offset within a subtower


def _piece_parts(castle: Castle, labeling: BaseLabeling):
    """Resolve labeling cell parts into (col, x_lo, x_hi) column offsets."""
    offsets = {}
    for col in castle.columns:
        run = Fraction(0)
        for cid, w in col.cells:
            offsets[f"{col.id}:{cid}"] = (col.id, run)
            run += w
    out = []
    for piece in labeling.pieces:
        parts = []
        for key, lo, hi in piece.parts:
            col, base = offsets[key]
            parts.append((col, base + lo, base + hi))
        out.append((piece.index, piece.value, parts))
    return out


def _items_at(A: TowerSet, col: int, x: Fraction) -> list:
    items = []
    for r in A.rects.get(col, ()):
        if r.x_lo <= x < r.x_hi:
            items.extend(r.items)
    return items


def _shift_invariant(items, n: int, height: int) -> bool:
    """All aligned length-n windows see the same pattern from these items."""
    for it in items:
        if not isinstance(it, APItem):
            return False
        if len(it.dims) != 1:
            return False
        period = it.dims[0][0]
        if n % period:
            return False
        if it.start >= period + n or it.end < height - period - n:
            return False
    return True


def _take_prefix(free: list[tuple[int, int]], count: int):
    """First `count` levels from sorted free intervals, as intervals."""
    out = []
    for a, b in free:
        if count <= 0:
            break
        take = min(count, b - a)
        out.append((a, a + take))
        count -= take
    if count > 0:
        return None
    return out


def _straddle_ok(prev_pts: list[int], cur_pts: list[int], n: int, cap: int) -> bool:
    """Every window of length n across the two selections holds <= cap points."""
    pts = sorted(prev_pts + cur_pts)
    j = 0
    for i in range(len(pts)):
        while pts[i] - pts[j] >= n:
            j += 1
        if i - j + 1 > cap:
            return False
    return True


def _interval_prefix(intervals: list[tuple[int, int]], v: int) -> int:
    got = 0
    for a, b in intervals:
        if v <= a:
            break
        got += min(v, b) - a
    return got


def _straddle_ok_intervals(prev: list[tuple[int, int]], cur: list[tuple[int, int]],
                           n: int, cap: int) -> bool:
    """Interval form of the window cap; candidates are interval endpoints."""
    if not prev or not cur:
        return True
    total_prev = sum(b - a for a, b in prev)
    cands = set()
    for a, b in prev:
        cands.update((a, b))
    for a, b in cur:
        cands.update((a - n, b - n))
    for v in cands:
        count = (total_prev - _interval_prefix(prev, v)) + _interval_prefix(cur, v + n)
        if count > cap:
            return False
    return True


def build_stage_initial(schedule: ConstructionSchedule, k: int, castle: Castle,
                        earlier: list[TowerSet]) -> StageSet:
    row = schedule.row(k)
    n, d, q, eta = row.n, row.d, row.q, row.eta
    H = castle.main_height
    p, rem = divmod(H, n)
    if rem or p % q:
        raise ValueError(f"castle height {H} incompatible with stage {k}")
    cells = []
    for col in castle.columns:
        for cid, w in col.cells:
            cells.append((f"{col.id}:{cid}", w))
    labeling = realize_on_base(eta, cells)
    pieces = _piece_parts(castle, labeling)
    label = {s: v + d for s, v, _ in pieces}
    union_earlier = earlier[0].union(*earlier[1:]) if earlier else None
    scan_hi = min(4 * d, n)

    rects: dict[int, list[Rect]] = {}
    max_extent = 0
    for s, _, parts in pieces:
        for col, x_lo, x_hi in parts:
            height = castle.columns[col].height
            items: list = []
            if union_earlier is None:
                for r_idx in range(q):
                    l0 = (s - r_idx) % q
                    width = label[r_idx]
                    items.append(APItem(l0 * n, width, ((q * n, p // q),)))
                    max_extent = max(max_extent, width)
            else:
                x_rep = x_lo
                others = _items_at(union_earlier, col, x_rep)
                if _shift_invariant(others, n, height):
                    free = _relative_free(others, n, scan_hi)
                    for r_idx in range(q):
                        l0 = (s - r_idx) % q
                        chosen = _take_prefix(free, label[r_idx])
                        if chosen is None:
                            raise DisjointnessInfeasible(
                                f"stage {k}: fewer than {label[r_idx]} free "
                                f"levels in a window")
                        for a, b in chosen:
                            items.append(APItem(l0 * n + a, b - a, ((q * n, p // q),)))
                            max_extent = max(max_extent, b)
                else:
                    chosen_items = _per_window_selection(
                        others, s, label, q, n, d, p, scan_hi)
                    items.extend(chosen_items)
                    for it in chosen_items:
                        for pat in it.patterns:
                            max_extent = max(max_extent, pat[-1][0] + pat[-1][1])
            if items:
                rects.setdefault(col, []).append(Rect(x_lo, x_hi, tuple(items)))

    tower = TowerSet({c: tuple(rs) for c, rs in rects.items()})
    return StageSet(stage=k, pass_index=k, tower=tower, labeling=labeling,
                    measure=tower.measure(), max_extent=max_extent)


def _relative_free(others, n: int, scan_hi: int) -> list[tuple[int, int]]:
    """Free intervals of [0, scan_hi) against n-shift-invariant items.

    The pattern repeats along every aligned window, so window 0 stands for
    all of them.
    """
    return free_intervals(others, 0, scan_hi)


def _per_window_selection(others, s: int, label: dict, q: int, n: int, d: int,
                          p: int, scan_hi: int) -> list:
    """Disjoint first-free selection window by window, density capped."""
    starts: list[int] = []
    patterns: list[tuple] = []
    prev_iv: list[tuple[int, int]] = []
    for l in range(p):
        want = label[(s - l) % q]
        base = l * n
        free = free_intervals(others, base, base + scan_hi)
        chosen = _take_prefix(free, want)
        if chosen is None:
            free = free_intervals(others, base, base + n)
            chosen = _take_prefix(free, want)
            if chosen is None:
                raise DisjointnessInfeasible(
                    f"window {l}: fewer than {want} free levels")
        if not _straddle_ok_intervals(prev_iv, chosen, n, 2 * d):
            prev_pts = [v for a, b in prev_iv for v in range(a, b)]
            pts = _capped_selection(others, prev_pts, base, n, want, d)
            chosen = [(v, v + 1) for v in pts]
        starts.append(base)
        patterns.append(tuple((a - base, b - a) for a, b in chosen))
        prev_iv = chosen
    return [MultiListItem(tuple(starts), tuple(patterns))]


def _capped_selection(others, prev_pts, base: int, n: int, want: int,
                      d: int) -> list[int]:
    pts: list[int] = []
    free = free_intervals(others, base, base + n)
    for a, b in free:
        for v in range(a, b):
            if len(pts) == want:
                break
            if _straddle_ok(prev_pts, pts + [v], n, 2 * d):
                pts.append(v)
        if len(pts) == want:
            break
    if len(pts) < want:
        raise DisjointnessInfeasible(
            f"density cap leaves fewer than {want} eligible levels")
    return pts


def _points_to_pattern(pts: list[int], base: int) -> tuple[tuple[int, int], ...]:
    pattern = []
    run_start = None
    prev = None
    for v in pts:
        if run_start is None:
            run_start = v
        elif v != prev + 1:
            pattern.append((run_start - base, prev - run_start + 1))
            run_start = v
        prev = v
    if run_start is not None:
        pattern.append((run_start - base, prev - run_start + 1))
    return tuple(pattern)


# --- corrections -------------------------------------------------------------


def _remove_level_ap(item: APItem, v: int) -> list:
    """Split an APItem so that level v disappears."""
    if not item.contains(v):
        return [item]
    out = []
    width, dims = item.width, list(item.dims)
    rel = v - item.start
    base = item.start
    while dims:
        period, count = dims[-1]
        inner = tuple(dims[:-1])
        t = min(rel // period, count - 1)
        if t > 0:
            out.append(APItem(base, width, inner + ((period, t),)))
        if t + 1 < count:
            out.append(APItem(base + (t + 1) * period, width,
                              inner + ((period, count - t - 1),)))
        base += t * period
        rel -= t * period
        dims = list(inner)
    # base case: plain interval [base, base+width) loses level base+rel
    if rel > 0:
        out.append(APItem(base, rel))
    if rel + 1 < width:
        out.append(APItem(base + rel + 1, width - rel - 1))
    return [_normalize_ap(i) for i in out]


def _normalize_ap(item: APItem) -> APItem:
    dims = tuple((p, c) for p, c in item.dims if c > 1)
    return APItem(item.start, item.width, dims)


def _remove_level_list(item: ListItem, v: int) -> list:
    if not item.contains(v):
        return [item]
    i = bisect_right(item.starts, v) - 1
    s = item.starts[i]
    new_pattern = []
    for off, width in item.pattern:
        a, b = s + off, s + off + width
        if a <= v < b:
            if v > a:
                new_pattern.append((off, v - a))
            if v + 1 < b:
                new_pattern.append((v + 1 - s, b - v - 1))
        else:
            new_pattern.append((off, width))
    out = []
    rest = item.starts[:i] + item.starts[i + 1:]
    if rest:
        out.append(ListItem(rest, item.pattern))
    if new_pattern:
        out.append(ListItem((s,), tuple(new_pattern)))
    return out


def _remove_level_multi(item: MultiListItem, v: int) -> list:
    if not item.contains(v):
        return [item]
    i = bisect_right(item.starts, v) - 1
    s = item.starts[i]
    new_pattern = []
    for off, width in item.patterns[i]:
        a, b = s + off, s + off + width
        if a <= v < b:
            if v > a:
                new_pattern.append((off, v - a))
            if v + 1 < b:
                new_pattern.append((v + 1 - s, b - v - 1))
        else:
            new_pattern.append((off, width))
    starts = list(item.starts)
    patterns = list(item.patterns)
    if new_pattern:
        patterns[i] = tuple(new_pattern)
    else:
        del starts[i]
        del patterns[i]
    if not starts:
        return []
    return [MultiListItem(tuple(starts), tuple(patterns))]


def remove_levels(items: list, levels: list[int]) -> list:
    out = list(items)
    for v in levels:
        nxt = []
        hit = False
        for it in out:
            if not hit and it.contains(v):
                hit = True
                if isinstance(it, APItem):
                    nxt.extend(_remove_level_ap(it, v))
                elif isinstance(it, MultiListItem):
                    nxt.extend(_remove_level_multi(it, v))
                else:
                    nxt.extend(_remove_level_list(it, v))
            else:
                nxt.append(it)
        if not hit:
            raise RepairInfeasible(f"level {v} not present for removal")
        out = nxt
    return out


@dataclass
class CorrectionStats:
    added: int = 0
    removed: int = 0
    added_measure: Fraction = Fraction(0)
    removed_measure: Fraction = Fraction(0)

    @property
    def sym_diff(self) -> Fraction:
        return self.added_measure + self.removed_measure


def correct_stage(stage: StageSet, schedule: ConstructionSchedule, j: int,
                  castle: Castle) -> tuple[StageSet, CorrectionStats]:
    """Restore every aligned block sum of length n_j exactly.

    The input set must already be expressed over `castle` (main height
    n_{j+1}); block deficits get points at the leftmost eligible free levels
    subject to the stage's 2d density cap, excesses lose their first points.
    """
    k = stage.stage
    n_stage, d_stage = schedule.n(k), schedule.row(k).d
    n_j = schedule.n(j)
    H = castle.main_height
    p_out, rem = divmod(H, n_j)
    assert rem == 0
    target = (n_j // n_stage) * d_stage
    stats = CorrectionStats()

    new_rects: dict[int, list[Rect]] = {}
    for col in castle.columns:
        rects = stage.tower.rects.get(col.id, ())
        if not rects:
            continue
        # rects may split the level axis at one x; windows need all of them
        marks = sorted({r.x_lo for r in rects} | {r.x_hi for r in rects})
        for x_lo, x_hi in zip(marks, marks[1:]):
            items = [it for r in rects if r.x_lo <= x_lo < r.x_hi
                     for it in r.items]
            if not items:
                continue
            r = Rect(x_lo, x_hi, tuple(items))
            if _shift_invariant(items, n_j, col.height):
                got = sum(it.count_below(n_j) for it in items)
                if got != target:
                    raise RepairInfeasible(
                        f"uniform column block sum {got} != {target}")
                new_rects.setdefault(col.id, []).append(r)
                continue
            added: list[int] = []
            removed: list[int] = []

            def count(lo: int, hi: int) -> int:
                base = sum(it.count_below(hi) - it.count_below(lo) for it in items)
                base += bisect_left(added, hi) - bisect_left(added, lo)
                base -= bisect_left(removed, hi) - bisect_left(removed, lo)
                return base

            for w in range(p_out):
                lo = w * n_j
                dev = count(lo, lo + n_j) - target
                if dev < 0:
                    _add_points(items, added, removed, lo, n_j, -dev,
                                n_stage, 2 * d_stage, count)
                elif dev > 0:
                    _drop_points(items, added, removed, lo, n_j, dev)
            for w in range(p_out):
                lo = w * n_j
                assert count(lo, lo + n_j) == target, "repair did not converge"
            if removed:
                items = remove_levels(items, removed)
            if added:
                items.append(ListItem(tuple(added), ((0, 1),)))
            stats.added += len(added)
            stats.removed += len(removed)
            stats.added_measure += r.width * len(added)
            stats.removed_measure += r.width * len(removed)
            new_rects.setdefault(col.id, []).append(Rect(r.x_lo, r.x_hi, tuple(items)))

    tower = TowerSet({c: tuple(rs) for c, rs in new_rects.items()})
    out = StageSet(stage=k, pass_index=j, tower=tower, labeling=stage.labeling,
                   measure=tower.measure(),
                   correction_added=stage.correction_added + stats.added,
                   correction_removed=stage.correction_removed + stats.removed,
                   sym_diff_measure=stage.sym_diff_measure + stats.sym_diff,
                   max_extent=stage.max_extent)
    return out, stats


def _add_points(items, added: list[int], removed: list[int], lo: int, n_j: int,
                need: int, n_stage: int, cap: int, count) -> None:
    """Leftmost free levels in [lo, lo+n_j) passing the density cap."""
    for a, b in free_intervals(items, lo, lo + n_j):
        v = a
        while v < b and need > 0:
            if v not in added:
                pts = _points_near(items, added, removed,
                                   max(0, v - n_stage + 1), v + n_stage)
                if _max_window(pts + [v], n_stage) <= cap:
                    insort(added, v)
                    need -= 1
            v += 1
        if need == 0:
            return
    if need:
        raise RepairInfeasible("density cap leaves no eligible level in the block")


def _drop_points(items, added: list[int], removed: list[int], lo: int,
                 n_j: int, excess: int) -> None:
    for a, b in sorted(iv for it in items for iv in intervals_touching(it, lo, lo + n_j)):
        for v in range(max(a, lo), min(b, lo + n_j)):
            if excess == 0:
                return
            if v in removed:
                continue
            if v in added:
                added.remove(v)
            else:
                insort(removed, v)
            excess -= 1
    if excess:
        raise RepairInfeasible("fewer points than the excess to remove")


def _points_near(items, added, removed, lo: int, hi: int) -> list[int]:
    pts = [v for a, b in (iv for it in items for iv in intervals_touching(it, lo, hi))
           for v in range(max(a, lo), min(b, hi))]
    pts += [v for v in added if lo <= v < hi]
    pts = [v for v in pts if v not in removed]
    return sorted(set(pts))


def _max_window(pts: list[int], n: int) -> int:
    pts = sorted(pts)
    best = 0
    j = 0
    for i in range(len(pts)):
        while pts[i] - pts[j] >= n:
            j += 1
        best = max(best, i - j + 1)
    return best


def assemble(stages: list[StageSet], schedule: ConstructionSchedule,
             castle: Castle) -> tuple[TowerSet, list[Fraction]]:
    """Union the final-pass stage sets; verify pairwise disjointness exactly."""
    from .laws import law_histogram

    sets = [s.tower for s in stages]
    if len(sets) > 1:
        hist = law_histogram(castle, sets, 1)
        for key, mass in hist.items():
            if mass and sum(1 for c in key if c) > 1:
                raise OverlapDetected(f"stages overlap on mass {mass} at {key}")
    union = sets[0].union(*sets[1:]) if sets else TowerSet.empty()
    total = union.measure()
    assert total == sum((s.measure for s in stages), Fraction(0))
    residual = schedule.alpha(schedule.K + 1)
    return union, [residual] * len(stages)
