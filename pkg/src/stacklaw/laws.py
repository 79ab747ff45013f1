"""Exact joint laws of window counts over a castle.

For a window length n and a tuple of sets, computes the exact distribution
of the vector of per-set counts in [v, v+n) when the start is distributed by
the invariant measure. Starts are stratified into (column, base-interval)
pieces on which the whole forward chain through the stacking map is
constant. On a stratum each count is a piecewise-linear function of the
start level v with slopes in {-1, 0, 1}; sweeps track (value, slope) runs
between slope-change events, and accumulate runs into the histogram in
O(1) via per-slope difference arrays rather than walking levels.

Three strategies cover the size range:

  const  an item whose period divides n contributes a constant count on its
         validity range and produces no events at all;
  fold   periodic items are folded into a phase table of one joint period
         (sloped stretches pre-expanded), which arbitrary subranges query in
         O(values + log); sparse items sweep as overlay runs between
         queries;
  enum   everything else becomes slope-delta events and is swept directly.

Region edges (item validity starts, the wrap zone near column tops) always
fall back to enum, so results are exact whatever mix runs. Level arithmetic
stays in integers; masses become rationals at aggregation.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from math import lcm

from .castle import Castle
from .errors import BudgetExceeded
from .levels import APItem, interval_count_touching, intervals_touching

Hist = dict[tuple[int, ...], Fraction]

EVENT_BUDGET = 6_000_000
PHASE_PIECE_CAP = 2_000_000
CHAIN_CAP = 4096


# --- accumulator ---------------------------------------------------------


class _Acc:
    """Histogram accumulator with O(1) handling of unit-slope runs."""

    def __init__(self, nsets: int):
        self.nsets = nsets
        self.flat: Hist = {}
        # (slot, masked key) -> difference array over the sloping component
        self.diffs: dict[tuple, dict[int, Fraction]] = {}

    def add_flat(self, key: tuple, weight: Fraction) -> None:
        self.flat[key] = self.flat.get(key, Fraction(0)) + weight

    def add_run(self, vec, slope, length: int, weight: Fraction) -> None:
        if length <= 0:
            return
        nz = [i for i in range(self.nsets) if slope[i]]
        if not nz:
            self.add_flat(tuple(vec), length * weight)
            return
        if len(nz) == 1 and abs(slope[nz[0]]) == 1:
            i = nz[0]
            masked = tuple(vec[j] for j in range(self.nsets) if j != i)
            d = self.diffs.setdefault((i, masked), {})
            s0 = vec[i] if slope[i] > 0 else vec[i] - length + 1
            s1 = s0 + length
            d[s0] = d.get(s0, Fraction(0)) + weight
            d[s1] = d.get(s1, Fraction(0)) - weight
            return
        for t in range(length):
            self.add_flat(tuple(vec[j] + t * slope[j] for j in range(self.nsets)),
                          weight)

    def resolve(self) -> Hist:
        for (i, masked), d in self.diffs.items():
            positions = sorted(d)
            cum = Fraction(0)
            for a, b in zip(positions, positions[1:]):
                cum += d[a]
                if cum:
                    for s in range(a, b):
                        key = masked[:i] + (s,) + masked[i:]
                        self.flat[key] = self.flat.get(key, Fraction(0)) + cum
            # trailing cum must be zero by construction
        self.diffs.clear()
        return self.flat


# --- strata ----------------------------------------------------------------


@dataclass
class _Layer:
    offset: int
    height: int
    per_set: list[tuple]


@dataclass
class _Stratum:
    col: int
    x_lo: Fraction
    x_hi: Fraction
    height: int
    layers: list[_Layer]

    @property
    def width(self) -> Fraction:
        return self.x_hi - self.x_lo

    def prefix(self, u: int, keep=None) -> list[int]:
        nsets = len(self.layers[0].per_set)
        vec = [0] * nsets
        for layer in self.layers:
            if u <= layer.offset:
                break
            rel = min(u - layer.offset, layer.height)
            for i in range(nsets):
                for item in layer.per_set[i]:
                    if keep is None or keep(item, layer.offset):
                        vec[i] += item.count_below(rel)
        return vec

    def window_vec(self, v: int, n: int, keep=None) -> list[int]:
        hi = self.prefix(v + n, keep)
        lo = self.prefix(v, keep)
        return [a - b for a, b in zip(hi, lo)]

    def slope_vec(self, v: int, n: int, keep=None) -> list[int]:
        a = self.window_vec(v + 1, n, keep)
        b = self.window_vec(v, n, keep)
        return [x - y for x, y in zip(a, b)]


def _strata(castle: Castle, sets, n: int) -> list[_Stratum]:
    cuts: dict[int, set[Fraction]] = {}
    for col in castle.columns:
        s = {Fraction(0), col.width}
        for e in castle._edge_index.get(col.id, []):
            s.add(e.src_lo)
        for A in sets:
            for r in A.rects.get(col.id, ()):
                s.add(r.x_lo)
                s.add(r.x_hi)
        cuts[col.id] = s
    min_h = min(c.height for c in castle.columns)
    depth = n // min_h + 2
    if depth > CHAIN_CAP:
        raise BudgetExceeded("window wrap chain", CHAIN_CAP, depth)
    for _ in range(depth):
        changed = False
        for col in castle.columns:
            for e in castle._edge_index.get(col.id, []):
                for cut in list(cuts[e.dst_col]):
                    rel = cut - e.dst_lo
                    if 0 < rel < e.width:
                        src = e.src_lo + rel
                        if src not in cuts[col.id]:
                            cuts[col.id].add(src)
                            changed = True
        if not changed:
            break

    out = []
    for col in castle.columns:
        marks = sorted(cuts[col.id])
        for lo, hi in zip(marks, marks[1:]):
            if not lo < hi:
                continue
            layers = []
            offset = 0
            cur_col, cur_lo = col.id, lo
            while offset < n + col.height:
                c = castle.columns[cur_col]
                per_set = []
                for A in sets:
                    items = []
                    for r in A.rects.get(cur_col, ()):
                        if r.x_lo <= cur_lo < r.x_hi:
                            items.extend(r.items)
                    per_set.append(tuple(items))
                layers.append(_Layer(offset, c.height, per_set))
                offset += c.height
                nxt = castle.step_from_top(cur_col, cur_lo)
                cur_col, cur_lo = nxt.col, nxt.x
            out.append(_Stratum(col.id, lo, hi, col.height, layers))
    return out


# --- sweeping ----------------------------------------------------------------

# Slope of S_i at v is chi_i(v + n) - chi_i(v); one indicator interval [a, b)
# therefore changes the slope by +1 at a-n, -1 at b-n, -1 at a, +1 at b.


def _slope_events(events: list, st: _Stratum, n: int, v0: int, v1: int,
                  budget: int, skip=None) -> None:
    """Append (v, set, slope delta) with v strictly inside (v0, v1)."""
    for layer in st.layers:
        for i, items in enumerate(layer.per_set):
            for item in items:
                if skip is not None and skip(item, layer.offset):
                    continue
                lo = v0 - layer.offset
                hi = min(v1 + n - layer.offset, layer.height)
                if len(events) + 4 * interval_count_touching(item, lo, hi) > budget:
                    raise BudgetExceeded("law sweep events", budget)
                for a, b in intervals_touching(item, lo, hi):
                    # levels beyond the column top do not exist
                    a = max(a, 0) + layer.offset
                    b = min(b, layer.height) + layer.offset
                    if b <= a:
                        continue
                    for pos, d in ((a - n, 1), (b - n, -1), (a, -1), (b, 1)):
                        if v0 < pos < v1:
                            events.append((pos, i, d))


def _sweep_range(acc: _Acc, st: _Stratum, n: int, v0: int, v1: int,
                 width: Fraction, budget: int) -> None:
    """Enum-sweep start levels v in [v0, v1)."""
    if v1 <= v0:
        return
    events: list = []
    _slope_events(events, st, n, v0, v1, budget)
    events.sort()
    vec = st.window_vec(v0, n)
    slope = st.slope_vec(v0, n)
    cur = v0
    k = 0
    while k < len(events):
        pos = events[k][0]
        acc.add_run(vec, slope, pos - cur, width)
        vec = [vec[i] + slope[i] * (pos - cur) for i in range(len(vec))]
        while k < len(events) and events[k][0] == pos:
            _, i, d = events[k]
            slope[i] += d
            k += 1
        cur = pos
    acc.add_run(vec, slope, v1 - cur, width)


class _PhaseTable:
    """(value, slope) runs over one joint period, emitted per query range.

    Whole periods and whole-run stretches aggregate: flat runs merge by
    value with summed length, sloped runs merge by the exact (value, slope,
    length) triple with a count, since only identical sloped runs cover the
    same values. Queries therefore cost O(distinct shapes + clipped edge
    runs) regardless of range length. Length-1 runs are flattened at
    construction.
    """

    def __init__(self, period: int, runs: list[tuple[int, tuple, tuple]]):
        self.period = period
        zero = None
        norm = []
        for off, vec, slope in runs:
            if any(slope):
                norm.append((off, vec, slope))
            else:
                if zero is None:
                    zero = tuple(0 for _ in vec)
                norm.append((off, vec, zero))
        self.pos = [r[0] for r in norm] + [period]
        self.vecs = [r[1] for r in norm]
        self.slopes = [r[2] for r in norm]
        self.keys = []
        key_index = {}
        per_run = []
        for i in range(len(norm)):
            length = self.pos[i + 1] - self.pos[i]
            if any(self.slopes[i]) and length > 1:
                key = (self.vecs[i], self.slopes[i], length)
                unit = 1                      # counted per occurrence
            else:
                key = (self.vecs[i], None, None)
                unit = length                 # merged by total length
            if key not in key_index:
                key_index[key] = len(self.keys)
                self.keys.append(key)
            per_run.append((key_index[key], unit))
        self.prefix = [tuple([0] * len(self.keys))]
        for idx, unit in per_run:
            row = list(self.prefix[-1])
            row[idx] += unit
            self.prefix.append(tuple(row))

    def _emit_agg(self, row_lo, row_hi, out, repeat: int) -> None:
        zero = None
        for k, (vec, slope, length) in enumerate(self.keys):
            amount = row_hi[k] - row_lo[k]
            if not amount:
                continue
            if slope is None:
                if zero is None:
                    zero = tuple(0 for _ in vec)
                out(vec, zero, amount, repeat, aggregated=True)
            else:
                out(vec, slope, length, amount * repeat, aggregated=True)

    def _emit_clipped(self, i: int, x1: int, x2: int, out) -> None:
        if x2 <= x1:
            return
        off = x1 - self.pos[i]
        vec = self.vecs[i]
        slope = self.slopes[i]
        if off and any(slope):
            vec = tuple(vec[j] + off * slope[j] for j in range(len(vec)))
        out(vec, slope, x2 - x1, 1, aggregated=False)

    def _emit_partial(self, x1: int, x2: int, out) -> None:
        if x2 <= x1:
            return
        i1 = bisect_right(self.pos, x1) - 1
        i2 = bisect_right(self.pos, x2 - 1) - 1
        if i1 == i2:
            self._emit_clipped(i1, x1, x2, out)
            return
        self._emit_clipped(i1, x1, self.pos[i1 + 1], out)
        if i2 > i1 + 1:
            self._emit_agg(self.prefix[i1 + 1], self.prefix[i2], out, 1)
        self._emit_clipped(i2, self.pos[i2], x2, out)

    def _walk_ordered(self, x1: int, x2: int, out) -> None:
        if x2 <= x1:
            return
        i = bisect_right(self.pos, x1) - 1
        while x1 < x2:
            run_end = self.pos[i + 1]
            take = min(x2, run_end) - x1
            off = x1 - self.pos[i]
            vec = self.vecs[i]
            slope = self.slopes[i]
            if off and any(slope):
                vec = tuple(vec[j] + off * slope[j] for j in range(len(vec)))
            out(vec, slope, take, 1, aggregated=False)
            x1 += take
            i += 1

    def emit_ordered(self, r1: int, r2: int, out) -> None:
        """In-order emission for consumers tracking a running offset."""
        while r1 < r2:
            q, m = divmod(r1, self.period)
            step = min(r2 - r1, self.period - m)
            self._walk_ordered(m, m + step, out)
            r1 += step

    def emit(self, r1: int, r2: int, out) -> None:
        if r2 <= r1:
            return
        q1, m1 = divmod(r1, self.period)
        q2, m2 = divmod(r2, self.period)
        if q1 == q2:
            self._emit_partial(m1, m2, out)
            return
        self._emit_partial(m1, self.period, out)
        full = q2 - q1 - 1
        if full > 0:
            self._emit_agg(self.prefix[0], self.prefix[-1], out, full)
        self._emit_partial(0, m2, out)


def _build_phase_table(st: _Stratum, periodic, n: int, period: int,
                       anchor: int, keep_per) -> _PhaseTable:
    height = st.layers[0].height
    events: list = []
    total = 0
    for i, it in periodic:
        lo, hi = anchor - n, min(anchor + period + n, height)
        total += interval_count_touching(it, lo, hi)
        if total > PHASE_PIECE_CAP:
            raise BudgetExceeded("phase table events", PHASE_PIECE_CAP, total)
        for a, b in intervals_touching(it, lo, hi):
            a, b = max(a, 0), min(b, height)
            if b <= a:
                continue
            for pos, d in ((a - n, 1), (b - n, -1), (a, -1), (b, 1)):
                if anchor < pos < anchor + period:
                    events.append((pos, i, d))
    events.sort()
    vec = st.window_vec(anchor, n, keep_per)
    slope = st.slope_vec(anchor, n, keep_per)
    runs: list[tuple[int, tuple, tuple]] = []
    cur = anchor
    k = 0
    while k < len(events):
        pos = events[k][0]
        if pos > cur:
            runs.append((cur - anchor, tuple(vec), tuple(slope)))
            vec = [vec[j] + (pos - cur) * slope[j] for j in range(len(vec))]
            cur = pos
        while k < len(events) and events[k][0] == pos:
            _, i, d = events[k]
            slope[i] += d
            k += 1
    runs.append((cur - anchor, tuple(vec), tuple(slope)))
    return _PhaseTable(period, runs)


SPARSE_ITEM_CAP = 4096


def _sweep_stratum(acc: _Acc, st: _Stratum, n: int, budget: int) -> None:
    width = st.width
    H = st.height
    if H <= 0 or width <= 0:
        return

    candidates = []
    for i, items in enumerate(st.layers[0].per_set):
        for item in items:
            if isinstance(item, APItem) and item.dims:
                candidates.append((i, item))

    top = max(H - n, 0)
    marks = {0, top}
    for _, it in candidates:
        for m in (it.start, it.end - n):
            if 0 < m < top:
                marks.add(m)
    # coarsen: regions shorter than a few windows just enumerate, and items
    # starting inside a region are swept as clipped sparse content there
    kept = []
    for m in sorted(marks):
        if not kept or m - kept[-1] >= 2 * n + 4 or m == top:
            kept.append(m)
    if kept[-1] != top:
        kept.append(top)
    for r0, r1 in zip(kept, kept[1:]):
        _sweep_fold_region(acc, st, n, r0, r1, candidates, budget)
    # wrap zone: windows reaching past the column top
    _sweep_range(acc, st, n, top, H, width, budget)


def _sweep_fold_region(acc: _Acc, st: _Stratum, n: int, r0: int, r1: int,
                       candidates, budget: int) -> None:
    width = st.width
    nsets = len(st.layers[0].per_set)
    if r1 <= r0:
        return
    const, periodic = [], []
    for i, it in candidates:
        if it.start <= r0 and it.end >= r1 + n:
            p = it.dims[-1][0]
            if n % p == 0 and len(it.dims) == 1:
                const.append((i, it))
            else:
                periodic.append((i, it))
    period = 1
    for _, it in periodic:
        period = lcm(period, it.dims[-1][0])

    if (not const and not periodic) or r1 - r0 <= 4 * period + 4:
        _sweep_range(acc, st, n, r0, r1, width, budget)
        return

    per_ids = {id(it) for _, it in periodic}
    const_ids = {id(it) for _, it in const}
    dense_ids = per_ids | const_ids

    def keep_per(item, off):
        return off == 0 and id(item) in per_ids

    def keep_sparse(item, off):
        return not (off == 0 and id(item) in dense_ids)

    def skip_dense(item, off):
        return off == 0 and id(item) in dense_ids

    table = _build_phase_table(st, periodic, n, period, r0, keep_per)
    base = st.window_vec(r0, n,
                         lambda it, off: off == 0 and id(it) in const_ids)

    overlay: list = []
    _slope_events(overlay, st, n, r0, r1, budget, skip=skip_dense)
    overlay.sort()
    svec = st.window_vec(r0, n, keep_sparse)
    sslope = st.slope_vec(r0, n, keep_sparse)

    def emit_segment(u1: int, u2: int, sv, ss):
        """Integrate the dense table against constant-slope sparse content."""
        if u2 <= u1:
            return sv
        if not any(ss):
            def out(dvec, dslope, length, repeat, aggregated):
                vec = tuple(dvec[j] + sv[j] + base[j] for j in range(nsets))
                if any(dslope):
                    # identical repeated runs stack linearly in the diff arrays
                    acc.add_run(list(vec), dslope, length, width * repeat)
                else:
                    acc.add_flat(vec, length * repeat * width)

            table.emit(u1 - r0, u2 - r0, out)
            return sv

        def out(dvec, dslope, length, repeat, aggregated):
            off = out.cursor - u1
            vec = [dvec[j] + sv[j] + off * ss[j] + base[j] for j in range(nsets)]
            slope = tuple(dslope[j] + ss[j] for j in range(nsets))
            acc.add_run(vec, slope, length, width)
            out.cursor += length

        out.cursor = u1
        table.emit_ordered(u1 - r0, u2 - r0, out)
        return [sv[j] + (u2 - u1) * ss[j] for j in range(nsets)]

    cur = r0
    k = 0
    while k < len(overlay):
        pos = overlay[k][0]
        svec = emit_segment(cur, pos, svec, sslope)
        while k < len(overlay) and overlay[k][0] == pos:
            _, i, d = overlay[k]
            sslope[i] += d
            k += 1
        cur = pos
    emit_segment(cur, r1, svec, sslope)


def law_histogram(castle: Castle, sets, n: int, budget: int = EVENT_BUDGET) -> Hist:
    """Joint histogram {count vector: measure} of length-n window counts."""
    if n < 0:
        raise ValueError("window length must be nonnegative")
    sets = list(sets)
    if n == 0:
        return {(0,) * len(sets): castle.mass}
    acc = _Acc(len(sets))
    for st in _strata(castle, sets, n):
        _sweep_stratum(acc, st, n, budget)
    hist = acc.resolve()
    total = sum(hist.values(), Fraction(0))
    assert total == castle.mass, f"law mass {total} != {castle.mass}"
    return {k: v for k, v in hist.items() if v}


def marginal(hist: Hist, index: int) -> dict[int, Fraction]:
    out: dict[int, Fraction] = {}
    for key, mass in hist.items():
        out[key[index]] = out.get(key[index], Fraction(0)) + mass
    return out


def union_counts(hist: Hist) -> dict[int, Fraction]:
    """Distribution of the summed count (the union's law for disjoint sets)."""
    out: dict[int, Fraction] = {}
    for key, mass in hist.items():
        s = sum(key)
        out[s] = out.get(s, Fraction(0)) + mass
    return out


def support_max(hist: Hist, index: int) -> int:
    return max((key[index] for key, m in hist.items() if m), default=0)
