"""Integer-lattice quantization of zero-mean laws, and base labelings.

A target law is pushed onto the lattice {-d+1, ..., d-1} (d = floor(a_n C)+1)
in three exact steps: cell masses from the CDF with tails folded into the
extreme cells, quantile rounding to a common denominator q (a power of two),
and an integer repair that moves unit counts inward or outward until the
lattice mean is exactly zero. The scaled distance to the target is then
rechecked from scratch; the construction is never trusted.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction

from .errors import NonZeroMeanTarget, QuantizationInfeasible, UnboundedTarget
from .measures import (RealMeasure, cdf_eval, cdf_left, kolmogorov_distance,
                       levy_distance, mean, scale)
from .sequence import SequenceSpec

MEAN_TOL = Fraction(1, 10**12)


@dataclass(frozen=True)
class LatticeMeasure:
    """Finite-support lattice law with exact rational masses count/q."""

    d: int                               # half-width: support within [-d+1, d-1]
    q: int                               # common denominator
    counts: tuple[tuple[int, int], ...]  # sorted (point, count), count >= 1

    def __post_init__(self):
        if self.d < 1 or self.q < 1:
            raise ValueError("d and q must be positive")
        seen = set()
        total = weighted = 0
        for i, c in self.counts:
            if c < 1:
                raise ValueError("zero count in support")
            if not -self.d < i < self.d:
                raise ValueError(f"support point {i} outside (-{self.d}, {self.d})")
            if i in seen:
                raise ValueError("duplicate support point")
            seen.add(i)
            total += c
            weighted += i * c
        if total != self.q:
            raise ValueError(f"counts sum to {total}, not q={self.q}")
        if weighted != 0:
            raise ValueError(f"lattice mean {weighted}/{self.q} != 0")

    def to_real(self) -> RealMeasure:
        return RealMeasure.of(atoms=[(i, Fraction(c, self.q)) for i, c in self.counts])

    def support(self) -> list[int]:
        return [i for i, _ in self.counts]

    def mass(self, i: int) -> Fraction:
        for j, c in self.counts:
            if j == i:
                return Fraction(c, self.q)
        return Fraction(0)


@dataclass(frozen=True)
class QuantizerConstants:
    C0: int
    n0: int


def require_zero_mean(target: RealMeasure) -> None:
    if abs(mean(target)) > MEAN_TOL:
        raise NonZeroMeanTarget(f"target mean {mean(target)} != 0")


def tail_mass_outside(target: RealMeasure, C: int) -> Fraction:
    """Mass outside the closed interval [-C+1, C-1]."""
    inside = cdf_eval(target, Fraction(C - 1)) - cdf_left(target, Fraction(-C + 1))
    return 1 - inside


def tail_cutoff(target: RealMeasure, eps, c_cap: int = 2**40) -> int:
    """Smallest C >= 1 whose closed window [-C+1, C-1] misses at most eps/4."""
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    C0 = 1
    while tail_mass_outside(target, C0) > eps / 4:
        C0 += 1
        if C0 > c_cap:
            raise UnboundedTarget(f"no tail cutoff below {c_cap}")
    return C0


def lattice_constants(target: RealMeasure, eps, seq: SequenceSpec,
                      c_cap: int = 2**40, n_cap: int = 2**62) -> QuantizerConstants:
    """Smallest cutoff C0 with tail <= eps/4 and first n0 with 1/a_n <= eps/4."""
    require_zero_mean(target)
    eps = Fraction(eps)
    C0 = tail_cutoff(target, eps, c_cap)
    n0 = seq.first_n_with_value_at_least(4 / eps, n_cap)
    return QuantizerConstants(C0, n0)


class _QuantileOracle:
    """Generalized inverse CDF with cached cumulative structure."""

    def __init__(self, target: RealMeasure):
        events = sorted(
            [(loc, None, mass) for loc, mass in target.atoms]
            + [(lo, (lo, hi, mass), mass) for lo, hi, mass in target.segments]
        )
        self.cums: list[Fraction] = []
        self.events = events
        cum = Fraction(0)
        for _, _, mass in events:
            cum += mass
            self.cums.append(cum)

    def at(self, p: Fraction) -> Fraction:
        i = bisect_left(self.cums, p)
        pos, seg, _ = self.events[min(i, len(self.events) - 1)]
        if seg is None:
            return pos
        lo, hi, mass = seg
        before = self.cums[i] - mass
        return lo + (p - before) * (hi - lo) / mass


def _cell_of(x: Fraction, a: Fraction, half_width: int) -> int:
    """Lattice cell with ((i-1/2)/a, (i+1/2)/a] containing x, clamped."""
    v = a * x + Fraction(1, 2)
    i = v.numerator // v.denominator
    if v == i:          # x on a cell boundary belongs to the lower cell
        i -= 1
    return max(-half_width, min(half_width, i))


def _repair_mean(counts: dict[int, int], half_width: int) -> int:
    """Move unit counts between outermost points until the mean is 0.

    Returns the number of moves; each move displaces mass 1/q by at most the
    full lattice width, so the CDF moves by at most moves/q in sup norm.
    """
    moves = 0
    bal = sum(i * c for i, c in counts.items())
    while bal != 0:
        occupied = [i for i, c in counts.items() if c > 0]
        if bal > 0:
            src = max(occupied)
            dst = max(-half_width, src - bal)
        else:
            src = min(occupied)
            dst = min(half_width, src - bal)
        if dst == src:
            raise QuantizationInfeasible(None, 0)  # cannot happen: bal != 0
        counts[src] -= 1
        counts[dst] = counts.get(dst, 0) + 1
        bal += dst - src
        moves += 1
    return moves


def quantize_at_q(target: RealMeasure, seq: SequenceSpec, C: int, n: int,
                  q: int, oracle: _QuantileOracle | None = None) -> LatticeMeasure:
    """One quantization pass at a fixed denominator q (no distance check)."""
    a = seq.value(n)
    d = (a * C).numerator // (a * C).denominator + 1
    half_width = d - 1
    oracle = oracle or _QuantileOracle(target)
    counts: dict[int, int] = {}
    for k in range(q):
        p = Fraction(2 * k + 1, 2 * q)
        counts_key = _cell_of(oracle.at(p), a, half_width)
        counts[counts_key] = counts.get(counts_key, 0) + 1
    _repair_mean(counts, half_width)
    items = tuple(sorted((i, c) for i, c in counts.items() if c > 0))
    return LatticeMeasure(d=d, q=q, counts=items)


def quantize(target: RealMeasure, eps, seq: SequenceSpec, C: int, n: int,
             q_max: int = 2**16) -> LatticeMeasure:
    """Quantize with the smallest power-of-two denominator meeting eps.

    The returned law satisfies every LatticeMeasure invariant by construction
    and the scaled distance bound by an independent recheck here. The search
    stops early when doubling q stops improving the achieved distance, since
    the remaining error is then grid or tail error that no denominator fixes.
    """
    require_zero_mean(target)
    eps = Fraction(eps)
    a = seq.value(n)
    oracle = _QuantileOracle(target)
    best = None
    stalls = 0
    q = 1
    if target.segments and not target.atoms:
        # an atom of mass 1/q against a CDF of max slope s cannot get closer
        # than 1/(2q(1+s)) in the corridor metric, so smaller q are hopeless
        s = max(mass / (hi - lo) for lo, hi, mass in target.segments)
        floor = 1 / (2 * eps * (1 + s))
        while q < floor and 2 * q <= q_max:
            q *= 2
    while q <= q_max:
        eta = quantize_at_q(target, seq, C, n, q, oracle)
        scaled = scale(eta.to_real(), a)
        # levy <= kolmogorov, so a passing sup-norm check is already a proof;
        # the corridor metric only gets computed in the marginal band
        achieved = kolmogorov_distance(scaled, target)
        if eps < achieved <= 3 * eps:
            achieved = levy_distance(scaled, target)
        if best is None or achieved < best[0]:
            best = (achieved, eta)
            stalls = 0
        else:
            stalls += 1
            if stalls >= 2:
                break
        if achieved <= eps:
            return eta
        q *= 2
    raise QuantizationInfeasible(best[0] if best else None, q_max)


@dataclass(frozen=True)
class LabeledPiece:
    """One quantile slice of the base, assigned a lattice value."""

    index: int                                   # 0..q-1 in quantile order
    value: int                                   # lattice point of eta
    parts: tuple[tuple[str, Fraction, Fraction], ...]  # (cell id, lo, hi) offsets


@dataclass(frozen=True)
class BaseLabeling:
    q: int
    pieces: tuple[LabeledPiece, ...]

    def widths_by_value(self) -> dict[int, Fraction]:
        out: dict[int, Fraction] = {}
        for piece in self.pieces:
            w = sum((hi - lo for _, lo, hi in piece.parts), Fraction(0))
            out[piece.value] = out.get(piece.value, Fraction(0)) + w
        return out


def realize_on_base(eta: LatticeMeasure, base_cells) -> BaseLabeling:
    """Split cells left to right into q equal slices labeled in value order.

    The pushforward of cell width under the labeling equals eta exactly: each
    value v receives count(v) slices of width (total width)/q.
    """
    cells = [(str(cid), Fraction(w)) for cid, w in base_cells]
    total = sum(w for _, w in cells)
    if total <= 0:
        raise ValueError("base has zero width")
    slice_w = total / eta.q
    values = []
    for v, c in eta.counts:
        values.extend([v] * c)
    pieces = []
    cell_idx, offset = 0, Fraction(0)
    for k, v in enumerate(values):
        need = slice_w
        parts = []
        while need > 0:
            cid, w = cells[cell_idx]
            take = min(need, w - offset)
            parts.append((cid, offset, offset + take))
            offset += take
            need -= take
            if offset == w and cell_idx + 1 < len(cells):
                cell_idx += 1
                offset = Fraction(0)
        pieces.append(LabeledPiece(index=k, value=v, parts=tuple(parts)))
    return BaseLabeling(q=eta.q, pieces=tuple(pieces))
