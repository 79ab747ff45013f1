"""Probability measures on the real line as finite atom/segment mixtures.

A measure is a finite list of point atoms plus uniform-density segments with
half-open (lo, hi] mass semantics, all masses exact rationals. This class is
closed under conditioning and positive rescaling, has piecewise-linear CDFs,
and is dense in the weak topology, which is all the construction needs.

The corridor metric (two-sided epsilon band around distribution functions) is
computed exactly for purely atomic rational pairs via a finite candidate set,
and by monotone bisection at absolute tolerance 1e-12 otherwise. Feasibility
of a given epsilon only needs checking at CDF breakpoints of both measures
and their shifted copies, because the violation functions are piecewise
linear between those points.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

from .errors import NonPositiveScale, ZeroMassWindow

Rat = Fraction
Real = Union[Fraction, int, float]

LEVY_TOL = Fraction(1, 10**12)
_EXACT_PAIR_CAP = 200_000


def _rat(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**15) if x != int(x) else Fraction(int(x))
    raise TypeError(f"cannot interpret {x!r} as a rational")


@dataclass(frozen=True)
class RealMeasure:
    """Canonical atom/segment mixture with total mass exactly 1."""

    atoms: tuple[tuple[Fraction, Fraction], ...]        # (location, mass)
    segments: tuple[tuple[Fraction, Fraction, Fraction], ...]  # (lo, hi, mass), mass on (lo, hi]

    @staticmethod
    def of(atoms: Iterable = (), segments: Iterable = ()) -> "RealMeasure":
        merged: dict[Fraction, Fraction] = {}
        for loc, mass in atoms:
            loc, mass = _rat(loc), _rat(mass)
            if mass < 0:
                raise ValueError("negative atom mass")
            if mass:
                merged[loc] = merged.get(loc, Fraction(0)) + mass
        seg_merged: dict[tuple[Fraction, Fraction], Fraction] = {}
        for lo, hi, mass in segments:
            lo, hi, mass = _rat(lo), _rat(hi), _rat(mass)
            if mass < 0:
                raise ValueError("negative segment mass")
            if not mass:
                continue
            if not lo < hi:
                raise ValueError("segment needs lo < hi")
            seg_merged[(lo, hi)] = seg_merged.get((lo, hi), Fraction(0)) + mass
        segs = tuple(sorted((lo, hi, m) for (lo, hi), m in seg_merged.items()))
        for (lo1, hi1, _), (lo2, _, _) in zip(segs, segs[1:]):
            if lo2 < hi1:
                raise ValueError("overlapping segments")
        ats = tuple(sorted(merged.items()))
        total = sum(m for _, m in ats) + sum(m for _, _, m in segs)
        if total != 1:
            raise ValueError(f"total mass {total} != 1")
        return RealMeasure(ats, segs)

    @staticmethod
    def point(loc) -> "RealMeasure":
        return RealMeasure.of(atoms=[(loc, 1)])

    @staticmethod
    def uniform(lo, hi) -> "RealMeasure":
        return RealMeasure.of(segments=[(lo, hi, 1)])

    @property
    def is_atomic(self) -> bool:
        return not self.segments

    def breakpoints(self) -> list[Fraction]:
        pts = {loc for loc, _ in self.atoms}
        for lo, hi, _ in self.segments:
            pts.add(lo)
            pts.add(hi)
        return sorted(pts)

    def support_radius(self) -> Fraction:
        rad = Fraction(0)
        for loc, _ in self.atoms:
            rad = max(rad, abs(loc))
        for lo, hi, _ in self.segments:
            rad = max(rad, abs(lo), abs(hi))
        return rad

    def _sort_key(self):
        return (self.atoms, self.segments)


def cdf_eval(m: RealMeasure, t: Real) -> Real:
    """Mass of (-inf, t]; right-continuous and nondecreasing in t."""
    total = 0
    for loc, mass in m.atoms:
        if loc <= t:
            total += mass
        else:
            break
    for lo, hi, mass in m.segments:
        if t <= lo:
            continue
        if t >= hi:
            total += mass
        else:
            total += mass * (t - lo) / (hi - lo)
    return total


def cdf_left(m: RealMeasure, t: Real) -> Real:
    """Mass of (-inf, t), the left limit of the CDF at t."""
    total = 0
    for loc, mass in m.atoms:
        if loc < t:
            total += mass
        else:
            break
    for lo, hi, mass in m.segments:
        if t <= lo:
            continue
        if t >= hi:
            total += mass
        else:
            total += mass * (t - lo) / (hi - lo)
    return total


def mean(m: RealMeasure) -> Fraction:
    tot = Fraction(0)
    for loc, mass in m.atoms:
        tot += loc * mass
    for lo, hi, mass in m.segments:
        tot += mass * (lo + hi) / 2
    return tot


def scale(m: RealMeasure, x) -> RealMeasure:
    """Law of X/x for X ~ m, i.e. B maps to the m-mass of x*B."""
    x = _rat(x)
    if x <= 0:
        raise NonPositiveScale(f"scale factor {x} <= 0")
    return RealMeasure.of(
        atoms=[(loc / x, mass) for loc, mass in m.atoms],
        segments=[(lo / x, hi / x, mass) for lo, hi, mass in m.segments],
    )


@dataclass(frozen=True)
class Window:
    """Finite union of disjoint intervals with explicit endpoint closure.

    Isolated points are degenerate closed intervals. Components are kept
    sorted and pairwise disjoint.
    """

    parts: tuple[tuple[Fraction, Fraction, bool, bool], ...]  # (lo, hi, lo_closed, hi_closed)

    @staticmethod
    def of(parts: Iterable) -> "Window":
        norm = []
        for p in parts:
            if len(p) == 2:
                lo, hi = p
                lo_c = hi_c = True
            else:
                lo, hi, lo_c, hi_c = p
            lo, hi = _rat(lo), _rat(hi)
            if lo > hi:
                raise ValueError("window part with lo > hi")
            if lo == hi and not (lo_c and hi_c):
                raise ValueError("degenerate part must be closed")
            norm.append((lo, hi, bool(lo_c), bool(hi_c)))
        norm.sort()
        for (_, h1, _, h1c), (l2, _, l2c, _) in zip(norm, norm[1:]):
            if l2 < h1 or (l2 == h1 and (h1c and l2c)):
                raise ValueError("overlapping window parts")
        return Window(tuple(norm))

    @staticmethod
    def point(x) -> "Window":
        return Window.of([(x, x)])

    @staticmethod
    def interval(lo, hi, lo_closed=False, hi_closed=True) -> "Window":
        return Window.of([(lo, hi, lo_closed, hi_closed)])

    def contains(self, x) -> bool:
        for lo, hi, lo_c, hi_c in self.parts:
            if (lo < x or (lo_c and lo == x)) and (x < hi or (hi_c and x == hi)):
                return True
        return False


def window_mass(m: RealMeasure, B: Window) -> Fraction:
    total = Fraction(0)
    for loc, mass in m.atoms:
        if B.contains(loc):
            total += mass
    for lo, hi, mass in m.segments:
        for a, b, _, _ in B.parts:
            ov_lo, ov_hi = max(lo, a), min(hi, b)
            if ov_lo < ov_hi:
                total += mass * (ov_hi - ov_lo) / (hi - lo)
    return total


def condition(m: RealMeasure, B: Window) -> RealMeasure:
    """Restrict m to B and renormalize."""
    mB = window_mass(m, B)
    if mB == 0:
        raise ZeroMassWindow("window has zero mass")
    atoms = [(loc, mass / mB) for loc, mass in m.atoms if B.contains(loc)]
    segs = []
    for lo, hi, mass in m.segments:
        for a, b, _, _ in B.parts:
            ov_lo, ov_hi = max(lo, a), min(hi, b)
            if ov_lo < ov_hi:
                segs.append((ov_lo, ov_hi, mass * (ov_hi - ov_lo) / (hi - lo) / mB))
    return RealMeasure.of(atoms=atoms, segments=segs)


# --- corridor (Levy) metric ---------------------------------------------


class _ExactCdf:
    """O(log) exact CDF evaluation via precomputed breakpoint sums."""

    __slots__ = ("pos", "right", "slope", "atom_at")

    def __init__(self, m: RealMeasure):
        marks = m.breakpoints()
        self.pos = marks
        self.atom_at = {loc: mass for loc, mass in m.atoms}
        slope_delta: dict[Fraction, Fraction] = {}
        for lo, hi, mass in m.segments:
            density = mass / (hi - lo)
            slope_delta[lo] = slope_delta.get(lo, Fraction(0)) + density
            slope_delta[hi] = slope_delta.get(hi, Fraction(0)) - density
        self.right = []
        self.slope = []
        value = Fraction(0)
        slope = Fraction(0)
        prev = None
        for t in marks:
            if prev is not None:
                value += slope * (t - prev)
            value += self.atom_at.get(t, Fraction(0))
            slope += slope_delta.get(t, Fraction(0))
            self.right.append(value)
            self.slope.append(slope)
            prev = t

    def at(self, t):
        j = bisect.bisect_right(self.pos, t) - 1
        if j < 0:
            return Fraction(0)
        return self.right[j] + self.slope[j] * (t - self.pos[j])

    def left(self, t):
        return self.at(t) - self.atom_at.get(t, Fraction(0))


class _Cdf:
    """Float evaluator for one measure's CDF, with left limits."""

    __slots__ = ("alocs", "acums", "segs")

    def __init__(self, m: RealMeasure):
        self.alocs = [float(loc) for loc, _ in m.atoms]
        cum, cums = 0.0, []
        for _, mass in m.atoms:
            cum += float(mass)
            cums.append(cum)
        self.acums = cums
        self.segs = [(float(lo), float(hi), float(mass)) for lo, hi, mass in m.segments]

    def at(self, t: float) -> float:
        i = bisect.bisect_right(self.alocs, t)
        total = self.acums[i - 1] if i else 0.0
        for lo, hi, mass in self.segs:
            if t <= lo:
                continue
            total += mass if t >= hi else mass * (t - lo) / (hi - lo)
        return total

    def left(self, t: float) -> float:
        i = bisect.bisect_left(self.alocs, t)
        total = self.acums[i - 1] if i else 0.0
        for lo, hi, mass in self.segs:
            if t <= lo:
                continue
            total += mass if t >= hi else mass * (t - lo) / (hi - lo)
        return total


def _corridor_ok_float(F: _Cdf, G: _Cdf, fbp: list[float], gbp: list[float], eps: float) -> bool:
    # F(t) <= G(t + eps) + eps for all t; binding at t in fbp or gbp - eps.
    for t in fbp:
        if F.at(t) > G.at(t + eps) + eps or F.left(t) > G.left(t + eps) + eps:
            return False
    for b in gbp:
        t = b - eps
        if F.at(t) > G.at(t + eps) + eps or F.left(t) > G.left(t + eps) + eps:
            return False
    # G(t - eps) - eps <= F(t) for all t; binding at t in fbp or gbp + eps.
    for t in fbp:
        if G.at(t - eps) - eps > F.at(t) or G.left(t - eps) - eps > F.left(t):
            return False
    for b in gbp:
        t = b + eps
        if G.at(t - eps) - eps > F.at(t) or G.left(t - eps) - eps > F.left(t):
            return False
    return True


def _corridor_ok_exact(F: _ExactCdf, G: _ExactCdf, eps: Fraction) -> bool:
    for t in F.pos + [b - eps for b in G.pos]:
        if F.at(t) > G.at(t + eps) + eps or F.left(t) > G.left(t + eps) + eps:
            return False
    for t in F.pos + [b + eps for b in G.pos]:
        if G.at(t - eps) - eps > F.at(t) or G.left(t - eps) - eps > F.left(t):
            return False
    return True


def _levy_exact_atomic(m1: RealMeasure, m2: RealMeasure) -> Fraction:
    F, G = _ExactCdf(m1), _ExactCdf(m2)
    vals1 = sorted({Fraction(0)} | set(F.right))
    vals2 = sorted({Fraction(0)} | set(G.right))
    cands = {Fraction(0)}
    for a, _ in m1.atoms:
        for b, _ in m2.atoms:
            cands.add(abs(a - b))
    for u in vals1:
        for v in vals2:
            cands.add(abs(u - v))
    ordered = sorted(c for c in cands if 0 <= c <= 1) + [Fraction(1)]
    lo, hi = 0, len(ordered) - 1
    # ordered[hi] = 1 is always feasible; find the leftmost feasible candidate
    while lo < hi:
        mid = (lo + hi) // 2
        if _corridor_ok_exact(F, G, ordered[mid]):
            hi = mid
        else:
            lo = mid + 1
    return ordered[lo]


def levy_distance(m1: RealMeasure, m2: RealMeasure) -> Real:
    """Infimum eps with G(t-eps)-eps <= F(t) <= G(t+eps)+eps everywhere.

    Exact rational for purely atomic pairs of moderate size, otherwise a
    float within LEVY_TOL of the true value. Arguments are ordered by a
    canonical key first so the computation is literally symmetric.
    """
    if m2._sort_key() < m1._sort_key():
        m1, m2 = m2, m1
    if m1 == m2:
        return Fraction(0)
    if m1.is_atomic and m2.is_atomic and len(m1.atoms) * len(m2.atoms) <= _EXACT_PAIR_CAP:
        return _levy_exact_atomic(m1, m2)
    F, G = _Cdf(m1), _Cdf(m2)
    fbp = [float(b) for b in m1.breakpoints()]
    gbp = [float(b) for b in m2.breakpoints()]
    if _corridor_ok_float(F, G, fbp, gbp, 0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > float(LEVY_TOL) / 4:
        mid = (lo + hi) / 2
        if _corridor_ok_float(F, G, fbp, gbp, mid):
            hi = mid
        else:
            lo = mid
    return hi


def kolmogorov_distance(m1: RealMeasure, m2: RealMeasure) -> Real:
    """sup_t |F(t) - G(t)|, exact for small inputs, float for large ones."""
    if m2._sort_key() < m1._sort_key():
        m1, m2 = m2, m1
    bps = sorted(set(m1.breakpoints()) | set(m2.breakpoints()))
    if len(bps) > 30_000:
        F, G = _Cdf(m1), _Cdf(m2)
        best = 0.0
        for b in bps:
            t = float(b)
            best = max(best, abs(F.at(t) - G.at(t)), abs(F.left(t) - G.left(t)))
        return best
    F, G = _ExactCdf(m1), _ExactCdf(m2)
    best = Fraction(0)
    for t in bps:
        best = max(best, abs(F.at(t) - G.at(t)), abs(F.left(t) - G.left(t)))
    return best
