"""Normalizing sequences a_n as exact rationals.

Power-law presets evaluate n^theta through an integer root at a fixed dyadic
precision, chosen from the largest n the run will query so that consecutive
values are strictly increasing on that range. Tables give exact values at
listed indices only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction


def _iroot(x: int, k: int) -> int:
    """Floor k-th root of a nonnegative integer."""
    if x < 0:
        raise ValueError("negative radicand")
    if x in (0, 1) or k == 1:
        return x
    if k == 2:
        return math.isqrt(x)
    guess = 1 << (-(-x.bit_length() // k))
    while True:
        nxt = ((k - 1) * guess + x // guess ** (k - 1)) // k
        if nxt >= guess:
            break
        guess = nxt
    while guess ** k > x:
        guess -= 1
    return guess


@dataclass
class SequenceSpec:
    """a_n > 0, strictly increasing, with a_n/n expected to decrease."""

    kind: str                      # "power" or "table"
    theta_num: int = 1
    theta_den: int = 2
    precision_bits: int = 64
    table: dict[int, Fraction] = field(default_factory=dict)

    @staticmethod
    def power(num: int = 1, den: int = 2, n_max_hint: int = 2**40) -> "SequenceSpec":
        if not (0 < Fraction(num, den) < 1):
            raise ValueError("power exponent must lie in (0,1)")
        # precision so the integer root is strictly increasing up to the hint
        bits = max(16, int((1 - num / den) * n_max_hint.bit_length()) + 8)
        return SequenceSpec("power", num, den, bits)

    @staticmethod
    def sqrt(n_max_hint: int = 2**40) -> "SequenceSpec":
        return SequenceSpec.power(1, 2, n_max_hint)

    @staticmethod
    def from_table(entries: dict[int, object]) -> "SequenceSpec":
        tab = {int(n): Fraction(v) for n, v in entries.items()}
        prev = None
        for n in sorted(tab):
            if tab[n] <= 0:
                raise ValueError(f"a_{n} <= 0")
            if prev is not None and tab[n] <= prev:
                raise ValueError(f"table not strictly increasing at n={n}")
            prev = tab[n]
        ratios = [(n, tab[n] / n) for n in sorted(tab)]
        if any(b[1] > a[1] for a, b in zip(ratios, ratios[1:])):
            warnings.warn("a_n/n is not nonincreasing on the table", stacklevel=2)
        return SequenceSpec("table", table=tab)

    def value(self, n: int) -> Fraction:
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "table":
            if n not in self.table:
                raise KeyError(f"a_{n} not in table")
            return self.table[n]
        scale = 1 << self.precision_bits
        root = _iroot(n ** self.theta_num * scale ** self.theta_den, self.theta_den)
        return Fraction(root, scale)

    def first_n_with_value_at_least(self, bound: Fraction, n_cap: int) -> int:
        """Smallest n <= n_cap with a_n >= bound (a_n increasing)."""
        if self.kind == "table":
            for n in sorted(self.table):
                if self.table[n] >= bound:
                    return n
            raise KeyError("bound exceeds table range")
        lo, hi = 1, 1
        while self.value(hi) < bound:
            if hi >= n_cap:
                from .errors import BudgetExceeded

                raise BudgetExceeded("sequence index", n_cap)
            lo, hi = hi, min(2 * hi, n_cap)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.value(mid) >= bound:
                hi = mid
            else:
                lo = mid + 1
        return lo
