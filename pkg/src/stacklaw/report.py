"""Check bookkeeping shared by the schedule verifier and the law verifier."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction


def show(x) -> str:
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)
    if isinstance(x, float):
        return repr(x)
    return str(x)


@dataclass
class CheckItem:
    name: str
    claimed: object
    achieved: object
    passed: bool
    enforced: bool = True    # informational entries do not gate the exit code
    note: str = ""

    @property
    def margin(self):
        try:
            return self.claimed - self.achieved
        except TypeError:
            return None

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "claimed": show(self.claimed),
            "achieved": show(self.achieved),
            "passed": self.passed,
            "enforced": self.enforced,
        }
        m = self.margin
        if m is not None:
            out["margin"] = show(m)
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class CheckReport:
    title: str
    items: list[CheckItem] = field(default_factory=list)

    def add(self, name, claimed, achieved, passed=None, enforced=True, note="") -> CheckItem:
        if passed is None:
            passed = bool(achieved <= claimed)
        item = CheckItem(name, claimed, achieved, passed, enforced, note)
        self.items.append(item)
        return item

    def extend(self, other: "CheckReport") -> None:
        self.items.extend(other.items)

    def all_pass(self) -> bool:
        return all(i.passed for i in self.items if i.enforced)

    def failures(self) -> list[CheckItem]:
        return [i for i in self.items if i.enforced and not i.passed]

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "passed": self.all_pass(),
            "checks": [i.to_dict() for i in self.items],
        }
