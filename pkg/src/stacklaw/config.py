"""Experiment configuration: parsing, defaulting, validation.

Config files are JSON. Rational values may be written as strings ("1/3"),
integers, or decimals; measure literals are lists of atom/uniform entries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .builder import Budgets
from .errors import ConfigError
from .lattice import MEAN_TOL
from .measures import RealMeasure, mean
from .sequence import SequenceSpec


def _rat(value, field_name: str) -> Fraction:
    try:
        if isinstance(value, str):
            return Fraction(value)
        if isinstance(value, int):
            return Fraction(value)
        if isinstance(value, float):
            return Fraction(value).limit_denominator(10**12)
    except (ValueError, ZeroDivisionError):
        pass
    raise ConfigError(field_name, f"cannot parse rational from {value!r}")


def parse_measure(entries, field_name: str) -> RealMeasure:
    atoms, segments = [], []
    for i, entry in enumerate(entries):
        where = f"{field_name}[{i}]"
        if not isinstance(entry, dict) or len(entry) != 1:
            raise ConfigError(where, "expected one of {'atom': ...} or {'uniform': ...}")
        if "atom" in entry:
            spec = entry["atom"]
            atoms.append((_rat(spec.get("at"), where), _rat(spec.get("mass"), where)))
        elif "uniform" in entry:
            spec = entry["uniform"]
            segments.append((_rat(spec.get("lo"), where), _rat(spec.get("hi"), where),
                             _rat(spec.get("mass", 1), where)))
        else:
            raise ConfigError(where, f"unknown measure entry {list(entry)}")
    try:
        return RealMeasure.of(atoms=atoms, segments=segments)
    except ValueError as e:
        raise ConfigError(field_name, str(e)) from e


@dataclass
class ExperimentConfig:
    seq: SequenceSpec
    targets: list[RealMeasure]
    eps: Fraction
    K: int
    mode: str
    alpha_overrides: list | None
    eps_overrides: list | None
    c_overrides: list | None
    n_floors: list | None
    budgets: Budgets
    monte_carlo: dict
    preset: str
    out_dir: str
    seed: int
    dump_castles: bool = False
    raw: dict = field(default_factory=dict)


def validate_config(raw) -> ExperimentConfig:
    """Parse and validate; raises ConfigError naming the offending field."""
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ConfigError("<config>", f"invalid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("<config>", "top level must be an object")

    budgets = Budgets.from_dict(raw.get("budgets", {}))

    seq_spec = raw.get("sequence", {"preset": "sqrt"})
    if "table" in seq_spec:
        seq = SequenceSpec.from_table(seq_spec["table"])
    else:
        preset = seq_spec.get("preset", "sqrt")
        hint = max(budgets.n_max, 2)
        if preset == "sqrt":
            seq = SequenceSpec.sqrt(n_max_hint=hint)
        elif preset == "power":
            theta = _rat(seq_spec.get("theta", "1/2"), "sequence.theta")
            seq = SequenceSpec.power(theta.numerator, theta.denominator,
                                     n_max_hint=hint)
        else:
            raise ConfigError("sequence.preset", f"unknown preset {preset!r}")

    if "battery" in raw:
        fam = raw["battery"]
        family = [parse_measure(t, f"battery.family[{i}]")
                  for i, t in enumerate(fam.get("family", []))]
        cycles = int(fam.get("cycles", 1))
        if not family or cycles < 1:
            raise ConfigError("battery", "needs a family and cycles >= 1")
        targets = family * cycles
    else:
        targets = [parse_measure(t, f"targets[{i}]")
                   for i, t in enumerate(raw.get("targets", []))]
    if not targets:
        raise ConfigError("targets", "at least one target is required")
    for i, t in enumerate(targets):
        if abs(mean(t)) > MEAN_TOL:
            raise ConfigError(f"targets[{i}]", f"mean {mean(t)} is not zero")

    eps = _rat(raw.get("eps", "1/2"), "eps")
    if not 0 < eps < 1:
        raise ConfigError("eps", "eps out of range (0,1)")

    K = int(raw.get("K", len(targets)))
    if not 0 <= K <= len(targets):
        raise ConfigError("K", "K must lie in [0, number of targets]")
    targets = targets[:K] if K else []

    mode_spec = raw.get("mode", {})
    if isinstance(mode_spec, str):
        mode_spec = {"name": mode_spec}
    mode = mode_spec.get("name", "relaxed")
    if mode not in ("strict", "relaxed"):
        raise ConfigError("mode.name", "must be strict or relaxed")

    def override(name):
        vals = mode_spec.get(name)
        if vals is None:
            return None
        return [None if v is None else _rat(v, f"mode.{name}") for v in vals]

    alpha = override("alpha")
    eps_k = override("eps_k")
    c_over = mode_spec.get("C")
    n_floors = mode_spec.get("n_min")

    mc = raw.get("monte_carlo", {})
    monte_carlo = {"N": int(mc.get("N", 100_000)),
                   "seeds": [int(s) for s in mc.get("seeds", [0])]}
    if monte_carlo["N"] < 1:
        raise ConfigError("monte_carlo.N", "must be positive")

    preset = raw.get("preset", "single")
    if preset not in ("single", "nonergodic-pair"):
        raise ConfigError("preset", f"unknown preset {preset!r}")

    return ExperimentConfig(
        seq=seq, targets=targets, eps=eps, K=K, mode=mode,
        alpha_overrides=alpha, eps_overrides=eps_k, c_overrides=c_over,
        n_floors=n_floors, budgets=budgets, monte_carlo=monte_carlo,
        preset=preset, out_dir=str(raw.get("out_dir", ".")),
        seed=int(raw.get("seed", 0)),
        dump_castles=bool(raw.get("dump_castles", False)), raw=raw)
