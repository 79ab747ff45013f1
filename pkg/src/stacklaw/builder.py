"""Stage schedule arithmetic.

The schedule fixes, per stage k = 1..K+1 (the last row runs against the
point mass at 0 so the final junk budget is defined), the tolerance split
eps_k, the accuracy alpha_k, the cutoff C_k, the window length n_k with its
lattice half-width d_k = floor(a_{n_k} C_k) + 1, and the quantized target
with denominator q_k. Lengths chain multiplicatively: n_k is a multiple of
q_{k-1} n_{k-1}, so every later window aligns with every earlier block
structure.

Strict mode enforces the a-priori inequalities (d_k/n_k <= alpha_k,
q_{k-1} n_{k-1}/a_{n_k} <= alpha_k, the n(target, alpha) floor); it is
arithmetically sound but drives n_2 astronomically high for realistic
tolerances, which the dry run demonstrates. Relaxed mode keeps the
structural constraints (multiples, the d formula, d/n <= alpha), accepts
per-stage alpha and C overrides, decouples the quantizer budget as
min(alpha_k, eps_k/8), uses a weaker residue floor for n_k, and leaves the
conclusions to the verifier's exact ex-post computations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .errors import BudgetExceeded, ConfigError, QuantizationInfeasible
from .lattice import (LatticeMeasure, lattice_constants, quantize,
                      require_zero_mean, tail_cutoff)
from .measures import RealMeasure
from .report import CheckReport, show
from .sequence import SequenceSpec


@dataclass
class Budgets:
    n_max: int = 10**7
    cell_max: int = 200_000
    run_max: int = 2_000_000
    wrap_max: int = 4096
    q_max: int = 2**16
    event_budget: int = 6_000_000

    @staticmethod
    def from_dict(d: dict) -> "Budgets":
        b = Budgets()
        for key, val in (d or {}).items():
            if not hasattr(b, key):
                raise ConfigError(f"budgets.{key}", "unknown budget")
            setattr(b, key, int(val))
            if getattr(b, key) <= 0:
                raise ConfigError(f"budgets.{key}", "must be positive")
        return b


@dataclass
class StageRow:
    k: int
    target: RealMeasure
    eps: Fraction
    alpha: Fraction
    quant_budget: Fraction
    C: int
    n: int
    a_n: Fraction
    d: int
    eta: LatticeMeasure
    binding: str

    @property
    def q(self) -> int:
        return self.eta.q


@dataclass
class ConstructionSchedule:
    eps: Fraction
    K: int
    mode: str
    seq: SequenceSpec
    rows: list[StageRow]     # index 0 is stage 1; length K+1

    def row(self, k: int) -> StageRow:
        return self.rows[k - 1]

    def n(self, k: int) -> int:
        return self.rows[k - 1].n

    def alpha(self, k: int) -> Fraction:
        return self.rows[k - 1].alpha

    def eps_k(self, k: int) -> Fraction:
        return self.rows[k - 1].eps

    def p(self, k: int) -> int:
        hi, lo = self.n(k + 1), self.n(k)
        assert hi % lo == 0
        return hi // lo

    def beta(self, k: int) -> Fraction:
        return self.alpha(k) - self.alpha(k + 1)

    def gamma(self, k: int) -> Fraction:
        terms = [self.alpha(k),
                 (self.row(k + 1).a_n / self.n(k + 1)) * self.alpha(k + 1)]
        if k + 2 <= len(self.rows):
            terms.append(self.beta(k + 1) / (2 * self.p(k + 1)))
        return min(terms)

    def to_dict(self) -> dict:
        rows = []
        for r in self.rows:
            rows.append({
                "k": r.k,
                "eps": show(r.eps),
                "alpha": show(r.alpha),
                "quant_budget": show(r.quant_budget),
                "C": r.C,
                "n": r.n,
                "a_n": show(r.a_n),
                "d": r.d,
                "q": r.q,
                "eta": {str(i): c for i, c in r.eta.counts},
                "binding": r.binding,
            })
        out = {"eps": show(self.eps), "K": self.K, "mode": self.mode, "rows": rows}
        out["p"] = [self.p(k) for k in range(1, self.K + 1)]
        out["beta"] = [show(self.beta(k)) for k in range(1, self.K + 1)]
        out["gamma"] = [show(self.gamma(k)) for k in range(1, self.K + 1)]
        return out


def _as_fraction_list(values, K1: int, field_name: str) -> list[Fraction] | None:
    if values is None:
        return None
    vals = [Fraction(v) for v in values]
    if len(vals) > K1:
        raise ConfigError(field_name, f"more than {K1} entries")
    return vals


def plan_schedule(targets: list[RealMeasure], eps, seq: SequenceSpec,
                  budget: Budgets | None = None, mode: str = "relaxed", *,
                  eps_overrides=None, alpha_overrides=None,
                  c_overrides=None, n_floors=None) -> ConstructionSchedule:
    """Compute all per-stage constants; n_k is the smallest admissible
    multiple of q_{k-1} n_{k-1} under the mode's constraint set."""
    budget = budget or Budgets()
    eps = Fraction(eps)
    if not 0 < eps < 1:
        raise ConfigError("eps", "must lie in (0,1)")
    if mode not in ("strict", "relaxed"):
        raise ConfigError("mode", "must be strict or relaxed")
    for t in targets:
        require_zero_mean(t)
    K = len(targets)
    K1 = K + 1
    eps_list = _as_fraction_list(eps_overrides, K1, "eps_overrides")
    alpha_list = _as_fraction_list(alpha_overrides, K1, "alpha_overrides")
    c_list = list(c_overrides) if c_overrides else None

    def eps_of(k: int) -> Fraction:
        if eps_list and k <= len(eps_list):
            return eps_list[k - 1]
        return eps / 2 ** (k + 1)

    all_eps = [eps_of(k) for k in range(1, K1 + 1)]
    if any(b >= a for a, b in zip(all_eps, all_eps[1:])):
        raise ConfigError("eps_overrides", "eps_k must be strictly decreasing")
    if sum(all_eps) >= eps:
        raise ConfigError("eps_overrides", "sum of eps_k must stay below eps")

    rows: list[StageRow] = []
    schedule = ConstructionSchedule(eps, K, mode, seq, rows)
    delta0 = RealMeasure.point(0)

    for k in range(1, K1 + 1):
        target = targets[k - 1] if k <= K else delta0
        eps_k = eps_of(k)
        if alpha_list and k <= len(alpha_list):
            alpha = alpha_list[k - 1]
            if mode == "strict":
                raise ConfigError("alpha_overrides", "not allowed in strict mode")
        elif k == 1:
            alpha = eps_k / 8
        else:
            prev = rows[-1]
            alpha = (prev.a_n / (2 * prev.n)) * eps_k
        if rows and alpha > rows[-1].alpha:
            raise ConfigError("alpha_overrides",
                              f"alpha_{k}={show(alpha)} exceeds alpha_{k-1}")
        quant_budget = alpha if mode == "strict" else min(alpha, eps_k / 8)

        C = tail_cutoff(target, alpha)
        if c_list and k <= len(c_list) and c_list[k - 1] is not None:
            if mode == "strict":
                raise ConfigError("c_overrides", "not allowed in strict mode")
            C = int(c_list[k - 1])
        if rows:
            C = max(C, rows[-1].C)

        step = rows[-1].q * rows[-1].n if rows else 1
        floors: list[tuple[int, str]] = [(step, "multiple")]
        if mode == "strict":
            consts = lattice_constants(target, alpha, seq, n_cap=budget.n_max)
            floors.append((consts.n0, "quantizer n0"))
            if rows:
                bound = Fraction(step) / alpha
                floors.append((seq.first_n_with_value_at_least(bound, budget.n_max),
                               "a_n >= q n / alpha"))
        else:
            # the pad row's corresponding check is informational in relaxed mode
            if rows and k <= K:
                residue = Fraction(5 * rows[-1].q * rows[-1].d, 4) / alpha
                floors.append((seq.first_n_with_value_at_least(residue, budget.n_max),
                               "stage residue floor"))
        if k == 3 and K >= 2:
            n2 = rows[1].n
            floors.append((n2 * (n2 + 2), "castle refinability"))
        if n_floors and k <= len(n_floors) and n_floors[k - 1]:
            if mode == "strict":
                raise ConfigError("n_floors", "not allowed in strict mode")
            floors.append((int(n_floors[k - 1]), "explicit floor"))

        n_lo, binding = max(floors)
        n = -(-n_lo // step) * step

        eta = None
        tries = 0
        while tries < 512:
            tries += 1
            if n > budget.n_max:
                err = BudgetExceeded("n_k", budget.n_max, n)
                err.partial = schedule
                raise err
            a_n = seq.value(n)
            d = int(a_n * C) + 1
            if Fraction(d, n) > alpha:
                need = Fraction(d) / alpha
                n = max(n + step, (int(need) // step + 1) * step)
                binding = "d/n <= alpha"
                continue
            try:
                eta = quantize(target, quant_budget, seq, C, n, budget.q_max)
                break
            except QuantizationInfeasible:
                # scan nearby multiples first; lattice-exact n are common there
                n = n + step if tries < 256 else max(2 * (n // step), 2) * step
                binding = "quantizer accuracy"
        else:
            raise ConfigError("schedule", f"no admissible n for stage {k}")
        if eta is None:
            raise ConfigError("schedule", f"no admissible n for stage {k}")

        rows.append(StageRow(k=k, target=target, eps=eps_k, alpha=alpha,
                             quant_budget=quant_budget, C=C, n=n, a_n=seq.value(n),
                             d=d, eta=eta, binding=binding))
    return schedule


def verify_schedule(s: ConstructionSchedule) -> CheckReport:
    """Arithmetic audit of every schedule invariant, without castles."""
    rep = CheckReport("schedule invariants")
    strict = s.mode == "strict"
    eps_seq = [r.eps for r in s.rows]
    rep.add("eps_k strictly decreasing", True,
            all(a > b for a, b in zip(eps_seq, eps_seq[1:])),
            passed=all(a > b for a, b in zip(eps_seq, eps_seq[1:])))
    rep.add("sum eps_k below eps", s.eps, sum(eps_seq))
    if strict:
        rep.add("alpha_1 = eps_1/8", s.rows[0].eps / 8, s.rows[0].alpha,
                passed=s.rows[0].alpha == s.rows[0].eps / 8)
    for k in range(2, len(s.rows) + 1):
        r, prev = s.row(k), s.row(k - 1)
        formula = (prev.a_n / (2 * prev.n)) * r.eps
        rep.add(f"alpha_{k} formula", formula, r.alpha,
                passed=(r.alpha == formula) if strict else True,
                enforced=strict, note="override recorded" if not strict else "")
        rep.add(f"n_{k} multiple of q_{k-1} n_{k-1}", 0, r.n % (prev.q * prev.n),
                passed=r.n % (prev.q * prev.n) == 0)
        ratio = Fraction(prev.q * prev.n) / r.a_n
        rep.add(f"q_{k-1} n_{k-1} / a_n_{k} <= alpha_{k}", r.alpha, ratio,
                enforced=strict)
    for k in range(1, len(s.rows) + 1):
        r = s.row(k)
        d_formula = int(r.a_n * r.C) + 1
        rep.add(f"d_{k} = floor(a_n C)+1", d_formula, r.d, passed=r.d == d_formula)
        rep.add(f"d_{k}/n_{k} <= alpha_{k}", r.alpha, Fraction(r.d, r.n))
        rep.add(f"support of eta_{k} within half-width", r.d - 1,
                max((abs(i) for i in r.eta.support()), default=0))
        if k >= 2:
            rep.add(f"C_{k} >= C_{k-1}", True, r.C >= s.row(k - 1).C,
                    passed=r.C >= s.row(k - 1).C)
    for k in range(1, s.K + 1):
        tail = sum((s.beta(j) for j in range(k, s.K + 1)), Fraction(0))
        rep.add(f"sum_beta_from_{k} <= alpha_{k}", s.alpha(k), tail)
        rep.add(f"beta_{k} >= 0", True, s.beta(k) >= 0, passed=s.beta(k) >= 0)
        rep.add(f"gamma_{k} > 0", True, s.gamma(k) > 0, passed=s.gamma(k) > 0)
    return rep
