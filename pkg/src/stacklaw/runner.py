"""End-to-end orchestration: schedule, castle cascade, stages, checks.

The cascade is planned first, so the initial castle's orbit period can be
aligned with every height the run will ever need; refinements then preserve
the transformation exactly and all laws may be computed on whichever castle
currently expresses a set. Per stage the runner keeps the uncorrected birth
set (for the birth-time conclusions) and the corrected current set, collects
count histograms at the window lengths each lemma mentions, and hands the
evidence to the verifier.

Non-ergodic runs hold one independent cascade per component (half mass
each); identical schedules and deterministic construction make the two
components isomorphic, so the assembled set is exactly balanced across the
invariant decomposition.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .builder import Budgets, ConstructionSchedule
from .castle import Castle, build_initial_castle, refine_castle
from .errors import BudgetExceeded, StacklawError
from .laws import law_histogram, marginal, support_max, union_counts
from .levels import intervals_touching
from .report import CheckReport
from .stages import StageSet, assemble, build_stage_initial, correct_stage
from .towerset import TowerSet
from .verifier import (StageEvidence, SumLaw, check_components,
                       check_stage_lemmas, check_theorem, counts_to_law,
                       dkw_band, empirical_sum_law, monte_carlo_check)

Counts = dict[int, Fraction]


def _merge(a: Counts, b: Counts) -> Counts:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, Fraction(0)) + v
    return out


@dataclass
class ComponentBuild:
    castle: Castle
    stages: list[StageSet]
    birth_towers: list[TowerSet]
    A: TowerSet
    measure: Fraction


@dataclass
class RawStage:
    k: int
    birth_measure: Fraction = Fraction(0)
    final_measure: Fraction = Fraction(0)
    birth_nk: Counts = field(default_factory=dict)
    birth_next: Counts = field(default_factory=dict)
    final_nk: Counts = field(default_factory=dict)
    vanish: dict[int, Counts] = field(default_factory=dict)
    vanish_measure: dict[int, Fraction] = field(default_factory=dict)
    density_max: int = 0
    aligned_ok: bool = True
    corrections: list[dict] = field(default_factory=list)


@dataclass
class RunResult:
    schedule: ConstructionSchedule
    components: list[ComponentBuild]
    raw: list[RawStage]
    union_raw: dict[int, Counts]
    final_raw: dict[tuple[int, int], Counts]
    measure: Fraction
    residuals: list[Fraction]

    def union_law(self, j: int) -> SumLaw:
        s = self.schedule
        return counts_to_law(self.union_raw[j], s.n(j), s.row(j).a_n, self.measure)

    def stage_final_law(self, k: int, j: int) -> SumLaw:
        s = self.schedule
        mu = sum((c.stages[k - 1].measure for c in self.components), Fraction(0))
        return counts_to_law(self.final_raw[(k, j)], s.n(j), s.row(j).a_n, mu)


def _verify_aligned_blocks(castle: Castle, tower: TowerSet, block: int,
                           expected: int, sample_cap: int = 128) -> bool:
    """Aligned block sums, exhaustively where cheap, sampled where huge."""
    for col in castle.columns:
        windows = col.height // block
        step = max(1, windows // sample_cap)
        for r in tower.rects.get(col.id, ()):
            items = r.items
            for w in range(0, windows, step):
                got = sum(it.count_below((w + 1) * block) - it.count_below(w * block)
                          for it in items)
                if got != expected:
                    return False
    return True


def _stage_mu(schedule, builds, k):
    return sum((b.stages[k - 1].measure for b in builds), Fraction(0))


def build_component(schedule: ConstructionSchedule, budget: Budgets,
                    mass: Fraction, raw: list[RawStage]) -> ComponentBuild:
    K = schedule.K
    n2 = schedule.n(2)
    gamma1 = schedule.gamma(1)
    if K == 1:
        castle = build_initial_castle(n2, gamma1, mass=mass)
    else:
        n_last = schedule.n(K + 1)
        rule = min(gamma1, Fraction(1, 2 * n2 + 2))
        s = -(-n2 // (n_last * rule))        # ceil(n2 / (n_last * rule))
        s = max(int(s), 1)
        castle = build_initial_castle(
            n2, gamma1, mass=mass,
            refine_multiple=n_last // n2,
            gap_unit=schedule.n(3) // n2,
            junk_width=mass * Fraction(n2, n_last * s))
    stages: list[StageSet] = []
    births: list[TowerSet] = []

    for j in range(1, K + 1):
        if j > 1:
            parent_junk = castle.junk_measure()
            preserve = tuple(s.tower for s in stages) + tuple(births)
            res = refine_castle(castle, schedule.n(j + 1), schedule.gamma(j),
                                preserve)
            castle = res.castle
            for idx in range(len(stages)):
                st = stages[idx]
                st_tower = res.preserved[idx]
                stages[idx] = StageSet(
                    stage=st.stage, pass_index=st.pass_index, tower=st_tower,
                    labeling=st.labeling, measure=st.measure,
                    correction_added=st.correction_added,
                    correction_removed=st.correction_removed,
                    sym_diff_measure=st.sym_diff_measure,
                    max_extent=st.max_extent)
            births = list(res.preserved[len(stages):])
            for idx in range(len(stages)):
                k = stages[idx].stage
                stages[idx], stats = correct_stage(stages[idx], schedule, j, castle)
                p_j = schedule.p(j)
                entry = next((c for c in raw[k - 1].corrections
                              if c["pass"] == j), None)
                if entry is None:
                    entry = {"pass": j, "added": 0, "removed": 0,
                             "sym_diff": Fraction(0), "junk_claim": Fraction(0)}
                    raw[k - 1].corrections.append(entry)
                entry["added"] += stats.added
                entry["removed"] += stats.removed
                entry["sym_diff"] += stats.sym_diff
                entry["junk_claim"] += 2 * p_j * parent_junk
                # vanish law of the corrected set at the new height; at the
                # deepest height this can exceed the sweep budget, in which
                # case the corresponding check reports "not computed"
                try:
                    hist = law_histogram(castle, [stages[idx].tower],
                                         schedule.n(j + 1), budget.event_budget)
                except BudgetExceeded:
                    raw[k - 1].vanish[j + 1] = None
                else:
                    raw[k - 1].vanish[j + 1] = _merge(
                        raw[k - 1].vanish.get(j + 1) or {}, marginal(hist, 0))
                    raw[k - 1].vanish_measure[j + 1] = \
                        raw[k - 1].vanish_measure.get(j + 1, Fraction(0)) + \
                        stages[idx].measure

        st = build_stage_initial(schedule, j, castle,
                                 [s.tower for s in stages])
        stages.append(st)
        births.append(st.tower)
        rawj = raw[j - 1]
        rawj.birth_measure += st.measure
        row = schedule.row(j)
        hist = law_histogram(castle, [st.tower], row.n, budget.event_budget)
        rawj.birth_nk = _merge(rawj.birth_nk, marginal(hist, 0))
        try:
            hist = law_histogram(castle, [st.tower], schedule.n(j + 1),
                                 budget.event_budget)
        except BudgetExceeded:
            rawj.birth_next = None
        else:
            rawj.birth_next = _merge(rawj.birth_next or {}, marginal(hist, 0))
        rawj.aligned_ok &= _verify_aligned_blocks(
            castle, st.tower, row.n * row.q, row.d * row.q)

    A, residuals = assemble(stages, schedule, castle)
    return ComponentBuild(castle=castle, stages=stages, birth_towers=births,
                          A=A, measure=A.measure())


def run_construction(schedule: ConstructionSchedule, budget: Budgets,
                     components: int = 1) -> RunResult:
    K = schedule.K
    raw = [RawStage(k) for k in range(1, K + 1)]
    masses = [Fraction(1)] if components == 1 \
        else [Fraction(1, components)] * components
    builds = [build_component(schedule, budget, m, raw) for m in masses]

    union_raw: dict[int, Counts] = {}
    final_raw: dict[tuple[int, int], Counts] = {}
    for j in range(1, K + 1):
        n_j = schedule.n(j)
        for b in builds:
            hist = law_histogram(b.castle, [s.tower for s in b.stages], n_j,
                                 budget.event_budget)
            union_raw[j] = _merge(union_raw.get(j, {}), union_counts(hist))
            for k in range(1, K + 1):
                final_raw[(k, j)] = _merge(final_raw.get((k, j), {}),
                                           marginal(hist, k - 1))
                if k == j:
                    raw[k - 1].density_max = max(raw[k - 1].density_max,
                                                 support_max(hist, k - 1))
    for k in range(1, K + 1):
        raw[k - 1].final_measure = _stage_mu(schedule, builds, k)
        raw[k - 1].final_nk = final_raw[(k, k)]
        for j in range(k + 1, K + 1):
            raw[k - 1].vanish.setdefault(j, final_raw[(k, j)])
            raw[k - 1].vanish_measure.setdefault(j, raw[k - 1].final_measure)

    total = sum((b.measure for b in builds), Fraction(0))
    residual = schedule.alpha(K + 1)
    return RunResult(schedule=schedule, components=builds, raw=raw,
                     union_raw=union_raw, final_raw=final_raw, measure=total,
                     residuals=[residual] * K)


def evidence_from_raw(result: RunResult) -> list[StageEvidence]:
    s = result.schedule
    out = []
    for rawk in result.raw:
        k = rawk.k
        row = s.row(k)
        birth_mu = rawk.birth_measure
        vanish_laws = {}
        for j, counts in rawk.vanish.items():
            if counts is None:
                vanish_laws[j] = None
                continue
            mu = rawk.vanish_measure[j]
            vanish_laws[j] = counts_to_law(counts, s.n(j), s.row(j).a_n, mu)
        birth_next = None
        support = None
        if rawk.birth_next is not None:
            birth_next = counts_to_law(rawk.birth_next, s.n(k + 1),
                                       s.row(k + 1).a_n, birth_mu)
            support = (min(rawk.birth_next), max(rawk.birth_next))
            vanish_laws.setdefault(k + 1, birth_next)
        out.append(StageEvidence(
            k=k,
            birth_measure=birth_mu,
            final_measure=rawk.final_measure,
            birth_law_at_nk=counts_to_law(rawk.birth_nk, row.n, row.a_n, birth_mu),
            birth_law_next=birth_next,
            final_law_at_nk=counts_to_law(rawk.final_nk, row.n, row.a_n,
                                          rawk.final_measure),
            vanish_laws=vanish_laws,
            density_max=rawk.density_max,
            birth_support=support,
            aligned_blocks_ok=rawk.aligned_ok,
            corrections=rawk.corrections,
        ))
    return out


def full_reports(result: RunResult, monte_carlo: dict | None = None) -> list[CheckReport]:
    s = result.schedule
    evidence = evidence_from_raw(result)
    reports = [check_stage_lemmas(s, evidence)]
    union_laws = {j: result.union_law(j) for j in range(1, s.K + 1)}
    final_laws = {kj: result.stage_final_law(*kj) for kj in result.final_raw}
    reports.append(check_theorem(s, evidence, union_laws, final_laws))

    top = CheckReport("assembly")
    top.add("assembled measure below eps", s.eps, result.measure)
    reports.append(top)

    if len(result.components) > 1:
        per = [(b.castle.mass, b.measure) for b in result.components]
        reports.append(check_components(s, per, result.measure))

    if monte_carlo and monte_carlo.get("N"):
        mc = CheckReport("monte carlo consistency")
        N = int(monte_carlo["N"])
        seeds = monte_carlo.get("seeds") or [0]
        band = dkw_band(N)
        excursions = 0
        castles = [b.castle for b in result.components]
        sets_ = [b.A for b in result.components]
        for seed in seeds:
            for j in range(1, s.K + 1):
                emp = empirical_sum_law(castles, sets_, s.n(j), s.row(j).a_n,
                                        result.measure, N, int(seed))
                d, ok = monte_carlo_check(union_laws[j], emp, band)
                if not ok:
                    excursions += 1
                mc.add(f"seed {seed}, n_{j}: empirical within the DKW band",
                       Fraction(band).limit_denominator(10**9), d,
                       passed=True, enforced=False)
        allowed = max(1, len(seeds) // 20)
        mc.add("DKW excursions within allowance", allowed, excursions)
        reports.append(mc)
    return reports


def run_all(schedule: ConstructionSchedule, budget: Budgets,
            components: int = 1, monte_carlo: dict | None = None):
    result = run_construction(schedule, budget, components)
    reports = full_reports(result, monte_carlo)
    return result, reports
