"""Report pipeline: run (strategy, scheme, method) combinations over one
dataset, roll results up to community / feeder / participant level, write
the CSV + JSON report files, and run the invariant verification suite.

Community rows mirror the headline table shape (imported / shared /
exported energy plus revenue increase and cost reduction); feeder and
participant tables carry the same columns so that sums reconcile across
files before rounding.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .allocation import BlockOutcome, CommunityLayout, SimulationResult, simulate
from .model import (
    ABS_TOL,
    REL_TOL,
    CommunityConfig,
    FeederId,
    Method,
    ParticipantId,
    Role,
    Scheme,
    Strategy,
)
from .settlement import Benefit, benefits, rollup, settle_result, alternative_other_charge_cost

SCHEME_ORDER = (Scheme.EQUAL, Scheme.PROPORTIONAL, Scheme.RANK)
METHOD_ORDER = (Method.DYNAMIC, Method.STATIC)
STRATEGY_ORDER = (Strategy.FEEDER_AWARE, Strategy.FEEDER_AGNOSTIC)

# Schemes whose per-interval shared energy is min(total surplus, demand).
MAXIMAL_COMBOS = (
    (Scheme.PROPORTIONAL, Method.DYNAMIC),
    (Scheme.RANK, Method.DYNAMIC),
    (Scheme.RANK, Method.STATIC),
)


def combination_order(
    strategies: tuple[Strategy, ...] = STRATEGY_ORDER,
    schemes: tuple[Scheme, ...] = SCHEME_ORDER,
    methods: tuple[Method, ...] = METHOD_ORDER,
) -> list[tuple[Strategy, Scheme, Method]]:
    """Deterministic report row order over the selected combinations."""
    return [(st, sc, me) for st in strategies for sc in schemes for me in methods]


@dataclass(frozen=True)
class ReportRow:
    """One report line: energy in kWh, money in EUR (full precision)."""

    imported_kwh: float
    shared_kwh: float
    exported_kwh: float
    revenue_increase_eur: float
    cost_reduction_eur: float
    total_benefit_eur: float


@dataclass
class CombinationReport:
    """All report rows of one (strategy, scheme, method) run."""

    strategy: Strategy
    scheme: Scheme
    method: Method
    community: ReportRow
    feeders: dict[FeederId, ReportRow]
    participants: dict[ParticipantId, ReportRow]
    community_cost_eur: float
    community_cost_other_discounted_eur: float
    elapsed_seconds: float


def _row(imported, shared, exported, benefit: Benefit) -> ReportRow:
    return ReportRow(
        imported_kwh=imported,
        shared_kwh=shared,
        exported_kwh=exported,
        revenue_increase_eur=benefit.revenue_increase,
        cost_reduction_eur=benefit.cost_reduction,
        total_benefit_eur=benefit.total_benefit,
    )


def build_report(result: SimulationResult) -> CombinationReport:
    """Roll one simulation up to participant / feeder / community rows."""
    config = result.config
    layout = result.layout
    baseline, community = settle_result(result)
    per_participant = benefits(baseline, community)

    groups: dict[str, list[ParticipantId]] = {
        fid: [layout.ids[i] for i in members]
        for fid, members in zip(layout.feeders, layout.members)
    }
    feeder_benefit = rollup(per_participant, groups)
    community_benefit = rollup(per_participant, {"all": list(layout.ids)})["all"]

    participants = {
        pid: _row(t.grid_import, t.allocated, t.grid_export, per_participant[pid])
        for pid, t in result.totals.items()
    }
    feeder_totals = result.feeder_totals()
    feeders = {
        fid: _row(t.grid_import, t.allocated, t.grid_export, feeder_benefit[fid])
        for fid, t in feeder_totals.items()
    }
    totals = result.community_totals()
    return CombinationReport(
        strategy=config.strategy,
        scheme=config.scheme,
        method=config.method,
        community=_row(totals.grid_import, totals.allocated, totals.grid_export, community_benefit),
        feeders=feeders,
        participants=participants,
        community_cost_eur=community_benefit.community_cost,
        community_cost_other_discounted_eur=alternative_other_charge_cost(totals, config.tariff),
        elapsed_seconds=0.0,
    )


def run_combinations(
    profiles,
    config: CommunityConfig,
    combos: list[tuple[Strategy, Scheme, Method]] | None = None,
) -> list[CombinationReport]:
    """Simulate each requested combination over one parsed dataset."""
    if combos is None:
        combos = [(config.strategy, config.scheme, config.method)]
    reports = []
    for strategy, scheme, method in combos:
        run_config = dataclasses.replace(config, strategy=strategy, scheme=scheme, method=method)
        started = time.perf_counter()
        result = simulate(profiles, run_config)
        report = build_report(result)
        report.elapsed_seconds = time.perf_counter() - started
        reports.append(report)
    return reports


# ---------------------------------------------------------------------------
# File output
# ---------------------------------------------------------------------------


def _fmt_energy(kwh: float) -> str:
    return f"{kwh / 1000.0:.3f}"  # MWh, table precision


def _fmt_money(eur: float) -> str:
    return f"{eur:.2f}"


_NUMERIC_HEADER = (
    "imported_mwh,shared_mwh,exported_mwh,revenue_increase_eur,cost_reduction_eur,total_benefit_eur"
)


def _numeric_cells(row: ReportRow) -> str:
    return ",".join(
        (
            _fmt_energy(row.imported_kwh),
            _fmt_energy(row.shared_kwh),
            _fmt_energy(row.exported_kwh),
            _fmt_money(row.revenue_increase_eur),
            _fmt_money(row.cost_reduction_eur),
            _fmt_money(row.total_benefit_eur),
        )
    )


def write_reports(
    reports: list[CombinationReport],
    out_dir: str | Path,
    config: CommunityConfig,
    interval_count: int,
    total_seconds: float,
) -> dict[str, Path]:
    """Write community.csv, feeders.csv, participants.csv and run.json.

    CSV content is deterministic for fixed inputs; run.json additionally
    carries wall-clock timings (the one intentionally non-reproducible
    part) and full-precision totals.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    roles = {p.id: p.role for p in config.participants}
    feeder_of = {p.id: p.feeder for p in config.participants}

    community_lines = ["strategy,scheme,method," + _NUMERIC_HEADER]
    feeder_lines = ["strategy,scheme,method,feeder," + _NUMERIC_HEADER]
    participant_lines = ["strategy,scheme,method,participant,feeder,role," + _NUMERIC_HEADER]
    for r in reports:
        key = f"{r.strategy.value},{r.scheme.value},{r.method.value}"
        community_lines.append(f"{key},{_numeric_cells(r.community)}")
        for fid in sorted(r.feeders):
            feeder_lines.append(f"{key},{fid},{_numeric_cells(r.feeders[fid])}")
        for pid in sorted(r.participants):
            participant_lines.append(
                f"{key},{pid},{feeder_of[pid]},{roles[pid].value},{_numeric_cells(r.participants[pid])}"
            )

    paths = {
        "community": out / "community.csv",
        "feeders": out / "feeders.csv",
        "participants": out / "participants.csv",
        "run": out / "run.json",
    }
    paths["community"].write_text("\n".join(community_lines) + "\n")
    paths["feeders"].write_text("\n".join(feeder_lines) + "\n")
    paths["participants"].write_text("\n".join(participant_lines) + "\n")

    run_doc = {
        "version": __version__,
        "intervals": interval_count,
        "interval_minutes": config.interval_minutes,
        "participants": len(config.participants),
        "config": json.loads(_config_echo(config)),
        "combinations": [
            {
                "strategy": r.strategy.value,
                "scheme": r.scheme.value,
                "method": r.method.value,
                "community": dataclasses.asdict(r.community),
                "debug": {
                    "community_cost_eur": r.community_cost_eur,
                    "community_cost_other_discounted_eur": r.community_cost_other_discounted_eur,
                },
                "timing_seconds": r.elapsed_seconds,
            }
            for r in reports
        ],
        "timings": {"total_seconds": total_seconds},
    }
    paths["run"].write_text(json.dumps(run_doc, indent=2) + "\n")
    return paths


def _config_echo(config: CommunityConfig) -> str:
    from .model import config_to_json

    return config_to_json(config)


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class OutcomePatch:
    """Debug fault injection: add delta_kwh to one outcome field."""

    interval: int
    participant: ParticipantId
    field: str
    delta_kwh: float

    @classmethod
    def from_json(cls, text: str) -> "OutcomePatch":
        doc = json.loads(text)
        return cls(
            interval=int(doc["interval"]),
            participant=str(doc["participant"]),
            field=str(doc["field"]),
            delta_kwh=float(doc["delta_kwh"]),
        )


class _ConservationProbe:
    """Block hook accumulating worst-case identity deviations."""

    def __init__(self, layout, tariff, patch: OutcomePatch | None):
        self.layout = layout
        self.tariff = tariff
        self.patch = patch
        self.max_balance = 0.0  # community: allocated vs sold
        self.max_supply = 0.0  # sold + exported vs surplus
        self.max_demand = 0.0  # allocated + imported vs demand
        self.max_overdraw = 0.0  # allocated beyond demand
        self.min_field = 0.0  # most negative outcome field
        self.max_money = 0.0  # buyer energy payments vs seller revenue
        self.shared_kwh = 0.0
        self.min_bound_kwh = 0.0  # sum of min(S_t, D_t)

    def __call__(self, block: BlockOutcome) -> None:
        if self.patch is not None:
            lo = block.start
            hi = block.start + block.intervals
            if lo <= self.patch.interval < hi:
                i = self.layout.ids.index(self.patch.participant)
                target = getattr(block, self.patch.field)
                target[self.patch.interval - lo, i] += self.patch.delta_kwh

        allocated = block.allocated_same + block.allocated_other
        shared_in = allocated.sum(axis=1)
        shared_out = block.sold_community.sum(axis=1)
        surplus_t = block.surplus.sum(axis=1)
        demand_t = block.demand.sum(axis=1)

        def rel(err, scale):
            denom = np.maximum(scale, ABS_TOL / REL_TOL)
            return float(np.max(err / denom, initial=0.0))

        self.max_balance = max(
            self.max_balance, rel(np.abs(shared_in - shared_out), np.maximum(shared_in, shared_out))
        )
        supply = block.sold_community.sum(axis=1) + block.grid_export.sum(axis=1)
        self.max_supply = max(self.max_supply, rel(np.abs(supply - surplus_t), surplus_t))
        covered = shared_in + block.grid_import.sum(axis=1)
        self.max_demand = max(self.max_demand, rel(np.abs(covered - demand_t), demand_t))
        self.max_overdraw = max(
            self.max_overdraw,
            rel(np.maximum(allocated - block.demand, 0.0), np.maximum(block.demand, 1.0)),
        )
        for name in ("allocated_same", "allocated_other", "grid_import", "sold_community", "grid_export"):
            value = float(getattr(block, name).min(initial=0.0))
            self.min_field = min(self.min_field, value)
        price = self.tariff.community_energy_price
        self.max_money = max(
            self.max_money,
            rel(np.abs(shared_in * price - shared_out * price), np.maximum(shared_in, shared_out) * price),
        )
        self.shared_kwh += float(shared_in.sum())
        self.min_bound_kwh += float(np.minimum(surplus_t, demand_t).sum())


def verify_scenario(
    profiles,
    config: CommunityConfig,
    combos: list[tuple[Strategy, Scheme, Method]] | None = None,
    patch: OutcomePatch | None = None,
) -> list[CheckResult]:
    """Run the invariant suite over every requested combination.

    Covers per-interval conservation, the maximal-sharing equalities (both
    the cross-scheme equality and the independent min(surplus, demand)
    bound), money conservation, single-phase dominance of dynamic over
    static coefficients, benefit sign properties, and the tariff
    decomposition.  A fault injected via ``patch`` must be caught.
    """
    if combos is None:
        combos = combination_order()
    checks: list[CheckResult] = []
    tariff = config.tariff

    shared_by_combo: dict[tuple, float] = {}
    energy_by_combo: dict[tuple, tuple[float, float, float]] = {}
    min_bound = None
    for strategy, scheme, method in combos:
        run_config = dataclasses.replace(config, strategy=strategy, scheme=scheme, method=method)
        probe = _ConservationProbe(CommunityLayout.from_config(run_config), tariff, patch)
        result = simulate(profiles, run_config, block_hook=probe)
        name = f"{strategy.value}/{scheme.value}/{method.value}"
        for metric, label in (
            (probe.max_balance, "community balance (allocated vs sold)"),
            (probe.max_supply, "surplus conservation (sold + exported)"),
            (probe.max_demand, "demand conservation (allocated + imported)"),
            (probe.max_overdraw, "allocation within demand"),
            (probe.max_money, "money conservation (payments vs revenue)"),
        ):
            checks.append(
                CheckResult(
                    name=f"{label} [{name}]",
                    passed=metric <= REL_TOL,
                    detail=f"max relative deviation {metric:.3e}",
                )
            )
        checks.append(
            CheckResult(
                name=f"non-negative outcomes [{name}]",
                passed=probe.min_field >= -ABS_TOL,
                detail=f"min field value {probe.min_field:.3e} kWh",
            )
        )

        totals = result.community_totals()
        shared_by_combo[(strategy, scheme, method)] = totals.allocated
        energy_by_combo[(strategy, scheme, method)] = (
            totals.grid_import,
            totals.allocated,
            totals.grid_export,
        )
        min_bound = probe.min_bound_kwh

        base, comm = settle_result(result)
        bens = benefits(base, comm)
        worst_rev = min(b.revenue_increase for b in bens.values())
        worst_cost = min(b.cost_reduction for b in bens.values())
        checks.append(
            CheckResult(
                name=f"benefit signs [{name}]",
                passed=worst_rev >= -ABS_TOL and worst_cost >= -ABS_TOL,
                detail=f"min revenue increase {worst_rev:.6f} EUR, min cost reduction {worst_cost:.6f} EUR",
            )
        )

    # Maximal-sharing equality across the three maximal schemes, per strategy.
    for strategy in STRATEGY_ORDER:
        triples = [
            energy_by_combo[(strategy, scheme, method)]
            for scheme, method in MAXIMAL_COMBOS
            if (strategy, scheme, method) in energy_by_combo
        ]
        if len(triples) < 2:
            continue
        spread = max(
            abs(a - b) / max(abs(a), abs(b), ABS_TOL / REL_TOL)
            for t1 in triples
            for t2 in triples
            for a, b in zip(t1, t2)
        )
        shared = triples[0][1]
        bound_err = (
            abs(shared - min_bound) / max(shared, min_bound, ABS_TOL / REL_TOL)
            if min_bound is not None
            else 0.0
        )
        checks.append(
            CheckResult(
                name=f"maximal-sharing equality [{strategy.value}]",
                passed=spread <= REL_TOL and bound_err <= REL_TOL,
                detail=(
                    f"cross-scheme spread {spread:.3e}; shared vs sum-of-min bound "
                    f"deviation {bound_err:.3e}"
                ),
            )
        )

    # Single-phase dominance: dynamic >= static for equal and proportional
    # (guaranteed per pool, hence for the one-phase strategy).
    for scheme in (Scheme.EQUAL, Scheme.PROPORTIONAL):
        dyn = shared_by_combo.get((Strategy.FEEDER_AGNOSTIC, scheme, Method.DYNAMIC))
        sta = shared_by_combo.get((Strategy.FEEDER_AGNOSTIC, scheme, Method.STATIC))
        if dyn is None or sta is None:
            continue
        checks.append(
            CheckResult(
                name=f"dynamic dominance [feeder-agnostic/{scheme.value}]",
                passed=dyn >= sta - max(ABS_TOL, REL_TOL * sta),
                detail=f"dynamic shared {dyn:.6f} kWh vs static {sta:.6f} kWh",
            )
        )

    retail = tariff.grid_energy_price + tariff.grid_network_price + tariff.grid_other_price
    checks.append(
        CheckResult(
            name="tariff decomposition and preference ordering",
            passed=(
                retail == tariff.grid_retail_price
                and tariff.community_same_feeder_price < tariff.grid_retail_price
                and tariff.community_other_feeder_price < tariff.grid_retail_price
                and tariff.community_energy_price > tariff.feed_in_price
            ),
            detail=(
                f"retail {tariff.grid_retail_price:.4f}, same-feeder "
                f"{tariff.community_same_feeder_price:.5f}, other-feeder "
                f"{tariff.community_other_feeder_price:.5f}, feed-in {tariff.feed_in_price:.4f}"
            ),
        )
    )
    return checks
