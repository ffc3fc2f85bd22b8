"""Surplus allocation engine.

Per interval: net positions split each participant into surplus or demand;
the configured rule (equal / proportional coefficients or rank-based
sequential fill, static or dynamic) distributes pooled surplus.  The
feeder-aware strategy allocates within each feeder first and pushes the
leftovers into a community-wide second phase; the feeder-agnostic strategy
runs a single community-wide phase.  Source attribution (same vs. other
feeder, per-prosumer sold vs. exported) is pro-rata by contribution mass.

The engine is vectorized across intervals: a whole block of intervals is
allocated with array operations, so a full year at one-minute resolution
is a handful of numpy passes.  Single-interval entry points wrap the block
path with T=1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .coefficients import CoefficientVector, RankOrder
from .model import (
    AllocationOutcome,
    CommunityConfig,
    FeederId,
    Method,
    NetPosition,
    ParticipantId,
    ParticipantProfile,
    Scheme,
    Strategy,
    validate_config,
)

DEFAULT_CHUNK = 1 << 16


def net_positions(generation: float, consumption: float) -> NetPosition:
    """Split one participant-interval into surplus and demand."""
    if not (math.isfinite(generation) and math.isfinite(consumption)):
        raise ValueError("generation and consumption must be finite")
    if generation < 0 or consumption < 0:
        raise ValueError("generation and consumption must be non-negative")
    return NetPosition(
        surplus=max(generation - consumption, 0.0),
        demand=max(consumption - generation, 0.0),
    )


def net_positions_block(generation: np.ndarray, consumption: np.ndarray):
    """Vectorized net positions; returns (surplus, demand) arrays."""
    diff = generation - consumption
    return np.maximum(diff, 0.0), np.maximum(-diff, 0.0)


# ---------------------------------------------------------------------------
# Community layout and precomputed (static) rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CommunityLayout:
    """Index structure: participants in lexicographic order, feeder groups."""

    ids: tuple[ParticipantId, ...]
    feeders: tuple[FeederId, ...]
    feeder_of: np.ndarray  # (N,) index into feeders
    members: tuple[np.ndarray, ...]  # per feeder, participant indices

    @classmethod
    def from_config(cls, config: CommunityConfig) -> "CommunityLayout":
        problems = validate_config(config)
        if problems:
            raise ValueError("invalid community config: " + "; ".join(problems))
        ids = tuple(config.participant_ids())
        feeders = tuple(config.feeder_ids())
        by_id = config.by_id()
        findex = {fid: k for k, fid in enumerate(feeders)}
        feeder_of = np.array([findex[by_id[pid].feeder] for pid in ids], dtype=np.intp)
        members = tuple(
            np.flatnonzero(feeder_of == k).astype(np.intp) for k in range(len(feeders))
        )
        feeder_of.setflags(write=False)
        return cls(ids=ids, feeders=feeders, feeder_of=feeder_of, members=members)

    @property
    def size(self) -> int:
        return len(self.ids)

    def index_of(self, pid: ParticipantId) -> int:
        return self.ids.index(pid)


@dataclass(frozen=True)
class AllocationRules:
    """Scheme/method selection plus any precomputed static coefficients.

    For static methods the per-feeder and community-wide coefficient
    vectors (or rank permutations) are fixed from annual demands; dynamic
    methods recompute them from current demands inside the block kernels.
    """

    scheme: Scheme
    method: Method
    feeder_alpha: np.ndarray | None = None  # (N,) coefficient within own feeder pool
    community_alpha: np.ndarray | None = None  # (N,)
    feeder_rank: tuple[np.ndarray, ...] | None = None  # per feeder, local fill order
    community_rank: np.ndarray | None = None  # (N,) permutation


def build_rules(
    layout: CommunityLayout,
    scheme: Scheme,
    method: Method,
    annual_demands: np.ndarray | None = None,
) -> AllocationRules:
    """Construct allocation rules; static methods require annual demands."""
    if method is Method.DYNAMIC:
        return AllocationRules(scheme=scheme, method=method)
    if annual_demands is None:
        raise ValueError("static methods require annual demands")
    annual = np.asarray(annual_demands, dtype=np.float64)
    if annual.shape != (layout.size,):
        raise ValueError("annual demands must align with the participant roster")

    n = layout.size
    if scheme is Scheme.EQUAL:
        feeder_alpha = np.empty(n)
        for members in layout.members:
            feeder_alpha[members] = 1.0 / members.size
        return AllocationRules(
            scheme=scheme,
            method=method,
            feeder_alpha=feeder_alpha,
            community_alpha=np.full(n, 1.0 / n),
        )
    if scheme is Scheme.PROPORTIONAL:
        feeder_alpha = np.zeros(n)
        for members in layout.members:
            total = annual[members].sum()
            if total > 0.0:
                feeder_alpha[members] = annual[members] / total
        total = annual.sum()
        community_alpha = annual / total if total > 0.0 else np.zeros(n)
        return AllocationRules(
            scheme=scheme,
            method=method,
            feeder_alpha=feeder_alpha,
            community_alpha=community_alpha,
        )
    # Rank: ascending annual demand, ties by lexicographic id (the
    # participant axis is already lexicographic, so a stable sort does it).
    feeder_rank = tuple(
        np.argsort(annual[members], kind="stable").astype(np.intp) for members in layout.members
    )
    community_rank = np.argsort(annual, kind="stable").astype(np.intp)
    return AllocationRules(
        scheme=scheme,
        method=method,
        feeder_rank=feeder_rank,
        community_rank=community_rank,
    )


# ---------------------------------------------------------------------------
# Block kernels
# ---------------------------------------------------------------------------


def _rank_fill(pool: np.ndarray, demands: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Sequential fill in the given order, vectorized over intervals.

    Walking the order and granting min(remaining, demand) is equivalent to
    min(demand, max(pool - demand already ahead in the queue, 0)).
    """
    if order.ndim == 1:
        d_sorted = demands[:, order]
        prev = np.cumsum(d_sorted, axis=1) - d_sorted
        rec_sorted = np.clip(pool[:, None] - prev, 0.0, d_sorted)
        received = np.empty_like(demands)
        received[:, order] = rec_sorted
        return received
    d_sorted = np.take_along_axis(demands, order, axis=1)
    prev = np.cumsum(d_sorted, axis=1) - d_sorted
    rec_sorted = np.clip(pool[:, None] - prev, 0.0, d_sorted)
    received = np.empty_like(demands)
    np.put_along_axis(received, order, rec_sorted, axis=1)
    return received


def _pool_receive(
    pool: np.ndarray,
    demands: np.ndarray,
    scheme: Scheme,
    method: Method,
    alpha: np.ndarray | None,
    order: np.ndarray | None,
) -> np.ndarray:
    """Allocate a (T,) pool against (T, M) demands under one rule.

    Coefficient rules are single-pass: received = min(alpha * pool, demand),
    with no redistribution of slack.  Rank rules fill sequentially.
    """
    if scheme is Scheme.RANK:
        if method is Method.DYNAMIC:
            # Stable sort on current demand; zero-demand rows sort first and
            # absorb nothing, which matches their exclusion from the order.
            order = np.argsort(demands, axis=1, kind="stable")
        return _rank_fill(pool, demands, order)

    if method is Method.STATIC:
        return np.minimum(alpha * pool[:, None], demands)

    if scheme is Scheme.EQUAL:
        needs = demands > 0.0
        n_need = needs.sum(axis=1)
        share = np.divide(pool, n_need, out=np.zeros_like(pool), where=n_need > 0)
        return np.where(needs, np.minimum(share[:, None], demands), 0.0)

    # dynamic proportional
    total = demands.sum(axis=1)
    scale = np.divide(pool, total, out=np.zeros_like(pool), where=total > 0.0)
    return np.minimum(demands * scale[:, None], demands)


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Elementwise num/den clipped to [0, 1], zero where den == 0."""
    out = np.divide(num, den, out=np.zeros_like(num), where=den > 0.0)
    return np.clip(out, 0.0, 1.0)


@dataclass
class BlockOutcome:
    """Allocation outcome for a block of intervals; all arrays are (T, N)."""

    start: int
    surplus: np.ndarray
    demand: np.ndarray
    allocated_same: np.ndarray
    allocated_other: np.ndarray
    grid_import: np.ndarray
    sold_community: np.ndarray
    grid_export: np.ndarray

    @property
    def intervals(self) -> int:
        return self.surplus.shape[0]


def allocate_block(
    surplus: np.ndarray,
    demand: np.ndarray,
    layout: CommunityLayout,
    strategy: Strategy,
    rules: AllocationRules,
    start: int = 0,
) -> BlockOutcome:
    """Allocate a (T, N) block of net positions under one strategy/rule."""
    if strategy is Strategy.FEEDER_AGNOSTIC:
        pool = surplus.sum(axis=1)
        received = _pool_receive(
            pool, demand, rules.scheme, rules.method, rules.community_alpha, rules.community_rank
        )
        leftover = np.maximum(pool - received.sum(axis=1), 0.0)

        feeder_surplus = np.stack(
            [surplus[:, m].sum(axis=1) for m in layout.members], axis=1
        )
        own_share = _safe_ratio(feeder_surplus[:, layout.feeder_of], pool[:, None])
        allocated_same = received * own_share
        allocated_other = received - allocated_same

        keep = _safe_ratio(leftover, pool)
        grid_export = surplus * keep[:, None]
        return BlockOutcome(
            start=start,
            surplus=surplus,
            demand=demand,
            allocated_same=allocated_same,
            allocated_other=allocated_other,
            grid_import=demand - received,
            sold_community=surplus - grid_export,
            grid_export=grid_export,
        )

    # Feeder-aware: phase 1 within each feeder, phase 2 community-wide.
    t = surplus.shape[0]
    n_feeders = len(layout.members)
    received1 = np.zeros_like(demand)
    feeder_pool = np.empty((t, n_feeders))
    feeder_leftover = np.empty((t, n_feeders))
    for k, members in enumerate(layout.members):
        pool_f = surplus[:, members].sum(axis=1)
        rec_f = _pool_receive(
            pool_f,
            demand[:, members],
            rules.scheme,
            rules.method,
            rules.feeder_alpha[members] if rules.feeder_alpha is not None else None,
            rules.feeder_rank[k] if rules.feeder_rank is not None else None,
        )
        received1[:, members] = rec_f
        feeder_pool[:, k] = pool_f
        feeder_leftover[:, k] = np.maximum(pool_f - rec_f.sum(axis=1), 0.0)

    residual = demand - received1
    merged = feeder_leftover.sum(axis=1)
    received2 = _pool_receive(
        merged, residual, rules.scheme, rules.method, rules.community_alpha, rules.community_rank
    )
    final_leftover = np.maximum(merged - received2.sum(axis=1), 0.0)

    # A recipient's own-feeder portion of the merged pool still counts as
    # same-feeder energy (the network discount keys on physical origin).
    own_share = _safe_ratio(feeder_leftover[:, layout.feeder_of], merged[:, None])
    same2 = received2 * own_share

    # Contributors keep their unconsumed share pro-rata through both phases.
    feeder_keep = _safe_ratio(feeder_leftover, feeder_pool)
    contrib_after1 = surplus * feeder_keep[:, layout.feeder_of]
    keep2 = _safe_ratio(final_leftover, merged)
    grid_export = contrib_after1 * keep2[:, None]

    return BlockOutcome(
        start=start,
        surplus=surplus,
        demand=demand,
        allocated_same=received1 + same2,
        allocated_other=received2 - same2,
        grid_import=residual - received2,
        sold_community=surplus - grid_export,
        grid_export=grid_export,
    )


# ---------------------------------------------------------------------------
# Single-pool operation (spec surface for one phase over one pool)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pool:
    """Offered surplus, tagged by contributing participant and feeder."""

    contributions: dict[tuple[ParticipantId, FeederId], float]

    def __post_init__(self):
        for (pid, fid), kwh in self.contributions.items():
            if kwh < 0:
                raise ValueError(f"negative contribution from {pid}@{fid}")

    @property
    def total(self) -> float:
        return math.fsum(self.contributions.values())

    def feeder_mass(self) -> dict[FeederId, float]:
        mass: dict[FeederId, float] = {}
        for (_, fid), kwh in self.contributions.items():
            mass[fid] = mass.get(fid, 0.0) + kwh
        return mass


@dataclass(frozen=True)
class PhaseResult:
    """Result of allocating one pool: per-recipient energy, reduced pool,
    and each recipient's split by contributing feeder."""

    received: dict[ParticipantId, float]
    leftover: Pool
    source_split: dict[ParticipantId, dict[FeederId, float]]

    @property
    def total_received(self) -> float:
        return math.fsum(self.received.values())


def allocate_pool(
    pool: Pool,
    demands: dict[ParticipantId, float],
    rule: CoefficientVector | RankOrder,
) -> PhaseResult:
    """Allocate one pool against current demands under one rule.

    Coefficient vectors allocate in a single pass (min(alpha * total,
    demand), slack stays in the pool); rank orders fill sequentially.
    Unconsumed contributions are reduced pro-rata, and each recipient's
    source split follows the pool's per-feeder composition.
    """
    total = pool.total
    received = {pid: 0.0 for pid in demands}
    if total > 0.0 and demands:
        if isinstance(rule, dict):
            for pid, demand in demands.items():
                alpha = rule.get(pid, 0.0)
                received[pid] = min(alpha * total, demand)
        else:
            remaining = total
            for pid in rule:
                if remaining <= 0.0:
                    break
                if pid in demands:
                    grant = min(remaining, demands[pid])
                    received[pid] = grant
                    remaining -= grant

    consumed = math.fsum(received.values())
    keep = 0.0 if total <= 0.0 else max(total - consumed, 0.0) / total
    leftover = Pool({key: kwh * keep for key, kwh in pool.contributions.items()})

    split: dict[ParticipantId, dict[FeederId, float]] = {}
    mass = pool.feeder_mass()
    for pid, kwh in received.items():
        if kwh > 0.0 and total > 0.0:
            split[pid] = {fid: kwh * m / total for fid, m in mass.items()}
        else:
            split[pid] = {}
    return PhaseResult(received=received, leftover=leftover, source_split=split)


# ---------------------------------------------------------------------------
# Single-interval strategy flows (T=1 wrappers over the block kernels)
# ---------------------------------------------------------------------------


def _interval_outcomes(
    positions: dict[ParticipantId, NetPosition],
    config: CommunityConfig,
    rules: AllocationRules,
    strategy: Strategy,
) -> dict[ParticipantId, AllocationOutcome]:
    layout = CommunityLayout.from_config(config)
    missing = [pid for pid in layout.ids if pid not in positions]
    if missing:
        raise ValueError(f"positions missing for participants: {missing}")
    surplus = np.array([[positions[pid].surplus for pid in layout.ids]])
    demand = np.array([[positions[pid].demand for pid in layout.ids]])
    block = allocate_block(surplus, demand, layout, strategy, rules)
    return {
        pid: AllocationOutcome(
            allocated_same=float(block.allocated_same[0, i]),
            allocated_other=float(block.allocated_other[0, i]),
            grid_import=float(block.grid_import[0, i]),
            sold_community=float(block.sold_community[0, i]),
            grid_export=float(block.grid_export[0, i]),
        )
        for i, pid in enumerate(layout.ids)
    }


def allocate_interval_feeder_aware(
    positions: dict[ParticipantId, NetPosition],
    config: CommunityConfig,
    rules: AllocationRules,
) -> dict[ParticipantId, AllocationOutcome]:
    """Two-phase allocation: within each feeder, then community-wide."""
    return _interval_outcomes(positions, config, rules, Strategy.FEEDER_AWARE)


def allocate_interval_feeder_agnostic(
    positions: dict[ParticipantId, NetPosition],
    config: CommunityConfig,
    rules: AllocationRules,
) -> dict[ParticipantId, AllocationOutcome]:
    """One-phase allocation over a single community-wide pool."""
    return _interval_outcomes(positions, config, rules, Strategy.FEEDER_AGNOSTIC)


# ---------------------------------------------------------------------------
# Full-horizon simulation
# ---------------------------------------------------------------------------


@dataclass
class ParticipantTotals:
    """Annual per-participant energy aggregates in kWh."""

    surplus: float = 0.0
    demand: float = 0.0
    allocated_same: float = 0.0
    allocated_other: float = 0.0
    grid_import: float = 0.0
    sold_community: float = 0.0
    grid_export: float = 0.0

    @property
    def allocated(self) -> float:
        return self.allocated_same + self.allocated_other


@dataclass
class SimulationResult:
    """Annual aggregates of one (strategy, scheme, method) run."""

    config: CommunityConfig
    layout: CommunityLayout
    interval_count: int
    totals: dict[ParticipantId, ParticipantTotals]
    annual_demands: dict[ParticipantId, float]
    stream: list[BlockOutcome] | None = None

    def community_totals(self) -> ParticipantTotals:
        return self._aggregate(self.layout.ids)

    def feeder_totals(self) -> dict[FeederId, ParticipantTotals]:
        return {
            fid: self._aggregate([self.layout.ids[i] for i in members])
            for fid, members in zip(self.layout.feeders, self.layout.members)
        }

    def _aggregate(self, ids: Iterable[ParticipantId]) -> ParticipantTotals:
        agg = ParticipantTotals()
        for pid in ids:
            t = self.totals[pid]
            agg.surplus += t.surplus
            agg.demand += t.demand
            agg.allocated_same += t.allocated_same
            agg.allocated_other += t.allocated_other
            agg.grid_import += t.grid_import
            agg.sold_community += t.sold_community
            agg.grid_export += t.grid_export
        return agg


_TOTAL_FIELDS = (
    "surplus",
    "demand",
    "allocated_same",
    "allocated_other",
    "grid_import",
    "sold_community",
    "grid_export",
)


def simulate(
    profiles: dict[ParticipantId, ParticipantProfile] | Iterable[ParticipantProfile],
    config: CommunityConfig,
    *,
    chunk_size: int = DEFAULT_CHUNK,
    block_hook: Callable[[BlockOutcome], None] | None = None,
    keep_stream: bool = False,
) -> SimulationResult:
    """Run the configured allocator over every interval of the profiles.

    Static rules are computed once from the year's demands (perfect
    foresight); dynamic rules are recomputed per interval inside the block
    kernels.  Intervals are processed in chunks; per-chunk partial sums are
    combined with exact (fsum) summation, so aggregation order cannot
    perturb annual totals.  ``block_hook`` receives every BlockOutcome as
    it is produced (used by verification); ``keep_stream`` retains the full
    outcome stream on the result, which is only sensible for small runs.
    """
    layout = CommunityLayout.from_config(config)
    if not isinstance(profiles, dict):
        profiles = {p.participant_id: p for p in profiles}
    missing = [pid for pid in layout.ids if pid not in profiles]
    if missing:
        raise ValueError(f"profiles missing for participants: {missing}")

    lengths = {len(profiles[pid]) for pid in layout.ids}
    if len(lengths) > 1:
        raise ValueError("profiles are not aligned: differing series lengths")
    t_total = lengths.pop() if lengths else 0

    gen_cols = [profiles[pid].generation.values for pid in layout.ids]
    con_cols = [profiles[pid].consumption.values for pid in layout.ids]
    n = layout.size

    # Pre-pass: annual demand per participant (drives the static rules).
    demand_parts: list[np.ndarray] = []
    for lo in range(0, t_total, chunk_size):
        hi = min(lo + chunk_size, t_total)
        gen = np.stack([col[lo:hi] for col in gen_cols], axis=1)
        con = np.stack([col[lo:hi] for col in con_cols], axis=1)
        _, dem = net_positions_block(gen, con)
        demand_parts.append(dem.sum(axis=0))
    annual = (
        np.array([math.fsum(part[i] for part in demand_parts) for i in range(n)])
        if demand_parts
        else np.zeros(n)
    )

    rules = build_rules(layout, config.scheme, config.method, annual)

    partials: dict[str, list[np.ndarray]] = {name: [] for name in _TOTAL_FIELDS}
    stream: list[BlockOutcome] | None = [] if keep_stream else None
    for lo in range(0, t_total, chunk_size):
        hi = min(lo + chunk_size, t_total)
        gen = np.stack([col[lo:hi] for col in gen_cols], axis=1)
        con = np.stack([col[lo:hi] for col in con_cols], axis=1)
        surplus, demand = net_positions_block(gen, con)
        block = allocate_block(surplus, demand, layout, config.strategy, rules, start=lo)
        for name in _TOTAL_FIELDS:
            partials[name].append(getattr(block, name).sum(axis=0))
        if block_hook is not None:
            block_hook(block)
        if stream is not None:
            stream.append(block)

    totals = {}
    for i, pid in enumerate(layout.ids):
        totals[pid] = ParticipantTotals(
            **{
                name: math.fsum(part[i] for part in partials[name])
                for name in _TOTAL_FIELDS
            }
        )
    return SimulationResult(
        config=config,
        layout=layout,
        interval_count=t_total,
        totals=totals,
        annual_demands={pid: float(annual[i]) for i, pid in enumerate(layout.ids)},
        stream=stream,
    )
