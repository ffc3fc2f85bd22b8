"""Tariff settlement: converts allocation outcomes into money.

Baseline settlement prices each participant as if no community existed
(all demand at grid retail, all surplus at the feed-in price).  Community
settlement prices allocated energy at the community energy price plus a
discounted network charge (40% off for same-feeder energy, 20% off
cross-feeder) and full other charges; grid imports stay at retail.  Only
the energy component transfers between buyers and sellers, so network and
other charges are a pass-through to the grid operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .allocation import BlockOutcome, ParticipantTotals, SimulationResult
from .model import ABS_TOL, REL_TOL, ParticipantId, Tariff


class SettlementError(ValueError):
    """Raised when an outcome block violates an allocation identity."""


@dataclass(frozen=True)
class MoneyLine:
    """Per-participant money decomposition over a period (EUR)."""

    energy_cost: float = 0.0
    network_cost: float = 0.0
    other_cost: float = 0.0
    grid_revenue: float = 0.0
    community_revenue: float = 0.0

    @property
    def cost(self) -> float:
        return self.energy_cost + self.network_cost + self.other_cost

    @property
    def revenue(self) -> float:
        return self.grid_revenue + self.community_revenue

    def __add__(self, other: "MoneyLine") -> "MoneyLine":
        return MoneyLine(
            energy_cost=self.energy_cost + other.energy_cost,
            network_cost=self.network_cost + other.network_cost,
            other_cost=self.other_cost + other.other_cost,
            grid_revenue=self.grid_revenue + other.grid_revenue,
            community_revenue=self.community_revenue + other.community_revenue,
        )

    def rounded(self, digits: int = 4) -> "MoneyLine":
        return MoneyLine(
            energy_cost=round(self.energy_cost, digits),
            network_cost=round(self.network_cost, digits),
            other_cost=round(self.other_cost, digits),
            grid_revenue=round(self.grid_revenue, digits),
            community_revenue=round(self.community_revenue, digits),
        )


@dataclass(frozen=True)
class Benefit:
    """Baseline vs. community comparison for one participant or roll-up."""

    baseline_cost: float
    community_cost: float
    cost_reduction: float
    baseline_revenue: float
    community_revenue_total: float
    revenue_increase: float
    total_benefit: float


def _check_block(block: BlockOutcome, ids: tuple[ParticipantId, ...]) -> None:
    """Refuse the first interval whose outcome breaks an identity."""

    def _first_bad(mask: np.ndarray, identity: str):
        if mask.any():
            t, i = np.argwhere(mask)[0]
            raise SettlementError(
                f"interval {block.start + int(t)}, participant {ids[int(i)]}: {identity}"
            )

    allocated = block.allocated_same + block.allocated_other
    tol = np.maximum(ABS_TOL, REL_TOL * block.demand)
    for name in ("allocated_same", "allocated_other", "grid_import", "sold_community", "grid_export"):
        _first_bad(getattr(block, name) < -ABS_TOL, f"{name} is negative")
    _first_bad(allocated > block.demand + tol, "allocated energy exceeds demand")
    _first_bad(
        np.abs(block.demand - allocated - block.grid_import) > tol,
        "grid_import != demand - allocated",
    )
    tol_s = np.maximum(ABS_TOL, REL_TOL * block.surplus)
    _first_bad(
        np.abs(block.sold_community + block.grid_export - block.surplus) > tol_s,
        "sold_community + grid_export != surplus",
    )

    shared_in = allocated.sum(axis=1)
    shared_out = block.sold_community.sum(axis=1)
    bal_tol = np.maximum(ABS_TOL, REL_TOL * np.maximum(shared_in, shared_out))
    bad = np.abs(shared_in - shared_out) > bal_tol
    if bad.any():
        t = int(np.flatnonzero(bad)[0])
        raise SettlementError(
            f"interval {block.start + t}: community balance broken "
            f"(allocated {shared_in[t]:.12g} kWh vs sold {shared_out[t]:.12g} kWh)"
        )


def baseline_settle(
    surplus: np.ndarray,
    demand: np.ndarray,
    ids: tuple[ParticipantId, ...],
    tariff: Tariff,
) -> dict[ParticipantId, MoneyLine]:
    """Settle (T, N) net positions as if each participant stood alone."""
    dem = demand.sum(axis=0)
    sur = surplus.sum(axis=0)
    return {
        pid: MoneyLine(
            energy_cost=float(dem[i]) * tariff.grid_energy_price,
            network_cost=float(dem[i]) * tariff.grid_network_price,
            other_cost=float(dem[i]) * tariff.grid_other_price,
            grid_revenue=float(sur[i]) * tariff.feed_in_price,
        )
        for i, pid in enumerate(ids)
    }


def community_settle(
    block: BlockOutcome,
    ids: tuple[ParticipantId, ...],
    tariff: Tariff,
) -> dict[ParticipantId, MoneyLine]:
    """Settle an outcome block under community tariffs.

    The block is validated first; a violated identity refuses settlement
    with the interval index and the identity that broke.
    """
    _check_block(block, ids)
    same = block.allocated_same.sum(axis=0)
    other = block.allocated_other.sum(axis=0)
    imp = block.grid_import.sum(axis=0)
    sold = block.sold_community.sum(axis=0)
    exp = block.grid_export.sum(axis=0)
    return {
        pid: _community_money(
            float(same[i]), float(other[i]), float(imp[i]), float(sold[i]), float(exp[i]), tariff
        )
        for i, pid in enumerate(ids)
    }


def _community_money(
    same: float, other: float, imp: float, sold: float, exp: float, tariff: Tariff
) -> MoneyLine:
    return MoneyLine(
        energy_cost=(same + other) * tariff.community_energy_price
        + imp * tariff.grid_energy_price,
        network_cost=same * tariff.grid_network_price * (1.0 - tariff.same_feeder_network_discount)
        + other * tariff.grid_network_price * (1.0 - tariff.other_feeder_network_discount)
        + imp * tariff.grid_network_price,
        other_cost=(same + other + imp) * tariff.grid_other_price,
        grid_revenue=exp * tariff.feed_in_price,
        community_revenue=sold * tariff.community_energy_price,
    )


def settle_result(result: SimulationResult):
    """Baseline and community money lines for a finished simulation.

    Tariffs are flat, so pricing the annual per-participant totals is the
    exact sum of per-interval settlements (no time-of-use structure to
    lose).  Returns (baseline, community) dicts keyed by participant.
    """
    tariff = result.config.tariff
    baseline = {}
    community = {}
    for pid, t in result.totals.items():
        baseline[pid] = MoneyLine(
            energy_cost=t.demand * tariff.grid_energy_price,
            network_cost=t.demand * tariff.grid_network_price,
            other_cost=t.demand * tariff.grid_other_price,
            grid_revenue=t.surplus * tariff.feed_in_price,
        )
        community[pid] = _community_money(
            t.allocated_same, t.allocated_other, t.grid_import, t.sold_community, t.grid_export, tariff
        )
    return baseline, community


def benefits(
    baseline: dict[ParticipantId, MoneyLine],
    community: dict[ParticipantId, MoneyLine],
) -> dict[ParticipantId, Benefit]:
    """Per-participant benefit report; both settlements must cover the
    same participant set."""
    missing = set(baseline) ^ set(community)
    if missing:
        raise ValueError(f"participant sets differ between settlements: {sorted(missing)}")
    out = {}
    for pid in baseline:
        base, comm = baseline[pid], community[pid]
        cost_reduction = base.cost - comm.cost
        revenue_increase = comm.revenue - base.revenue
        out[pid] = Benefit(
            baseline_cost=base.cost,
            community_cost=comm.cost,
            cost_reduction=cost_reduction,
            baseline_revenue=base.revenue,
            community_revenue_total=comm.revenue,
            revenue_increase=revenue_increase,
            total_benefit=cost_reduction + revenue_increase,
        )
    return out


def rollup(
    per_participant: dict[ParticipantId, Benefit],
    groups: dict[str, list[ParticipantId]],
) -> dict[str, Benefit]:
    """Sum per-participant benefits over named groups (feeders, community)."""
    out = {}
    for name, members in groups.items():
        rows = [per_participant[pid] for pid in members]
        cost_reduction = math.fsum(r.cost_reduction for r in rows)
        revenue_increase = math.fsum(r.revenue_increase for r in rows)
        out[name] = Benefit(
            baseline_cost=math.fsum(r.baseline_cost for r in rows),
            community_cost=math.fsum(r.community_cost for r in rows),
            cost_reduction=cost_reduction,
            baseline_revenue=math.fsum(r.baseline_revenue for r in rows),
            community_revenue_total=math.fsum(r.community_revenue_total for r in rows),
            revenue_increase=revenue_increase,
            total_benefit=cost_reduction + revenue_increase,
        )
    return out


def alternative_other_charge_cost(totals: ParticipantTotals, tariff: Tariff) -> float:
    """Community cost under the alternate reading where the feeder discounts
    also apply to the other-charges component (debug figure only)."""
    adopted = _community_money(
        totals.allocated_same,
        totals.allocated_other,
        totals.grid_import,
        totals.sold_community,
        totals.grid_export,
        tariff,
    ).cost
    delta = (
        totals.allocated_same * tariff.grid_other_price * tariff.same_feeder_network_discount
        + totals.allocated_other * tariff.grid_other_price * tariff.other_feeder_network_discount
    )
    return adopted - delta
