"""Sharing-coefficient rules: equal, proportional and rank-based, each in a
static (from annual demand) and a dynamic (from current demand) variant.

Coefficient vectors map participant id -> fraction of the pool's surplus;
non-empty vectors sum to 1.  Rank orders list participants lowest-demand
first and are consumed by sequential-fill allocation.  All functions are
pure and freely parallelizable across intervals.
"""

from __future__ import annotations

from .model import Method, ParticipantId

# A coefficient vector assigns each eligible participant its fraction of the
# surplus pool; a rank order is an ascending-demand fill sequence.
CoefficientVector = dict[ParticipantId, float]
RankOrder = list[ParticipantId]


def static_equal(pool: list[ParticipantId]) -> CoefficientVector:
    """Equal static coefficients: every pool member gets 1/len(pool)."""
    if not pool:
        return {}
    alpha = 1.0 / len(pool)
    return {pid: alpha for pid in pool}


def dynamic_equal(pool_demands: dict[ParticipantId, float]) -> CoefficientVector:
    """Equal dynamic coefficients over participants that currently need energy.

    Zero-demand participants are excluded from the vector entirely.
    """
    needers = [pid for pid, demand in pool_demands.items() if demand > 0.0]
    if not needers:
        return {}
    alpha = 1.0 / len(needers)
    return {pid: alpha for pid in needers}


def static_proportional(annual_demands: dict[ParticipantId, float]) -> CoefficientVector:
    """Coefficients proportional to each participant's annual demand."""
    total = sum(annual_demands.values())
    if total <= 0.0:
        return {}
    return {pid: demand / total for pid, demand in annual_demands.items()}


def dynamic_proportional(pool_demands: dict[ParticipantId, float]) -> CoefficientVector:
    """Coefficients proportional to current demand; zero-demand excluded."""
    total = sum(pool_demands.values())
    if total <= 0.0:
        return {}
    return {pid: demand / total for pid, demand in pool_demands.items() if demand > 0.0}


def rank_order(demands: dict[ParticipantId, float], method: Method) -> RankOrder:
    """Ascending-demand order, ties broken lexicographically by id.

    Static ranking keeps every participant (a zero annual demand simply
    ranks first); dynamic ranking drops current zero-demand participants,
    mirroring the dynamic-equal exclusion rule.
    """
    items = demands.items()
    if method is Method.DYNAMIC:
        items = [(pid, d) for pid, d in items if d > 0.0]
    return [pid for pid, _ in sorted(items, key=lambda kv: (kv[1], kv[0]))]
