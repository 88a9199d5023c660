"""Fairness indicators over annual member utilities.

Utilities are the bill reduction each member obtained by participating,
in EUR. Indicators cover equality (Jain index), Rawlsian min-max, a
scalable meritocracy measure built on each member's contribution to the
community's trading potential, utilitarian welfare and need-weighted
welfare. Degenerate inputs (all-zero utilities, zero total contribution)
yield ``None`` rather than NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import Community, net_injections


def jain_index(utilities: Mapping[str, float]) -> float | None:
    """Equality indicator in [1/n, 1]; 1 iff all utilities are equal."""
    values = np.fromiter(utilities.values(), dtype=float)
    if values.size == 0:
        return None
    square_sum = float(values @ values)
    if square_sum == 0.0:
        return None
    return float(values.sum()) ** 2 / (values.size * square_sum)


def min_max_ratio(utilities: Mapping[str, float]) -> float | None:
    """Rawlsian indicator min/max; negative when some member was harmed."""
    values = list(utilities.values())
    if not values or max(values) == 0.0:
        return None
    return min(values) / max(values)


def contribution(net_member: np.ndarray, net_others: np.ndarray) -> float:
    """Member's contribution to community trades, kWh^2.

    High for members who export while the rest of the community imports or
    vice versa; the min() caps credit for over-producing or over-consuming
    beyond what the counterparty side can absorb.
    """
    member = np.asarray(net_member, dtype=float)
    others = np.asarray(net_others, dtype=float)
    if member.shape != others.shape:
        raise ValueError("net-injection series are not aligned")
    overlap = np.minimum(np.abs(member), np.abs(others))
    return float(np.sum(-np.sign(member) * overlap * others))


def community_contributions(community: Community) -> dict[str, float]:
    """Contribution of every member, computed from one pass over the net injections."""
    nets = np.stack([net_injections(m) for m in community.members])
    total = nets.sum(axis=0)
    return {
        member.id: contribution(nets[i], total - nets[i])
        for i, member in enumerate(community.members)
    }


def meritocratic_index(utilities: Mapping[str, float], contributions: Mapping[str, float]) -> float | None:
    """RMS gap between actual utilities and contribution-proportional shares, EUR.

    Zero iff utilities are exactly proportional to contributions; lower is
    more meritocratic. ``None`` when contributions sum to zero.
    """
    total_contribution = sum(contributions[m] for m in utilities)
    if total_contribution == 0.0:
        return None
    total_utility = sum(utilities.values())
    gaps = [
        u - contributions[m] / total_contribution * total_utility
        for m, u in utilities.items()
    ]
    return math.sqrt(sum(g * g for g in gaps) / len(gaps))


def social_welfare(utilities: Mapping[str, float]) -> float:
    """Utilitarian indicator: total community benefit, EUR."""
    return sum(utilities.values())


def weighted_utility(utilities: Mapping[str, float], weights: Mapping[str, float]) -> float:
    """Need-based indicator: utilities weighted by user-supplied needs."""
    missing = [m for m in utilities if m not in weights]
    if missing:
        raise KeyError(f"no weight for member(s) {missing}")
    return sum(weights[m] * u for m, u in utilities.items())


@dataclass(frozen=True)
class FairnessReport:
    """All indicators for one community under one mechanism."""

    jain: float | None
    min_max: float | None
    meritocratic_index: float | None
    social_welfare: float
    weighted_utility: float | None
    per_member_contribution: Mapping[str, float]


def compute_report(
    utilities: Mapping[str, float],
    contributions: Mapping[str, float],
    weights: Mapping[str, float] | None = None,
) -> FairnessReport:
    return FairnessReport(
        jain=jain_index(utilities),
        min_max=min_max_ratio(utilities),
        meritocratic_index=meritocratic_index(utilities, contributions),
        social_welfare=social_welfare(utilities),
        weighted_utility=None if weights is None else weighted_utility(utilities, weights),
        per_member_contribution=dict(contributions),
    )


def normalize_reports(reports: Mapping[str, FairnessReport]) -> dict[str, dict[str, float | None]]:
    """Rescale indicators to [0, 1] across mechanisms at one fixed uptake.

    Jain and min-max pass through unchanged (already ratio scaled). Social
    welfare is divided by the maximum across mechanisms. The meritocratic
    index maps to 1 - x/max so that 1 marks the most meritocratic
    mechanism. Degenerate values stay ``None``.
    """
    welfare_values = [r.social_welfare for r in reports.values()]
    max_welfare = max(welfare_values, default=0.0)
    merit_values = [r.meritocratic_index for r in reports.values() if r.meritocratic_index is not None]
    max_merit = max(merit_values, default=0.0)

    normalized: dict[str, dict[str, float | None]] = {}
    for mechanism, report in reports.items():
        welfare = report.social_welfare / max_welfare if max_welfare > 0.0 else None
        if report.meritocratic_index is None:
            merit = None
        elif max_merit == 0.0:
            merit = 1.0
        else:
            merit = 1.0 - report.meritocratic_index / max_merit
        normalized[mechanism] = {
            "jain": report.jain,
            "min_max": report.min_max,
            "merit_index": merit,
            "social_welfare": welfare,
        }
    return normalized
