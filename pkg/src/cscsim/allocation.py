"""The four a-posteriori distribution mechanisms of a local energy market.

Each mechanism splits the per-interval community energy, the minimum of
total imports and total exports, across the consumer side and the
producer side independently. All of them settle at one uniform price per
interval: the midpoint between the highest awarded ask and the lowest
awarded bid.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import billing
from .core import EPSILON_E, Community

PRO_RATA = "prorata"
GLASS_FILLING = "glass"
PRIORITY_GLASS_FILLING = "priority-glass"
DOUBLE_AUCTION = "auction"
MECHANISMS = (PRO_RATA, GLASS_FILLING, PRIORITY_GLASS_FILLING, DOUBLE_AUCTION)

FLAG_PRICE_INVERSION = "price-inversion"

# Cumulative energies are snapped to 1 Wh before priority grouping so that
# float noise cannot split members into spurious levels.
_PRIORITY_QUANTUM_KWH = 0.001

DEFAULT_PRIORITY_WINDOW = timedelta(days=365)


@dataclass(slots=True)
class AllocationOutcome:
    """Allocated community energy at one interval, per consumer and per producer."""

    t: int
    consumer_alloc: dict[str, float]
    producer_alloc: dict[str, float]
    price: float | None = None
    flags: frozenset[str] = frozenset()


def community_energy(imports_t: Mapping[str, float], exports_t: Mapping[str, float]) -> float:
    """Energy available for local allocation: min(total imports, total exports), kWh."""
    return min(sum(imports_t.values()), sum(exports_t.values()))


def glass_fill(quantities: Mapping[str, float], total: float) -> dict[str, float]:
    """Iterative equal-share split of ``total`` capped by each member's quantity.

    Every round hands the remaining surplus out in equal shares; members
    that hit their cap drop out and their surplus is redistributed. The
    result is the water-filling allocation min(quantity, level).
    """
    alloc = {member: 0.0 for member in quantities}
    eligible = [member for member, quantity in quantities.items() if quantity > 0.0]
    while eligible:
        surplus = total - sum(alloc.values())
        if surplus <= EPSILON_E:
            break
        share = surplus / len(eligible)
        for member in eligible:
            alloc[member] = min(quantities[member], alloc[member] + share)
        eligible = [member for member in eligible if alloc[member] < quantities[member]]
    return alloc


def fill_levels(
    quantities: Mapping[str, float], levels: Iterable[Sequence[str]], total: float
) -> dict[str, float]:
    """Glass-fill successive priority levels until ``total`` runs out."""
    alloc = {member: 0.0 for member in quantities}
    remaining = total
    for level in levels:
        if remaining <= EPSILON_E:
            break
        filled = glass_fill({member: quantities[member] for member in level}, remaining)
        alloc.update(filled)
        remaining -= sum(filled.values())
    return alloc


def _active(quantities: Mapping[str, float]) -> dict[str, float]:
    return {member: q for member, q in quantities.items() if q > 0.0}


def allocate_pro_rata(
    imports_t: Mapping[str, float], exports_t: Mapping[str, float], *, t: int = 0
) -> AllocationOutcome:
    """Split the community energy proportionally to each side's metered quantities."""
    consumers = _active(imports_t)
    producers = _active(exports_t)
    total = min(sum(consumers.values()), sum(producers.values()))
    if total <= 0.0:
        return AllocationOutcome(t, {}, {})
    demand = sum(consumers.values())
    supply = sum(producers.values())
    consumer_alloc = {member: q / demand * total for member, q in consumers.items()}
    producer_alloc = {member: q / supply * total for member, q in producers.items()}
    return AllocationOutcome(t, consumer_alloc, producer_alloc)


def allocate_glass_filling(
    imports_t: Mapping[str, float], exports_t: Mapping[str, float], *, t: int = 0
) -> AllocationOutcome:
    """Equal-share split with surplus redistribution on both sides."""
    consumers = _active(imports_t)
    producers = _active(exports_t)
    total = min(sum(consumers.values()), sum(producers.values()))
    if total <= 0.0:
        return AllocationOutcome(t, {}, {})
    return AllocationOutcome(t, glass_fill(consumers, total), glass_fill(producers, total))


@dataclass
class PriorityState:
    """Rolling record of community energy already granted to each member.

    Consumer-side and producer-side totals are tracked independently.
    ``window_intervals`` bounds how long a contribution counts; ``None``
    means contributions never expire (a run no longer than the window).
    """

    window_intervals: int | None = None
    consumer_cumulative: dict[str, float] = field(default_factory=dict)
    producer_cumulative: dict[str, float] = field(default_factory=dict)
    _history: deque = field(default_factory=deque)

    def expire(self, t: int) -> None:
        """Drop contributions recorded at or before ``t - window``."""
        if self.window_intervals is None:
            return
        while self._history and self._history[0][0] <= t - self.window_intervals:
            _, consumer_alloc, producer_alloc = self._history.popleft()
            for member, value in consumer_alloc.items():
                self.consumer_cumulative[member] -= value
            for member, value in producer_alloc.items():
                self.producer_cumulative[member] -= value

    def record(self, t: int, consumer_alloc: Mapping[str, float], producer_alloc: Mapping[str, float]) -> None:
        granted_c = {m: v for m, v in consumer_alloc.items() if v > 0.0}
        granted_p = {m: v for m, v in producer_alloc.items() if v > 0.0}
        for member, value in granted_c.items():
            self.consumer_cumulative[member] = self.consumer_cumulative.get(member, 0.0) + value
        for member, value in granted_p.items():
            self.producer_cumulative[member] = self.producer_cumulative.get(member, 0.0) + value
        if self.window_intervals is not None and (granted_c or granted_p):
            self._history.append((t, granted_c, granted_p))

    def levels(self, cumulative: Mapping[str, float], members: Iterable[str]) -> list[list[str]]:
        """Group members into priority levels, least served first; missing ids count as zero."""
        by_level: dict[int, list[str]] = {}
        for member in members:
            key = int(round(cumulative.get(member, 0.0) / _PRIORITY_QUANTUM_KWH))
            by_level.setdefault(key, []).append(member)
        return [by_level[key] for key in sorted(by_level)]


def allocate_prioritized_glass_filling(
    imports_t: Mapping[str, float],
    exports_t: Mapping[str, float],
    state: PriorityState,
    *,
    t: int = 0,
) -> tuple[AllocationOutcome, PriorityState]:
    """Glass-filling served level by level, least-served members first.

    Mutates ``state`` with this interval's grants and returns it alongside
    the outcome; intervals must therefore be processed in time order.
    """
    state.expire(t)
    consumers = _active(imports_t)
    producers = _active(exports_t)
    total = min(sum(consumers.values()), sum(producers.values()))
    if total <= 0.0:
        return AllocationOutcome(t, {}, {}), state
    consumer_alloc = fill_levels(consumers, state.levels(state.consumer_cumulative, consumers), total)
    producer_alloc = fill_levels(producers, state.levels(state.producer_cumulative, producers), total)
    state.record(t, consumer_alloc, producer_alloc)
    return AllocationOutcome(t, consumer_alloc, producer_alloc), state


def _price_levels(quantities: Mapping[str, float], prices: Mapping[str, float], descending: bool) -> list[list[str]]:
    by_price: dict[float, list[str]] = {}
    for member in quantities:
        if member not in prices:
            raise KeyError(f"no price for active member {member!r}")
        by_price.setdefault(prices[member], []).append(member)
    return [by_price[price] for price in sorted(by_price, reverse=descending)]


def allocate_double_auction(
    imports_t: Mapping[str, float],
    exports_t: Mapping[str, float],
    bid_prices: Mapping[str, float],
    ask_prices: Mapping[str, float],
    *,
    t: int = 0,
) -> AllocationOutcome:
    """Uniform-price double auction: glass-filling with price priority.

    Consumers are served in descending bid order, producers in ascending
    ask order. The full community energy is traded even when the marginal
    bid falls below the marginal ask; such outcomes carry a
    price-inversion flag instead of being truncated.
    """
    consumers = _active(imports_t)
    producers = _active(exports_t)
    total = min(sum(consumers.values()), sum(producers.values()))
    if total <= 0.0:
        return AllocationOutcome(t, {}, {})
    consumer_alloc = fill_levels(consumers, _price_levels(consumers, bid_prices, descending=True), total)
    producer_alloc = fill_levels(producers, _price_levels(producers, ask_prices, descending=False), total)
    outcome = AllocationOutcome(t, consumer_alloc, producer_alloc)
    outcome.price = clearing_price(outcome, bid_prices, ask_prices)
    outcome.flags = _inversion_flags(outcome, bid_prices, ask_prices)
    return outcome


def clearing_price(
    outcome: AllocationOutcome, bid_prices: Mapping[str, float], ask_prices: Mapping[str, float]
) -> float | None:
    """Uniform market price: midpoint of highest awarded ask and lowest awarded bid.

    Absent when no energy was traded. The same rule prices all mechanisms.
    """
    awarded_bids = [bid_prices[m] for m, v in outcome.consumer_alloc.items() if v > EPSILON_E]
    awarded_asks = [ask_prices[m] for m, v in outcome.producer_alloc.items() if v > EPSILON_E]
    if not awarded_bids or not awarded_asks:
        return None
    return (max(awarded_asks) + min(awarded_bids)) / 2.0


def _inversion_flags(
    outcome: AllocationOutcome, bid_prices: Mapping[str, float], ask_prices: Mapping[str, float]
) -> frozenset[str]:
    awarded_bids = [bid_prices[m] for m, v in outcome.consumer_alloc.items() if v > EPSILON_E]
    awarded_asks = [ask_prices[m] for m, v in outcome.producer_alloc.items() if v > EPSILON_E]
    if awarded_bids and awarded_asks and max(awarded_asks) > min(awarded_bids) + 1e-12:
        return frozenset({FLAG_PRICE_INVERSION})
    return frozenset()


def run_mechanism(
    community: Community,
    mechanism: str,
    context: billing.BillingContext,
    *,
    priority_window: timedelta = DEFAULT_PRIORITY_WINDOW,
) -> list[AllocationOutcome]:
    """Run one mechanism over every interval of the community, in time order.

    Returns one outcome per interval, each carrying the uniform clearing
    price and a price-inversion flag where the awarded marginal prices
    crossed. Deterministic for fixed inputs.
    """
    if mechanism not in MECHANISMS:
        raise ValueError(f"unknown mechanism {mechanism!r}; expected one of {MECHANISMS}")
    axis = community.axis
    members = community.members
    ids = [m.id for m in members]
    imports = np.stack([m.imports.values for m in members]).T.copy() if members else np.zeros((axis.count, 0))
    exports = np.stack([m.exports.values for m in members]).T.copy() if members else np.zeros((axis.count, 0))
    bids = np.stack([billing.bid_prices(m, context.tariffs) for m in members]).T.copy() if members else None
    asks = {m.id: billing.ask_price(m, context.tariffs, context.community_max_excise) for m in members}

    state = PriorityState(window_intervals=_window_intervals(priority_window, axis))
    outcomes: list[AllocationOutcome] = []
    for t in range(axis.count):
        import_row = imports[t]
        export_row = exports[t]
        if min(import_row.sum(), export_row.sum()) <= 0.0:
            if mechanism == PRIORITY_GLASS_FILLING:
                state.expire(t)
            outcomes.append(AllocationOutcome(t, {}, {}))
            continue
        imports_t = {ids[i]: import_row[i] for i in np.nonzero(import_row > 0.0)[0]}
        exports_t = {ids[i]: export_row[i] for i in np.nonzero(export_row > 0.0)[0]}
        if mechanism == PRO_RATA:
            outcome = allocate_pro_rata(imports_t, exports_t, t=t)
        elif mechanism == GLASS_FILLING:
            outcome = allocate_glass_filling(imports_t, exports_t, t=t)
        elif mechanism == PRIORITY_GLASS_FILLING:
            outcome, state = allocate_prioritized_glass_filling(imports_t, exports_t, state, t=t)
        else:
            bid_row = bids[t]
            bids_t = {member: bid_row[i] for i, member in enumerate(ids) if member in imports_t}
            outcome = allocate_double_auction(imports_t, exports_t, bids_t, asks, t=t)
        if outcome.price is None:
            bid_row = bids[t]
            bids_t = {member: bid_row[i] for i, member in enumerate(ids)}
            outcome.price = clearing_price(outcome, bids_t, asks)
            outcome.flags = _inversion_flags(outcome, bids_t, asks)
        outcomes.append(outcome)
    return outcomes


def _window_intervals(window: timedelta, axis) -> int | None:
    intervals = round(window / axis.step)
    if intervals >= axis.count:
        return None
    return intervals
