"""Member bills with and without community self-consumption, French tax structure.

A bill without participation charges supplier energy, excise duty and
network fees on every imported kWh, all inclusive of VAT, and credits
exports at the feed-in tariff (excl. VAT). Under community
self-consumption the supplier part shrinks to grid-drawn volumes only,
network charges stay on the full consumption, and locally sourced energy
is settled at the per-interval market price.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Community, Member, TariffSchedule

# French residential electricity excise, EUR/kWh excl. VAT.
EXCISE_RESIDENTIAL = 0.02998


@dataclass(frozen=True)
class BillBreakdown:
    """Variable bill components in EUR; every component is non-negative."""

    energy_cost: float = 0.0
    excise_cost: float = 0.0
    network_cost: float = 0.0
    csc_cost: float = 0.0
    producer_revenue: float = 0.0

    @property
    def total(self) -> float:
        return self.energy_cost + self.excise_cost + self.network_cost + self.csc_cost - self.producer_revenue


@dataclass(frozen=True)
class BillingContext:
    """Community-level billing inputs shared by all members."""

    tariffs: Mapping[str, TariffSchedule]
    community_max_excise: float
    pmo_fee: float = 0.0

    @classmethod
    def for_community(cls, community: Community, pmo_fee: float = 0.0) -> "BillingContext":
        return cls(community.tariffs, community_max_excise(community.members, community.tariffs), pmo_fee)


def community_max_excise(members: Iterable[Member], tariffs: Mapping[str, TariffSchedule]) -> float:
    """Highest excise rate applicable to any member of the community, EUR/kWh."""
    rates = [tariffs[m.tariff_id].excise_rate for m in members if m.tariff_id in tariffs]
    return max(rates, default=0.0)


def bid_price(member: Member, tariffs: Mapping[str, TariffSchedule], t: int) -> float:
    """Consumer-side reservation price at interval t, EUR/kWh.

    Supplier energy price plus excise, inflated by VAT; network charges are
    excluded because they are owed on local volumes too.
    """
    tariff = tariffs[member.tariff_id]
    energy = tariff.energy_price_at(member.imports.axis, t)
    return (energy + tariff.excise_rate) * (1.0 + tariff.vat_rate)


def bid_prices(member: Member, tariffs: Mapping[str, TariffSchedule]) -> np.ndarray:
    """Vector of :func:`bid_price` over the member's whole axis."""
    tariff = tariffs[member.tariff_id]
    energy = tariff.energy_prices(member.imports.axis)
    return (energy + tariff.excise_rate) * (1.0 + tariff.vat_rate)


def ask_price(member: Member, tariffs: Mapping[str, TariffSchedule], community_max_excise: float) -> float:
    """Producer-side reservation price, EUR/kWh.

    Feed-in tariff, plus the community's highest excise rate when the
    producer is excise-liable, the sum inflated by VAT when VAT-liable.
    """
    tariff = tariffs[member.tariff_id]
    price = tariff.export_tariff
    if member.fiscal.excise_liable:
        price += community_max_excise
    if member.fiscal.vat_liable:
        price *= 1.0 + tariff.vat_rate
    return price


def bill_without_csc(member: Member, tariffs: Mapping[str, TariffSchedule]) -> BillBreakdown:
    """Baseline bill: all imports from the supplier, all exports at the feed-in tariff."""
    tariff = tariffs[member.tariff_id]
    imports = member.imports.values
    exports = member.exports.values
    vat = 1.0 + tariff.vat_rate
    prices = tariff.energy_prices(member.imports.axis)
    return BillBreakdown(
        energy_cost=float(imports @ prices) * vat,
        excise_cost=float(imports.sum()) * tariff.excise_rate * vat,
        network_cost=float(imports.sum()) * tariff.network_charge * vat,
        csc_cost=0.0,
        producer_revenue=float(exports.sum()) * tariff.export_tariff,
    )


def _member_allocation_arrays(member: Member, outcomes: Sequence) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-interval allocated import, allocated export and market price for one member."""
    count = member.imports.axis.count
    if len(outcomes) != count:
        raise ValueError(f"{len(outcomes)} allocation outcomes for an axis of {count} intervals")
    e_csc = np.zeros(count)
    p_csc = np.zeros(count)
    prices = np.zeros(count)
    for outcome in outcomes:
        t = outcome.t
        if t < 0 or t >= count:
            raise ValueError(f"allocation outcome at interval {t} outside the member's axis")
        got = outcome.consumer_alloc.get(member.id)
        if got:
            e_csc[t] = got
        sold = outcome.producer_alloc.get(member.id)
        if sold:
            p_csc[t] = sold
        if outcome.price is not None:
            prices[t] = outcome.price
    return e_csc, p_csc, prices


def _bill_from_arrays(
    member: Member,
    tariff: TariffSchedule,
    e_csc: np.ndarray,
    p_csc: np.ndarray,
    prices: np.ndarray,
    context: BillingContext,
) -> BillBreakdown:
    imports = member.imports.values
    exports = member.exports.values
    vat = 1.0 + tariff.vat_rate
    grid = np.maximum(imports - e_csc, 0.0)
    energy_prices = tariff.energy_prices(member.imports.axis)

    network = (float(grid.sum()) * tariff.network_charge + float(e_csc.sum()) * tariff.csc_network_rate) * vat
    csc_cost = float(e_csc @ prices)

    grid_exports = np.maximum(exports - p_csc, 0.0)
    gross_sales = float(p_csc @ prices)
    receipts = gross_sales * (1.0 - context.pmo_fee)
    if member.fiscal.vat_liable:
        receipts -= gross_sales * tariff.vat_rate / vat
    if member.fiscal.excise_liable:
        receipts -= float(p_csc.sum()) * context.community_max_excise
    revenue = float(grid_exports.sum()) * tariff.export_tariff + receipts

    return BillBreakdown(
        energy_cost=float(grid @ energy_prices) * vat,
        excise_cost=float(grid.sum()) * tariff.excise_rate * vat,
        network_cost=network,
        csc_cost=csc_cost,
        producer_revenue=revenue,
    )


def bill_with_csc(member: Member, outcomes: Sequence, context: BillingContext) -> BillBreakdown:
    """Bill under community participation, given one allocation outcome per interval."""
    tariff = context.tariffs[member.tariff_id]
    e_csc, p_csc, prices = _member_allocation_arrays(member, outcomes)
    return _bill_from_arrays(member, tariff, e_csc, p_csc, prices, context)


def community_bills(
    community: Community, outcomes: Sequence, context: BillingContext
) -> dict[str, tuple[BillBreakdown, BillBreakdown]]:
    """(baseline, with-participation) bills for every member, one pass over the outcomes."""
    count = community.axis.count
    if len(outcomes) != count:
        raise ValueError(f"{len(outcomes)} allocation outcomes for an axis of {count} intervals")
    index = {m.id: i for i, m in enumerate(community.members)}
    e_csc = np.zeros((len(index), count))
    p_csc = np.zeros((len(index), count))
    prices = np.zeros(count)
    for outcome in outcomes:
        t = outcome.t
        for member_id, value in outcome.consumer_alloc.items():
            e_csc[index[member_id], t] = value
        for member_id, value in outcome.producer_alloc.items():
            p_csc[index[member_id], t] = value
        if outcome.price is not None:
            prices[t] = outcome.price
    bills = {}
    for i, member in enumerate(community.members):
        tariff = context.tariffs[member.tariff_id]
        baseline = bill_without_csc(member, context.tariffs)
        with_csc = _bill_from_arrays(member, tariff, e_csc[i], p_csc[i], prices, context)
        bills[member.id] = (baseline, with_csc)
    return bills


def utility(member: Member, outcomes: Sequence, context: BillingContext) -> float:
    """Financial benefit of participating: baseline total minus with-participation total, EUR."""
    return bill_without_csc(member, context.tariffs).total - bill_with_csc(member, outcomes, context).total
