"""Shared data model for collective self-consumption communities.

Energy flows are uniform-interval series in kWh (15 minutes by default),
one import and one export series per member, as a DSO would meter them.
All types are treated as immutable after construction and all operations
are pure, so everything here is safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

# Tolerance for energy equality / saturation comparisons, in kWh.
# Far below the 1 Wh resolution of a residential meter.
EPSILON_E = 1e-9

DEFAULT_STEP = timedelta(minutes=15)
INTERVALS_PER_DAY = int(timedelta(days=1) / DEFAULT_STEP)


@dataclass(frozen=True)
class TimeAxis:
    """Uniform interval grid shared by every series in one community."""

    start: datetime
    step: timedelta = DEFAULT_STEP
    count: int = 0

    def __post_init__(self) -> None:
        if self.start.tzinfo is None:
            object.__setattr__(self, "start", self.start.replace(tzinfo=timezone.utc))
        if self.step <= timedelta(0):
            raise ValueError("step must be positive")
        if self.count <= 0:
            raise ValueError("count must be positive")

    @classmethod
    def for_days(cls, year: int, days: int = 365, step: timedelta = DEFAULT_STEP) -> "TimeAxis":
        start = datetime(year, 1, 1, tzinfo=timezone.utc)
        count = round(days * timedelta(days=1) / step)
        return cls(start, step, count)

    @property
    def step_hours(self) -> float:
        return self.step.total_seconds() / 3600.0

    @property
    def total_hours(self) -> float:
        return self.count * self.step_hours

    def timestamp(self, t: int) -> datetime:
        return self.start + t * self.step

    def timestamps(self) -> list[datetime]:
        return [self.start + t * self.step for t in range(self.count)]


@lru_cache(maxsize=64)
def _epoch_seconds(axis: TimeAxis) -> np.ndarray:
    start = axis.start.timestamp()
    step = axis.step.total_seconds()
    return start + step * np.arange(axis.count)


def hour_of_day(axis: TimeAxis) -> np.ndarray:
    """Fractional hour of day in [0, 24) for each interval start."""
    return (_epoch_seconds(axis) % 86400.0) / 3600.0


def day_of_week(axis: TimeAxis) -> np.ndarray:
    """Weekday index per interval, 0 = Monday (epoch day 0 was a Thursday)."""
    return ((_epoch_seconds(axis) // 86400).astype(np.int64) + 3) % 7


def day_of_year(axis: TimeAxis) -> np.ndarray:
    """Fractional 1-based day of year per interval; runs past 365 across a year boundary."""
    jan1 = datetime(axis.start.year, 1, 1, tzinfo=timezone.utc).timestamp()
    return (_epoch_seconds(axis) - jan1) / 86400.0 + 1.0


def day_index(axis: TimeAxis) -> np.ndarray:
    """Calendar-day counter per interval, 0 for the axis' first day."""
    days = (_epoch_seconds(axis) // 86400).astype(np.int64)
    return days - days[0]


@dataclass(frozen=True)
class TimeOfUsePrice:
    """Two-band daily price: peak rate inside [start, end) hours, off-peak outside."""

    peak: float
    off_peak: float
    peak_start_hour: float = 7.0
    peak_end_hour: float = 23.0


@dataclass(frozen=True)
class TariffSchedule:
    """Supplier tariff components, all rates in EUR/kWh excluding VAT.

    ``csc_network_charge`` is the optional differentiated network rate for
    locally sourced volumes; ``None`` means the grid rate applies to both.
    """

    energy_price: float | TimeOfUsePrice
    network_charge: float
    excise_rate: float
    vat_rate: float
    export_tariff: float
    csc_network_charge: float | None = None

    def energy_price_at(self, axis: TimeAxis, t: int) -> float:
        if isinstance(self.energy_price, TimeOfUsePrice):
            band = self.energy_price
            h = hour_of_day(axis)[t]
            return band.peak if band.peak_start_hour <= h < band.peak_end_hour else band.off_peak
        return self.energy_price

    def energy_prices(self, axis: TimeAxis) -> np.ndarray:
        if isinstance(self.energy_price, TimeOfUsePrice):
            band = self.energy_price
            h = hour_of_day(axis)
            in_peak = (h >= band.peak_start_hour) & (h < band.peak_end_hour)
            return np.where(in_peak, band.peak, band.off_peak)
        return np.full(axis.count, float(self.energy_price))

    @property
    def csc_network_rate(self) -> float:
        return self.network_charge if self.csc_network_charge is None else self.csc_network_charge


@dataclass(frozen=True)
class FiscalStatus:
    vat_liable: bool = False
    excise_liable: bool = False


RESIDENTIAL = FiscalStatus()


@dataclass(eq=False)
class EnergySeries:
    """Non-negative energy per interval, kWh. Imports and exports are separate series."""

    axis: TimeAxis
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)

    def total(self) -> float:
        return float(self.values.sum())


@dataclass(eq=False)
class Member:
    id: str
    imports: EnergySeries
    exports: EnergySeries
    tariff_id: str
    fiscal: FiscalStatus = RESIDENTIAL


def member_role(member: Member) -> str:
    """Derived classification: 'consumer', 'producer' or 'prosumer'."""
    has_imports = bool(np.any(member.imports.values > 0.0))
    has_exports = bool(np.any(member.exports.values > 0.0))
    if has_exports and has_imports:
        return "prosumer"
    if has_exports:
        return "producer"
    return "consumer"


def net_injection(member: Member, t: int) -> float:
    """Net energy injection at interval t: positive for export, negative for import."""
    if t < 0 or t >= member.imports.axis.count:
        raise IndexError(f"interval {t} outside axis of {member.imports.axis.count} intervals")
    return float(member.exports.values[t] - member.imports.values[t])


def net_injections(member: Member) -> np.ndarray:
    """Whole-series counterpart of :func:`net_injection`."""
    return member.exports.values - member.imports.values


@dataclass(eq=False)
class Community:
    members: list[Member]
    tariffs: dict[str, TariffSchedule]
    id: str = ""

    @property
    def axis(self) -> TimeAxis:
        return self.members[0].imports.axis

    def member(self, member_id: str) -> Member:
        for m in self.members:
            if m.id == member_id:
                return m
        raise KeyError(member_id)


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    member_id: str | None = None
    interval: int | None = None


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]


def _series_findings(member_id: str, label: str, series: EnergySeries, axis: TimeAxis) -> list[Finding]:
    found = []
    if series.axis != axis:
        found.append(Finding("axis-mismatch", f"{label} series of {member_id} uses a different time axis", member_id))
    if len(series.values) != series.axis.count:
        found.append(
            Finding(
                "length-mismatch",
                f"{label} series of {member_id} has {len(series.values)} values for "
                f"{series.axis.count} intervals",
                member_id,
            )
        )
    negative = np.nonzero(series.values < 0.0)[0]
    if negative.size:
        t = int(negative[0])
        found.append(
            Finding(
                "negative-value",
                f"{label} series of {member_id} has {negative.size} negative value(s), first at interval {t}",
                member_id,
                t,
            )
        )
    return found


def validate_community(members: Sequence[Member], tariffs: Mapping[str, TariffSchedule]) -> ValidationReport:
    """Check every community invariant and report all violations.

    Never raises: the community is acceptable iff the report is empty.
    """
    findings: list[Finding] = []
    if not members:
        return ValidationReport()
    axis = members[0].imports.axis
    seen: set[str] = set()
    for member in members:
        if member.id in seen:
            findings.append(Finding("duplicate-id", f"member id {member.id!r} appears more than once", member.id))
        seen.add(member.id)
        findings.extend(_series_findings(member.id, "import", member.imports, axis))
        findings.extend(_series_findings(member.id, "export", member.exports, axis))
        if len(member.imports.values) == len(member.exports.values):
            both = np.minimum(member.imports.values, member.exports.values)
            simultaneous = np.nonzero(both > EPSILON_E)[0]
            if simultaneous.size:
                t = int(simultaneous[0])
                findings.append(
                    Finding(
                        "simultaneous-flow",
                        f"member {member.id} both imports and exports in {simultaneous.size} interval(s), "
                        f"first at interval {t}",
                        member.id,
                        t,
                    )
                )
        if member.tariff_id not in tariffs:
            findings.append(
                Finding("dangling-tariff", f"member {member.id} references unknown tariff {member.tariff_id!r}", member.id)
            )
    return ValidationReport(tuple(findings))


def validate_tariffs(community: Community) -> ValidationReport:
    """Report every interval where some producer's ask price is not below some consumer's bid.

    Trades in such intervals cannot benefit both sides; the community is
    mutually beneficial iff the report is empty.
    """
    from . import billing  # deferred: billing builds on core types

    consumers = [m for m in community.members if np.any(m.imports.values > 0.0)]
    producers = [m for m in community.members if np.any(m.exports.values > 0.0)]
    if not consumers or not producers:
        return ValidationReport()
    max_excise = billing.community_max_excise(community.members, community.tariffs)
    max_ask = max(billing.ask_price(m, community.tariffs, max_excise) for m in producers)
    bids = np.stack([billing.bid_prices(m, community.tariffs) for m in consumers])
    min_bid = bids.min(axis=0)
    findings = tuple(
        Finding(
            "price-inversion",
            f"ask {max_ask:.6g} EUR/kWh is not below bid {min_bid[t]:.6g} EUR/kWh at interval {t}",
            None,
            int(t),
        )
        for t in np.nonzero(max_ask >= min_bid)[0]
    )
    return ValidationReport(findings)
