"""File formats: meter CSV, tariff JSON, allocation CSV, bills CSV, fairness CSV.

Timestamps are RFC 3339 UTC. Energy and price columns keep near-full
precision; monetary columns are rounded to 0.01 EUR. All writers are
deterministic for identical inputs.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .allocation import AllocationOutcome
from .billing import BillBreakdown
from .core import (
    Community,
    EnergySeries,
    FiscalStatus,
    Member,
    TariffSchedule,
    TimeAxis,
    TimeOfUsePrice,
)

METER_HEADER = ["member_id", "timestamp", "import_kwh", "export_kwh"]
ALLOCATION_HEADER = ["timestamp", "member_id", "role", "allocated_kwh", "price_eur_per_kwh", "flags"]
BILLS_HEADER = [
    "member_id",
    "scenario",
    "mechanism",
    "energy_cost",
    "excise_cost",
    "network_cost",
    "csc_cost",
    "producer_revenue",
    "total",
    "utility",
]
FAIRNESS_HEADER = [
    "community_id",
    "uptake",
    "mechanism",
    "jain",
    "min_max",
    "merit_index",
    "social_welfare",
    "weighted_utility",
]


class FormatError(ValueError):
    """Raised on malformed input files."""


def format_timestamp(moment: datetime) -> str:
    return moment.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    try:
        moment = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise FormatError(f"bad timestamp {text!r}") from exc
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc)


def fmt(value: float | None) -> str:
    """Near-lossless float cell; empty for absent values."""
    return "" if value is None else f"{value:.12g}"


def fmt_money(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"


# -- meter CSV ---------------------------------------------------------------


def write_meter_csv(path: str | Path, community: Community) -> None:
    """One row per member per interval, member-major, timestamps increasing per member."""
    stamps = [format_timestamp(ts) for ts in community.axis.timestamps()]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(METER_HEADER)
        for member in community.members:
            imports = member.imports.values
            exports = member.exports.values
            for t, stamp in enumerate(stamps):
                writer.writerow([member.id, stamp, fmt(imports[t]), fmt(exports[t])])


def read_meter_rows(path: str | Path) -> dict[str, list[tuple[datetime, float, float]]]:
    """Per-member rows in file order; raises on malformed or non-monotonic data."""
    rows: dict[str, list[tuple[datetime, float, float]]] = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != METER_HEADER:
            raise FormatError(f"unexpected meter CSV header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise FormatError(f"row {line_no}: expected 4 columns, got {len(row)}")
            member_id, stamp_text, import_text, export_text = row
            try:
                stamp = parse_timestamp(stamp_text)
                imported, exported = float(import_text), float(export_text)
            except (FormatError, ValueError) as exc:
                raise FormatError(f"row {line_no}: {exc}") from None
            series = rows.setdefault(member_id, [])
            if series and stamp <= series[-1][0]:
                raise FormatError(
                    f"row {line_no}: timestamp {stamp_text} for member {member_id} is not strictly increasing"
                )
            series.append((stamp, imported, exported))
    if not rows:
        raise FormatError("meter CSV contains no data rows")
    return rows


# -- tariff JSON -------------------------------------------------------------


def _tariff_to_json(tariff: TariffSchedule) -> dict:
    if isinstance(tariff.energy_price, TimeOfUsePrice):
        energy = {
            "peak": tariff.energy_price.peak,
            "off_peak": tariff.energy_price.off_peak,
            "peak_start_hour": tariff.energy_price.peak_start_hour,
            "peak_end_hour": tariff.energy_price.peak_end_hour,
        }
    else:
        energy = tariff.energy_price
    data = {
        "energy_price": energy,
        "network_charge": tariff.network_charge,
        "excise_rate": tariff.excise_rate,
        "vat_rate": tariff.vat_rate,
        "export_tariff": tariff.export_tariff,
    }
    if tariff.csc_network_charge is not None:
        data["csc_network_charge"] = tariff.csc_network_charge
    return data


def _tariff_from_json(data: Mapping) -> TariffSchedule:
    energy = data["energy_price"]
    if isinstance(energy, Mapping):
        energy = TimeOfUsePrice(
            peak=float(energy["peak"]),
            off_peak=float(energy["off_peak"]),
            peak_start_hour=float(energy.get("peak_start_hour", 7.0)),
            peak_end_hour=float(energy.get("peak_end_hour", 23.0)),
        )
    else:
        energy = float(energy)
    return TariffSchedule(
        energy_price=energy,
        network_charge=float(data["network_charge"]),
        excise_rate=float(data["excise_rate"]),
        vat_rate=float(data["vat_rate"]),
        export_tariff=float(data["export_tariff"]),
        csc_network_charge=None if data.get("csc_network_charge") is None else float(data["csc_network_charge"]),
    )


def write_tariff_json(path: str | Path, community: Community) -> None:
    """Flat JSON keyed by tariff id; each entry lists its member assignments.

    Members with non-default fiscal status are written as objects with
    explicit ``vat_liable`` / ``excise_liable`` flags.
    """
    table: dict[str, dict] = {}
    for tariff_id, tariff in community.tariffs.items():
        table[tariff_id] = _tariff_to_json(tariff)
        table[tariff_id]["members"] = []
    for member in community.members:
        if member.tariff_id not in table:
            continue
        if member.fiscal == FiscalStatus():
            entry: object = member.id
        else:
            entry = {
                "id": member.id,
                "vat_liable": member.fiscal.vat_liable,
                "excise_liable": member.fiscal.excise_liable,
            }
        table[member.tariff_id]["members"].append(entry)
    Path(path).write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")


def read_tariff_json(path: str | Path) -> tuple[dict[str, TariffSchedule], dict[str, tuple[str, FiscalStatus]]]:
    """Tariff table plus member_id -> (tariff_id, fiscal status) assignments."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"tariff file is not valid JSON: {exc}") from None
    tariffs: dict[str, TariffSchedule] = {}
    assignments: dict[str, tuple[str, FiscalStatus]] = {}
    for tariff_id, data in raw.items():
        try:
            tariffs[tariff_id] = _tariff_from_json(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"tariff {tariff_id!r}: {exc}") from None
        for entry in data.get("members", []):
            if isinstance(entry, str):
                member_id, fiscal = entry, FiscalStatus()
            else:
                member_id = entry["id"]
                fiscal = FiscalStatus(bool(entry.get("vat_liable", False)), bool(entry.get("excise_liable", False)))
            if member_id in assignments:
                raise FormatError(f"member {member_id!r} assigned to more than one tariff")
            assignments[member_id] = (tariff_id, fiscal)
    return tariffs, assignments


def read_community(meter_path: str | Path, tariff_path: str | Path | None = None, community_id: str = "") -> Community:
    """Assemble a community from its meter file and optional tariff file (unvalidated).

    Raises :class:`FormatError` for malformed rows, non-monotonic
    timestamps and members named in the tariff table but absent from the
    meter file. Structural problems (length mismatches, unassigned
    members) are left for :func:`cscsim.core.validate_community`.
    """
    rows = read_meter_rows(meter_path)
    tariffs, assignments = read_tariff_json(tariff_path) if tariff_path else ({}, {})
    unknown = sorted(set(assignments) - set(rows))
    if unknown:
        raise FormatError(f"tariff table names member(s) not in the meter file: {unknown}")

    first = next(iter(rows.values()))
    step = first[1][0] - first[0][0] if len(first) > 1 else TimeAxis.for_days(2000, 1).step
    axis = TimeAxis(first[0][0], step, len(first))
    members = []
    for member_id, series in rows.items():
        tariff_id, fiscal = assignments.get(member_id, ("", FiscalStatus()))
        members.append(
            Member(
                id=member_id,
                imports=EnergySeries(axis, np.array([r[1] for r in series])),
                exports=EnergySeries(axis, np.array([r[2] for r in series])),
                tariff_id=tariff_id,
                fiscal=fiscal,
            )
        )
    return Community(members, tariffs, id=community_id)


# -- allocation CSV ----------------------------------------------------------


def write_allocation_csv(path: str | Path, axis: TimeAxis, outcomes: Sequence[AllocationOutcome]) -> None:
    """The per-interval allocation payload: one row per member with energy awarded."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ALLOCATION_HEADER)
        for outcome in outcomes:
            stamp = format_timestamp(axis.timestamp(outcome.t))
            price = fmt(outcome.price)
            flags = "|".join(sorted(outcome.flags))
            for role, alloc in (("consumer", outcome.consumer_alloc), ("producer", outcome.producer_alloc)):
                for member_id in sorted(alloc):
                    if alloc[member_id] > 0.0:
                        writer.writerow([stamp, member_id, role, fmt(alloc[member_id]), price, flags])


def read_allocation_csv(path: str | Path, axis: TimeAxis) -> list[AllocationOutcome]:
    """Rebuild one outcome per axis interval from an allocation CSV."""
    outcomes = [AllocationOutcome(t, {}, {}) for t in range(axis.count)]
    step_seconds = axis.step.total_seconds()
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ALLOCATION_HEADER:
            raise FormatError(f"unexpected allocation CSV header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 6:
                raise FormatError(f"row {line_no}: expected 6 columns, got {len(row)}")
            stamp, member_id, role, kwh_text, price_text, flags_text = row
            moment = parse_timestamp(stamp)
            offset = (moment - axis.start).total_seconds() / step_seconds
            t = int(round(offset))
            if abs(offset - t) > 1e-9 or not 0 <= t < axis.count:
                raise FormatError(f"row {line_no}: timestamp {stamp} is not on the meter axis")
            if role not in ("consumer", "producer"):
                raise FormatError(f"row {line_no}: unknown role {role!r}")
            outcome = outcomes[t]
            side = outcome.consumer_alloc if role == "consumer" else outcome.producer_alloc
            side[member_id] = float(kwh_text)
            if price_text:
                outcome.price = float(price_text)
            if flags_text:
                outcome.flags = frozenset(outcome.flags | set(flags_text.split("|")))
    return outcomes


# -- bills and fairness CSV --------------------------------------------------


def bill_row(
    member_id: str, scenario: str, mechanism: str, bill: BillBreakdown, utility: float | None
) -> list[str]:
    return [
        member_id,
        scenario,
        mechanism,
        fmt_money(bill.energy_cost),
        fmt_money(bill.excise_cost),
        fmt_money(bill.network_cost),
        fmt_money(bill.csc_cost),
        fmt_money(bill.producer_revenue),
        fmt_money(bill.total),
        fmt_money(utility),
    ]


def write_bills_csv(path: str | Path, rows: Iterable[list[str]]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(BILLS_HEADER)
        writer.writerows(rows)


def read_bill_utilities(path: str | Path) -> dict[str, dict[str, float]]:
    """Utilities per mechanism per member from a bills CSV (with-participation rows)."""
    utilities: dict[str, dict[str, float]] = {}
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != BILLS_HEADER:
            raise FormatError(f"unexpected bills CSV header {reader.fieldnames!r}")
        for row in reader:
            if row["scenario"] != "with_csc" or row["utility"] == "":
                continue
            utilities.setdefault(row["mechanism"], {})[row["member_id"]] = float(row["utility"])
    return utilities


def fairness_row(
    community_id: str,
    uptake: str,
    mechanism: str,
    jain: float | None,
    min_max: float | None,
    merit: float | None,
    welfare: float | None,
    weighted: float | None,
) -> list[str]:
    return [community_id, uptake, mechanism, fmt(jain), fmt(min_max), fmt(merit), fmt(welfare), fmt(weighted)]


def write_fairness_csv(path: str | Path, rows: Iterable[list[str]]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(FAIRNESS_HEADER)
        writer.writerows(rows)
