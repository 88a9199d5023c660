"""Deterministic community generation for the PV-uptake sweep.

Load and PV series are synthetic stand-ins for metered data, with enough
structure (daily peaks, weekly and seasonal modulation, cloud noise) for
consumption-ordered savings analysis to be meaningful. Real meter data
can be substituted through the CSV ingestion path.

Every random draw comes from a stream keyed on (seed, community index,
member index, purpose), so communities are pure functions of the
configuration and adding members never perturbs earlier draws.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import csvio
from .core import (
    DEFAULT_STEP,
    INTERVALS_PER_DAY,
    Community,
    EnergySeries,
    Member,
    TariffSchedule,
    TimeAxis,
    TimeOfUsePrice,
    day_index,
    day_of_week,
    day_of_year,
    hour_of_day,
    validate_community,
)

# Purpose tags for per-member random streams.
_LOAD, _PV, _TARIFF, _OWNERS = 1, 2, 3, 4

# Load shape constants (relative power units before scaling to the annual target).
_LOAD_BASE = 0.16
_MORNING_AMP, _MORNING_HOUR, _MORNING_WIDTH = 0.45, 7.5, 1.3
_EVENING_AMP, _EVENING_HOUR, _EVENING_WIDTH = 0.95, 19.5, 2.4
_WEEKEND_FACTOR = 1.10
_SEASONAL_AMP, _SEASONAL_PEAK_DOY = 0.22, 15.0

# PV shape constants.
_SOLAR_NOON = 12.5
_SUMMER_SOLSTICE_DOY = 172.0
_DAYLIGHT_HALF_WIDTH_MEAN, _DAYLIGHT_HALF_WIDTH_AMP = 4.6, 1.9  # hours
_PV_SEASON_BASE, _PV_SEASON_AMP = 0.75, 0.25
_CLOUD_FLOOR = 0.15


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a sweep depends on; the sweep is a pure function of this."""

    communities: int = 50
    members_per_community: int = 20
    uptake_levels: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8)
    pv_capacity_kw: float = 3.0
    new_pv_share: float = 0.3
    new_feed_in: float = 0.04
    old_feed_in: float = 0.1269
    tariff_mix: float = 0.5
    seed: int = 1
    year: int = 2025
    days: int = 365
    annual_kwh_range: tuple[float, float] = (1500.0, 6000.0)
    pv_capacity_factor: float = 0.14
    load_noise_sd: float = 0.35
    vat_rate: float = 0.20
    excise_rate: float = 0.02998
    network_charge: float = 0.05
    fixed_energy_price: float = 0.20
    tou_peak_price: float = 0.24
    tou_off_peak_price: float = 0.16
    tou_peak_start_hour: float = 7.0
    tou_peak_end_hour: float = 23.0
    pmo_fee: float = 0.0

    def __post_init__(self) -> None:
        if self.communities < 1 or self.members_per_community < 1 or self.days < 1:
            raise ValueError("counts must be at least 1")
        if any(not 0.0 <= u <= 1.0 for u in self.uptake_levels):
            raise ValueError("uptake levels must lie in [0, 1]")
        if not 0.0 <= self.new_pv_share <= 1.0:
            raise ValueError("new_pv_share must lie in [0, 1]")
        if self.pv_capacity_kw <= 0.0:
            raise ValueError("pv_capacity_kw must be positive")

    def axis(self) -> TimeAxis:
        return TimeAxis.for_days(self.year, self.days)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "ScenarioConfig":
        data = json.loads(Path(path).read_text())
        for key in ("uptake_levels", "annual_kwh_range"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def _stream(*keys: int) -> np.random.Generator:
    return np.random.default_rng(list(keys))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def synthetic_load_profile(
    rng: np.random.Generator, axis: TimeAxis, annual_kwh: float, noise_sd: float = 0.35
) -> EnergySeries:
    """Residential load: base + morning/evening peaks, weekly and seasonal modulation, noise.

    The series is scaled so it integrates exactly to ``annual_kwh`` over
    the axis (pro-rated when the axis covers less than a year).
    """
    h = hour_of_day(axis)
    shape = (
        _LOAD_BASE
        + _MORNING_AMP * np.exp(-0.5 * ((h - _MORNING_HOUR) / _MORNING_WIDTH) ** 2)
        + _EVENING_AMP * np.exp(-0.5 * ((h - _EVENING_HOUR) / _EVENING_WIDTH) ** 2)
    )
    weekly = np.where(day_of_week(axis) >= 5, _WEEKEND_FACTOR, 1.0)
    seasonal = 1.0 + _SEASONAL_AMP * np.cos(2.0 * np.pi * (day_of_year(axis) - _SEASONAL_PEAK_DOY) / 365.0)
    noise = rng.lognormal(mean=0.0, sigma=noise_sd, size=axis.count)
    values = shape * weekly * seasonal * noise
    target = annual_kwh * axis.total_hours / 8760.0
    values *= target / values.sum()
    return EnergySeries(axis, values)


def synthetic_pv_profile(
    rng: np.random.Generator, axis: TimeAxis, capacity_kw: float, capacity_factor: float = 0.14
) -> EnergySeries:
    """Rooftop PV output: daylight bell curve, seasonal amplitude, per-day cloud attenuation.

    Zero at night, per-interval energy capped at capacity x step length,
    scaled toward the requested annual capacity factor (clipping at the
    capacity cap can shave a little off the target).
    """
    if capacity_kw <= 0.0:
        raise ValueError("capacity_kw must be positive")
    h = hour_of_day(axis)
    season_phase = np.cos(2.0 * np.pi * (day_of_year(axis) - _SUMMER_SOLSTICE_DOY) / 365.0)
    half_width = _DAYLIGHT_HALF_WIDTH_MEAN + _DAYLIGHT_HALF_WIDTH_AMP * season_phase
    offset = h - _SOLAR_NOON
    clearsky = np.where(np.abs(offset) < half_width, np.cos(np.pi * offset / (2.0 * half_width)) ** 2, 0.0)
    amplitude = _PV_SEASON_BASE + _PV_SEASON_AMP * season_phase

    days = day_index(axis)
    clouds = _CLOUD_FLOOR + (1.0 - _CLOUD_FLOOR) * rng.beta(2.2, 0.9, size=int(days[-1]) + 1)
    relative = clearsky * amplitude * clouds[days]

    step_energy = capacity_kw * axis.step_hours
    target = capacity_kw * axis.total_hours * capacity_factor
    produced = step_energy * relative.sum()
    if produced > 0.0:
        relative = relative * (target / produced)
    values = step_energy * np.minimum(relative, 1.0)
    return EnergySeries(axis, values)


def build_tariff_table(config: ScenarioConfig) -> dict[str, TariffSchedule]:
    """The four tariff combinations: {fixed, time-of-use} x {old, new feed-in}."""
    tou = TimeOfUsePrice(
        config.tou_peak_price, config.tou_off_peak_price, config.tou_peak_start_hour, config.tou_peak_end_hour
    )
    table = {}
    for band, energy in (("fixed", config.fixed_energy_price), ("tou", tou)):
        for vintage, feed_in in (("old", config.old_feed_in), ("new", config.new_feed_in)):
            table[f"{band}-{vintage}"] = TariffSchedule(
                energy_price=energy,
                network_charge=config.network_charge,
                excise_rate=config.excise_rate,
                vat_rate=config.vat_rate,
                export_tariff=feed_in,
            )
    return table


def generate_community(config: ScenarioConfig, index: int, uptake: float) -> Community:
    """One synthetic community; deterministic for (seed, index, uptake).

    Load profiles and tariff assignments depend only on (seed, index), so
    the same community index compared across uptake levels differs in PV
    ownership alone. Owners are the first round(uptake x N) members of a
    per-community random order; the first round(new_pv_share x owners) of
    them carry the reduced feed-in tariff. Load and PV are netted per
    interval into import/export series, as a physical meter would report.
    """
    axis = config.axis()
    n = config.members_per_community
    order = _stream(config.seed, index, _OWNERS).permutation(n)
    owner_count = _round_half_up(uptake * n)
    owners = order[:owner_count]
    new_tariff_ids = set(owners[: _round_half_up(config.new_pv_share * owner_count)])
    owner_set = set(owners)

    members = []
    for i in range(n):
        load_rng = _stream(config.seed, index, i, _LOAD)
        annual_kwh = float(load_rng.uniform(*config.annual_kwh_range))
        load = synthetic_load_profile(load_rng, axis, annual_kwh, config.load_noise_sd)
        band = "tou" if _stream(config.seed, index, i, _TARIFF).random() < config.tariff_mix else "fixed"
        if i in owner_set:
            pv = synthetic_pv_profile(
                _stream(config.seed, index, i, _PV), axis, config.pv_capacity_kw, config.pv_capacity_factor
            ).values
            vintage = "new" if i in new_tariff_ids else "old"
        else:
            pv = 0.0
            vintage = "old"
        net = load.values - pv
        members.append(
            Member(
                id=f"m{i:02d}",
                imports=EnergySeries(axis, np.maximum(net, 0.0)),
                exports=EnergySeries(axis, np.maximum(-net, 0.0)),
                tariff_id=f"{band}-{vintage}",
            )
        )
    return Community(members, build_tariff_table(config), id=f"c{index:03d}")


class IngestError(ValueError):
    """Raised when meter or tariff files cannot be turned into a valid community."""


def ingest_meter_csv(meter_path: str | Path, tariff_path: str | Path, *, force: bool = False) -> Community:
    """Parse and validate a community from a meter CSV and a tariff JSON file.

    Rejects communities with validation findings unless ``force`` is set.
    """
    community = csvio.read_community(meter_path, tariff_path)
    report = validate_community(community.members, community.tariffs)
    if not report.ok and not force:
        details = "; ".join(f.message for f in report.findings[:5])
        raise IngestError(f"community failed validation ({len(report.findings)} finding(s)): {details}")
    return community
