import json
from datetime import timedelta

import numpy as np
import pytest

from cscsim import csvio
from cscsim.core import hour_of_day, member_role, validate_community
from cscsim.scenario import (
    IngestError,
    ScenarioConfig,
    generate_community,
    ingest_meter_csv,
    synthetic_load_profile,
    synthetic_pv_profile,
)


def small_config(**overrides):
    defaults = dict(communities=2, members_per_community=5, days=3, seed=11)
    defaults.update(overrides)
    return ScenarioConfig(**defaults)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestConfig:
    def test_defaults_match_experiment_setup(self):
        config = ScenarioConfig()
        assert config.communities == 50
        assert config.members_per_community == 20
        assert config.uptake_levels == (0.0, 0.2, 0.4, 0.6, 0.8)
        assert config.pv_capacity_kw == 3.0
        assert config.new_pv_share == 0.3
        assert config.new_feed_in == 0.04
        assert config.old_feed_in == 0.1269

    def test_validation(self):
        with pytest.raises(ValueError):
            ScenarioConfig(uptake_levels=(0.2, 1.5))
        with pytest.raises(ValueError):
            ScenarioConfig(communities=0)
        with pytest.raises(ValueError):
            ScenarioConfig(new_pv_share=-0.1)

    def test_json_round_trip(self, tmp_path):
        config = small_config(uptake_levels=(0.0, 0.5), tariff_mix=0.7)
        path = tmp_path / "config.json"
        config.to_json(path)
        assert ScenarioConfig.from_json(path) == config


class TestLoadProfile:
    def test_non_negative_and_annual_sum(self):
        axis = ScenarioConfig(days=365).axis()
        series = synthetic_load_profile(rng(1), axis, 3000.0)
        assert np.all(series.values >= 0.0)
        assert series.total() == pytest.approx(3000.0, rel=0.05)

    def test_zero_noise_is_class_deterministic(self):
        axis = small_config().axis()
        a = synthetic_load_profile(rng(1), axis, 2000.0, noise_sd=0.0)
        b = synthetic_load_profile(rng(2), axis, 2000.0, noise_sd=0.0)
        assert np.allclose(a.values, b.values)

    def test_short_axis_pro_rated(self):
        axis = ScenarioConfig(days=73).axis()  # a fifth of a year
        series = synthetic_load_profile(rng(3), axis, 3000.0)
        assert series.total() == pytest.approx(600.0, rel=0.05)


class TestPvProfile:
    def test_zero_at_night(self):
        axis = ScenarioConfig(days=365).axis()
        series = synthetic_pv_profile(rng(4), axis, 3.0)
        hours = hour_of_day(axis)
        night = (hours < 4.0) | (hours >= 21.0)
        assert np.all(series.values[night] == 0.0)

    def test_interval_energy_capped_by_capacity(self):
        axis = ScenarioConfig(days=365).axis()
        series = synthetic_pv_profile(rng(5), axis, 3.0)
        assert series.values.max() <= 0.75 + 1e-12

    def test_annual_energy_near_capacity_factor(self):
        axis = ScenarioConfig(days=365).axis()
        series = synthetic_pv_profile(rng(6), axis, 3.0, capacity_factor=0.14)
        assert series.total() == pytest.approx(3.0 * 8760 * 0.14, rel=0.10)

    def test_capacity_must_be_positive(self):
        axis = small_config().axis()
        with pytest.raises(ValueError):
            synthetic_pv_profile(rng(7), axis, 0.0)


class TestGenerateCommunity:
    def test_deterministic(self):
        config = small_config()
        a = generate_community(config, 1, 0.4)
        b = generate_community(config, 1, 0.4)
        for ma, mb in zip(a.members, b.members):
            assert ma.id == mb.id and ma.tariff_id == mb.tariff_id
            assert np.array_equal(ma.imports.values, mb.imports.values)
            assert np.array_equal(ma.exports.values, mb.exports.values)

    def test_zero_uptake_no_exports(self):
        community = generate_community(small_config(), 0, 0.0)
        assert all(member_role(m) == "consumer" for m in community.members)

    def test_owner_counts_follow_rounding(self):
        config = small_config(members_per_community=20)
        community = generate_community(config, 0, 0.4)
        owners = [m for m in community.members if m.exports.values.sum() > 0]
        assert len(owners) == 8
        new = [m for m in owners if m.tariff_id.endswith("-new")]
        assert len(new) == 2  # round(0.3 * 8)

    def test_profiles_fixed_across_uptake_levels(self):
        config = small_config(members_per_community=10)
        low = generate_community(config, 3, 0.2)
        high = generate_community(config, 3, 0.4)
        low_owners = {m.id for m in low.members if m.exports.values.sum() > 0}
        high_owners = {m.id for m in high.members if m.exports.values.sum() > 0}
        assert low_owners < high_owners  # nested ownership
        for ml, mh in zip(low.members, high.members):
            if ml.id not in high_owners:  # untouched members identical
                assert np.array_equal(ml.imports.values, mh.imports.values)

    def test_member_streams_independent_of_community_size(self):
        base = generate_community(small_config(members_per_community=4), 0, 0.0)
        bigger = generate_community(small_config(members_per_community=5), 0, 0.0)
        assert np.array_equal(base.members[0].imports.values, bigger.members[0].imports.values)

    def test_distinct_indices_distinct_profiles(self):
        config = small_config()
        a = generate_community(config, 0, 0.0)
        b = generate_community(config, 1, 0.0)
        assert not np.array_equal(a.members[0].imports.values, b.members[0].imports.values)

    def test_generated_communities_validate(self):
        community = generate_community(small_config(), 0, 0.6)
        assert validate_community(community.members, community.tariffs).ok

    def test_netting_no_simultaneous_flow(self):
        community = generate_community(small_config(), 0, 0.8)
        for m in community.members:
            assert np.all(np.minimum(m.imports.values, m.exports.values) <= 1e-12)


class TestMeterCsvRoundTrip:
    def test_round_trip_preserves_series(self, tmp_path):
        community = generate_community(small_config(), 0, 0.4)
        meters = tmp_path / "meters.csv"
        tariffs = tmp_path / "tariffs.json"
        csvio.write_meter_csv(meters, community)
        csvio.write_tariff_json(tariffs, community)
        loaded = ingest_meter_csv(meters, tariffs)
        assert [m.id for m in loaded.members] == [m.id for m in community.members]
        for orig, back in zip(community.members, loaded.members):
            assert np.allclose(orig.imports.values, back.imports.values, atol=1e-9)
            assert np.allclose(orig.exports.values, back.exports.values, atol=1e-9)
            assert back.tariff_id == orig.tariff_id
        assert loaded.axis == community.axis

    def test_shuffled_timestamps_rejected(self, tmp_path):
        community = generate_community(small_config(days=1), 0, 0.0)
        meters = tmp_path / "meters.csv"
        tariffs = tmp_path / "tariffs.json"
        csvio.write_meter_csv(meters, community)
        csvio.write_tariff_json(tariffs, community)
        lines = meters.read_text().splitlines()
        lines[1], lines[2] = lines[2], lines[1]
        meters.write_text("\n".join(lines) + "\n")
        with pytest.raises(csvio.FormatError, match="not strictly increasing"):
            ingest_meter_csv(meters, tariffs)

    def test_missing_interval_rejected(self, tmp_path):
        community = generate_community(small_config(days=1), 0, 0.0)
        meters = tmp_path / "meters.csv"
        tariffs = tmp_path / "tariffs.json"
        csvio.write_meter_csv(meters, community)
        csvio.write_tariff_json(tariffs, community)
        lines = meters.read_text().splitlines()
        del lines[5]  # one interval of the first member
        meters.write_text("\n".join(lines) + "\n")
        with pytest.raises(IngestError, match="values for .* intervals"):
            ingest_meter_csv(meters, tariffs)

    def test_malformed_row_rejected(self, tmp_path):
        community = generate_community(small_config(days=1), 0, 0.0)
        meters = tmp_path / "meters.csv"
        tariffs = tmp_path / "tariffs.json"
        csvio.write_meter_csv(meters, community)
        csvio.write_tariff_json(tariffs, community)
        lines = meters.read_text().splitlines()
        lines[3] = lines[3].rsplit(",", 1)[0] + ",not-a-number"
        meters.write_text("\n".join(lines) + "\n")
        with pytest.raises(csvio.FormatError, match="row 4"):
            ingest_meter_csv(meters, tariffs)

    def test_unknown_member_in_tariff_table(self, tmp_path):
        community = generate_community(small_config(days=1), 0, 0.0)
        meters = tmp_path / "meters.csv"
        tariffs = tmp_path / "tariffs.json"
        csvio.write_meter_csv(meters, community)
        csvio.write_tariff_json(tariffs, community)
        table = json.loads(tariffs.read_text())
        next(iter(table.values()))["members"].append("ghost")
        tariffs.write_text(json.dumps(table))
        with pytest.raises(csvio.FormatError, match="ghost"):
            ingest_meter_csv(meters, tariffs)

    def test_force_overrides_validation(self, tmp_path):
        community = generate_community(small_config(days=1), 0, 0.0)
        meters = tmp_path / "meters.csv"
        tariffs = tmp_path / "tariffs.json"
        csvio.write_meter_csv(meters, community)
        tariffs.write_text("{}")  # nobody has a tariff -> dangling findings
        with pytest.raises(IngestError):
            ingest_meter_csv(meters, tariffs)
        loaded = ingest_meter_csv(meters, tariffs, force=True)
        assert len(loaded.members) == len(community.members)
