from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cscsim.core import Community, EnergySeries, Member, TimeAxis
from cscsim.fairness import (
    FairnessReport,
    community_contributions,
    compute_report,
    contribution,
    jain_index,
    meritocratic_index,
    min_max_ratio,
    normalize_reports,
    social_welfare,
    weighted_utility,
)


def vec(*values):
    return {f"m{i}": float(v) for i, v in enumerate(values)}


class TestJainIndex:
    def test_perfect_equality(self):
        assert jain_index(vec(1, 1, 1, 1)) == pytest.approx(1.0)

    def test_one_sided(self):
        assert jain_index(vec(2, 0)) == pytest.approx(0.5)

    def test_uneven(self):
        assert jain_index(vec(1, 3)) == pytest.approx(0.8)

    def test_all_zero_degenerate(self):
        assert jain_index(vec(0, 0)) is None

    def test_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            u = vec(*rng.uniform(0.01, 10, int(rng.integers(1, 9))))
            value = jain_index(u)
            assert 1.0 / len(u) - 1e-12 <= value <= 1.0 + 1e-12

    @given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=8), st.floats(0.1, 50.0))
    @settings(max_examples=100, deadline=None)
    def test_scale_invariance(self, values, alpha):
        u = vec(*values)
        scaled = {m: alpha * x for m, x in u.items()}
        assert jain_index(scaled) == pytest.approx(jain_index(u), rel=1e-9)


class TestMinMaxRatio:
    def test_simple(self):
        assert min_max_ratio(vec(1, 2)) == pytest.approx(0.5)

    def test_equal(self):
        assert min_max_ratio(vec(5, 5, 5)) == pytest.approx(1.0)

    def test_negative_min(self):
        assert min_max_ratio(vec(-1, 4)) == pytest.approx(-0.25)

    def test_degenerate(self):
        assert min_max_ratio(vec(0, 0)) is None

    def test_never_exceeds_one(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            u = vec(*rng.uniform(-5, 10, 5))
            value = min_max_ratio(u)
            if value is not None and max(u.values()) > 0:
                assert value <= 1.0 + 1e-12


class TestContribution:
    def test_export_against_importers(self):
        assert contribution(np.array([2.0]), np.array([-3.0])) == pytest.approx(6.0)

    def test_import_alongside_importers(self):
        assert contribution(np.array([-2.0]), np.array([-3.0])) == pytest.approx(-6.0)

    def test_zero_member(self):
        assert contribution(np.zeros(4), np.array([1.0, -2.0, 3.0, 0.0])) == 0.0

    def test_min_caps_credit(self):
        # exporting 10 against 1 of demand only earns min(10, 1) * 1
        assert contribution(np.array([10.0]), np.array([-1.0])) == pytest.approx(1.0)

    def test_antisymmetric_in_either_flow_direction(self):
        # flipping one side's flows flips the sign; flipping both leaves it unchanged
        rng = np.random.default_rng(3)
        member = rng.normal(size=32)
        others = rng.normal(size=32)
        base = contribution(member, others)
        assert contribution(-member, others) == pytest.approx(-base)
        assert contribution(member, -others) == pytest.approx(-base)
        assert contribution(-member, -others) == pytest.approx(base)

    def test_misaligned_series_rejected(self):
        with pytest.raises(ValueError):
            contribution(np.zeros(3), np.zeros(4))

    def test_community_contributions_one_pass(self):
        ax = TimeAxis(datetime(2025, 1, 1, tzinfo=timezone.utc), timedelta(minutes=15), 6)
        rng = np.random.default_rng(4)
        members = []
        for i in range(4):
            imports = np.maximum(rng.normal(1, 1, 6), 0)
            exports = np.maximum(rng.normal(0, 1, 6), 0) * (1 - np.sign(imports))
            members.append(Member(f"m{i}", EnergySeries(ax, imports), EnergySeries(ax, exports), "t"))
        community = Community(members, {})
        got = community_contributions(community)
        nets = [m.exports.values - m.imports.values for m in members]
        for i, m in enumerate(members):
            others = sum(nets[j] for j in range(4) if j != i)
            assert got[m.id] == pytest.approx(contribution(nets[i], others))


class TestMeritocraticIndex:
    def test_proportional_is_zero(self):
        assert meritocratic_index(vec(2, 4), vec(1, 2)) == pytest.approx(0.0, abs=1e-12)

    def test_equal_contributions(self):
        assert meritocratic_index(vec(3, 1), vec(1, 1)) == pytest.approx(1.0)

    def test_concentrated(self):
        assert meritocratic_index(vec(6, 0), vec(1, 2)) == pytest.approx(4.0)

    def test_zero_total_contribution_degenerate(self):
        assert meritocratic_index(vec(1, 2), vec(1, -1)) is None

    @given(st.lists(st.floats(0.1, 50.0), min_size=2, max_size=6), st.floats(0.1, 10.0))
    @settings(max_examples=100, deadline=None)
    def test_scaling_utilities_scales_index(self, values, alpha):
        u = vec(*values)
        c = {m: 1.0 + i for i, m in enumerate(u)}
        base = meritocratic_index(u, c)
        scaled = meritocratic_index({m: alpha * x for m, x in u.items()}, c)
        assert scaled == pytest.approx(alpha * base, rel=1e-9, abs=1e-12)


class TestWelfare:
    def test_social_welfare_sum(self):
        assert social_welfare(vec(1, 2, 3)) == 6.0

    def test_empty(self):
        assert social_welfare({}) == 0.0

    def test_cancellation(self):
        assert social_welfare(vec(-1, 1)) == 0.0

    def test_weighted_unit_weights_is_social_welfare(self):
        u = vec(1, 2)
        assert weighted_utility(u, {m: 1.0 for m in u}) == social_welfare(u)

    def test_weighted(self):
        assert weighted_utility(vec(1, 2), {"m0": 2.0, "m1": 0.0}) == 2.0
        assert weighted_utility(vec(4), {"m0": 0.5}) == 2.0

    def test_missing_weight(self):
        with pytest.raises(KeyError):
            weighted_utility(vec(1, 2), {"m0": 1.0})


class TestNormalize:
    def report(self, jain=0.9, mm=0.5, merit=2.0, welfare=100.0):
        return FairnessReport(jain, mm, merit, welfare, None, {})

    def test_single_mechanism_normalizes_to_one(self):
        got = normalize_reports({"only": self.report()})
        assert got["only"]["social_welfare"] == pytest.approx(1.0)
        assert got["only"]["merit_index"] == pytest.approx(0.0)  # 1 - x/x

    def test_welfare_divided_by_max(self):
        got = normalize_reports({"A": self.report(welfare=100.0), "B": self.report(welfare=50.0)})
        assert got["A"]["social_welfare"] == pytest.approx(1.0)
        assert got["B"]["social_welfare"] == pytest.approx(0.5)

    def test_merit_affine_map(self):
        got = normalize_reports({"A": self.report(merit=0.0), "B": self.report(merit=4.0)})
        assert got["A"]["merit_index"] == pytest.approx(1.0)
        assert got["B"]["merit_index"] == pytest.approx(0.0)

    def test_jain_min_max_pass_through(self):
        got = normalize_reports({"A": self.report(jain=0.7, mm=0.3)})
        assert got["A"]["jain"] == pytest.approx(0.7)
        assert got["A"]["min_max"] == pytest.approx(0.3)

    def test_degenerate_stays_none(self):
        degenerate = FairnessReport(None, None, None, 0.0, None, {})
        got = normalize_reports({"A": degenerate})
        assert got["A"]["jain"] is None
        assert got["A"]["merit_index"] is None
        assert got["A"]["social_welfare"] is None

    def test_all_merit_zero_maps_to_one(self):
        got = normalize_reports({"A": self.report(merit=0.0), "B": self.report(merit=0.0)})
        assert got["A"]["merit_index"] == 1.0 and got["B"]["merit_index"] == 1.0


class TestComputeReport:
    def test_fields_populated(self):
        report = compute_report(vec(1, 3), vec(1, 1), weights={"m0": 1.0, "m1": 1.0})
        assert report.jain == pytest.approx(0.8)
        assert report.min_max == pytest.approx(1 / 3)
        assert report.social_welfare == 4.0
        assert report.weighted_utility == 4.0
        assert report.per_member_contribution == {"m0": 1.0, "m1": 1.0}

    def test_weights_optional(self):
        report = compute_report(vec(1, 3), vec(1, 1))
        assert report.weighted_utility is None
