"""Transition-zone location and rerun stability."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from gpzkit import gpz


def profiles_from(values, d=1):
    return [
        gpz.LayerRadiusProfile(layer_index=i, layer_name=f"z{i}", d=d,
                               r2=float(v) * d, r2_norm=float(v))
        for i, v in enumerate(values)
    ]


class TestDropPercentages:
    def test_examples(self):
        drops = gpz.drop_percentages(profiles_from([10.0, 2.0, 2.0, 3.0]))
        np.testing.assert_allclose(drops, [80.0, 0.0, -50.0])

    def test_zero_previous_is_undefined(self):
        drops = gpz.drop_percentages(profiles_from([0.0, 5.0, 1.0]))
        assert drops[0] is None
        assert drops[1] == pytest.approx(80.0)

    def test_needs_two_profiles(self):
        with pytest.raises(ValueError):
            gpz.drop_percentages(profiles_from([1.0]))

    def test_rejects_negative_radius(self):
        bad = profiles_from([4.0, -1.0, 2.0])
        with pytest.raises(ValueError):
            gpz.drop_percentages(bad)

    def test_rejects_inconsistent_normalization(self):
        bad = profiles_from([4.0, 3.0])
        bad[1].r2_norm = 5.0
        with pytest.raises(ValueError):
            gpz.drop_percentages(bad)


class TestLocate:
    def test_hand_trace(self):
        report = gpz.locate(profiles_from([10.0, 9.0, 8.5, 2.0, 1.9]), tau=0.20)
        pcts = [d["pct"] for d in report.drops]
        np.testing.assert_allclose(pcts, [10.0, 100 / 18, 650 / 8.5, 5.0])
        assert report.l_tp == 3
        assert report.l_ts == 1
        assert report.localized
        assert not report.no_precursor
        assert report.zone == [3]

    def test_single_cliff_ties_break_shallow(self):
        report = gpz.locate(profiles_from([5.0, 5.0, 5.0, 1.0]))
        assert report.l_tp == 3
        assert report.l_ts == 1  # two zero drops before; shallower one wins
        assert report.localized

    def test_flat_normalized_profile_has_no_peak(self):
        # r2 proportional to d: normalized radius is constant, every drop 0.
        values = [0.7, 0.7, 0.7, 0.7, 0.7]
        dims = [16, 32, 32, 8, 4]
        flat = [
            gpz.LayerRadiusProfile(layer_index=i, layer_name=f"z{i}", d=d,
                                   r2=0.7 * d, r2_norm=0.7)
            for i, d in enumerate(dims)
        ]
        report = gpz.locate(flat)
        assert all(d["pct"] == pytest.approx(0.0) for d in report.drops)
        assert report.l_tp == 1 and report.no_precursor

    def test_no_precursor_when_peak_is_first_drop(self):
        report = gpz.locate(profiles_from([10.0, 1.0, 0.9, 0.8]))
        assert report.no_precursor
        assert report.l_ts == report.l_tp == 1
        assert report.localized  # vacuously: nothing between start and peak
        assert report.zone == [1]

    def test_spread_zone_when_intermediate_drop_large(self):
        # 40% sits between the 50% start and the 66.7% peak: not localized.
        report = gpz.locate(profiles_from([10.0, 5.0, 3.0, 1.0, 0.9]), tau=0.20)
        assert report.l_tp == 3
        assert report.l_ts == 1
        assert not report.localized
        assert report.zone == [1, 2, 3]

    def test_undefined_drops_excluded_from_argmax(self):
        report = gpz.locate(profiles_from([0.0, 5.0, 1.0]))
        assert report.drops[0]["pct"] is None
        assert report.l_tp == 2
        assert report.no_precursor

    def test_all_undefined_rejected(self):
        with pytest.raises(ValueError):
            gpz.locate(profiles_from([0.0, 0.0, 0.0]))

    def test_needs_three_profiles(self):
        with pytest.raises(ValueError):
            gpz.locate(profiles_from([2.0, 1.0]))

    @pytest.mark.parametrize("tau", [0.0, -0.1, 1.5])
    def test_tau_domain(self, tau):
        with pytest.raises(ValueError):
            gpz.locate(profiles_from([3.0, 2.0, 1.0]), tau=tau)

    def test_tau_one_allowed(self):
        report = gpz.locate(profiles_from([3.0, 2.0, 1.0]), tau=1.0)
        assert report.tau == 1.0

    @given(
        values=st.lists(st.integers(min_value=1, max_value=1000),
                        min_size=3, max_size=8),
        exponent=st.integers(min_value=-6, max_value=6),
    )
    def test_scale_invariance(self, values, exponent):
        scale = 2.0 ** exponent  # exact in binary floats: drops match bitwise
        base = gpz.locate(profiles_from([float(v) for v in values]))
        scaled = gpz.locate(profiles_from([float(v) * scale for v in values]))
        assert (base.l_tp, base.l_ts, base.localized, base.zone) == \
               (scaled.l_tp, scaled.l_ts, scaled.localized, scaled.zone)

    def test_to_dict_contract(self):
        report = gpz.locate(profiles_from([10.0, 9.0, 8.5, 2.0, 1.9]))
        d = report.to_dict()
        assert set(d) == {"tau", "l_TS", "l_TP", "l_TS_name", "l_TP_name",
                          "zone", "zone_names", "localized", "no_precursor",
                          "layers", "drops"}
        assert d["l_TP_name"] == "z3"
        assert d["zone_names"] == ["z3"]
        assert all(set(entry) == {"from", "to", "pct"} for entry in d["drops"])
        assert d["drops"][2]["from"] == "z2" and d["drops"][2]["to"] == "z3"


class TestStabilityCheck:
    @staticmethod
    def report_with_zone(zone, names=("z0", "z1", "z2", "z3")):
        return gpz.GpzReport(l_tp=zone[-1], l_ts=zone[0], zone=list(zone),
                             localized=len(zone) == 1, no_precursor=False,
                             tau=0.2, layer_names=list(names))

    def test_identical_reports(self):
        reports = [self.report_with_zone([2])] * 3
        assert gpz.stability_check(reports) == (1.0, 1.0)

    def test_two_of_three_agree(self):
        reports = [self.report_with_zone([3]), self.report_with_zone([3]),
                   self.report_with_zone([2])]
        agreement, jaccard = gpz.stability_check(reports)
        assert agreement == pytest.approx(2 / 3)
        assert jaccard == pytest.approx(1 / 3)  # pairs: 1, 0, 0

    def test_overlapping_zones(self):
        reports = [self.report_with_zone([1, 2]), self.report_with_zone([2, 3])]
        agreement, jaccard = gpz.stability_check(reports)
        assert agreement == pytest.approx(0.5)
        assert jaccard == pytest.approx(1 / 3)

    def test_mismatched_layer_lists_rejected(self):
        reports = [self.report_with_zone([1]),
                   self.report_with_zone([1], names=("a", "b", "c"))]
        with pytest.raises(ValueError):
            gpz.stability_check(reports)

    def test_needs_two_reports(self):
        with pytest.raises(ValueError):
            gpz.stability_check([self.report_with_zone([1])])
