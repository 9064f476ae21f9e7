"""Split cost accounting: payload bytes, FLOPs, derived energy figures."""
import math

import pytest

from gpzkit import cost, micronet


class TestTxBytes:
    def test_reference_payloads(self):
        assert cost.tx_bytes((256, 16, 16), "fp32") == 262144
        assert cost.tx_bytes((512, 4, 4), "fp32") == 32768

    def test_precision_scaling(self):
        assert cost.tx_bytes((8,), "fp32") == 32
        assert cost.tx_bytes((8,), "fp16") == 16
        assert cost.tx_bytes((8,), "int8") == 8

    def test_domain(self):
        with pytest.raises(ValueError):
            cost.tx_bytes((8,), "bf16")
        with pytest.raises(ValueError):
            cost.tx_bytes((), "fp32")
        with pytest.raises(ValueError):
            cost.tx_bytes((4, 0), "fp32")


@pytest.fixture(scope="module")
def model():
    return micronet.init_model([4, 8, 8], 3, seed=0)


class TestFlops:

    def test_mac_convention(self, model):
        assert cost.flops(model, 1) == 2 * 4 * 8
        assert cost.flops(model, 2) == 2 * 4 * 8 + 2 * 8 * 8
        assert cost.flops(model, 3) == 2 * 4 * 8 + 2 * 8 * 8 + 2 * 8 * 3

    def test_empty_edge(self, model):
        assert cost.flops(model, 0) == 0

    def test_split_range(self, model):
        with pytest.raises(ValueError):
            cost.flops(model, 4)
        with pytest.raises(ValueError):
            cost.flops(model, -1)


class TestActPeakBytes:
    def test_widest_state_times_four(self):
        model = micronet.init_model([4, 8, 6], 3, seed=0)
        assert cost.act_peak_bytes(model, 0) == 0
        assert cost.act_peak_bytes(model, 1) == 32
        assert cost.act_peak_bytes(model, 2) == 32
        assert cost.act_peak_bytes(model, 3) == 32  # head narrower than peak


class TestEnergyMetrics:
    def test_reference_row(self):
        t = 628.1730 / 498.6036
        m = cost.energy_metrics(498.6036, 500, t, 1_826_000_000)
        assert m.e_inf_j == pytest.approx(0.9972, abs=1e-4)
        assert m.ed2p_js2 == pytest.approx(791.4130, abs=0.01)
        assert m.gflops_per_watt == pytest.approx(0.003662, abs=1e-5)
        assert m.edp_js == pytest.approx(628.1730, abs=1e-3)

    def test_defining_identities(self):
        m = cost.energy_metrics(10.0, 4, 2.5, 1000)
        assert m.e_inf_j == pytest.approx(2.5)
        assert m.p_avg_w == pytest.approx(4.0)
        assert m.edp_js == pytest.approx(25.0)
        assert m.ed2p_js2 == pytest.approx(62.5)
        assert m.gflops_per_watt == pytest.approx((1000 / 2.5) / 1e9 / 4.0)

    @pytest.mark.parametrize("kwargs", [
        dict(e_total=0.0),
        dict(e_total=math.inf),
        dict(n_iters=0),
        dict(t_window=-1.0),
        dict(flops_per_inf=0),
    ])
    def test_domain(self, kwargs):
        base = dict(e_total=1.0, n_iters=1, t_window=1.0, flops_per_inf=100)
        base.update(kwargs)
        with pytest.raises(ValueError):
            cost.energy_metrics(**base)

    def test_to_dict_contract(self):
        d = cost.energy_metrics(10.0, 4, 2.5, 1000).to_dict()
        assert set(d) == {"e_total_j", "n_iters", "t_window_s", "flops_per_inf",
                          "e_inf_j", "p_avg_w", "gflops_per_watt", "edp_js",
                          "ed2p_js2"}


class TestParseMeasurement:
    def test_valid(self):
        out = cost.parse_measurement(
            {"e_total_j": "2.5", "n_iters": 10, "t_window_s": 1.5})
        assert out == (2.5, 10, 1.5)

    def test_missing_fields_named(self):
        with pytest.raises(ValueError, match="t_window_s"):
            cost.parse_measurement({"e_total_j": 1.0, "n_iters": 2})

    @pytest.mark.parametrize("obj", [
        {"e_total_j": "x", "n_iters": 1, "t_window_s": 1.0},
        {"e_total_j": -1.0, "n_iters": 1, "t_window_s": 1.0},
        {"e_total_j": 1.0, "n_iters": 0, "t_window_s": 1.0},
        {"e_total_j": 1.0, "n_iters": 1, "t_window_s": 0.0},
    ])
    def test_rejects(self, obj):
        with pytest.raises(ValueError):
            cost.parse_measurement(obj)


class TestCostReport:
    def test_structural_fields(self, small_model):
        report = cost.cost_report(small_model, 2, ["fp32", "fp16", "int8"])
        assert report.edge_flops == 2 * 5 * 12 + 2 * 12 * 8
        assert report.total_flops == report.edge_flops + 2 * 8 * 3
        assert report.tx_shape == (8,)
        assert report.tx == {"fp32": 32, "fp16": 16, "int8": 8}
        assert (report.edge_params, report.total_params) == (176, 203)
        assert report.edge_share == pytest.approx(176 / 203)
        assert report.act_peak == 48
        assert report.energy is None

    def test_duplicate_precisions_collapse(self, small_model):
        report = cost.cost_report(small_model, 1, ["fp32", "fp32", "int8"])
        assert list(report.tx) == ["fp32", "int8"]

    def test_energy_uses_edge_flops(self, small_model):
        measurement = {"e_total_j": 10.0, "n_iters": 4, "t_window_s": 2.0}
        report = cost.cost_report(small_model, 2, ["fp32"], measurement)
        assert report.energy.flops_per_inf == report.edge_flops

    def test_zero_edge_falls_back_to_total(self, small_model):
        measurement = {"e_total_j": 10.0, "n_iters": 4, "t_window_s": 2.0}
        report = cost.cost_report(small_model, 0, ["fp32"], measurement)
        assert report.edge_flops == 0
        assert report.energy.flops_per_inf == report.total_flops

    def test_needs_precisions(self, small_model):
        with pytest.raises(ValueError):
            cost.cost_report(small_model, 1, [])

    def test_to_dict_contract(self, small_model):
        d = cost.cost_report(small_model, 2, ["fp32"]).to_dict()
        assert set(d) == {"split_index", "edge_flops", "total_flops", "tx_shape",
                          "tx_bytes", "edge_params", "total_params",
                          "edge_share", "act_peak_bytes", "energy"}
        assert d["energy"] is None
