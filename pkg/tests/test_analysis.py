import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softeq.analysis import (ComplexityReport, NotDifferentiableError, achievable_rate,
                             activation_patterns, discrete_channel_oracle, exact_llrs_awgn,
                             extract_kernels, kernels_of, multiplier_count, realized_patterns,
                             write_kernels_csv)
from softeq.demapper import LlrBlock, MlaDemapper, demap_max_log
from softeq.modem import BitFrame, build_gray_pam, map_bits, random_bits
from softeq.sdnne import HTANH, ITANH, LINEAR, RELU, TANH, MlpDesign, MlpModel, forward
from softeq.volterra import (VolterraDesign, VolterraModel, _window_features, kernel_count,
                             kernel_indices)


class TestRate:
    def test_perfect_llrs_give_full_rate(self):
        bits = np.array([[0, 1], [1, 0]])
        r = achievable_rate(LlrBlock(np.where(bits == 0, np.inf, -np.inf)), bits)
        assert r.rate_bits_per_real_symbol == 2.0

    def test_zero_llrs_give_zero_rate(self):
        r = achievable_rate(LlrBlock(np.zeros((10, 3))), np.zeros((10, 3)))
        assert r.rate_bits_per_real_symbol == 0.0

    def test_confidently_wrong_infinite_llr(self):
        r = achievable_rate(LlrBlock(np.array([[np.inf], [np.inf]])), np.array([[0], [1]]))
        assert r.minimizing_s == 0.0 and r.rate_bits_per_real_symbol == 0.0

    def test_anti_informative_llrs_floor_at_zero(self):
        r = achievable_rate(LlrBlock(np.full((5, 1), 3.0)), np.ones((5, 1)))
        assert r.minimizing_s == 0.0 and r.rate_bits_per_real_symbol == 0.0

    @settings(max_examples=25, deadline=None)
    @given(c=st.floats(0.05, 20.0), seed=st.integers(0, 1000))
    def test_invariant_to_llr_scale(self, c, seed):
        rng = np.random.default_rng(seed)
        bits = rng.integers(0, 2, (400, 2))
        llr = (1 - 2 * bits) * 2.0 + rng.normal(size=bits.shape)
        a = achievable_rate(LlrBlock(llr), bits)
        b = achievable_rate(LlrBlock(c * llr), bits)
        assert abs(a.rate_bits_per_real_symbol - b.rate_bits_per_real_symbol) < 1e-9
        if 0 < a.minimizing_s < 100 and 0 < b.minimizing_s < 100:
            assert math.isclose(a.minimizing_s, c * b.minimizing_s, rel_tol=1e-5)

    def test_minimizer_beats_grid(self, rng):
        bits = rng.integers(0, 2, (500, 1))
        llr = (1 - 2 * bits) * 1.5 + 2 * rng.normal(size=bits.shape)
        r = achievable_rate(LlrBlock(llr), bits)
        signed = (1 - 2 * bits) * llr
        grid = np.linspace(0, 5, 5001)
        costs = [np.logaddexp(0, -s * signed).mean() / np.log(2) for s in grid]
        assert 1 - r.rate_bits_per_real_symbol <= min(costs) + 1e-12

    def test_uses_block_reference(self):
        bits = BitFrame(np.zeros((3, 1)))
        assert achievable_rate(LlrBlock(np.ones((3, 1)), bits)).n == 3
        with pytest.raises(ValueError, match="transmitted bits"):
            achievable_rate(LlrBlock(np.ones((3, 1))))

    def test_round_trip(self):
        r = achievable_rate(LlrBlock(np.ones((3, 1))), np.zeros((3, 1)))
        assert type(r).from_dict(r.to_dict()) == r


class TestOracles:
    def test_exact_llrs_symmetry(self, pam8):
        y = np.linspace(-1.5, 1.5, 31)
        a = exact_llrs_awgn(pam8, y, 0.05).llrs
        b = exact_llrs_awgn(pam8, -y, 0.05).llrs
        # flipping y flips the sign bit and leaves the others
        np.testing.assert_allclose(a[:, 0], -b[:, 0], atol=1e-9)
        np.testing.assert_allclose(a[:, 1:], b[:, 1:], atol=1e-9)

    def test_exact_llrs_binary_closed_form(self):
        y = np.array([-1.0, 0.2, 3.0])
        np.testing.assert_allclose(exact_llrs_awgn(build_gray_pam(1), y, 0.5).llrs[:, 0],
                                   2 * y / 0.5)

    def test_no_overflow_at_low_noise(self, pam8):
        assert np.isfinite(exact_llrs_awgn(pam8, np.array([5.0]), 1e-6).llrs).all()

    def test_discrete_oracle(self):
        o = discrete_channel_oracle(np.array([[0.25, 0.0], [0.25, 0.5]]))
        assert math.isclose(o.conditional_entropy, 0.5)
        assert o.llrs[0] == 0.0 and o.llrs[1] == -np.inf

    @pytest.mark.parametrize("table", [np.ones((3, 2)) / 6, np.array([[0.5, 0.6], [0, -0.1]]),
                                       np.array([[0.2, 0.2], [0.2, 0.2]])])
    def test_discrete_oracle_rejects(self, table):
        with pytest.raises(ValueError):
            discrete_channel_oracle(table)

    def test_exact_rate_tops_max_log(self, pam8):
        bits = random_bits(20000, 3, 5)
        y = map_bits(pam8, bits).symbols + 0.15 * np.random.default_rng(5).normal(size=20000)
        ex = achievable_rate(exact_llrs_awgn(pam8, y, 0.0225), bits.bits)
        ml = achievable_rate(demap_max_log(MlaDemapper.fixed(pam8, 0.0225), y), bits.bits)
        assert ex.rate_bits_per_real_symbol >= ml.rate_bits_per_real_symbol


def _tanh_net(seed=0, sizes="5|6|2"):
    return MlpModel.initialize(MlpDesign.parse(sizes, TANH), seed)


class TestExtraction:
    def test_linear_network_is_its_own_kernel(self):
        m = MlpModel.initialize(MlpDesign.parse("5|3|1", LINEAR), 1)
        ek = extract_kernels(m, orders=2)[0]
        np.testing.assert_allclose(ek.h1, (m.weights[1] @ m.weights[0])[0], atol=1e-14)
        np.testing.assert_allclose(ek.h2, 0.0, atol=1e-8)

    def test_taylor_prediction(self, rng):
        m = _tanh_net()
        ek = extract_kernels(m, orders=3)[1]
        vol = ek.to_volterra()
        d = 0.05 * rng.normal(size=5)
        approx = ek.h0 + float(vol.coeffs @ _window_terms(vol, d))
        assert abs(approx - forward(m, d)[1]) < 1e-5
        assert ek.order == 3 and ek.memory == 2

    def test_volterra_kernels_round_trip(self, rng):
        d = VolterraDesign((5, 5))
        vol = VolterraModel(d, rng.normal(size=sum(kernel_count(d))))
        back = kernels_of(vol).to_volterra()
        np.testing.assert_allclose(back.coeffs, vol.coeffs)

    def test_pwl_rejects_higher_orders(self):
        m = MlpModel.initialize(MlpDesign.parse("3|4|1", RELU), 0)
        with pytest.raises(NotDifferentiableError):
            extract_kernels(m, orders=2)

    def test_pwl_rejects_kink(self):
        m = MlpModel.initialize(MlpDesign.parse("3|4|1", RELU), 0)
        with pytest.raises(NotDifferentiableError, match="kink"):
            extract_kernels(m, np.zeros(3), orders=1)

    def test_pwl_first_order_away_from_kinks(self, rng):
        m = MlpModel.initialize(MlpDesign.parse("3|4|1", HTANH), 0)
        y0 = rng.normal(scale=0.1, size=3) + 0.01
        assert extract_kernels(m, y0, orders=1)[0].h2 is None

    def test_csv_export(self, tmp_path):
        ek = extract_kernels(_tanh_net(), orders=2)
        path = tmp_path / "k.csv"
        write_kernels_csv(path, ek, 2)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["bit", "tap1", "tap2", "value"]
        assert len(rows) == 1 + 2 * 15
        assert rows[1][:3] == ["0", "-2", "-2"]

    @pytest.mark.parametrize("orders", [0, 4])
    def test_order_range(self, orders):
        with pytest.raises(ValueError):
            extract_kernels(_tanh_net(), orders=orders)


def _window_terms(vol, window):
    return _window_features(vol.design, window[None, :], kernel_indices(vol.design))[0]


class TestComplexity:
    def test_vnle_golden(self):
        r = multiplier_count(VolterraDesign.parse("17:17:11"))
        assert r.multipliers == 17 + 153 + 286 + 17 + 3
        assert r.breakdown == {"kernels": 456, "feature_matrix": 17, "demapper": 3}

    def test_linear_vnle_has_no_feature_term(self):
        assert multiplier_count(VolterraDesign((17,)), with_mla=False).multipliers == 17

    def test_pruned_order_drops_its_feature_term(self):
        d = VolterraDesign((5, 3))
        mask = np.ones(sum(kernel_count(d)), dtype=bool)
        mask[5:] = False
        r = multiplier_count(VolterraModel(d, np.ones(mask.size), mask))
        assert r.breakdown["feature_matrix"] == 0 and r.full_multipliers == 5 + 6 + 3 + 3

    @pytest.mark.parametrize("act,per_unit", [(RELU, 1), (HTANH, 1), (ITANH, 15), (TANH, 15),
                                              (LINEAR, 0)])
    def test_sdnne(self, act, per_unit):
        r = multiplier_count(MlpDesign.parse("17|16|10|3", act))
        assert r.breakdown == {"weights": 17 * 16 + 16 * 10 + 10 * 3, "activations": 26 * per_unit}

    def test_sdnne_counts_active_weights(self):
        m = MlpModel.initialize(MlpDesign.parse("3|2|1", RELU))
        m2 = MlpModel(m.design, m.weights, m.biases, [np.eye(2, 3, dtype=bool), np.ones((1, 2))])
        assert multiplier_count(m2).breakdown["weights"] == 4

    def test_report_checks_breakdown(self):
        with pytest.raises(ValueError):
            ComplexityReport(5, {"a": 4})
        r = ComplexityReport(5, {"a": 5})
        assert ComplexityReport.from_dict(r.to_dict()) == r

    def test_unknown_architecture(self):
        with pytest.raises(TypeError):
            multiplier_count("17|3")


class TestPatterns:
    def test_golden_bound(self):
        assert activation_patterns(MlpDesign.parse("17|16|10|3", RELU)) == 67_042_305

    def test_needs_hidden_layer(self):
        with pytest.raises(ValueError):
            activation_patterns(MlpDesign.parse("3|1", RELU))

    @pytest.mark.parametrize("sizes", ["2|3|1", "2|4|1", "2|3|3|1", "1|4|1"])
    def test_inclusive_bound_holds(self, sizes):
        rng = np.random.default_rng(0)
        m = MlpModel.initialize(MlpDesign.parse(sizes, RELU), 3)
        for b in m.biases[:-1]:
            b[:] = rng.normal(size=b.size)
        seen = realized_patterns(m, rng.normal(scale=5, size=(100_000, m.design.layer_sizes[0])))
        assert seen <= activation_patterns(m.design, inclusive=True)

    def test_three_lines_cut_seven_regions(self):
        # the exclusive form counts 4 for 2|3|1, yet three generic lines make 7 cells
        w = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        m = MlpModel(MlpDesign.parse("2|3|1", RELU), [w, np.ones((1, 3))],
                     [np.array([0.0, 0.0, -1.0]), np.zeros(1)])
        grid = np.stack(np.meshgrid(np.linspace(-3, 3, 121), np.linspace(-3, 3, 121)), -1)
        assert realized_patterns(m, grid.reshape(-1, 2) + 1e-3) == 7
        assert activation_patterns(m.design) == 4
        assert activation_patterns(m.design, inclusive=True) == 7
