import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softeq.modem import build_gray_pam, map_bits, random_bits
from softeq.optim import AdamConfig
from softeq.sdnne import (ACTIVATIONS, EQUIVOCATION, HTANH, ITANH, LINEAR, MSE, RELU, TANH,
                          MlpDesign, MlpModel, PruningSchedule, _prune_to, activate,
                          backprop_gradient, batch_input_gradient, forward, input_gradient, kinks,
                          llrs, prune_gradual, refit_output, train)


def _pam4_link(n=6000, seed=0, sigma=0.15):
    g = build_gray_pam(2)
    bits = random_bits(n, 2, seed)
    x = map_bits(g, bits).symbols
    rng = np.random.default_rng(seed)
    y = x + 0.2 * np.roll(x, 1) + sigma * rng.normal(size=n)
    return y, bits


class TestDesign:
    def test_parse(self):
        d = MlpDesign.parse("17|16|10|3", RELU)
        assert d.layer_sizes == (17, 16, 10, 3) and str(d) == "17|16|10|3"
        assert d.memory == 8 and d.hidden_sizes == (16, 10) and d.n_layers == 3

    def test_even_input_has_no_window(self):
        with pytest.raises(ValueError, match="symmetric window"):
            _ = MlpDesign.parse("4|3|1").memory

    @pytest.mark.parametrize("kw", [{"layer_sizes": (3,)}, {"layer_sizes": (3, 0, 1)},
                                    {"layer_sizes": (3, 1), "activation": "gelu"},
                                    {"layer_sizes": (3, 1), "itanh_points": 1}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            MlpDesign(**kw)


class TestActivations:
    def test_itanh_hits_table_points(self):
        xs = np.linspace(-4, 4, 16)
        np.testing.assert_allclose(activate(ITANH, xs)[0], np.tanh(xs), atol=1e-15)

    def test_itanh_saturates_outside_range(self):
        a, da = activate(ITANH, np.array([-9.0, 9.0]))
        np.testing.assert_allclose(a, np.tanh([-4.0, 4.0]))
        assert not da.any()

    def test_itanh_converges_to_tanh(self):
        z = np.linspace(-3.9, 3.9, 2001)
        errs = [np.max(np.abs(activate(ITANH, z, k)[0] - np.tanh(z))) for k in (8, 16, 64, 256)]
        assert all(b < a for a, b in zip(errs, errs[1:])) and errs[-1] < 1e-3

    def test_piecewise_values(self):
        z = np.array([-2.0, -0.5, 0.5, 2.0])
        np.testing.assert_array_equal(activate(HTANH, z)[0], [-1, -0.5, 0.5, 1])
        np.testing.assert_array_equal(activate(RELU, z)[0], [0, 0, 0.5, 2])
        np.testing.assert_array_equal(activate(LINEAR, z)[1], 1.0)

    @pytest.mark.parametrize("kind", ACTIVATIONS)
    def test_derivative_away_from_kinks(self, kind):
        z = np.linspace(-3.3, 3.3, 97) + 0.013
        _, da = activate(kind, z)
        h = 1e-7
        num = (activate(kind, z + h)[0] - activate(kind, z - h)[0]) / (2 * h)
        np.testing.assert_allclose(da, num, atol=1e-6)

    def test_kink_sets(self):
        assert kinks(RELU).tolist() == [0.0]
        assert kinks(HTANH).tolist() == [-1.0, 1.0]
        assert kinks(ITANH, 5).size == 5 and kinks(TANH).size == 0


class TestNetwork:
    def test_forward_shapes(self):
        m = MlpModel.initialize(MlpDesign.parse("5|4|2"), 1)
        assert forward(m, np.zeros(5)).shape == (2,)
        assert forward(m, np.zeros((7, 5))).shape == (7, 2)
        with pytest.raises(ValueError):
            forward(m, np.zeros(4))

    def test_initialization_is_seeded(self):
        d = MlpDesign.parse("5|4|2")
        a, b = MlpModel.initialize(d, 3), MlpModel.initialize(d, 3)
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))

    @settings(max_examples=15, deadline=None)
    @given(act=st.sampled_from([TANH, LINEAR]), loss=st.sampled_from([EQUIVOCATION, MSE]),
           seed=st.integers(0, 10**6))
    def test_backprop_matches_finite_differences(self, act, loss, seed):
        rng = np.random.default_rng(seed)
        m = MlpModel.initialize(MlpDesign.parse("3|4|2", act), seed)
        x = rng.normal(size=(6, 3))
        t = rng.integers(0, 2, (6, 2)) if loss == EQUIVOCATION else rng.normal(size=(6, 2))
        _, g = backprop_gradient(m, x, t, loss)
        w = m.weights[0]
        h = 1e-6
        w[1, 2] += h
        up = backprop_gradient(m, x, t, loss)[0]
        w[1, 2] -= 2 * h
        down = backprop_gradient(m, x, t, loss)[0]
        w[1, 2] += h
        assert abs(g["W0"][1, 2] - (up - down) / (2 * h)) < 1e-6

    def test_input_gradient(self, rng):
        m = MlpModel.initialize(MlpDesign.parse("5|6|2"), 2)
        x = rng.normal(size=5)
        jac = input_gradient(m, x)
        h = 1e-6
        num = np.stack([(forward(m, x + h * e) - forward(m, x - h * e)) / (2 * h)
                        for e in np.eye(5)], axis=1)
        np.testing.assert_allclose(jac, num, atol=1e-7)
        np.testing.assert_allclose(batch_input_gradient(m, x[None])[0], jac)

    def test_linear_network_collapses_to_matrix(self, rng):
        m = MlpModel.initialize(MlpDesign.parse("5|4|3|2", LINEAR), 0)
        eff = m.weights[2] @ m.weights[1] @ m.weights[0]
        np.testing.assert_allclose(input_gradient(m, rng.normal(size=5)), eff, atol=1e-14)

    def test_masked_weights_get_no_gradient(self, rng):
        m = MlpModel.initialize(MlpDesign.parse("3|4|1"), 0)
        m.masks[0][0, 0] = False
        _, g = backprop_gradient(m, rng.normal(size=(5, 3)), rng.integers(0, 2, (5, 1)))
        assert g["W0"][0, 0] == 0.0

    @pytest.mark.parametrize("act", [TANH, ITANH])
    def test_json_round_trip(self, act):
        base = MlpModel.initialize(MlpDesign.parse("5|4|2", act), 4)
        masks = [np.ones_like(w, dtype=bool) for w in base.weights]
        masks[1][0, 0] = False
        m = MlpModel(base.design, base.weights, base.biases, masks)
        data = json.loads(json.dumps(m.to_dict()))
        assert ("itanh_table" in data) == (act == ITANH)
        back = MlpModel.from_dict(data)
        assert back.design == m.design and back.active_weights == m.active_weights
        x = np.random.default_rng(0).normal(size=(3, 5))
        np.testing.assert_array_equal(forward(back, x), forward(m, x))


class TestTraining:
    def test_learns_pam4_link(self):
        y, bits = _pam4_link()
        d = MlpDesign.parse("5|8|2")
        m, trace = train(d, y, bits, AdamConfig(step=1e-2, batch_size=256, max_epochs=30))
        loss = np.mean(trace.val_loss[trace.best_epoch])
        assert loss < 0.2 and llrs(m, y).llrs.shape == (y.size, 2)

    def test_deterministic(self):
        y, bits = _pam4_link(1000)
        opt = AdamConfig(step=1e-2, max_epochs=3, seed=9)
        a, _ = train(MlpDesign.parse("3|4|2"), y, bits, opt)
        b, _ = train(MlpDesign.parse("3|4|2"), y, bits, opt)
        assert all(np.array_equal(p, q) for p, q in zip(a.weights, b.weights))

    def test_mse_regression(self, rng):
        y = rng.normal(size=2000)
        opt = AdamConfig(step=1e-2, batch_size=32, max_epochs=60)
        m, _ = train(MlpDesign.parse("3|1", LINEAR), y, None, opt, loss=MSE, target=np.roll(y, -1))
        # tap -1 is the next sample
        np.testing.assert_allclose(m.weights[0][0], [1, 0, 0], atol=2e-2)

    def test_output_mismatch(self):
        y, bits = _pam4_link(500)
        with pytest.raises(ValueError, match="outputs"):
            train(MlpDesign.parse("3|4|3"), y, bits)

    @pytest.mark.parametrize("split", [0.0, 1.0])
    def test_split_bounds(self, split):
        y, bits = _pam4_link(500)
        with pytest.raises(ValueError):
            train(MlpDesign.parse("3|4|2"), y, bits, split=split)

    def test_output_refit_touches_only_last_layer(self):
        y, bits = _pam4_link(4000)
        m, _ = train(MlpDesign.parse("5|8|2"), y, bits, AdamConfig(step=1e-2, max_epochs=3))
        scaled = MlpModel(m.design, m.weights[:-1] + [3 * m.weights[-1]],
                          m.biases[:-1] + [3 * m.biases[-1]])
        refit, trace = refit_output(scaled, y, bits, AdamConfig(step=1e-2, max_epochs=40))
        np.testing.assert_array_equal(refit.weights[0], scaled.weights[0])
        assert min(trace.val_loss) < trace.val_loss[0]
        assert "output_refit_epoch" in refit.info


class TestPruning:
    def test_schedule_is_monotone_with_exact_endpoints(self):
        s = PruningSchedule(0.0, 0.5, start_step=10, n_steps=5, interval=4)
        values = [s.sparsity_at(k) for k in range(0, 40)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert values[0] == 0.0 and s.sparsity_at(s.end_step) == 0.5
        assert s.is_pruning_step(10) and s.is_pruning_step(30) and not s.is_pruning_step(11)

    @pytest.mark.parametrize("kw", [{"final_sparsity": 1.0}, {"initial_sparsity": 0.5,
                                                              "final_sparsity": 0.2},
                                    {"n_steps": 0}, {"interval": 0}])
    def test_schedule_rejects(self, kw):
        with pytest.raises(ValueError):
            PruningSchedule(**kw)

    def test_per_layer_rounds_up(self):
        params = {"W0": np.arange(1.0, 11.0), "W1": np.arange(1.0, 4.0)}
        masks = {k: np.ones_like(v) for k, v in params.items()}
        _prune_to(params, masks, 0.25)
        assert masks["W0"].sum() == 7 and masks["W1"].sum() == 2
        assert params["W0"][:3].tolist() == [0, 0, 0]

    def test_gradual_reaches_target(self):
        y, bits = _pam4_link(4000)
        m, _ = train(MlpDesign.parse("5|8|2"), y, bits, AdamConfig(step=1e-2, max_epochs=5))
        sched = PruningSchedule(0.0, 0.4, 0, 4, 5)
        pruned, _, events = prune_gradual(m, y, bits, sched, AdamConfig(step=1e-3, max_epochs=5))
        assert pruned.sparsity >= 0.4 - 1e-9
        assert [s for _, s in events] == sorted(s for _, s in events)

    def test_schedule_longer_than_training(self):
        y, bits = _pam4_link(1000)
        m = MlpModel.initialize(MlpDesign.parse("3|4|2"))
        with pytest.raises(ValueError, match="schedule ends"):
            prune_gradual(m, y, bits, PruningSchedule(n_steps=100, interval=100),
                          AdamConfig(max_epochs=1))
