import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softeq.losses import binary_cross_entropy, equivocation_grad, equivocation_loss, logistic
from softeq.optim import Adam, AdamConfig, TrainingDiverged, minimize


class TestEquivocation:
    def test_uninformative_llr_costs_one_bit(self):
        np.testing.assert_allclose(equivocation_loss([0, 1], [0.0, 0.0]), 1.0)

    def test_sign_convention(self):
        assert equivocation_loss(0, 10.0) < 1e-4
        assert equivocation_loss(1, 10.0) > 14.0

    def test_infinite_llrs(self):
        assert equivocation_loss(0, np.inf) == 0.0
        assert equivocation_loss(1, -np.inf) == 0.0
        assert equivocation_loss(1, np.inf) == np.inf

    def test_large_magnitudes_stay_finite(self):
        v = equivocation_loss(1, 1e4)
        assert np.isfinite(v) and abs(v - 1e4 / np.log(2)) < 1e-6

    @settings(max_examples=50, deadline=None)
    @given(b=st.integers(0, 1), llr=st.floats(-40, 40))
    def test_matches_bce(self, b, llr):
        bce = binary_cross_entropy(b, logistic(llr), logistic(-llr))
        assert abs(float(equivocation_loss(b, llr)) - float(bce)) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(b=st.integers(0, 1), llr=st.floats(-30, 30))
    def test_grad_is_derivative(self, b, llr):
        h = 1e-6
        num = (equivocation_loss(b, llr + h) - equivocation_loss(b, llr - h)) / (2 * h)
        assert abs(float(equivocation_grad(b, llr)) - float(num)) < 1e-6

    def test_bce_complement_default(self):
        np.testing.assert_allclose(binary_cross_entropy([0, 1], [0.25, 0.25]),
                                   [2.0, np.log2(4 / 3)])


class TestAdamConfig:
    @pytest.mark.parametrize("kw", [{"step": 0}, {"beta1": 1.0}, {"beta2": 0.0}, {"eps": 0},
                                    {"batch_size": 0}, {"max_epochs": -1}, {"patience": 0}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            AdamConfig(**kw)

    def test_replace_and_dict(self):
        cfg = AdamConfig().replace(step=0.1, seed=4)
        assert cfg.step == 0.1 and cfg.seed == 4 and cfg.to_dict()["batch_size"] == 512


class TestAdam:
    def test_first_step_size_is_learning_rate(self):
        p = {"w": np.array([1.0, -2.0])}
        Adam(p, AdamConfig(step=0.1)).step(p, {"w": np.array([3.0, -0.5])})
        np.testing.assert_allclose(p["w"], [0.9, -1.9], atol=1e-6)

    def test_mask_holds_zeros(self):
        p = {"w": np.array([1.0, 0.0])}
        Adam(p, AdamConfig(step=0.1)).step(p, {"w": np.ones(2)}, {"w": np.array([1.0, 0.0])})
        assert p["w"][1] == 0.0


def _quadratic(target):
    def loss_grad(p, rows):
        d = p["w"] - target
        return float(d @ d), {"w": 2 * d}

    return loss_grad, lambda p: float(np.sum((p["w"] - target) ** 2))


class TestMinimize:
    def test_converges_on_quadratic(self):
        target = np.array([0.5, -1.0, 2.0])
        lg, vl = _quadratic(target)
        p = {"w": np.zeros(3)}
        trace = minimize(p, lg, vl, 1, AdamConfig(step=0.05, max_epochs=2000, patience=50))
        np.testing.assert_allclose(p["w"], target, atol=1e-3)
        assert trace.steps == len(trace.train_loss)

    def test_zero_epochs_is_noop(self):
        lg, vl = _quadratic(np.ones(2))
        p = {"w": np.zeros(2)}
        assert minimize(p, lg, vl, 1, AdamConfig(max_epochs=0)).steps == 0
        assert not p["w"].any()

    def test_restores_best_parameters(self):
        # validation prefers the starting point, so it must come back
        lg, _ = _quadratic(np.ones(2))
        p = {"w": np.zeros(2)}
        trace = minimize(p, lg, lambda q: float(np.sum(q["w"] ** 2)), 1,
                         AdamConfig(step=0.1, max_epochs=5, patience=100))
        assert trace.best_epoch == -1 and not p["w"].any()

    def test_divergence_raises_with_trace(self):
        p = {"w": np.zeros(1)}
        with pytest.raises(TrainingDiverged) as exc:
            minimize(p, lambda q, r: (np.nan, {"w": np.zeros(1)}), lambda q: 0.0, 1, AdamConfig())
        assert np.isnan(exc.value.trace.train_loss[-1])

    def test_deterministic_batches(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(200, 3))
        y = x @ np.array([1.0, -2.0, 0.5])

        def run():
            p = {"w": np.zeros(3)}

            def lg(q, rows):
                e = x[rows] @ q["w"] - y[rows]
                return float(np.mean(e**2)), {"w": 2 * x[rows].T @ e / rows.size}

            minimize(p, lg, lambda q: float(np.mean((x @ q["w"] - y) ** 2)), 200,
                     AdamConfig(step=0.01, batch_size=16, max_epochs=20, seed=3))
            return p["w"]

        assert np.array_equal(run(), run())
