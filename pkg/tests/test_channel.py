import math

import numpy as np
import pytest

from softeq.channel import (WienerHammersteinChannel, distort, osnr_to_snr, propagate,
                            sigma_from_snr, snr_to_osnr)
from softeq.modem import build_gray_pam, map_bits, random_bits


def _frame(n, seed=0):
    g = build_gray_pam(3)
    return map_bits(g, random_bits(n, 3, seed))


class TestPropagate:
    def test_identity_channel(self):
        x = _frame(1000)
        ch = WienerHammersteinChannel((1.0,), (1.0, 0, 0, 0, 0), (1.0,))
        y = propagate(ch, x)
        scale = 1.0 / np.sqrt(np.mean(x.symbols**2))
        np.testing.assert_allclose(y.symbols, x.symbols * scale, atol=1e-12)

    def test_pointwise_cubic(self):
        ch = WienerHammersteinChannel((1.0,), (1.0, 0, 0.1, 0, 0), (1.0,))
        s = distort(ch, np.ones(4), normalize=False)
        np.testing.assert_allclose(s, 1.1)

    def test_deterministic_per_seed(self):
        x = _frame(500)
        ch = WienerHammersteinChannel().with_snr(20, seed=5)
        assert np.array_equal(propagate(ch, x).symbols, propagate(ch, x).symbols)
        other = WienerHammersteinChannel().with_snr(20, seed=6)
        assert not np.array_equal(propagate(ch, x).symbols, propagate(other, x).symbols)

    def test_default_channel_noise_level(self):
        x = _frame(10**5, 1)
        ch = WienerHammersteinChannel().with_snr(25, seed=2)
        y, clean = propagate(ch, x, return_clean=True)
        snr = 10 * np.log10(np.mean(clean**2) / np.mean((y.symbols - clean) ** 2))
        assert abs(snr - 25.0) < 0.2
        assert abs(np.mean(y.symbols**2) - 1.0) < 1e-3

    def test_awgn_reduction(self):
        x = _frame(10**5, 2)
        ch = WienerHammersteinChannel((1.0,), (1.0, 0, 0, 0, 0), (1.0,)).with_snr(15, seed=1)
        y, clean = propagate(ch, x, return_clean=True)
        snr = 10 * np.log10(np.mean(clean**2) / np.mean((y.symbols - clean) ** 2))
        assert abs(snr - 15.0) < 0.1

    def test_cursor_is_largest_tap(self):
        ch = WienerHammersteinChannel()
        assert ch.pre_cursor == 1 and ch.post_cursor == 0

    def test_impulse_alignment(self):
        ch = WienerHammersteinChannel((0.2, 1.0, 0.3), (1.0, 0, 0, 0, 0), (1.0,))
        x = np.zeros(9)
        x[4] = 1.0
        s = distort(ch, x, normalize=False)
        np.testing.assert_allclose(s[3:6], [0.2, 1.0, 0.3])

    @pytest.mark.parametrize("kwargs", [
        {"pre_fir": ()},
        {"poly": (0.0, 1.0)},
        {"noise_sigma": -1.0},
        {"pre_cursor": 9},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            WienerHammersteinChannel(**kwargs)

    def test_empty_input(self):
        with pytest.raises(ValueError):
            distort(WienerHammersteinChannel(), np.empty(0))

    def test_keeps_bit_source(self):
        x = _frame(50)
        assert propagate(WienerHammersteinChannel(), x).source is x.source


class TestSnrConversions:
    def test_sigma(self):
        assert sigma_from_snr(math.inf) == 0.0
        assert sigma_from_snr(0.0) == 1.0
        assert math.isclose(sigma_from_snr(20.0), 0.1)

    def test_osnr(self):
        assert math.isclose(osnr_to_snr(33.8, 92.0), 33.8 - 10 * math.log10(92 / 12.5))
        assert abs(osnr_to_snr(33.8, 92.0) - 25.13) < 0.01

    def test_round_trip(self):
        assert math.isclose(snr_to_osnr(osnr_to_snr(30.0, 64.0), 64.0), 30.0)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            osnr_to_snr(30.0, 0.0)
