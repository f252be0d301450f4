"""Sinc filter bank: mel initialization, kernel physics, differentiability."""

import logging

import numpy as np
import pytest

from acoustinet import tensor as T
from acoustinet.gradcheck import finite_difference_check
from acoustinet.sinc import SincFilterBank, hz_to_mel, mel_init, mel_to_hz, sinc_kernels
from acoustinet.tensor import Tensor


def _bank(f_low, band_width, rate=8000.0, k=101):
    f1 = Tensor(np.asarray(f_low, dtype=np.float64), requires_grad=True)
    bw = Tensor(np.asarray(band_width, dtype=np.float64), requires_grad=True)
    return SincFilterBank(len(f_low), k, rate, f1, bw)


class TestMelScale:
    def test_known_value(self):
        # 2595 * log10(2) = 781.1726...
        np.testing.assert_allclose(hz_to_mel(700.0), 781.1726, atol=1e-3)

    def test_roundtrip(self):
        f = np.linspace(20.0, 4000.0, 100)
        np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, rtol=1e-9)

    def test_mel_init_edges(self):
        bank = mel_init(5, 101, 8000.0)
        bands = bank.effective_bands()
        edges = np.concatenate([bands[:, 0], bands[-1:, 1]])
        assert np.all(np.diff(edges) > 0)
        np.testing.assert_allclose(edges[0], 30.0, atol=1e-9)
        np.testing.assert_allclose(edges[-1], 4000.0, atol=1e-9)
        # channel i's upper cutoff is channel i+1's lower cutoff
        np.testing.assert_allclose(bands[:-1, 1], bands[1:, 0], rtol=1e-12)

    def test_f_min_ge_f_max_rejected(self):
        with pytest.raises(ValueError):
            mel_init(5, 101, 8000.0, f_min=5000.0)


class TestKernels:
    def test_shape_and_symmetry(self):
        bank = mel_init(5, 101, 8000.0)
        k = sinc_kernels(bank)
        assert k.shape == (5, 1, 101)
        vals = k.data[:, 0, :]
        np.testing.assert_allclose(vals, vals[:, ::-1], atol=1e-12)

    def test_even_kernel_size_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            mel_init(5, 100, 8000.0)

    def test_zero_low_cutoff_is_windowed_lowpass(self):
        rate, K, f2 = 8000.0, 101, 900.0
        bank = _bank([0.0], [f2], rate, K)
        got = sinc_kernels(bank).data[0, 0, :]
        n = np.arange(K)
        m = n - (K - 1) / 2
        fn = f2 / rate
        with np.errstate(invalid="ignore"):
            lp = np.sin(2 * np.pi * fn * m) / (np.pi * m)
        lp[K // 2] = 2 * fn
        ham = 0.54 - 0.46 * np.cos(2 * np.pi * n / (K - 1))
        np.testing.assert_allclose(got, lp * ham, atol=1e-12)

    def test_dc_rejection_for_resolvable_band(self):
        bank = _bank([300.0], [600.0])  # 300-900 Hz at 8 kHz
        k = sinc_kernels(bank).data[0, 0, :]
        assert abs(k.sum()) < 1e-2

    def test_band_selectivity_six_db(self):
        # 300-900 Hz band: center response beats out-of-band probes by >= 6 dB.
        bank = _bank([300.0], [600.0])
        k = sinc_kernels(bank).data[0, 0, :]
        n_fft = 8192
        mag = np.abs(np.fft.rfft(k, n_fft))
        freqs = np.fft.rfftfreq(n_fft, 1.0 / 8000.0)

        def at(f):
            return mag[np.argmin(np.abs(freqs - f))]

        center = at(600.0)
        assert 20 * np.log10(center / at(150.0)) >= 6.0
        assert 20 * np.log10(center / at((900.0 + 4000.0) / 2)) >= 6.0

    def test_nyquist_clamp_logged_not_raised(self, caplog):
        bank = _bank([3000.0], [5000.0])  # f2 would be 8000 > Nyquist 4000
        with caplog.at_level(logging.WARNING, logger="acoustinet.sinc"):
            k = sinc_kernels(bank)
        assert np.isfinite(k.data).all()
        assert any("clamp" in r.message for r in caplog.records)
        np.testing.assert_allclose(bank.effective_bands()[0], [3000.0, 4000.0])

    def test_negative_parameters_give_valid_bands(self):
        bank = _bank([-200.0], [-300.0])
        np.testing.assert_allclose(bank.effective_bands()[0], [200.0, 500.0])


class TestKernelGradients:
    def test_cutoff_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        bank = _bank([250.0, 700.0], [400.0, 900.0], rate=8000.0, k=33)
        r = Tensor(rng.normal(size=(2, 1, 33)))

        def loss():
            return T.sum_all(T.mul_elem(sinc_kernels(bank), r))

        report = finite_difference_check(
            loss, {"f_low": bank.f_low, "band_width": bank.band_width}, eps=1e-6)
        assert report.max_rel_err < 1e-6, str(report)

    def test_gradients_through_convolution(self):
        rng = np.random.default_rng(1)
        bank = _bank([150.0], [300.0], rate=2000.0, k=21)
        sig = Tensor(rng.uniform(0, 1, size=(1, 64)))
        r = Tensor(rng.normal(size=(1, 44)))

        def loss():
            return T.sum_all(T.mul_elem(T.conv1d_valid(sig, sinc_kernels(bank)), r))

        report = finite_difference_check(
            loss, {"f_low": bank.f_low, "band_width": bank.band_width}, eps=1e-6)
        assert report.max_rel_err < 1e-6, str(report)
