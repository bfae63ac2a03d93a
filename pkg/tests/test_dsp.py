import numpy as np
import pytest
from scipy import signal as sp_signal

from app.core.errors import ConfigurationError
from app.services.dsp import (
    analytic_signal,
    band_power,
    bandlimit,
    blackman_edge_window,
    blackman_taper,
    check_band,
    edge_window,
    fft_interpolate,
    psd,
)

RATE = 192000.0
BAND = (6000.0, 18000.0)


def test_blackman_taper_endpoints():
    assert blackman_taper(0.0) == pytest.approx(1.0)
    assert blackman_taper(1.0) == pytest.approx(0.0, abs=1e-15)
    assert blackman_taper(-1.0) == pytest.approx(0.0, abs=1e-15)


def test_edge_window_layout():
    w = blackman_edge_window(4, 8)
    assert w.size == 16
    assert w[0] == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_array_equal(w[4:13], np.ones(9))
    np.testing.assert_allclose(w[1:4], w[13:16][::-1])
    assert np.all((w >= 0) & (w <= 1))


def test_edge_window_in_time():
    t = np.array([-1.0, -0.5, 0.0, 1.0, 2.0, 2.5, 3.0, 3.5])
    w = edge_window(t, window_n=1, span=2.0, sample_rate=1.0)
    np.testing.assert_allclose(w, [0.0, blackman_taper(0.5), 1.0, 1.0, 1.0, blackman_taper(0.5), 0.0, 0.0], atol=1e-15)


def test_check_band_rejects_above_nyquist():
    with pytest.raises(ConfigurationError):
        check_band((90000.0, 100000.0), RATE)


def test_interpolation_passes_through_bandlimited_samples():
    x = bandlimit(np.random.default_rng(3).standard_normal(4096), RATE, BAND)
    fine = fft_interpolate(x, 8, BAND, RATE)
    assert fine.size == 8 * x.size
    np.testing.assert_allclose(fine[::8], x, atol=1e-12)


def test_interpolation_keeps_sine_amplitude():
    n = 1920
    t = np.arange(n) / RATE
    x = 0.9 * np.cos(2 * np.pi * 12000.0 * t)
    fine = fft_interpolate(x, 64, BAND, RATE)
    assert np.max(np.abs(fine)) == pytest.approx(0.9, rel=1e-9)


def test_interpolation_requires_oversampling():
    with pytest.raises(ConfigurationError):
        fft_interpolate(np.zeros(64), 1, BAND, RATE)


def test_analytic_signal_envelope_of_sine():
    t = np.arange(1920) / RATE
    z = analytic_signal(0.5 * np.cos(2 * np.pi * 12000.0 * t))
    np.testing.assert_allclose(np.abs(z), 0.5, rtol=1e-9)
    with pytest.raises(ConfigurationError):
        analytic_signal(np.zeros(8))


def test_psd_parseval_rectangular():
    x = np.random.default_rng(5).standard_normal(19200) * 0.01
    freqs, density = psd(x, RATE)
    assert band_power(freqs, density, np.ones(freqs.size, dtype=bool)) == pytest.approx(np.mean(x ** 2), rel=1e-9)


def test_psd_parseval_blackman():
    x = np.random.default_rng(6).standard_normal(19200) * 0.01
    freqs, density = psd(x, RATE, "blackman")
    w = sp_signal.get_window("blackman", x.size)
    windowed = np.sum((x * w) ** 2) / np.sum(w ** 2)
    total = band_power(freqs, density, np.ones(freqs.size, dtype=bool))
    assert abs(10 * np.log10(total / windowed)) < 0.1


def test_bandlimit_is_idempotent():
    once = bandlimit(np.random.default_rng(8).standard_normal(4800), RATE, BAND)
    twice = bandlimit(once, RATE, BAND)
    np.testing.assert_allclose(twice, once, rtol=0, atol=1e-12 * np.max(np.abs(once)))


def test_interpolation_leaves_nothing_out_of_band():
    x = np.random.default_rng(9).standard_normal(4096)
    fine = fft_interpolate(x, 8, BAND, RATE)
    spectrum = np.abs(np.fft.rfft(fine)) ** 2
    freqs = np.fft.rfftfreq(fine.size, d=1.0 / (8 * RATE))
    outside = (freqs < BAND[0]) | (freqs > BAND[1])
    assert spectrum[outside].sum() < 1e-20 * spectrum.sum()


def test_analytic_signal_quadrature():
    t = np.arange(1920) / RATE
    z = analytic_signal(np.cos(2 * np.pi * 12000.0 * t))
    np.testing.assert_allclose(z.imag, np.sin(2 * np.pi * 12000.0 * t), atol=1e-9)
    # 直流没有正交分量
    z = analytic_signal(np.full(64, 0.25))
    np.testing.assert_allclose(z.real, 0.25, atol=1e-12)
    np.testing.assert_allclose(z.imag, 0.0, atol=1e-12)


def test_psd_carrier_power_blackman():
    n = 192000
    t = np.arange(n) / RATE
    x = 0.9 * np.cos(2 * np.pi * 12000.0 * t)
    freqs, density = psd(x, RATE, "blackman")
    peak = int(np.argmax(density))
    assert freqs[peak] == pytest.approx(12000.0)
    near = np.abs(np.arange(freqs.size) - peak) <= 3
    assert band_power(freqs, density, near) == pytest.approx(0.405, rel=0.01)


def test_psd_unknown_window():
    with pytest.raises(ConfigurationError):
        psd(np.zeros(64), RATE, "hann")
