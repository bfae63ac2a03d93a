import numpy as np
import pytest

from app.core.errors import CoverageError, InsufficientSignalError, SynchronizationError
from app.schemas.analysis import AnalysisConfig, Parity, ZeroCrossingSeries
from app.schemas.signal import NoiseTraces, SampleBuffer
from app.services.reports import correlation
from app.services.synthesis import validation_dummy, generate_playback_waveform, simulate_recording
from app.services.zca import (
    align_crossings,
    analysis_spans,
    compute_zcf,
    detect_onset,
    find_zero_crossings,
    fit_ideal_grid,
    fit_line,
    locate_crossings,
    main_part_interval,
)


@pytest.fixture(scope="module")
def jitter_zcf(jitter_dummy):
    _, _, buffer = jitter_dummy
    return compute_zcf(buffer, AnalysisConfig())


@pytest.fixture
def clean_recording(short_playback):
    playback = generate_playback_waveform(short_playback)
    noise = NoiseTraces.zeros(400000, 192000.0, playback.start_time)
    return simulate_recording(playback, noise, short_playback.t_p + 0.05, 192000.0)


def _grid_series(first: int, count: int, onset: float = 0.0, f_c: float = 12000.0,
                 parity: Parity = Parity.rising) -> ZeroCrossingSeries:
    """理想过零点序列，第0号过零点在 onset + 0.5/(2f_c)，偶数编号为parity方向"""
    k = np.arange(first, first + count)
    s = onset + (k + 0.5) / (2 * f_c)
    return ZeroCrossingSeries(
        s=s, s_prime=s, delta=np.zeros(count), f_c_measured=f_c,
        first_index_parity=parity if first % 2 == 0 else parity.flipped(),
    )


def test_crossing_at_midpoint_of_opposite_samples():
    found = locate_crossings(np.array([1.0, -1.0, -1.0, 1.0]), 1.0, (0.0, 3.0))
    np.testing.assert_allclose(found.times, [0.5, 2.5])
    assert list(found.rising) == [False, True]


def test_exact_zero_sample_is_the_crossing():
    found = locate_crossings(np.array([1.0, 0.0, -1.0]), 1.0, (0.0, 2.0))
    np.testing.assert_allclose(found.times, [1.0])
    assert not found.rising[0]


def test_crossings_outside_span_are_dropped():
    fine = np.cos(2 * np.pi * np.arange(64) / 16)
    times = find_zero_crossings(fine, 16.0, (1.0, 2.0))
    np.testing.assert_allclose(times, [1.25, 1.75])


def test_too_few_crossings():
    with pytest.raises(InsufficientSignalError):
        find_zero_crossings(np.ones(32), 1.0, (0.0, 31.0))


def test_fit_line_exact():
    x = np.linspace(-1, 5, 50)
    line = fit_line(x, 3 * x + 2)
    assert line.slope == pytest.approx(3.0)
    assert line.intercept == pytest.approx(2.0)
    np.testing.assert_allclose(line.residuals, 0.0, atol=1e-12)


def test_ideal_grid_fit_exact():
    s = 0.1 + np.arange(1000) / 24000.0
    f_c, s1 = fit_ideal_grid(s)
    assert f_c == pytest.approx(12000.0, rel=1e-12)
    assert s1 == pytest.approx(0.1, abs=1e-15)


def test_crossing_count_for_one_second_span():
    _, _, buffer = validation_dummy("jitter", carrier_hz=12000.0)
    assert compute_zcf(buffer, AnalysisConfig()).M == 24000


def test_jitter_dummy_rms_and_correlation(jitter_dummy, jitter_zcf):
    _, traces, _ = jitter_dummy
    assert jitter_zcf.rms() == pytest.approx(40e-12, rel=0.05)
    injected = traces.evaluate("j", jitter_zcf.s_prime)
    assert correlation(jitter_zcf.delta, injected) >= 0.99
    assert jitter_zcf.f_c_measured == pytest.approx(11884.877, abs=0.01)
    assert jitter_zcf.amplitude == pytest.approx(0.9, rel=1e-3)


def test_am_is_rejected(am_dummy):
    _, _, buffer = am_dummy
    assert compute_zcf(buffer, AnalysisConfig()).rms() <= 5e-12


def test_pi_noise_appears_with_alternating_sign(pi_dummy):
    spec, traces, buffer = pi_dummy
    zcf = compute_zcf(buffer, AnalysisConfig())
    recovered = zcf.signs() * zcf.delta * zcf.omega * spec.amplitude_ratio
    assert correlation(recovered, traces.evaluate("n_pi", zcf.s_prime)) >= 0.9


def test_crossings_invariant_to_amplitude(jitter_dummy, jitter_zcf):
    _, _, buffer = jitter_dummy
    halved = SampleBuffer(samples=buffer.samples // 2, bit_depth=24, sample_rate=buffer.sample_rate,
                          start_time=buffer.start_time)
    zcf = compute_zcf(halved, AnalysisConfig())
    assert zcf.M == jitter_zcf.M
    assert np.std(zcf.delta - jitter_zcf.delta) < 2e-12


def test_oversampling_converged(jitter_dummy, jitter_zcf):
    _, _, buffer = jitter_dummy
    finer = compute_zcf(buffer, AnalysisConfig(oversample=128))
    assert abs(finer.rms() - jitter_zcf.rms()) < 1e-12


def test_block_outside_buffer(jitter_dummy):
    _, _, buffer = jitter_dummy
    with pytest.raises(CoverageError):
        compute_zcf(buffer, AnalysisConfig(), start=buffer.start_time)


def test_onset_at_fade_midpoint(short_playback, short_analysis, clean_recording):
    m, nf = short_playback.i_main, short_playback.fade_length
    midpoint = short_playback.t_p + (m - nf // 2 - 1) / short_playback.sample_rate
    assert detect_onset(clean_recording, short_analysis.carrier_hz) == pytest.approx(midpoint, abs=1e-3)


def test_main_part_and_spans(short_playback, short_analysis, clean_recording):
    start, end = main_part_interval(clean_recording, short_analysis.carrier_hz)
    expected = short_playback.main_interval
    assert start == pytest.approx(expected[0], abs=5e-3)
    assert end == pytest.approx(expected[1], abs=5e-3)

    spans = analysis_spans(clean_recording, short_analysis, 3)
    np.testing.assert_allclose(np.diff(spans), short_analysis.flat_length / 192000.0)
    assert spans[0] == pytest.approx(start + short_analysis.window_n / 192000.0)
    with pytest.raises(CoverageError):
        analysis_spans(clean_recording, short_analysis, 10)


def test_clean_recording_has_tiny_zcf(short_analysis, clean_recording):
    spans = analysis_spans(clean_recording, short_analysis, 1)
    zcf = compute_zcf(clean_recording, short_analysis, spans[0])
    assert zcf.M == pytest.approx(0.2 * 24000, abs=1)
    assert zcf.rms() < 2e-12


def test_span_in_fade_is_rejected(short_analysis, clean_recording):
    onset = detect_onset(clean_recording, short_analysis.carrier_hz)
    with pytest.raises(CoverageError):
        compute_zcf(clean_recording, short_analysis, onset)


def test_alignment_with_one_cycle_shift():
    a = _grid_series(0, 100)
    b = _grid_series(2, 100)
    aligned_a, aligned_b = align_crossings(a, b, 0.0, 0.0)
    assert aligned_a.M == aligned_b.M == 98
    assert aligned_a.k_start == aligned_b.k_start == 2
    np.testing.assert_allclose(aligned_a.s, aligned_b.s)
    assert aligned_a.first_index_parity is aligned_b.first_index_parity


def test_alignment_uses_each_recorders_onset():
    a = _grid_series(0, 50)
    b = _grid_series(0, 50, onset=0.003)
    aligned_a, aligned_b = align_crossings(a, b, 0.0, 0.003)
    assert aligned_a.M == aligned_b.M == 50


def test_alignment_rejects_half_crossing_offset():
    a = _grid_series(0, 50)
    b = _grid_series(0, 50, onset=0.5 / 24000.0)
    with pytest.raises(SynchronizationError):
        align_crossings(a, b, 0.0, 0.0)


def test_alignment_rejects_parity_mismatch():
    a = _grid_series(0, 50)
    b = _grid_series(2, 50, parity=Parity.falling)
    with pytest.raises(SynchronizationError):
        align_crossings(a, b, 0.0, 0.0)
