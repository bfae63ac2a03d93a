"""
信号合成：播放文件、带限噪声、假录音波形、录音链路模拟

随机数使用numpy的PCG64（np.random.default_rng），同一种子在任意平台上给出相同序列；
各噪声分量的子种子由SeedSequence.spawn派生，开关某一分量不会改变其他分量。
"""
from typing import Dict, Literal, Optional, Tuple, Union

import numpy as np
from scipy import fft as sp_fft

from app.core.errors import ConfigurationError, CoverageError
from app.core.logger import log
from app.schemas.manifest import WavFile
from app.schemas.signal import DummySpec, NoiseTraces, PlaybackSpec, SampleBuffer
from app.services.dsp import bandlimit, check_band

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]
SeedRoot = Union[int, np.random.SeedSequence, None]

# 主体部分的载波查找表 (v_max, 0, -v_max, 0)
_CARRIER = np.array([1, 0, -1, 0], dtype=np.int64)

# 噪声分量的子种子顺序
_TRACE_STREAMS = ("j", "a_m", "n_pi", "a_total")


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def quantize(values: np.ndarray, bit_depth: int) -> Tuple[np.ndarray, int]:
    """
    floor量化到有符号整数并饱和

    :param values: 以满量程为1的浮点值
    :return: (整数采样, 饱和点数)
    """
    x_max = (1 << (bit_depth - 1)) - 1
    raw = np.floor(np.asarray(values, dtype=np.float64) * x_max)
    lo, hi = -x_max - 1, x_max
    clipped = int(np.count_nonzero((raw < lo) | (raw > hi)))
    if clipped:
        log.warning(f"量化饱和: {clipped} 个采样点超出{bit_depth}位范围")
    return np.clip(raw, lo, hi).astype(np.int64), clipped


def generate_playback_waveform(spec: PlaybackSpec) -> SampleBuffer:
    """
    生成五段式播放文件：静音、升余弦淡入、主体、淡出（淡入的逆序）、静音

    主体为 (v_max, 0, -v_max, 0) 的重复，即 f_P/4 的正弦。
    """
    spec.check()
    m, nf, nm = spec.i_main, spec.fade_length, spec.main_length
    v_max, v_min = spec.v_max, spec.v_min

    samples = np.zeros(spec.total_length, dtype=np.int64)

    # 下标均为1起始，数组位置 = 下标 - 1
    fade_idx = np.arange(m - nf, m)
    envelope = v_min + (1 + np.cos(np.pi * (fade_idx - m) / nf)) * (v_max - v_min) / 2
    fade_in = np.rint(envelope * _CARRIER[(fade_idx - m) % 4]).astype(np.int64)
    samples[m - nf - 1:m - 1] = fade_in

    main_idx = np.arange(m, m + nm)
    samples[m - 1:m - 1 + nm] = v_max * _CARRIER[(main_idx - m) % 4]

    samples[m - 1 + nm:m - 1 + nm + nf] = fade_in[::-1]

    log.debug(f"播放文件: {spec.total_length} 点, 主体 {nm} 点, t_P={spec.t_p:.6f} s")
    return SampleBuffer(
        samples=samples,
        bit_depth=spec.bit_depth,
        sample_rate=spec.sample_rate,
        start_time=spec.t_p,
    )


def fullband_rms_for(target_rms: float, band: Tuple[float, float], sample_rate: float) -> float:
    """
    求使带限后RMS等于target_rms的全带宽RMS

    带限后 RMS = 全带宽RMS * sqrt((hi - lo) / (f_R / 2))
    """
    lo, hi = check_band(band, sample_rate)
    return target_rms / np.sqrt((hi - lo) / (sample_rate / 2))


def make_bandlimited_noise(
    length: int,
    sample_rate: float,
    rms: float,
    band: Tuple[float, float],
    seed: SeedLike = None,
) -> np.ndarray:
    """
    生成带限高斯噪声

    先生成RMS为rms的全带宽正态噪声，再以理想滤波器（FFT置零）限制到band，
    输出RMS约为 rms * sqrt((hi - lo) / (f_R / 2))。

    :param length: 采样点数
    :param sample_rate: 采样率 Hz
    :param rms: 全带宽输入的RMS（时间或振幅单位）
    :param band: 保留频带 (lo, hi) Hz
    :param seed: 整数种子、SeedSequence或Generator
    """
    if length <= 0:
        raise ConfigurationError("噪声长度必须为正", detail={"length": length})
    check_band(band, sample_rate)
    white = _rng(seed).standard_normal(length) * rms
    return bandlimit(white, sample_rate, band)


def dummy_bands(spec: DummySpec) -> Dict[str, Tuple[float, float]]:
    """各噪声分量的频带：抖动与AM为低通，PI噪声与录音机噪声为载波两侧带通"""
    low = (0.0, spec.bandwidth_hz)
    high = (spec.carrier_hz - spec.bandwidth_hz, spec.carrier_hz + spec.bandwidth_hz)
    return {"j": low, "a_m": low, "n_pi": high, "a_total": high}


def make_dummy_traces(spec: DummySpec) -> NoiseTraces:
    """按DummySpec生成真值噪声轨迹"""
    spec.check()
    bands = dummy_bands(spec)
    scale = spec.amplitude_ratio * spec.omega
    rms = {
        "j": spec.jitter_rms if spec.enable_jitter else 0.0,
        "a_m": scale * spec.jitter_rms if spec.enable_am else 0.0,
        "n_pi": scale * spec.jitter_rms if spec.enable_pi else 0.0,
        "a_total": scale * spec.recorder_rms if spec.enable_recorder else 0.0,
    }
    children = np.random.SeedSequence(spec.seed).spawn(len(_TRACE_STREAMS))
    traces = {}
    for name, child in zip(_TRACE_STREAMS, children):
        if rms[name] > 0:
            traces[name] = make_bandlimited_noise(spec.length, spec.sample_rate, rms[name], bands[name], child)
        else:
            traces[name] = np.zeros(spec.length)
    return NoiseTraces(sample_rate=spec.sample_rate, start_time=spec.start_time, **traces)


def dummy_prequantized(spec: DummySpec, traces: NoiseTraces) -> np.ndarray:
    """
    量化前的假录音波形（满量程为1）

    A_0cos(ωt+θ_0) - A_0ωj(t)sin(ωt+θ_0) + A_M(t)cos(ωt+θ_0) + n_PI(t) + a_total(t)
    """
    if abs(traces.sample_rate - spec.sample_rate) > 1e-9:
        raise ConfigurationError(
            "噪声轨迹采样率与假录音不一致",
            detail={"traces": traces.sample_rate, "dummy": spec.sample_rate},
        )
    if len(traces) < spec.length:
        raise ConfigurationError("噪声轨迹长度不足", detail={"traces": len(traces), "required": spec.length})
    if abs(traces.start_time - spec.start_time) * spec.sample_rate > 1e-6:
        raise ConfigurationError(
            "噪声轨迹与假录音的时间网格未对齐",
            detail={"traces": traces.start_time, "dummy": spec.start_time},
        )

    n = spec.length
    t = spec.start_time + np.arange(n) / spec.sample_rate
    phase = spec.omega * t + spec.theta_0
    a0 = spec.amplitude_ratio
    cos_p, sin_p = np.cos(phase), np.sin(phase)
    return (
        a0 * cos_p
        - a0 * spec.omega * traces.j[:n] * sin_p
        + traces.a_m[:n] * cos_p
        + traces.n_pi[:n]
        + traces.a_total[:n]
    )


def synthesize_dummy_waveform(spec: DummySpec, traces: NoiseTraces) -> SampleBuffer:
    """按真值轨迹合成并floor量化假录音波形"""
    spec.check()
    samples, clipped = quantize(dummy_prequantized(spec, traces), spec.bit_depth)
    return SampleBuffer(
        samples=samples,
        bit_depth=spec.bit_depth,
        sample_rate=spec.sample_rate,
        start_time=spec.start_time,
        clip_count=clipped,
    )


DummyKind = Literal["jitter", "am", "pi"]

# 三种验证用假录音各自打开的噪声分量
DUMMY_KINDS: Dict[str, Dict[str, bool]] = {
    "jitter": dict(enable_jitter=True, enable_am=False, enable_pi=False),
    "am": dict(enable_jitter=False, enable_am=True, enable_pi=False),
    "pi": dict(enable_jitter=False, enable_am=False, enable_pi=True),
}


def validation_dummy(
    kind: DummyKind,
    base: Optional[DummySpec] = None,
    **overrides,
) -> Tuple[DummySpec, NoiseTraces, SampleBuffer]:
    """
    三种验证用假录音：仅抖动、仅AM、仅PI噪声

    AM与PI的全带宽幅度取 A_0ωJ，使三者在频域上可比。
    """
    if kind not in DUMMY_KINDS:
        raise ConfigurationError(f"未知的假录音类型: {kind}", detail={"allowed": list(DUMMY_KINDS)})
    data = (base or DummySpec()).model_dump()
    data.update(DUMMY_KINDS[kind])
    data.update(overrides)
    spec = DummySpec(**data).check()
    traces = make_dummy_traces(spec)
    return spec, traces, synthesize_dummy_waveform(spec, traces)


def expected_band_powers(spec: DummySpec) -> Dict[str, float]:
    """
    假录音各分量的理论功率（FS^2）

    P_C = A_0^2/2；抖动和AM在载波两侧各贡献一半；PI噪声直接为其方差。
    """
    a0 = spec.amplitude_ratio
    scale = a0 * spec.omega
    nyquist = spec.sample_rate / 2
    var_low = spec.jitter_rms ** 2 * spec.bandwidth_hz / nyquist
    var_high = spec.jitter_rms ** 2 * 2 * spec.bandwidth_hz / nyquist
    full_scale = spec.full_scale
    return {
        "carrier": a0 ** 2 / 2,
        "jitter": scale ** 2 * var_low / 2,
        "am": scale ** 2 * var_low / 2,
        "pi": scale ** 2 * var_high,
        "recorder": scale ** 2 * spec.recorder_rms ** 2 * 2 * spec.bandwidth_hz / nyquist,
        "quantization": 1.0 / (12.0 * full_scale ** 2),
        "quantization_snr_db": 6.02 * spec.bit_depth + 1.76,
    }


def _main_part_times(playback: SampleBuffer) -> Tuple[float, float]:
    """由满幅采样点推断主体区间"""
    peaks = np.flatnonzero(np.abs(playback.samples) == playback.full_scale)
    if peaks.size == 0:
        raise CoverageError("播放文件中没有满幅主体部分")
    first, last = peaks[0], peaks[-1]
    return (
        playback.start_time + first / playback.sample_rate,
        playback.start_time + (last + 1) / playback.sample_rate,
    )


class _Reconstruction:
    """播放信号经理想DAC/LPF与录音机LPF后，在录音采样时刻上的值与导数"""

    def __init__(self, playback: SampleBuffer, t_r: float, f_r: float, length: int, gain: float):
        f_p = playback.sample_rate
        n_p = len(playback)
        n_up = n_p * f_r / f_p
        if abs(n_up - round(n_up)) > 1e-9:
            raise ConfigurationError(
                "播放长度与采样率之比不能得到整数长度的重建网格",
                detail={"playback_length": n_p, "f_P": f_p, "f_R": f_r},
            )
        n_up = int(round(n_up))

        # τ = t_R - t_P = q / f_R + ε
        tau = t_r - playback.start_time
        q = int(np.floor(tau * f_r))
        eps = tau - q / f_r

        spectrum = sp_fft.rfft(playback.samples.astype(np.float64) / playback.full_scale * gain, workers=-1)
        freqs = sp_fft.rfftfreq(n_p, d=1.0 / f_p)
        if n_p % 2 == 0:
            spectrum[-1] *= 0.5
        spectrum[freqs > min(f_p, f_r) / 2] = 0

        padded = np.zeros(n_up // 2 + 1, dtype=np.complex128)
        count = min(spectrum.size, padded.size)
        padded[:count] = spectrum[:count]
        fine_freqs = sp_fft.rfftfreq(n_up, d=1.0 / f_r)
        padded *= np.exp(2j * np.pi * fine_freqs * eps)

        scale = n_up / n_p
        idx = q + np.arange(length)
        inside = (idx >= 0) & (idx < n_up)

        self.times = t_r + np.arange(length) / f_r
        self.value = np.zeros(length)
        self.value[inside] = sp_fft.irfft(padded, n=n_up, workers=-1)[idx[inside]] * scale
        self._padded = padded
        self._fine_freqs = fine_freqs
        self._idx, self._inside, self._scale, self._n_up = idx, inside, scale, n_up
        self._derivative = None

    @property
    def derivative(self) -> np.ndarray:
        """时间导数，频域乘以 2πif"""
        if self._derivative is None:
            d = sp_fft.irfft(self._padded * (2j * np.pi * self._fine_freqs), n=self._n_up, workers=-1)
            self._derivative = np.zeros_like(self.value)
            self._derivative[self._inside] = d[self._idx[self._inside]] * self._scale
        return self._derivative


def _recorded_signal(
    rec: _Reconstruction,
    gain: float,
    recorder_noise: NoiseTraces,
    player_noise: Optional[NoiseTraces],
) -> np.ndarray:
    """
    c(t) = x_p + (j_P + j_R)x_p' + (A_M/A_0)x_p + n_PI + a_total

    抖动项取一阶近似，与假录音的 -A_0ωj sin 项一致。
    """
    t = rec.times
    value = rec.value.copy()
    jitter = recorder_noise.evaluate("j", t)
    am = recorder_noise.evaluate("a_m", t)
    if player_noise is not None:
        jitter = jitter + player_noise.evaluate("j", t)
        am = am + player_noise.evaluate("a_m", t)
        value += player_noise.evaluate("n_pi", t) + player_noise.evaluate("a_total", t)
    if np.any(jitter):
        value += jitter * rec.derivative
    if np.any(am):
        value += am / gain * rec.value
    value += recorder_noise.evaluate("n_pi", t) + recorder_noise.evaluate("a_total", t)
    return value


def _recording_length(playback: SampleBuffer, t_r: float, f_r: float, length: Optional[int]) -> int:
    if length is not None:
        return length
    end = playback.start_time + len(playback) / playback.sample_rate
    return int(np.ceil((end - t_r) * f_r))


def _check_coverage(playback: SampleBuffer, t_r: float, f_r: float, length: int):
    main_start, main_end = _main_part_times(playback)
    rec_end = t_r + length / f_r
    if length <= 0 or t_r > main_start or rec_end < main_end:
        raise CoverageError(
            "录音窗口未覆盖播放主体部分",
            detail={"recording": [t_r, rec_end], "main_part": [main_start, main_end]},
        )


def simulate_recording(
    playback: SampleBuffer,
    recorder_noise: NoiseTraces,
    t_r: float,
    f_r: float,
    bit_depth: int = 24,
    length: Optional[int] = None,
    gain: float = 0.9,
    player_noise: Optional[NoiseTraces] = None,
) -> SampleBuffer:
    """
    模拟一台录音机录下播放文件

    链路：理想DAC/LPF重建 -> 叠加播放器噪声（可选）与录音机噪声 -> f_R/2低通 -> 在 t_R + i/f_R 采样 -> floor量化。
    重建与低通均以FFT理想滤波完成，主体部分即纯正弦。

    :param playback: 播放文件
    :param recorder_noise: 录音机噪声，a_total与n_pi为加性噪声，j为录音机采样抖动，a_m为录音机AM
    :param t_r: 录音开始时刻，须早于主体部分
    :param f_r: 录音采样率
    :param bit_depth: 录音位深
    :param length: 录音采样点数，默认录到播放结束
    :param gain: 播放满幅对应的录音振幅 A_0/A_R
    :param player_noise: 播放器噪声（j、a_m、n_pi），多台录音机共享同一份即模拟同一台播放器
    """
    length = _recording_length(playback, t_r, f_r, length)
    _check_coverage(playback, t_r, f_r, length)
    rec = _Reconstruction(playback, t_r, f_r, length, gain)
    samples, clipped = quantize(_recorded_signal(rec, gain, recorder_noise, player_noise), bit_depth)
    log.debug(f"模拟录音: t_R={t_r:.6f} s, f_R={f_r:.0f} Hz, {length} 点")
    return SampleBuffer(samples=samples, bit_depth=bit_depth, sample_rate=f_r, start_time=t_r, clip_count=clipped)


def bundle_player_channels(left: NoiseTraces, right: NoiseTraces) -> NoiseTraces:
    """
    双声道播放器L+R并联输出的噪声

    两声道共享抖动；PI噪声与AM取平均，独立的PI噪声方差减半。
    """
    if len(left) != len(right) or abs(left.sample_rate - right.sample_rate) > 1e-9:
        raise ConfigurationError("左右声道噪声轨迹网格不一致")
    if not np.array_equal(left.j, right.j):
        log.warning("左右声道抖动不一致，并联输出使用左声道抖动")
    return left.replace(
        a_m=(left.a_m + right.a_m) / 2,
        n_pi=(left.n_pi + right.n_pi) / 2,
        a_total=(left.a_total + right.a_total) / 2,
    )


def stereo_recording(
    playback: SampleBuffer,
    left_noise: NoiseTraces,
    right_noise: NoiseTraces,
    t_r: float,
    f_r: float,
    bit_depth: int = 24,
    length: Optional[int] = None,
    gain: float = 0.9,
    player_noise: Optional[NoiseTraces] = None,
) -> WavFile:
    """
    双声道录音机：L/R输入接同一信号，共享录音机抖动（取left_noise.j），PI噪声各自独立
    """
    length = _recording_length(playback, t_r, f_r, length)
    _check_coverage(playback, t_r, f_r, length)
    rec = _Reconstruction(playback, t_r, f_r, length, gain)
    right_noise = right_noise.replace(j=left_noise.j) if len(right_noise) == len(left_noise) else right_noise
    channels = []
    for noise in (left_noise, right_noise):
        samples, clipped = quantize(_recorded_signal(rec, gain, noise, player_noise), bit_depth)
        channels.append(SampleBuffer(samples=samples, bit_depth=bit_depth, sample_rate=f_r,
                                     start_time=t_r, clip_count=clipped))
    return WavFile.from_buffers(*channels)


def make_noise_traces(
    length: int,
    sample_rate: float,
    start_time: float,
    band: Tuple[float, float],
    seed: SeedRoot,
    jitter_rms: float = 0.0,
    pi_rms: float = 0.0,
    am_rms: float = 0.0,
    total_rms: float = 0.0,
    carrier_hz: float = 12000.0,
    amplitude: float = 0.9,
) -> NoiseTraces:
    """
    按带限后的RMS目标值生成噪声轨迹（用于录音链路模拟）

    jitter_rms与am_rms限制在[0, B_W]，pi_rms与total_rms限制在band内；
    PI、AM、total以时间等效值给出，内部乘以 ωA_0 换算为振幅。
    """
    bw = band[1] - carrier_hz
    low = (0.0, bw)
    scale = 2 * np.pi * carrier_hz * amplitude
    targets = {
        "j": (jitter_rms, low),
        "a_m": (am_rms * scale, low),
        "n_pi": (pi_rms * scale, band),
        "a_total": (total_rms * scale, band),
    }
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(len(_TRACE_STREAMS))
    arrays = {}
    for (name, (target, b)), child in zip(targets.items(), children):
        if target > 0:
            arrays[name] = make_bandlimited_noise(length, sample_rate, fullband_rms_for(target, b, sample_rate), b, child)
        else:
            arrays[name] = np.zeros(length)
    return NoiseTraces(sample_rate=sample_rate, start_time=start_time, **arrays)
