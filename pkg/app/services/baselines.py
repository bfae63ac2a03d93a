"""
对照方法：频域分析（FDA）与希尔伯特变换分析（HTA）
"""
from typing import NamedTuple, Optional, Tuple

import numpy as np

from app.core.logger import log
from app.schemas.analysis import AnalysisConfig, BandPowerReport
from app.schemas.signal import SampleBuffer
from app.services.dsp import WindowName, analytic_signal, band_power, bandlimit, check_band, psd
from app.services.zca import analysis_block, fit_line

# 解析信号幅度低于中位数的该比例时，相位展开不可靠
ENVELOPE_WARNING_RATIO = 0.1


class HilbertJitter(NamedTuple):
    """HTA结果：采样时刻、抖动估计、载波角频率与初相"""
    times: np.ndarray
    jitter: np.ndarray
    omega: float
    phase0: float

    def upconverted(self, amplitude: float) -> np.ndarray:
        """按 -A_0ω j_H sin(ωt+θ_0) 换算回电压噪声"""
        return -amplitude * self.omega * self.jitter * np.sin(self.omega * self.times + self.phase0)


def fda_band_power(
    buffer: SampleBuffer,
    band: Tuple[float, float],
    carrier_bins: int = 2,
    guard_hz: float = 50.0,
    window: WindowName = "blackman",
) -> BandPowerReport:
    """
    频带功率统计

    载波：最大频点±carrier_bins；噪声带：band内去掉载波与其±guard_hz保护带；
    其余（含保护带）为底噪，三者之和等于总功率。
    """
    lo, hi = check_band(band, buffer.sample_rate)
    freqs, density = psd(buffer.normalized(), buffer.sample_rate, window)
    bins = np.arange(freqs.size)
    peak = int(np.argmax(density))
    carrier = np.abs(bins - peak) <= carrier_bins
    guard = (np.abs(freqs - freqs[peak]) <= guard_hz) & ~carrier
    noise = (freqs >= lo) & (freqs <= hi) & ~carrier & ~guard
    floor = ~(carrier | noise)

    total = band_power(freqs, density, np.ones_like(carrier))
    report_carrier = band_power(freqs, density, carrier)
    report_noise = band_power(freqs, density, noise)
    report_floor = band_power(freqs, density, floor)
    ratios = {}
    if report_carrier > 0:
        for name, value in (("noise_to_carrier", report_noise), ("floor_to_carrier", report_floor)):
            if value > 0:
                ratios[name] = 10 * np.log10(value / report_carrier)
    log.debug(
        f"FDA: 载波 {freqs[peak]:.3f} Hz, P_C={report_carrier:.3e}, 噪声带={report_noise:.3e}, 底噪={report_floor:.3e} FS²"
    )
    return BandPowerReport(
        carrier_power=report_carrier,
        noise_band_power=report_noise,
        floor_power=report_floor,
        guard_power=band_power(freqs, density, guard),
        total_power=total,
        carrier_frequency=float(freqs[peak]),
        band=(lo, hi),
        ratios=ratios,
    )


def hta_extract(buffer: SampleBuffer, cfg: AnalysisConfig, start: Optional[float] = None) -> HilbertJitter:
    """
    希尔伯特变换抖动提取

    与ZCA相同的加窗与带限（不过采样）-> 解析信号 -> 展开瞬时相位 -> 减去直线拟合 -> 除以ω，
    得到采样率为f_R的抖动估计。
    """
    block = analysis_block(buffer, cfg, start)
    rate = buffer.sample_rate
    limited = bandlimit(block.samples, rate, cfg.band)
    analytic = analytic_signal(limited)

    span = slice(cfg.window_n, cfg.window_n + cfg.flat_length + 1)
    z = analytic[span]
    times = block.first_time + np.arange(span.start, span.stop) / rate

    envelope = np.abs(z)
    weak = envelope < ENVELOPE_WARNING_RATIO * np.median(envelope)
    if np.any(weak):
        log.warning(f"HTA: {np.count_nonzero(weak)} 个采样点包络接近0，相位展开可能不可靠")

    phase = np.unwrap(np.angle(z))
    # 以区间起点为时间原点拟合
    line = fit_line(times - times[0], phase)
    omega = line.slope
    jitter = line.residuals / omega
    phase0 = line.intercept - omega * times[0]
    log.debug(f"HTA: f'_C={omega / (2 * np.pi):.6f} Hz, RMS={np.std(jitter) * 1e12:.2f} ps")
    return HilbertJitter(times=times, jitter=jitter, omega=omega, phase0=phase0)
