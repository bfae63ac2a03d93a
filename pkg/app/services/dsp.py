"""
数值内核：边沿窗、频带掩码、FFT过采样插值、解析信号、周期图PSD

全部为纯函数，可在不同输入上并发调用。
"""
from typing import Literal, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy import signal as sp_signal

from app.core.errors import ConfigurationError
from app.core.logger import log

WindowName = Literal["rectangular", "blackman"]

_SCIPY_WINDOWS = {"rectangular": "boxcar", "blackman": "blackman"}


def blackman_taper(u: np.ndarray) -> np.ndarray:
    """三项Blackman锥形，u=0时为1，u=±1时为0"""
    u = np.asarray(u, dtype=np.float64)
    return 0.42 + 0.5 * np.cos(np.pi * u) + 0.08 * np.cos(2 * np.pi * u)


def edge_window(t: np.ndarray, window_n: int, span: float, sample_rate: float) -> np.ndarray:
    """
    按时刻计算分析窗 w(t)

    -N/f_R <= t < 0 为上升锥形，0 <= t <= T 恒为1，T < t <= T+N/f_R 为下降锥形，其余为0。
    """
    t = np.asarray(t, dtype=np.float64)
    edge = window_n / sample_rate
    w = np.zeros_like(t)
    rising = (t >= -edge) & (t < 0)
    flat = (t >= 0) & (t <= span)
    falling = (t > span) & (t <= span + edge)
    w[rising] = blackman_taper(t[rising] / edge)
    w[flat] = 1.0
    w[falling] = blackman_taper((t[falling] - span) / edge)
    return w


def blackman_edge_window(window_n: int, flat_length: int) -> np.ndarray:
    """
    按采样点生成长度 2N + flat_length 的分析窗

    下标N到N+flat_length（含）为1，默认布局为6N点（N锥形 + 4N平坦 + N锥形）。
    """
    if window_n <= 0 or flat_length <= 0:
        raise ConfigurationError("窗口长度必须为正", detail={"window_n": window_n, "flat_length": flat_length})
    idx = np.arange(2 * window_n + flat_length, dtype=np.float64)
    w = edge_window(idx - window_n, window_n, float(flat_length), 1.0)
    # 平坦区间严格为1
    w[window_n:window_n + flat_length + 1] = 1.0
    return w


def check_band(band: Tuple[float, float], sample_rate: float) -> Tuple[float, float]:
    lo, hi = float(band[0]), float(band[1])
    if not 0 <= lo < hi <= sample_rate / 2:
        raise ConfigurationError(
            "频带超出[0, 奈奎斯特频率]",
            detail={"band": [lo, hi], "nyquist": sample_rate / 2},
        )
    return lo, hi


def band_mask(length: int, sample_rate: float, band: Tuple[float, float]) -> np.ndarray:
    """rfft频点上的布尔掩码，lo <= f <= hi 为True"""
    lo, hi = check_band(band, sample_rate)
    freqs = sp_fft.rfftfreq(length, d=1.0 / sample_rate)
    return (freqs >= lo) & (freqs <= hi)


def bandlimit(samples: np.ndarray, sample_rate: float, band: Tuple[float, float]) -> np.ndarray:
    """理想带通：正变换、置零频带外频点、逆变换"""
    x = np.asarray(samples, dtype=np.float64)
    spectrum = sp_fft.rfft(x, workers=-1)
    spectrum[~band_mask(x.size, sample_rate, band)] = 0
    return sp_fft.irfft(spectrum, n=x.size, workers=-1)


def fft_interpolate(
    samples: np.ndarray,
    oversample: int,
    band: Tuple[float, float],
    sample_rate: float,
) -> np.ndarray:
    """
    频域补零的FFT过采样插值，同时做带宽限制

    输出长度 len(samples) * oversample，第 oversample*i 个点与带限后的原始第i点一致。
    频域补零后乘以oversample，使带内正弦振幅不变。

    :param samples: 加窗后的实数序列
    :param oversample: 过采样倍数 N_over
    :param band: 保留的频带 (lo, hi) Hz，lo > 0 时直流被去除
    :param sample_rate: 输入采样率
    """
    if oversample < 2:
        raise ConfigurationError("oversample至少为2", detail={"oversample": oversample})
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    n_fine = n * oversample

    spectrum = sp_fft.rfft(x, workers=-1)
    spectrum[~band_mask(n, sample_rate, band)] = 0
    if n % 2 == 0:
        # 奈奎斯特频点在补零后拆成正负两半
        spectrum[-1] *= 0.5

    padded = np.zeros(n_fine // 2 + 1, dtype=np.complex128)
    padded[:spectrum.size] = spectrum
    fine = sp_fft.irfft(padded, n=n_fine, workers=-1) * oversample
    log.debug(f"FFT插值: {n} -> {n_fine} 点, 频带 {band[0]:.0f}-{band[1]:.0f} Hz")
    return fine


def analytic_signal(samples: np.ndarray) -> np.ndarray:
    """
    解析信号 x + jH{x}

    返回复数数组：实部为输入（同相分量），虚部为希尔伯特变换（正交分量）。
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 16:
        raise ConfigurationError("解析信号至少需要16个采样点", detail={"length": int(x.size)})
    return sp_signal.hilbert(x)


def psd(samples: np.ndarray, sample_rate: float, window: WindowName = "rectangular") -> Tuple[np.ndarray, np.ndarray]:
    """
    单边周期图，密度归一化（FS^2/Hz）

    窗函数按sum(w^2)做功率修正，因此对频带求和 sum(P)*df 即该频带的功率。
    """
    if window not in _SCIPY_WINDOWS:
        raise ConfigurationError(f"不支持的窗函数: {window}", detail={"allowed": list(_SCIPY_WINDOWS)})
    freqs, density = sp_signal.periodogram(
        np.asarray(samples, dtype=np.float64),
        fs=sample_rate,
        window=_SCIPY_WINDOWS[window],
        detrend=False,
        return_onesided=True,
        scaling="density",
    )
    return freqs, density


def density_db(density: np.ndarray, floor: float = 1e-300) -> np.ndarray:
    """PSD转为 dBFS/Hz"""
    return 10 * np.log10(np.maximum(np.asarray(density), floor))


def band_power(freqs: np.ndarray, density: np.ndarray, mask: np.ndarray) -> float:
    """对掩码内的频点积分"""
    if freqs.size < 2:
        return 0.0
    df = freqs[1] - freqs[0]
    return float(np.sum(density[mask]) * df)
