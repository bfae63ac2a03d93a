"""
过零点分析（ZCA）

流程：取出分析块（N点上升沿 + [0, T] + N点下降沿）-> 加边沿窗 -> 带限到 f_C±B_W 并FFT插值 N_over 倍
-> 在 [0, T] 内以线性插值定位过零点 -> 最小二乘拟合等间隔理想过零点 -> ZCF = s' - s
"""
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from app.core.errors import CoverageError, InsufficientSignalError, SynchronizationError
from app.core.logger import log
from app.schemas.analysis import AnalysisConfig, Parity, ZeroCrossingSeries
from app.schemas.signal import SampleBuffer
from app.services.dsp import analytic_signal, blackman_edge_window, fft_interpolate

# 主体部分判定：窗口内载波包络的最小值/最大值
MIN_ENVELOPE_RATIO = 0.95
# 主体部分判定：包络达到最大值的比例
MAIN_PART_LEVEL = 0.999
# 对齐：两序列过零点编号差允许偏离整数的量（以过零点间隔计）
GRID_TOLERANCE = 0.25


class Crossings(NamedTuple):
    times: np.ndarray
    rising: np.ndarray


class AnalysisBlock(NamedTuple):
    """一个分析块：加窗后的采样与其时间网格"""
    samples: np.ndarray
    first_time: float
    span_start: float
    span_end: float


class Line(NamedTuple):
    slope: float
    intercept: float
    residuals: np.ndarray


def fit_line(x: np.ndarray, y: np.ndarray) -> Line:
    """
    中心化的最小二乘直线拟合 y = slope * x + intercept

    残差与x正交且均值为0。
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise InsufficientSignalError("直线拟合至少需要2个点", detail={"points": int(x.size)})
    x_mean, y_mean = x.mean(), y.mean()
    xc, yc = x - x_mean, y - y_mean
    slope = float(np.dot(xc, yc) / np.dot(xc, xc))
    residuals = yc - slope * xc
    return Line(slope, float(y_mean - slope * x_mean), residuals)


def locate_crossings(fine: np.ndarray, fine_rate: float, span: Tuple[float, float], start_time: float = 0.0) -> Crossings:
    """
    在分段线性重建上定位过零点及其方向

    相邻两点异号时按线性插值求交点；恰为0的采样点本身算作过零点，方向由其后第一个非零点决定。

    :param fine: 插值后的序列
    :param fine_rate: 插值后的采样率
    :param span: 保留的时间区间 [t0, t1]（含端点）
    :param start_time: fine[0]的时刻
    """
    fine = np.asarray(fine, dtype=np.float64)
    h = 1.0 / fine_rate
    lo = max(int(np.floor((span[0] - start_time) * fine_rate)) - 1, 0)
    hi = min(int(np.ceil((span[1] - start_time) * fine_rate)) + 2, fine.size)
    y = fine[lo:hi]

    nonzero = np.flatnonzero(y)
    signs = np.sign(y[nonzero])
    change = np.flatnonzero(signs[:-1] * signs[1:] < 0)
    m0, m1 = nonzero[change], nonzero[change + 1]

    adjacent = m1 == m0 + 1
    y0 = y[m0]
    y1 = y[np.minimum(m0 + 1, y.size - 1)]
    frac = np.where(adjacent, y0 / np.where(adjacent, y0 - y1, 1.0), 1.0)
    times = start_time + (lo + m0 + frac) * h
    rising = signs[change + 1] > 0

    keep = (times >= span[0]) & (times <= span[1])
    return Crossings(times[keep], rising[keep])


def find_zero_crossings(fine: np.ndarray, fine_rate: float, span: Tuple[float, float], start_time: float = 0.0) -> np.ndarray:
    """返回区间内所有过零点时刻（上升与下降沿，按时间排序）"""
    found = locate_crossings(fine, fine_rate, span, start_time)
    if found.times.size < 2:
        raise InsufficientSignalError(
            "区间内过零点少于2个",
            detail={"crossings": int(found.times.size), "span": list(span)},
        )
    return found.times


def fit_ideal_grid(s: np.ndarray) -> Tuple[float, float]:
    """
    对 s_k 做最小二乘直线拟合 s'(k) = k / (2f'_C) + s'_1（k从0起）

    :return: (f'_C, s'_1)
    """
    s = np.asarray(s, dtype=np.float64)
    if s.size < 2:
        raise InsufficientSignalError("过零点少于2个，无法拟合", detail={"crossings": int(s.size)})
    if s.size < 16:
        log.warning(f"过零点数量过少({s.size})，拟合结果不可靠")
    if np.any(np.diff(s) <= 0):
        log.warning("过零点时刻非单调递增，数据质量可疑")
    # 以s_0为原点拟合，保留皮秒级精度
    line = fit_line(np.arange(s.size), s - s[0])
    return 1.0 / (2.0 * line.slope), s[0] + line.intercept


def ideal_grid(f_c: float, s1: float, count: int) -> np.ndarray:
    return s1 + np.arange(count) / (2.0 * f_c)


def _block_indices(buffer: SampleBuffer, cfg: AnalysisConfig, start: Optional[float]) -> Tuple[int, int]:
    """分析区间起点下标与块起点下标"""
    if start is None:
        span_index = cfg.window_n
    else:
        span_index = int(np.ceil((start - buffer.start_time) * buffer.sample_rate - 1e-6))
    block_start = span_index - cfg.window_n
    block_end = block_start + cfg.block_length
    if block_start < 0 or block_end > len(buffer):
        raise CoverageError(
            "采样缓冲未覆盖分析块",
            detail={
                "block": [block_start, block_end],
                "buffer_length": len(buffer),
                "span_start": buffer.start_time + span_index / buffer.sample_rate,
            },
        )
    return span_index, block_start


def analysis_block(buffer: SampleBuffer, cfg: AnalysisConfig, start: Optional[float] = None) -> AnalysisBlock:
    """
    取出加窗的分析块（默认6N点）

    :param start: 分析区间起点的绝对时刻，默认为缓冲开头之后N点
    """
    cfg.check()
    if abs(buffer.sample_rate - cfg.sample_rate) > 1e-9:
        log.debug(f"分析采样率取自缓冲: {buffer.sample_rate} Hz")
    rate = buffer.sample_rate
    span_index, block_start = _block_indices(buffer, cfg, start)
    raw = buffer.samples[block_start:block_start + cfg.block_length].astype(np.float64) / buffer.full_scale
    window = blackman_edge_window(cfg.window_n, cfg.flat_length)
    span_start = buffer.start_time + span_index / rate
    return AnalysisBlock(
        samples=raw * window,
        first_time=buffer.start_time + block_start / rate,
        span_start=span_start,
        span_end=span_start + cfg.flat_length / rate,
    )


def _check_main_part(block: AnalysisBlock, cfg: AnalysisConfig, rate: float, carrier_hz: float) -> float:
    """确认分析区间位于主体部分，返回载波振幅估计"""
    flat = block.samples[cfg.window_n:cfg.window_n + cfg.flat_length]
    chunk = max(int(round(16 * rate / carrier_hz)), 1)
    usable = flat[:flat.size // chunk * chunk].reshape(-1, chunk)
    if usable.shape[0] == 0:
        raise CoverageError("分析区间过短", detail={"samples": int(flat.size)})
    envelope = np.sqrt(2 * np.mean(usable ** 2, axis=1))
    peak = float(envelope.max())
    if peak <= 0 or envelope.min() < MIN_ENVELOPE_RATIO * peak:
        raise CoverageError(
            "分析区间不在主体部分内（载波振幅不稳定）",
            detail={"span": [block.span_start, block.span_end], "min_envelope": float(envelope.min()), "max_envelope": peak},
        )
    return float(np.sqrt(2 * np.mean(flat ** 2)))


def compute_zcf(buffer: SampleBuffer, cfg: AnalysisConfig, start: Optional[float] = None) -> ZeroCrossingSeries:
    """
    完整ZCA流程，输出一个分析窗口的过零波动

    :param buffer: 录音
    :param cfg: 分析参数
    :param start: 分析区间起点的绝对时刻
    """
    rate = buffer.sample_rate
    block = analysis_block(buffer, cfg, start)
    _check_main_part(block, cfg, rate, cfg.carrier_hz)

    fine = fft_interpolate(block.samples, cfg.oversample, cfg.band, rate)
    fine_rate = rate * cfg.oversample
    found = locate_crossings(fine, fine_rate, (block.span_start, block.span_end), block.first_time)
    if found.times.size < 2:
        raise InsufficientSignalError(
            "区间内过零点少于2个",
            detail={"crossings": int(found.times.size), "span": [block.span_start, block.span_end]},
        )

    f_c, s1 = fit_ideal_grid(found.times)
    s_prime = ideal_grid(f_c, s1, found.times.size)

    span_fine = fine[cfg.window_n * cfg.oversample:(cfg.window_n + cfg.flat_length) * cfg.oversample]
    amplitude = float(np.sqrt(2 * np.mean(span_fine ** 2)))

    series = ZeroCrossingSeries(
        s=found.times,
        s_prime=s_prime,
        delta=s_prime - found.times,
        f_c_measured=f_c,
        first_index_parity=Parity.rising if found.rising[0] else Parity.falling,
        amplitude=amplitude,
        span_start=block.span_start,
        span_seconds=block.span_end - block.span_start,
    )
    log.debug(
        f"ZCA: 区间 {block.span_start:.6f} s, M={series.M}, f'_C={f_c:.6f} Hz, "
        f"振幅={amplitude:.6f} FS, RMS={series.rms() * 1e12:.2f} ps"
    )
    return series


def running_envelope(buffer: SampleBuffer, carrier_hz: float, cycles: int = 4) -> np.ndarray:
    """
    载波包络：解析信号幅度平方在cycles个周期上的滑动均值再开方

    第i个值对应以采样点i为中心的窗口。
    """
    x = buffer.normalized()
    power = np.abs(analytic_signal(x)) ** 2
    width = max(int(round(cycles * buffer.sample_rate / carrier_hz)), 1)
    csum = np.concatenate(([0.0], np.cumsum(power)))
    valid = (csum[width:] - csum[:-width]) / width
    envelope = np.zeros(x.size)
    offset = (width - 1) // 2
    envelope[offset:offset + valid.size] = np.sqrt(np.maximum(valid, 0.0))
    return envelope


def detect_onset(buffer: SampleBuffer, carrier_hz: float, level: float = 0.5) -> float:
    """
    检测淡入起始：4周期滑动RMS包络首次超过最大包络的level倍的时刻（亚采样点线性插值）
    """
    envelope = running_envelope(buffer, carrier_hz)
    peak = float(envelope.max())
    if peak <= 0:
        raise CoverageError("录音中没有载波信号")
    threshold = level * peak
    above = np.flatnonzero(envelope >= threshold)
    i = int(above[0])
    if i == 0:
        raise CoverageError("录音开始时载波已超过阈值，无法检测淡入", detail={"threshold": threshold})
    e0, e1 = envelope[i - 1], envelope[i]
    frac = (threshold - e0) / (e1 - e0) if e1 != e0 else 0.0
    onset = buffer.start_time + (i - 1 + frac) / buffer.sample_rate
    log.debug(f"淡入检测: t={onset:.9f} s, 阈值={threshold:.6f} FS")
    return onset


def main_part_interval(buffer: SampleBuffer, carrier_hz: float) -> Tuple[float, float]:
    """包络达到最大值MAIN_PART_LEVEL倍以上的时间区间"""
    envelope = running_envelope(buffer, carrier_hz)
    peak = float(envelope.max())
    if peak <= 0:
        raise CoverageError("录音中没有载波信号")
    idx = np.flatnonzero(envelope >= MAIN_PART_LEVEL * peak)
    return (
        buffer.start_time + idx[0] / buffer.sample_rate,
        buffer.start_time + idx[-1] / buffer.sample_rate,
    )


def analysis_spans(buffer: SampleBuffer, cfg: AnalysisConfig, count: int = 1) -> List[float]:
    """
    主体部分内连续不重叠的分析区间起点（绝对时刻）

    首个区间前、末个区间后各留N点给边沿窗。
    """
    main_start, main_end = main_part_interval(buffer, cfg.carrier_hz)
    margin = cfg.window_n / buffer.sample_rate
    span = cfg.flat_length / buffer.sample_rate
    first = main_start + margin
    available = int(np.floor((main_end - margin - first) / span + 1e-9))
    if available < count:
        raise CoverageError(
            f"主体部分只能容纳{max(available, 0)}个分析窗口，请求{count}个",
            detail={"main_part": [main_start, main_end], "span_seconds": span},
        )
    return [first + i * span for i in range(count)]


def align_crossings(
    a: ZeroCrossingSeries,
    b: ZeroCrossingSeries,
    a_onset: float,
    b_onset: float,
) -> Tuple[ZeroCrossingSeries, ZeroCrossingSeries]:
    """
    按周期计数为两台录音机分配共同的过零点编号

    以各自的淡入时刻为原点，两序列的过零点编号差 Δk 取整后截取共同部分；
    编号k在两序列中对应同一个物理过零点，k从淡入时刻起计数。
    """
    # 各自以本机时钟计数，时钟偏差不影响编号
    def count(series: ZeroCrossingSeries, i: int, onset: float) -> float:
        return (series.s_prime[i] - onset) * series.crossing_rate

    offset = count(b, 0, b_onset) - count(a, 0, a_onset)
    shift = int(np.round(offset))
    if abs(offset - shift) > GRID_TOLERANCE:
        raise SynchronizationError(
            "过零点网格相差超过1/4周期",
            detail={"offset_crossings": offset},
        )

    # a的第i个过零点对应b的第i - shift个
    start = max(0, shift)
    stop = min(a.M, b.M + shift)
    if stop - start < 2:
        raise SynchronizationError("两台录音机没有共同的过零点区间", detail={"shift": shift, "a": a.M, "b": b.M})
    if a.parity_at(start) is not b.parity_at(start - shift):
        raise SynchronizationError(
            "对齐后过零方向不一致",
            detail={"a": a.parity_at(start).value, "b": b.parity_at(start - shift).value, "shift": shift},
        )

    tail_a = count(a, stop - 1, a_onset)
    tail_b = count(b, stop - 1 - shift, b_onset)
    if abs(tail_a - tail_b) > 2 * GRID_TOLERANCE:
        raise SynchronizationError(
            "区间末端周期计数不一致（可能丢帧或配对错误）",
            detail={"a": tail_a, "b": tail_b, "tolerance_crossings": 2 * GRID_TOLERANCE},
        )

    k_start = int(np.round(count(a, start, a_onset)))
    aligned_a = a.slice(start, stop, k_start=k_start)
    aligned_b = b.slice(start - shift, stop - shift, k_start=k_start)
    log.debug(f"过零点对齐: Δk={shift}, 共同过零点 {aligned_a.M} 个, k起点 {k_start}")
    return aligned_a, aligned_b
