"""
噪声分解：SRS/DRS方差代数、播放器与录音机的抖动/PI分离、相位依赖拟合、检测下限

根号内为负的量不抛异常，记为0并在flags中标出，原始值写入radicands。
"""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import ConfigurationError, StatisticsError, SynchronizationError
from app.core.logger import log
from app.schemas.analysis import (
    AnalysisConfig,
    PhaseFit,
    PlayerSplit,
    RecorderSplit,
    VarianceBudget,
    WindowSummary,
    ZeroCrossingSeries,
)
from app.schemas.signal import SampleBuffer
from app.services.dsp import fft_interpolate
from app.services.zca import analysis_block, compute_zcf

# 相位拟合使用的插值倍数，每周期采样点数需覆盖相位分箱
PHASE_OVERSAMPLE = 4


def dev(values: np.ndarray) -> float:
    """去均值RMS（总体标准差）"""
    values = np.asarray(values, dtype=np.float64)
    return float(np.std(values)) if values.size else 0.0


def _root(name: str, radicand: float, flags: List[str], radicands: Dict[str, float]) -> float:
    radicands[name] = float(radicand)
    if radicand < 0:
        flags.append(name)
        log.warning(f"{name} 根号内为负({radicand:.3e})，结果记为0")
        return 0.0
    return float(np.sqrt(radicand))


def srs_budget(delta: ZeroCrossingSeries) -> float:
    """单录音机：sqrt(V{Δs}) = sqrt(σn1² + σa1²)，无法区分播放器与录音机"""
    if delta.M < 100:
        log.warning(f"过零点只有{delta.M}个，统计量不可靠")
    return delta.rms()


def decompose_statistics(
    e1: float,
    e2: float,
    e3: float,
    e4: Optional[float] = None,
) -> VarianceBudget:
    """
    由E1..E3（可选E4）求解播放器与两台录音机的ZCF RMS

    σn² = (E1² + E2² - E3²)/2，σa² = E1² - σn²，σb² = E2² - σn²，
    一致性残差 E4² - (4σn² + σa² + σb²)。
    """
    for name, value in (("E1", e1), ("E2", e2), ("E3", e3), ("E4", e4)):
        if value is not None and value < 0:
            raise ConfigurationError(f"{name}不能为负", detail={name: value})
    flags: List[str] = []
    radicands: Dict[str, float] = {}
    var_n = (e1 ** 2 + e2 ** 2 - e3 ** 2) / 2
    var_a = e1 ** 2 - var_n
    var_b = e2 ** 2 - var_n
    residual = None
    if e4 is not None:
        residual = e4 ** 2 - (4 * var_n + var_a + var_b)
    return VarianceBudget(
        E1=e1, E2=e2, E3=e3, E4=e4,
        sigma_n=_root("sigma_n", var_n, flags, radicands),
        sigma_a=_root("sigma_a", var_a, flags, radicands),
        sigma_b=_root("sigma_b", var_b, flags, radicands),
        consistency_residual=residual,
        flags=flags,
        radicands=radicands,
    )


def jitter_bands(cfg: AnalysisConfig) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """抖动频带 [1/T, B_W] 与PI噪声频带 [f_C - B_W, f_C + B_W]"""
    return (1.0 / cfg.span, cfg.bandwidth_hz), cfg.band


def _check_aligned(a: ZeroCrossingSeries, b: ZeroCrossingSeries):
    if a.M != b.M or a.k_start != b.k_start or a.first_index_parity is not b.first_index_parity:
        raise SynchronizationError(
            "两个过零点序列未对齐",
            detail={"M": [a.M, b.M], "k_start": [a.k_start, b.k_start],
                    "parity": [a.first_index_parity.value, b.first_index_parity.value]},
        )


def drs_decompose(
    delta_a: ZeroCrossingSeries,
    delta_b: ZeroCrossingSeries,
    cfg: Optional[AnalysisConfig] = None,
) -> VarianceBudget:
    """
    双录音机分解

    E1=dev{Δs}，E2=dev{Δr}，E3=dev{Δs-Δr}，E4=dev{Δs+Δr}；两序列须已由align_crossings对齐。
    """
    _check_aligned(delta_a, delta_b)
    da, db = delta_a.delta, delta_b.delta
    budget = decompose_statistics(dev(da), dev(db), dev(da - db), dev(da + db))
    if budget.E3 == 0:
        # 两个录音完全相同，无法区分播放器与录音机
        budget.flags.append("degenerate")
        log.warning("DRS: E3=0，两路录音相同，分解退化")
    jitter_band, pi_band = jitter_bands(cfg or AnalysisConfig())
    budget = budget.model_copy(update={
        "M": delta_a.M,
        "jitter_band": jitter_band,
        "pi_band": pi_band,
        "window_start": delta_a.span_start,
    })
    if not budget.valid:
        log.warning(f"DRS分解出现非物理结果: {budget.flags}（可能未正确对齐）")
    log.debug(
        f"DRS: E1={budget.E1 * 1e12:.2f} E2={budget.E2 * 1e12:.2f} E3={budget.E3 * 1e12:.2f} ps, "
        f"σn={budget.sigma_n * 1e12:.2f} σa={budget.sigma_a * 1e12:.2f} σb={budget.sigma_b * 1e12:.2f} ps"
    )
    return budget


def split_player_jitter_pi(sigma_n2: float, sigma_n3: float) -> PlayerSplit:
    """
    由DRS的σn2与L+R并联播放的σn3分离播放器抖动与PI噪声

    并联使PI噪声方差减半：σn3² = V{j} + V{nPI}/(2(ωA_0)²)，
    dev{j} = sqrt(2σn3² - σn2²)，dev{nPI}/(ωA_0) = sqrt(2(σn2² - σn3²))。
    """
    flags: List[str] = []
    radicands: Dict[str, float] = {}
    dev_j = _root("dev_j", 2 * sigma_n3 ** 2 - sigma_n2 ** 2, flags, radicands)
    dev_npi = _root("dev_npi_scaled", 2 * (sigma_n2 ** 2 - sigma_n3 ** 2), flags, radicands)
    return PlayerSplit(
        dev_j=dev_j,
        dev_npi_scaled=dev_npi,
        sigma_n2=sigma_n2,
        sigma_n3=sigma_n3,
        flags=flags,
        radicands=radicands,
    )


def split_recorder_statistics(
    e5: float,
    e6: float,
    e7: float,
    sigma_n2: float,
    e8: Optional[float] = None,
) -> RecorderSplit:
    """
    双声道录音机的抖动与左右声道PI噪声分离

    V{aPI,L}/(ωV_0)² = (E7² + E5² - E6²)/2，V{aPI,R}/(ωV_0)² = (E7² - E5² + E6²)/2，
    共同项 σn2² + V{ajitter}/(ωV_0)² = E5² - V{aPI,L}/(ωV_0)²。
    """
    flags: List[str] = []
    radicands: Dict[str, float] = {}
    var_l = (e7 ** 2 + e5 ** 2 - e6 ** 2) / 2
    var_r = (e7 ** 2 - e5 ** 2 + e6 ** 2) / 2
    var_common = e5 ** 2 - var_l
    residual = None if e8 is None else e8 ** 2 - (4 * var_common + e7 ** 2)
    return RecorderSplit(
        E5=e5, E6=e6, E7=e7, E8=e8,
        sigma_n2=sigma_n2,
        common=_root("common", var_common, flags, radicands),
        dev_ajitter_scaled=_root("dev_ajitter_scaled", var_common - sigma_n2 ** 2, flags, radicands),
        dev_api_l_scaled=_root("dev_api_l_scaled", var_l, flags, radicands),
        dev_api_r_scaled=_root("dev_api_r_scaled", var_r, flags, radicands),
        consistency_residual=residual,
        flags=flags,
        radicands=radicands,
    )


def split_recorder_jitter_pi(
    delta_l: ZeroCrossingSeries,
    delta_r: ZeroCrossingSeries,
    sigma_n2: float,
) -> RecorderSplit:
    """由同一录音机左右声道的ZCF计算E5..E8并分离"""
    _check_aligned(delta_l, delta_r)
    dl, dr = delta_l.delta, delta_r.delta
    return split_recorder_statistics(dev(dl), dev(dr), dev(dl - dr), sigma_n2, e8=dev(dl + dr))


def detection_limit(bit_depth: int, amplitude_ratio: float, carrier_hz: float) -> float:
    """
    量化决定的抖动检测下限 j_LSB = 1 / (x_max * (A_0/A_R) * 2πf_C)
    """
    if bit_depth < 2 or amplitude_ratio <= 0 or carrier_hz <= 0:
        raise ConfigurationError(
            "检测下限参数必须为正",
            detail={"bit_depth": bit_depth, "amplitude_ratio": amplitude_ratio, "carrier_hz": carrier_hz},
        )
    x_max = (1 << (bit_depth - 1)) - 1
    return 1.0 / (x_max * amplitude_ratio * 2 * np.pi * carrier_hz)


def summarize_windows(name: str, values: Sequence[float]) -> WindowSummary:
    """多窗口统计：均值与均值标准误差"""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise StatisticsError(f"{name}没有可统计的窗口")
    stderr = float(np.std(arr, ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return WindowSummary(name=name, values=arr.tolist(), mean=float(arr.mean()), stderr=stderr)


def phase_variance_fit(
    buffer: SampleBuffer,
    cfg: AnalysisConfig,
    start: Optional[float] = None,
    zcf: Optional[ZeroCrossingSeries] = None,
) -> PhaseFit:
    """
    相位依赖拟合

    在带限信号上拟合纯正弦，残差按相位θ分箱折叠，求各相位上跨周期的方差，
    再最小二乘拟合 V(θ) = A cos(2θ) + B。首末周期不参与统计。

    :param zcf: 同一区间的ZCA结果，提供f'_C；不提供时重新计算
    """
    zcf = zcf or compute_zcf(buffer, cfg, start)
    omega = 2 * np.pi * zcf.f_c_measured
    rate = buffer.sample_rate * PHASE_OVERSAMPLE

    block = analysis_block(buffer, cfg, start)
    fine = fft_interpolate(block.samples, PHASE_OVERSAMPLE, cfg.band, buffer.sample_rate)
    first = cfg.window_n * PHASE_OVERSAMPLE
    x = fine[first:first + cfg.flat_length * PHASE_OVERSAMPLE]
    t = np.arange(x.size) / rate

    design = np.column_stack([np.cos(omega * t), np.sin(omega * t), np.ones_like(t)])
    (a, b, c), *_ = np.linalg.lstsq(design, x, rcond=None)
    amplitude = float(np.hypot(a, b))
    psi = float(np.arctan2(b, a))
    residual = x - design @ np.array([a, b, c])

    cycles = int(np.floor(omega * cfg.span / (2 * np.pi)))
    if cycles < 4:
        raise StatisticsError("分析区间内周期数不足", detail={"cycles": cycles, "required": 4})

    phase = omega * t - psi
    cycle = np.floor(phase / (2 * np.pi)).astype(np.int64)
    theta = np.mod(phase, 2 * np.pi)
    keep = (cycle > cycle.min()) & (cycle < cycle.max())
    bins = cfg.phase_bins
    index = np.minimum((theta[keep] / (2 * np.pi) * bins).astype(np.int64), bins - 1)
    values = residual[keep]

    counts = np.bincount(index, minlength=bins)
    sums = np.bincount(index, weights=values, minlength=bins)
    squares = np.bincount(index, weights=values ** 2, minlength=bins)
    used = counts >= 2
    if np.count_nonzero(used) < 2:
        raise StatisticsError("相位分箱数据不足", detail={"bins_used": int(np.count_nonzero(used))})
    n = counts[used]
    variance = (squares[used] - sums[used] ** 2 / n) / n
    centers = (np.arange(bins)[used] + 0.5) * 2 * np.pi / bins

    (coef_a, coef_b), *_ = np.linalg.lstsq(
        np.column_stack([np.cos(2 * centers), np.ones_like(centers)]), variance, rcond=None,
    )
    model = coef_a * np.cos(2 * centers) + coef_b
    fit = PhaseFit(
        A=float(coef_a),
        B=float(coef_b),
        theta_grid=centers,
        variance_by_phase=variance,
        counts=n,
        residual_rms=float(np.sqrt(np.mean((variance - model) ** 2))),
        omega=omega,
        amplitude=amplitude,
        cycles=cycles,
    )
    log.debug(f"相位拟合: A={fit.A:.3e}, B={fit.B:.3e} FS², 周期数={cycles}, 使用分箱={centers.size}")
    return fit
