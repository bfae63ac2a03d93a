"""
分析侧的数据模型：分析参数、过零点序列、方差预算、相位拟合、频带功率
"""
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.errors import ConfigurationError
from app.schemas.signal import _readonly

PS = 1e12


def to_ps(value: Optional[float]) -> Optional[float]:
    """秒转皮秒，保留0.1 ps"""
    if value is None:
        return None
    return round(float(value) * PS, 1)


class AnalysisConfig(BaseModel):
    """
    ZCA分析参数

    窗口布局：N点Blackman上升沿 + 平坦区间[0, T] + N点下降沿，
    默认 T = 4N / f_R，总长6N。
    """
    window_n: int = Field(48000, description="窗口块长度 N（采样点）")
    span_seconds: Optional[float] = Field(None, description="分析区间长度 T，默认4N/f_R")
    oversample: int = Field(64, description="过采样倍数 N_over")
    bandwidth_hz: float = Field(6000.0, description="半带宽 B_W")
    carrier_hz: float = Field(12000.0, description="名义载波频率 f_C")
    sample_rate: float = Field(192000.0, description="录音采样率 f_R")
    phase_bins: int = Field(64, description="相位折叠的分箱数")

    def check(self):
        """检查参数约束，失败抛出ConfigurationError"""
        problems = []
        if self.window_n <= 0:
            problems.append("window_n必须为正")
        if self.oversample < 2 or self.oversample & (self.oversample - 1):
            problems.append("oversample必须是不小于2的2的幂")
        if self.sample_rate <= 0:
            problems.append("sample_rate必须为正")
        if not 0 < self.bandwidth_hz < self.carrier_hz:
            problems.append("bandwidth_hz必须在(0, carrier_hz)内")
        if self.carrier_hz + self.bandwidth_hz > self.sample_rate / 2:
            problems.append("分析频带超出奈奎斯特频率")
        if self.span_seconds is not None and self.span_seconds <= 0:
            problems.append("span_seconds必须为正")
        if self.phase_bins < 4:
            problems.append("phase_bins至少为4")
        if problems:
            raise ConfigurationError("分析参数无效", detail=problems)
        return self

    @property
    def span(self) -> float:
        """分析区间长度 T"""
        if self.span_seconds is not None:
            return self.span_seconds
        return 4 * self.window_n / self.sample_rate

    @property
    def flat_length(self) -> int:
        """平坦区间的采样点数"""
        return int(round(self.span * self.sample_rate))

    @property
    def block_length(self) -> int:
        """一个分析块的采样点数（默认6N）"""
        return 2 * self.window_n + self.flat_length

    @property
    def band(self) -> Tuple[float, float]:
        return self.carrier_hz - self.bandwidth_hz, self.carrier_hz + self.bandwidth_hz


class Parity(str, Enum):
    """过零方向"""
    rising = "rising"
    falling = "falling"

    def flipped(self) -> "Parity":
        return Parity.falling if self is Parity.rising else Parity.rising


class ZeroCrossingSeries(BaseModel):
    """
    ZCA输出：测得过零点s、拟合理想过零点s'、过零波动delta = s' - s

    k_start为第一个过零点的全局编号（对齐后两台录音机同编号即同一物理过零点）。
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    s: np.ndarray
    s_prime: np.ndarray
    delta: np.ndarray
    f_c_measured: float
    first_index_parity: Parity
    k_start: int = 0
    amplitude: float = Field(0.0, description="测得载波振幅 FS")
    span_start: float = 0.0
    span_seconds: float = 0.0

    @field_validator("s", "s_prime", "delta", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _readonly(v, np.float64)

    @model_validator(mode="after")
    def _check_lengths(self):
        if not self.s.size == self.s_prime.size == self.delta.size:
            raise ValueError("s、s_prime、delta长度必须一致")
        return self

    @property
    def M(self) -> int:
        return int(self.s.size)

    @property
    def crossing_rate(self) -> float:
        """过零点重复频率 f_Z = 2 f'_C"""
        return 2 * self.f_c_measured

    @property
    def omega(self) -> float:
        return 2 * np.pi * self.f_c_measured

    @property
    def indices(self) -> np.ndarray:
        """全局过零点编号"""
        return self.k_start + np.arange(self.M)

    def parity_at(self, offset: int) -> Parity:
        """第offset个（0起始）过零点的方向"""
        return self.first_index_parity if offset % 2 == 0 else self.first_index_parity.flipped()

    def signs(self) -> np.ndarray:
        """
        每个过零点的符号：上升沿+1，下降沿-1

        即以下降沿为奇数编号时的(-1)^k约定，
        PI噪声满足 n_PI(s'_k) = signs[k] * omega * A_0 * delta[k]。
        """
        first = 1.0 if self.first_index_parity is Parity.rising else -1.0
        return first * np.where(np.arange(self.M) % 2 == 0, 1.0, -1.0)

    def slice(self, start: int, stop: int, k_start: Optional[int] = None) -> "ZeroCrossingSeries":
        """截取[start, stop)并重新编号"""
        return ZeroCrossingSeries(
            s=self.s[start:stop],
            s_prime=self.s_prime[start:stop],
            delta=self.delta[start:stop],
            f_c_measured=self.f_c_measured,
            first_index_parity=self.parity_at(start),
            k_start=self.k_start + start if k_start is None else k_start,
            amplitude=self.amplitude,
            span_start=self.span_start,
            span_seconds=self.span_seconds,
        )

    def rms(self) -> float:
        """去均值后的RMS（总体方差）"""
        return float(np.std(self.delta)) if self.M else 0.0


class VarianceBudget(BaseModel):
    """
    DRS方差分解结果，所有值以秒为单位

    根号内为负的量记为0并写入flags，原始根号内的值保存在radicands。
    """
    E1: float
    E2: float
    E3: float
    E4: Optional[float] = None
    E5: Optional[float] = None
    E6: Optional[float] = None
    E7: Optional[float] = None
    E8: Optional[float] = None
    sigma_n: float = 0.0
    sigma_a: float = 0.0
    sigma_b: float = 0.0
    consistency_residual: Optional[float] = Field(None, description="E4^2 - (4σn^2+σa^2+σb^2)，单位s^2")
    dev_j: Optional[float] = None
    dev_npi_scaled: Optional[float] = None
    dev_ajitter_scaled: Optional[float] = None
    dev_api_l_scaled: Optional[float] = None
    dev_api_r_scaled: Optional[float] = None
    flags: List[str] = Field(default_factory=list)
    radicands: Dict[str, float] = Field(default_factory=dict)
    M: Optional[int] = None
    jitter_band: Optional[Tuple[float, float]] = None
    pi_band: Optional[Tuple[float, float]] = None
    window_start: Optional[float] = None

    @property
    def valid(self) -> bool:
        return not self.flags

    def to_report(self) -> dict:
        """报告格式：时间量以ps表示，保留0.1 ps"""
        seconds = ("E1", "E2", "E3", "E4", "E5", "E6", "E7", "E8", "sigma_n", "sigma_a", "sigma_b",
                   "dev_j", "dev_npi_scaled", "dev_ajitter_scaled", "dev_api_l_scaled", "dev_api_r_scaled")
        report = {f"{name}_ps": to_ps(getattr(self, name)) for name in seconds}
        report["consistency_residual_ps2"] = (
            None if self.consistency_residual is None else round(self.consistency_residual * PS * PS, 1)
        )
        report["valid"] = self.valid
        report["flags"] = list(self.flags)
        report["radicands_ps2"] = {k: round(v * PS * PS, 1) for k, v in self.radicands.items()}
        report["M"] = self.M
        report["jitter_band_hz"] = list(self.jitter_band) if self.jitter_band else None
        report["pi_band_hz"] = list(self.pi_band) if self.pi_band else None
        report["window_start_s"] = self.window_start
        return report


def _split_report(result, seconds) -> dict:
    report = {f"{name}_ps": to_ps(getattr(result, name)) for name in seconds}
    report["valid"] = result.valid
    report["flags"] = list(result.flags)
    report["radicands_ps2"] = {k: round(v * PS * PS, 1) for k, v in result.radicands.items()}
    return report


class PlayerSplit(BaseModel):
    """播放器抖动/PI噪声分离结果"""
    dev_j: float
    dev_npi_scaled: float
    sigma_n2: float
    sigma_n3: float
    flags: List[str] = Field(default_factory=list)
    radicands: Dict[str, float] = Field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return not self.flags

    def to_report(self) -> dict:
        return _split_report(self, ("dev_j", "dev_npi_scaled", "sigma_n2", "sigma_n3"))


class RecorderSplit(BaseModel):
    """录音机抖动/左右声道PI噪声分离结果"""
    E5: float
    E6: float
    E7: float
    E8: Optional[float] = None
    sigma_n2: float
    common: float = Field(0.0, description="sqrt(σn2^2 + V{a_jitter}/(ωV0)^2)")
    dev_ajitter_scaled: float = 0.0
    dev_api_l_scaled: float = 0.0
    dev_api_r_scaled: float = 0.0
    consistency_residual: Optional[float] = None
    flags: List[str] = Field(default_factory=list)
    radicands: Dict[str, float] = Field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return not self.flags

    def to_report(self) -> dict:
        report = _split_report(self, ("E5", "E6", "E7", "E8", "sigma_n2", "common", "dev_ajitter_scaled",
                                      "dev_api_l_scaled", "dev_api_r_scaled"))
        report["consistency_residual_ps2"] = (
            None if self.consistency_residual is None else round(self.consistency_residual * PS * PS, 1)
        )
        return report


class PhaseFit(BaseModel):
    """
    相位依赖拟合 V(θ) = A cos(2θ) + B

    A、B为FS^2单位的方差。
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: float
    B: float
    theta_grid: np.ndarray
    variance_by_phase: np.ndarray
    counts: np.ndarray
    residual_rms: float = 0.0
    omega: float = 0.0
    amplitude: float = 0.0
    cycles: int = 0

    @field_validator("theta_grid", "variance_by_phase", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _readonly(v, np.float64)

    @field_validator("counts", mode="before")
    @classmethod
    def _to_counts(cls, v):
        return _readonly(v, np.int64)

    def model_curve(self, theta: np.ndarray) -> np.ndarray:
        return self.A * np.cos(2 * np.asarray(theta)) + self.B

    def pi_free_components(self, omega: Optional[float] = None, amplitude: Optional[float] = None) -> Dict[str, Optional[float]]:
        """
        PI噪声可忽略时由B∓A求抖动与AM

        B - A = (ωA_0)^2 V{j}，B + A = V{A_M}；PI不可忽略时该结果偏大。
        """
        omega = omega or self.omega
        amplitude = amplitude or self.amplitude
        jitter_var = (self.B - self.A) / (omega * amplitude) ** 2 if omega and amplitude else None
        am_var = self.B + self.A
        return {
            "dev_j": float(np.sqrt(jitter_var)) if jitter_var is not None and jitter_var >= 0 else None,
            "dev_am": float(np.sqrt(am_var)) if am_var >= 0 else None,
        }


class BandPowerReport(BaseModel):
    """FDA频带功率（FS^2）"""
    carrier_power: float
    noise_band_power: float
    floor_power: float
    guard_power: float = 0.0
    total_power: float = 0.0
    carrier_frequency: float = 0.0
    band: Tuple[float, float]
    ratios: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_powers(self):
        for name in ("carrier_power", "noise_band_power", "floor_power", "guard_power", "total_power"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name}不能为负")
        return self

    def to_report(self) -> dict:
        def db(p):
            return round(10 * float(np.log10(p)), 2) if p > 0 else None
        return {
            "carrier_frequency_hz": round(self.carrier_frequency, 3),
            "band_hz": list(self.band),
            "carrier_power_db": db(self.carrier_power),
            "noise_band_power_db": db(self.noise_band_power),
            "floor_power_db": db(self.floor_power),
            "guard_power_db": db(self.guard_power),
            "total_power_db": db(self.total_power),
            "ratios_db": {k: round(v, 2) for k, v in self.ratios.items()},
        }


class WindowSummary(BaseModel):
    """多窗口统计：逐窗口值、均值与均值标准误差"""
    name: str
    values: List[float]
    mean: float
    stderr: float

    def to_report(self) -> dict:
        return {
            "name": self.name,
            "values_ps": [to_ps(v) for v in self.values],
            "mean_ps": round(self.mean * PS, 2),
            "stderr_ps": round(self.stderr * PS, 2),
        }


def ensure_positive(name: str, value: float):
    if value <= 0:
        raise ConfigurationError(f"{name}必须为正", detail={name: value})
