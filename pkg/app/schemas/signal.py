"""
信号合成侧的数据模型：采样缓冲、播放文件参数、噪声轨迹、假录音参数

振幅单位约定：噪声振幅（a_m、n_pi、a_total）以录音机满量程A_R为1（FS），
抖动j以秒为单位。
"""
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.errors import ConfigurationError


def _readonly(values, dtype) -> np.ndarray:
    """复制为一维只读数组"""
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


class SampleBuffer(BaseModel):
    """
    整数PCM采样缓冲

    samples[i]对应时刻 start_time + i / sample_rate
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    samples: np.ndarray = Field(..., description="有符号整数采样值")
    bit_depth: int = Field(24, description="位深")
    sample_rate: float = Field(..., description="采样率 Hz")
    start_time: float = Field(0.0, description="第一个采样点的绝对时刻 s")
    clip_count: int = Field(0, description="量化时饱和的采样点数")

    @field_validator("samples", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _readonly(v, np.int64)

    @model_validator(mode="after")
    def _check_range(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate必须为正")
        if not 2 <= self.bit_depth <= 32:
            raise ValueError(f"不支持的位深: {self.bit_depth}")
        if self.samples.size:
            lo, hi = self.limits
            if self.samples.min() < lo or self.samples.max() > hi:
                raise ValueError(f"采样值超出{self.bit_depth}位有符号整数范围")
        return self

    @property
    def limits(self) -> tuple:
        """有符号整数范围 [-2^(b-1), 2^(b-1)-1]"""
        half = 1 << (self.bit_depth - 1)
        return -half, half - 1

    @property
    def full_scale(self) -> int:
        """x_max = 2^(b-1) - 1"""
        return (1 << (self.bit_depth - 1)) - 1

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def times(self) -> np.ndarray:
        """每个采样点的绝对时刻"""
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    def normalized(self) -> np.ndarray:
        """归一化到满量程（1.0 = x_max）"""
        return self.samples.astype(np.float64) / self.full_scale

    def index_of(self, t: float) -> int:
        """时刻t对应的采样下标（向下取整）"""
        return int(np.floor((t - self.start_time) * self.sample_rate + 1e-9))


class PlaybackSpec(BaseModel):
    """
    播放文件参数（播放器模型）

    五段结构：静音、淡入、主体、淡出、静音，总长 2*i_main + main_length。
    i_main为主体第一个采样点的1起始下标。
    """
    sample_rate: float = Field(48000.0, description="播放采样率 f_P")
    bit_depth: int = Field(24, description="播放位深 N_P")
    i_main: int = Field(480000, description="主体起始下标（1起始）")
    fade_length: int = Field(240000, description="淡入/淡出长度 N_F")
    main_length: int = Field(1440000, description="主体长度 N_main")
    v_min: int = Field(256, description="淡入起始振幅")
    start_time: Optional[float] = Field(None, description="播放开始时刻 t_P，默认使t=0落在主体内")

    def check(self):
        """检查参数约束，失败抛出ConfigurationError"""
        problems = []
        if self.sample_rate <= 0:
            problems.append("sample_rate必须为正")
        if not 2 <= self.bit_depth <= 32:
            problems.append("bit_depth超出范围")
        for name in ("i_main", "fade_length", "main_length"):
            if getattr(self, name) <= 0:
                problems.append(f"{name}必须为正")
        if self.fade_length >= self.i_main:
            problems.append("fade_length必须小于i_main")
        if not 0 <= self.v_min <= self.v_max:
            problems.append("v_min必须在[0, v_max]内")
        if problems:
            raise ConfigurationError("播放参数无效", detail=problems)
        return self

    @property
    def v_max(self) -> int:
        return (1 << (self.bit_depth - 1)) - 1

    @property
    def total_length(self) -> int:
        return 2 * self.i_main + self.main_length

    @property
    def t_p(self) -> float:
        """播放开始时刻"""
        if self.start_time is not None:
            return self.start_time
        return -(self.i_main + self.main_length / 6) / self.sample_rate

    @property
    def carrier_hz(self) -> float:
        """主体部分的载波频率 f_P / 4"""
        return self.sample_rate / 4

    @property
    def main_interval(self) -> tuple:
        """主体部分的时间区间 [开始, 结束)"""
        t0 = self.t_p + (self.i_main - 1) / self.sample_rate
        return t0, t0 + self.main_length / self.sample_rate


class NoiseTraces(BaseModel):
    """
    与采样网格对齐的噪声轨迹（真值）

    第i个点对应时刻 start_time + i / sample_rate。
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    j: np.ndarray = Field(..., description="抖动 s")
    a_m: np.ndarray = Field(..., description="AM FS")
    n_pi: np.ndarray = Field(..., description="相位无关噪声 FS")
    a_total: np.ndarray = Field(..., description="录音机噪声 FS")
    sample_rate: float
    start_time: float = 0.0

    @field_validator("j", "a_m", "n_pi", "a_total", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _readonly(v, np.float64)

    @model_validator(mode="after")
    def _check_lengths(self):
        lengths = {self.j.size, self.a_m.size, self.n_pi.size, self.a_total.size}
        if len(lengths) != 1:
            raise ValueError("噪声轨迹长度不一致")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate必须为正")
        return self

    @classmethod
    def zeros(cls, length: int, sample_rate: float, start_time: float = 0.0) -> "NoiseTraces":
        z = np.zeros(length)
        return cls(j=z, a_m=z, n_pi=z, a_total=z, sample_rate=sample_rate, start_time=start_time)

    def __len__(self) -> int:
        return int(self.j.size)

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.j.size) / self.sample_rate

    def evaluate(self, name: str, t: np.ndarray) -> np.ndarray:
        """在任意时刻线性插值读取某条轨迹，轨迹范围外为0"""
        trace = getattr(self, name)
        pos = (np.asarray(t, dtype=np.float64) - self.start_time) * self.sample_rate
        return np.interp(pos, np.arange(trace.size), trace, left=0.0, right=0.0)

    def replace(self, **changes) -> "NoiseTraces":
        data = {k: getattr(self, k) for k in ("j", "a_m", "n_pi", "a_total", "sample_rate", "start_time")}
        data.update(changes)
        return NoiseTraces(**data)


class DummySpec(BaseModel):
    """
    假录音波形参数

    jitter_rms为全带宽抖动J；AM与PI的全带宽幅度为 A_0*omega*J，
    录音机噪声为 A_0*omega*recorder_rms，均经带限后注入。
    """
    carrier_hz: float = Field(11884.877, description="载波频率 f_C")
    amplitude_ratio: float = Field(0.9, description="A_0 / A_R")
    theta_0: float = Field(0.0, description="初相 rad")
    jitter_rms: float = Field(160e-12, description="全带宽抖动RMS J (s)")
    bandwidth_hz: float = Field(6000.0, description="噪声带宽 B_W")
    sample_rate: float = Field(192000.0, description="录音采样率 f_R")
    bit_depth: int = Field(24, description="录音位深")
    seed: int = Field(20240101, description="随机种子")
    enable_jitter: bool = True
    enable_am: bool = False
    enable_pi: bool = False
    enable_recorder: bool = False
    recorder_rms: float = Field(0.0, description="录音机噪声的全带宽时间等效RMS (s)")
    length: int = Field(288000, description="采样点数，默认6N")
    start_time: float = Field(-0.25, description="第一个采样点时刻，默认-N/f_R")

    def check(self):
        """检查参数约束，失败抛出ConfigurationError"""
        problems = []
        if not 0 < self.amplitude_ratio <= 1:
            problems.append("amplitude_ratio必须在(0, 1]内")
        if self.sample_rate <= 0 or not 0 < self.carrier_hz < self.sample_rate / 2:
            problems.append("carrier_hz必须小于f_R/2")
        if not 0 < self.bandwidth_hz < self.carrier_hz:
            problems.append("bandwidth_hz必须小于carrier_hz")
        if self.jitter_rms < 0 or self.recorder_rms < 0:
            problems.append("噪声RMS不能为负")
        if self.length <= 0:
            problems.append("length必须为正")
        if not 2 <= self.bit_depth <= 32:
            problems.append("bit_depth超出范围")
        if problems:
            raise ConfigurationError("假录音参数无效", detail=problems)
        return self

    @property
    def omega(self) -> float:
        return 2 * np.pi * self.carrier_hz

    @property
    def full_scale(self) -> int:
        return (1 << (self.bit_depth - 1)) - 1
