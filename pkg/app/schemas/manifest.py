"""
WAV文件与运行清单模型
"""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.analysis import AnalysisConfig
from app.schemas.signal import DummySpec, PlaybackSpec, SampleBuffer


class WavFile(BaseModel):
    """
    多声道PCM音频

    frames为按声道分开的整数采样数组，写出时交织。
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sample_rate: int
    bit_depth: int = 24
    frames: List[np.ndarray]
    start_time: float = 0.0

    @field_validator("frames", mode="before")
    @classmethod
    def _to_arrays(cls, v):
        if isinstance(v, np.ndarray) and v.ndim == 1:
            v = [v]
        arrays = []
        for channel in v:
            arr = np.array(channel, dtype=np.int64, copy=True).reshape(-1)
            arr.flags.writeable = False
            arrays.append(arr)
        return arrays

    @model_validator(mode="after")
    def _check(self):
        if self.bit_depth not in (16, 24):
            raise ValueError(f"仅支持16/24位PCM，当前为{self.bit_depth}")
        if not self.frames:
            raise ValueError("至少需要一个声道")
        if len({f.size for f in self.frames}) != 1:
            raise ValueError("各声道长度必须一致")
        half = 1 << (self.bit_depth - 1)
        for f in self.frames:
            if f.size and (f.min() < -half or f.max() > half - 1):
                raise ValueError(f"采样值超出{self.bit_depth}位范围")
        return self

    @property
    def channels(self) -> int:
        return len(self.frames)

    @property
    def frame_count(self) -> int:
        return int(self.frames[0].size)

    def channel(self, index: int) -> SampleBuffer:
        """取出单声道为SampleBuffer"""
        return SampleBuffer(
            samples=self.frames[index],
            bit_depth=self.bit_depth,
            sample_rate=self.sample_rate,
            start_time=self.start_time,
        )

    @classmethod
    def from_buffers(cls, *buffers: SampleBuffer) -> "WavFile":
        first = buffers[0]
        return cls(
            sample_rate=int(round(first.sample_rate)),
            bit_depth=first.bit_depth,
            frames=[b.samples for b in buffers],
            start_time=first.start_time,
        )


class Command(str, Enum):
    simulate = "simulate"
    analyze = "analyze"
    decompose = "decompose"
    split = "split"
    baseline = "baseline"


class SimulationScenario(str, Enum):
    """simulate命令的场景"""
    dummy = "dummy"              # 假录音（单声道）
    drs = "drs"                  # 一台播放器 + 两台录音机
    bundled = "bundled"          # L+R并联播放器 + 两台录音机
    stereo = "stereo"            # 双声道录音机（L/R共享抖动）


class PlayerNoise(BaseModel):
    """模拟播放器噪声（带限后的RMS目标值）"""
    jitter_rms: float = Field(20e-12, description="播放器抖动 s")
    pi_rms: float = Field(40e-12, description="播放器PI噪声 时间等效 s")
    am_rms: float = Field(0.0, description="播放器AM 时间等效 s")


class RecorderNoise(BaseModel):
    """模拟录音机噪声（带限后的RMS目标值，时间等效）"""
    pi_rms: float = Field(35e-12, description="录音机PI噪声 s")
    jitter_rms: float = Field(0.0, description="录音机抖动 s（双声道共享）")
    pi_rms_right: Optional[float] = Field(None, description="右声道PI噪声，默认与左声道相同")


class RecorderSetup(BaseModel):
    """模拟录音机的采样参数"""
    sample_rate: float = Field(192000.0, description="录音采样率 f_R")
    bit_depth: int = Field(24, description="录音位深")
    gain: float = Field(0.9, description="播放满幅对应的录音振幅 A_0/A_R")
    start_offsets: List[float] = Field(
        default_factory=lambda: [0.05, 0.0731234567],
        description="各录音机相对播放开始时刻t_P的录音开始延迟 s",
    )


class RunManifest(BaseModel):
    """
    一次运行的完整描述，和输出一起保存
    """
    command: Command
    inputs: List[str] = Field(default_factory=list)
    truth: List[str] = Field(default_factory=list, description="验证模式下的真值噪声CSV")
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    dummy: Optional[DummySpec] = None
    playback: Optional[PlaybackSpec] = None
    scenario: SimulationScenario = SimulationScenario.dummy
    player_noise: PlayerNoise = Field(default_factory=PlayerNoise)
    recorder_noise: RecorderNoise = Field(default_factory=RecorderNoise)
    recorder: RecorderSetup = Field(default_factory=RecorderSetup)
    seed: int = 20240101
    windows: int = Field(1, description="分析窗口数")
    pseudo_mono: bool = False
    channel: int = Field(0, description="单声道分析时使用的声道")
    sigma_n2: Optional[float] = Field(None, description="split命令：已知的播放器ZCF RMS σn2（s）")
    stereo_input: Optional[str] = Field(None, description="split命令：双声道录音机的录音，用于录音机抖动/PI分离")
    workers: int = Field(1, description="并行分析的窗口数")
    output_dir: str = "output"

    @model_validator(mode="after")
    def _check(self):
        needed = {Command.analyze: 1, Command.decompose: 2, Command.split: 2, Command.baseline: 1}
        count = needed.get(self.command, 0)
        if len(self.inputs) < count:
            raise ValueError(f"{self.command.value}命令至少需要{count}个输入文件")
        if self.windows < 1 or self.workers < 1:
            raise ValueError("windows与workers至少为1")
        if self.command is Command.split and len(self.inputs) < 4 and self.sigma_n2 is None:
            raise ValueError("split命令需要4个输入文件，或2个输入文件加sigma_n2")
        return self

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)


class RunResult(BaseModel):
    """cli_run的返回：退出码、产物路径与摘要"""
    exit_code: int = 0
    artifacts: List[str] = Field(default_factory=list)
    summary: Dict[str, Any] = Field(default_factory=dict)
    error: Optional[Dict[str, Any]] = None
