"""
命令行入口

    python cli.py simulate --scenario dummy --output-dir out/dummy
    python cli.py analyze out/dummy/dummy.wav --truth out/dummy/dummy_truth.csv
    python cli.py decompose out/drs/recorder_a.wav out/drs/recorder_b.wav --windows 10

结果摘要以JSON写到stdout，日志写到stderr；出错时stderr输出
{"error": 类别, "message": ..., "detail": ...}，退出码见app.core.errors。
"""
import json
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, NoReturn, Optional, Sequence

import click
from pydantic import ValidationError as PydanticValidationError

from app.core.config import config, parse_key_value_text
from app.core.errors import AppError, NotFoundError, ValidationError
from app.core.logger import setup_logging
from app.schemas.analysis import PS, AnalysisConfig
from app.schemas.manifest import Command, RunManifest, SimulationScenario
from app.schemas.signal import DummySpec
from app.services.runner import cli_run
from app.services.synthesis import DUMMY_KINDS


def _fail(error: AppError) -> NoReturn:
    click.echo(json.dumps(error.to_dict(), ensure_ascii=False, default=str), err=True)
    raise SystemExit(error.exit_code)


@contextmanager
def _errors():
    """参数与领域错误转换为错误JSON和退出码"""
    try:
        yield
    except PydanticValidationError as e:
        _fail(ValidationError("参数无效", detail=e.errors(include_url=False)))
    except AppError as e:
        _fail(e)


def _analysis(options: Dict[str, Any]) -> AnalysisConfig:
    return config.section(
        "analysis",
        AnalysisConfig,
        span_seconds=options.get("window_seconds"),
        oversample=options.get("oversample"),
        bandwidth_hz=options.get("bandwidth_hz"),
        carrier_hz=options.get("carrier_hz"),
    )


def _dummy(path: Optional[str], kind: Optional[str]) -> Optional[DummySpec]:
    """读取key/value格式的假录音参数，kind覆盖其中的噪声开关"""
    if path is None and kind is None:
        return None
    data = dict(config.get("dummy", {}) or {})
    if path is not None:
        file = Path(path)
        if not file.exists():
            raise NotFoundError(f"文件不存在: {file}")
        data.update(parse_key_value_text(file.read_text(encoding="utf-8")))
    if kind is not None:
        data.update(DUMMY_KINDS[kind])
    return DummySpec(**data)


def _run(command: Command, inputs: Sequence[str], options: Dict[str, Any], **fields):
    """组装RunManifest并执行"""
    optional = {k: options.get(k) for k in ("seed", "windows", "workers") if options.get(k) is not None}
    with _errors():
        manifest = RunManifest(
            command=command,
            inputs=list(inputs),
            analysis=_analysis(options),
            pseudo_mono=bool(options.get("pseudo_mono")),
            output_dir=options.get("output_dir") or "output",
            **optional,
            **fields,
        )

    result = cli_run(manifest)
    if result.exit_code:
        click.echo(json.dumps(result.error, ensure_ascii=False, default=str), err=True)
        raise SystemExit(result.exit_code)
    click.echo(json.dumps(result.summary, indent=2, sort_keys=True, ensure_ascii=False))


def analysis_options(func):
    """各子命令共用的分析参数"""
    options = [
        click.option("--window-seconds", type=float, default=None, help="分析区间长度T（秒），默认4N/f_R"),
        click.option("--oversample", type=int, default=None, help="过采样倍数，2的幂"),
        click.option("--bandwidth-hz", type=float, default=None, help="半带宽B_W"),
        click.option("--carrier-hz", type=float, default=None, help="名义载波频率"),
        click.option("--seed", type=int, default=None, help="随机种子"),
        click.option("--windows", type=int, default=None, help="分析窗口数"),
        click.option("--workers", type=int, default=None, help="并行分析的窗口数"),
        click.option("--output-dir", type=click.Path(file_okay=False), default="output", help="输出目录"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@click.group()
@click.option("--log-level", default=None, help="日志级别，默认读取log.level")
def cli(log_level: Optional[str]):
    """采样抖动测量工具：ZCA / DRS / FDA / HTA"""
    if log_level:
        setup_logging(log_level)


@cli.command()
@analysis_options
@click.option("--scenario", type=click.Choice([s.value for s in SimulationScenario]), default="dummy")
@click.option("--dummy-config", type=click.Path(dir_okay=False), default=None, help="key = value格式的假录音参数")
@click.option("--kind", type=click.Choice(list(DUMMY_KINDS)), default=None, help="假录音类型")
def simulate(scenario: str, dummy_config: Optional[str], kind: Optional[str], **options):
    """生成假录音，或模拟播放器与录音机链路"""
    with _errors():
        dummy = _dummy(dummy_config, kind)
    if dummy is not None and options.get("seed") is None:
        options["seed"] = dummy.seed
    _run(Command.simulate, [], options, scenario=SimulationScenario(scenario), dummy=dummy)


@cli.command()
@analysis_options
@click.argument("wav", type=click.Path(dir_okay=False))
@click.option("--truth", multiple=True, type=click.Path(dir_okay=False), help="真值噪声CSV（验证模式）")
@click.option("--channel", type=int, default=0, help="声道下标")
@click.option("--pseudo-mono", is_flag=True, help="L与R平均后分析")
def analyze(wav: str, truth, channel: int, **options):
    """单个录音的ZCA：ZCF CSV与直方图"""
    _run(Command.analyze, [wav], options, truth=list(truth), channel=channel)


@cli.command()
@analysis_options
@click.argument("recording_a", type=click.Path(dir_okay=False))
@click.argument("recording_b", type=click.Path(dir_okay=False))
@click.option("--channel", type=int, default=0, help="声道下标")
@click.option("--pseudo-mono", is_flag=True, help="L与R平均后分析")
def decompose(recording_a: str, recording_b: str, channel: int, **options):
    """两台录音机的DRS分解"""
    _run(Command.decompose, [recording_a, recording_b], options, channel=channel)


@cli.command()
@analysis_options
@click.argument("recordings", nargs=-1, type=click.Path(dir_okay=False))
@click.option("--sigma-n2-ps", type=float, default=None, help="已知的σn2（ps），此时只需并联播放的两个录音")
@click.option("--stereo", type=click.Path(dir_okay=False), default=None, help="双声道录音机的录音")
def split(recordings, sigma_n2_ps: Optional[float], stereo: Optional[str], **options):
    """
    播放器抖动/PI分离与录音机抖动/PI分离

    RECORDINGS：普通DRS的两个录音加L+R并联播放的两个录音；给出--sigma-n2-ps时只需后两个。
    """
    sigma_n2 = None if sigma_n2_ps is None else sigma_n2_ps / PS
    _run(Command.split, recordings, options, sigma_n2=sigma_n2, stereo_input=stereo)


@cli.command()
@analysis_options
@click.argument("wav", type=click.Path(dir_okay=False))
@click.option("--truth", multiple=True, type=click.Path(dir_okay=False), help="真值噪声CSV（验证模式）")
@click.option("--dummy-config", type=click.Path(dir_okay=False), default=None, help="假录音参数，用于给出理论功率")
@click.option("--kind", type=click.Choice(list(DUMMY_KINDS)), default=None, help="假录音类型")
@click.option("--channel", type=int, default=0, help="声道下标")
def baseline(wav: str, truth, dummy_config: Optional[str], kind: Optional[str], channel: int, **options):
    """FDA频带功率与HTA抖动提取"""
    with _errors():
        dummy = _dummy(dummy_config, kind)
    _run(Command.baseline, [wav], options, truth=list(truth), dummy=dummy, channel=channel)


if __name__ == "__main__":
    cli()
