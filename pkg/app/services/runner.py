"""
运行编排：按RunManifest执行simulate/analyze/decompose/split/baseline

CLI与HTTP接口共用cli_run，所有产物写入manifest.output_dir，
同一清单（含种子）重复运行得到相同的输出文件。
"""
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from app.core.config import config
from app.core.errors import AppError, CoverageError, ValidationError
from app.core.logger import log
from app.schemas.analysis import (
    AnalysisConfig,
    PlayerSplit,
    RecorderSplit,
    VarianceBudget,
    ZeroCrossingSeries,
    to_ps,
)
from app.schemas.manifest import Command, RunManifest, RunResult, SimulationScenario, WavFile
from app.schemas.signal import DummySpec, NoiseTraces, PlaybackSpec, SampleBuffer
from app.services import reports
from app.services.baselines import fda_band_power, hta_extract
from app.services.decomposition import (
    detection_limit,
    drs_decompose,
    phase_variance_fit,
    split_player_jitter_pi,
    split_recorder_jitter_pi,
    summarize_windows,
)
from app.services.dsp import density_db, psd
from app.services.synthesis import (
    bundle_player_channels,
    expected_band_powers,
    generate_playback_waveform,
    make_dummy_traces,
    make_noise_traces,
    simulate_recording,
    stereo_recording,
    synthesize_dummy_waveform,
)
from app.services.wavio import pseudo_mono, read_wav, write_wav
from app.services.zca import align_crossings, analysis_spans, compute_zcf, detect_onset

T = TypeVar("T")
R = TypeVar("R")

Outcome = Tuple[List[Path], Dict[str, Any]]


def _meta_path(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def _write_recording(out: Path, name: str, wav, artifacts: List[Path]):
    """写出WAV及记录起始时刻的旁路文件"""
    wav_path = write_wav(out / f"{name}.wav", wav)
    meta = reports.write_json(_meta_path(wav_path), {"start_time": wav.start_time, "sample_rate": float(wav.sample_rate)})
    artifacts.extend([wav_path, meta])


def _load_buffer(path: str, channel: int = 0, mono: bool = False) -> SampleBuffer:
    """
    读入一路录音

    存在同名.meta.json时取其中的start_time，使模拟录音与真值轨迹处于同一时间轴。
    """
    wav = _load_wav(path)
    if mono:
        return pseudo_mono(wav)
    if not 0 <= channel < wav.channels:
        raise ValidationError(f"声道下标越界: {channel}", detail={"channels": wav.channels})
    return wav.channel(channel)


def _load_wav(path: str) -> WavFile:
    wav = read_wav(path)
    meta = _meta_path(Path(path))
    if meta.exists():
        with open(meta, "r", encoding="utf-8") as f:
            start_time = float(json.load(f).get("start_time", 0.0))
        wav = wav.model_copy(update={"start_time": start_time})
    return wav


def _is_single_block(buffer: SampleBuffer, cfg: AnalysisConfig) -> bool:
    """没有淡入淡出的短录音（如假录音）只做一个默认位置的分析块"""
    return len(buffer) < 2 * cfg.block_length


def _onset(buffer: SampleBuffer, cfg: AnalysisConfig) -> float:
    if _is_single_block(buffer, cfg):
        return buffer.start_time
    return detect_onset(buffer, cfg.carrier_hz)


def _plan(buffer: SampleBuffer, cfg: AnalysisConfig, count: int) -> Tuple[float, List[Optional[float]]]:
    """返回（淡入时刻, 各分析区间起点）"""
    if _is_single_block(buffer, cfg):
        if count > 1:
            raise CoverageError(
                f"录音只够一个分析块，请求{count}个窗口",
                detail={"samples": len(buffer), "block_length": cfg.block_length},
            )
        return buffer.start_time, [None]
    return _onset(buffer, cfg), list(analysis_spans(buffer, cfg, count))


def _map(func: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """逐窗口分析，workers>1时用线程池（numpy/scipy在FFT中释放GIL）"""
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="zca") as pool:
        return list(pool.map(func, items))


def _analysis_config(manifest: RunManifest, buffer: Optional[SampleBuffer] = None) -> AnalysisConfig:
    cfg = manifest.analysis
    if buffer is not None and abs(buffer.sample_rate - cfg.sample_rate) > 1e-9:
        cfg = cfg.model_copy(update={"sample_rate": buffer.sample_rate})
    return cfg.check()


# ---------------------------------------------------------------- simulate

def _dummy_spec(manifest: RunManifest) -> DummySpec:
    spec = manifest.dummy or config.section("dummy", DummySpec)
    return spec.model_copy(update={"seed": manifest.seed}).check()


def _playback_spec(manifest: RunManifest) -> PlaybackSpec:
    return (manifest.playback or config.section("playback", PlaybackSpec)).check()


def _simulate_dummy(manifest: RunManifest, out: Path) -> Outcome:
    spec = _dummy_spec(manifest)
    traces = make_dummy_traces(spec)
    buffer = synthesize_dummy_waveform(spec, traces)
    artifacts: List[Path] = []
    _write_recording(out, "dummy", buffer, artifacts)
    artifacts.append(reports.write_truth_csv(out / "dummy_truth.csv", traces))
    artifacts.append(reports.write_json(out / "dummy_spec.json", spec.model_dump()))
    powers = expected_band_powers(spec)
    summary = {
        "scenario": SimulationScenario.dummy.value,
        "samples": len(buffer),
        "clip_count": buffer.clip_count,
        "injected_rms_ps": {
            "jitter": to_ps(np.std(traces.j)),
            "am_scaled": to_ps(np.std(traces.a_m) / (spec.amplitude_ratio * spec.omega)),
            "pi_scaled": to_ps(np.std(traces.n_pi) / (spec.amplitude_ratio * spec.omega)),
        },
        "expected_powers_db": {
            k: (round(10 * float(np.log10(v)), 2) if k != "quantization_snr_db" and v > 0 else v)
            for k, v in powers.items()
        },
    }
    return artifacts, summary


def _trace_grid(playback: SampleBuffer, f_r: float) -> Tuple[int, float]:
    """覆盖整个播放文件的f_R网格：长度与起点"""
    length = int(np.ceil(len(playback) * f_r / playback.sample_rate)) + 1
    return length, playback.start_time


def _simulate_chain(manifest: RunManifest, out: Path) -> Outcome:
    """drs/bundled/stereo场景：播放文件 -> 播放器噪声 -> 录音机"""
    spec = _playback_spec(manifest)
    playback = generate_playback_waveform(spec)
    setup = manifest.recorder
    f_r = setup.sample_rate
    f_c = spec.carrier_hz
    band = (f_c - manifest.analysis.bandwidth_hz, f_c + manifest.analysis.bandwidth_hz)
    length, start = _trace_grid(playback, f_r)
    pn, rn = manifest.player_noise, manifest.recorder_noise
    player_seq, right_seq, rec_a_seq, rec_b_seq = np.random.SeedSequence(manifest.seed).spawn(4)

    def traces(seed, **rms) -> NoiseTraces:
        return make_noise_traces(length, f_r, start, band, seed, carrier_hz=f_c, amplitude=setup.gain, **rms)

    artifacts: List[Path] = []
    _write_recording(out, "playback", playback, artifacts)

    player = traces(player_seq, jitter_rms=pn.jitter_rms, pi_rms=pn.pi_rms, am_rms=pn.am_rms)
    expected_player = float(np.hypot(pn.jitter_rms, pn.pi_rms))
    if manifest.scenario is SimulationScenario.bundled:
        right = traces(right_seq, pi_rms=pn.pi_rms, am_rms=pn.am_rms).replace(j=player.j)
        player = bundle_player_channels(player, right)
        expected_player = float(np.sqrt(pn.jitter_rms ** 2 + pn.pi_rms ** 2 / 2))
    artifacts.append(reports.write_truth_csv(out / "player_truth.csv", player))

    offsets = setup.start_offsets
    summary: Dict[str, Any] = {
        "scenario": manifest.scenario.value,
        "playback_samples": len(playback),
        "recorder_sample_rate": f_r,
        "injected_rms_ps": {
            "player_zcf": to_ps(expected_player),
            "player_jitter": to_ps(pn.jitter_rms),
            "player_pi_scaled": to_ps(pn.pi_rms),
        },
    }

    if manifest.scenario is SimulationScenario.stereo:
        left = traces(rec_a_seq, jitter_rms=rn.jitter_rms, pi_rms=rn.pi_rms)
        right_pi = rn.pi_rms if rn.pi_rms_right is None else rn.pi_rms_right
        right = traces(rec_b_seq, pi_rms=right_pi)
        wav = stereo_recording(playback, left, right, spec.t_p + offsets[0], f_r, setup.bit_depth,
                               gain=setup.gain, player_noise=player)
        _write_recording(out, "stereo", wav, artifacts)
        artifacts.append(reports.write_truth_csv(out / "stereo_left_truth.csv", left))
        artifacts.append(reports.write_truth_csv(out / "stereo_right_truth.csv", right.replace(j=left.j)))
        summary["injected_rms_ps"].update({
            "recorder_jitter": to_ps(rn.jitter_rms),
            "recorder_pi_left_scaled": to_ps(rn.pi_rms),
            "recorder_pi_right_scaled": to_ps(right_pi),
        })
        return artifacts, summary

    if len(offsets) < 2:
        raise ValidationError("drs场景需要两台录音机的起始延迟", detail={"start_offsets": offsets})
    clips = {}
    for name, seq, offset in (("recorder_a", rec_a_seq, offsets[0]), ("recorder_b", rec_b_seq, offsets[1])):
        noise = traces(seq, jitter_rms=rn.jitter_rms, pi_rms=rn.pi_rms)
        buffer = simulate_recording(playback, noise, spec.t_p + offset, f_r, setup.bit_depth,
                                    gain=setup.gain, player_noise=player)
        _write_recording(out, name, buffer, artifacts)
        artifacts.append(reports.write_truth_csv(out / f"{name}_truth.csv", noise))
        clips[name] = buffer.clip_count
    summary["clip_count"] = clips
    summary["injected_rms_ps"]["recorder_zcf"] = to_ps(np.hypot(rn.jitter_rms, rn.pi_rms))
    return artifacts, summary


def _simulate(manifest: RunManifest, out: Path) -> Outcome:
    if manifest.scenario is SimulationScenario.dummy:
        return _simulate_dummy(manifest, out)
    return _simulate_chain(manifest, out)


# ---------------------------------------------------------------- analyze

def _validate_series(series: ZeroCrossingSeries, truth: NoiseTraces) -> Dict[str, Any]:
    """与真值轨迹对比：抖动直接比较，PI换算为 sign·Δs·ωA_0 后比较"""
    jitter = truth.evaluate("j", series.s_prime)
    additive = truth.evaluate("n_pi", series.s_prime) + truth.evaluate("a_total", series.s_prime)
    pi_estimate = series.signs() * series.delta * series.omega * series.amplitude
    return {
        "jitter_corr": round(reports.correlation(series.delta, jitter), 4),
        "pi_corr": round(reports.correlation(pi_estimate, additive), 4),
        "truth_jitter_rms_ps": to_ps(np.std(jitter)),
        "truth_pi_rms_scaled_ps": to_ps(np.std(additive) / (series.omega * series.amplitude)),
    }


def _analyze(manifest: RunManifest, out: Path) -> Outcome:
    buffer = _load_buffer(manifest.inputs[0], manifest.channel, manifest.pseudo_mono)
    cfg = _analysis_config(manifest, buffer)
    _, spans = _plan(buffer, cfg, manifest.windows)
    series = _map(lambda start: compute_zcf(buffer, cfg, start), spans, manifest.workers)
    truths = {Path(p).stem: reports.read_truth_csv(p) for p in manifest.truth}

    artifacts: List[Path] = []
    windows = []
    for i, z in enumerate(series):
        artifacts.append(reports.write_zcf_csv(out / f"zcf_{i:02d}.csv", z))
        artifacts.append(reports.write_histogram_csv(out / f"histogram_{i:02d}.csv", z))
        entry: Dict[str, Any] = {
            "window": i,
            "span_start_s": z.span_start,
            "M": z.M,
            "f_c_measured_hz": round(z.f_c_measured, 6),
            "amplitude_fs": round(z.amplitude, 6),
            "first_parity": z.first_index_parity.value,
            "zcf_rms_ps": to_ps(z.rms()),
        }
        if truths:
            entry["validation"] = {name: _validate_series(z, truth) for name, truth in truths.items()}
        windows.append(entry)

    fit = phase_variance_fit(buffer, cfg, spans[0], zcf=series[0])
    components = fit.pi_free_components()
    first = series[0]
    summary = {
        "input": manifest.inputs[0],
        "bit_depth": buffer.bit_depth,
        "windows": windows,
        "zcf_rms": summarize_windows("zcf_rms", [z.rms() for z in series]).to_report(),
        "detection_limit_ps": round(detection_limit(buffer.bit_depth, first.amplitude, first.f_c_measured) * 1e12, 4),
        "phase_fit": {
            "A_fs2": fit.A,
            "B_fs2": fit.B,
            "residual_rms_fs2": fit.residual_rms,
            "cycles": fit.cycles,
            "pi_free_dev_j_ps": to_ps(components["dev_j"]),
            "pi_free_dev_am_fs": components["dev_am"],
        },
    }
    return artifacts, summary


# ---------------------------------------------------------------- decompose

def drs_windows(a: SampleBuffer, b: SampleBuffer, cfg: AnalysisConfig, count: int, workers: int = 1) -> List[VarianceBudget]:
    """
    两台录音机的多窗口DRS分解

    b的分析区间按两者淡入时刻的差平移，使两边分析同一段播放信号。
    """
    onset_a, spans_a = _plan(a, cfg, count)
    onset_b = _onset(b, cfg)
    spans_b = [None if s is None else onset_b + (s - onset_a) for s in spans_a]

    def one(pair: Tuple[Optional[float], Optional[float]]) -> VarianceBudget:
        za = compute_zcf(a, cfg, pair[0])
        zb = compute_zcf(b, cfg, pair[1])
        za, zb = align_crossings(za, zb, onset_a, onset_b)
        return drs_decompose(za, zb, cfg)

    return _map(one, list(zip(spans_a, spans_b)), workers)


def _budget_summary(budgets: Iterable[VarianceBudget]) -> Dict[str, Any]:
    budgets = list(budgets)
    return {
        name: summarize_windows(name, [getattr(b, name) for b in budgets]).to_report()
        for name in ("sigma_n", "sigma_a", "sigma_b")
    }


def _decompose(manifest: RunManifest, out: Path) -> Outcome:
    a = _load_buffer(manifest.inputs[0], manifest.channel, manifest.pseudo_mono)
    b = _load_buffer(manifest.inputs[1], manifest.channel, manifest.pseudo_mono)
    cfg = _analysis_config(manifest, a)
    budgets = drs_windows(a, b, cfg, manifest.windows, manifest.workers)
    summary = {
        "inputs": manifest.inputs[:2],
        "windows": [b.to_report() for b in budgets],
        "summary": _budget_summary(budgets),
        "valid": all(b.valid for b in budgets),
    }
    return [], summary


# ---------------------------------------------------------------- split

def _pair_budgets(manifest: RunManifest, paths: Sequence[str]) -> List[VarianceBudget]:
    a = _load_buffer(paths[0], manifest.channel, manifest.pseudo_mono)
    b = _load_buffer(paths[1], manifest.channel, manifest.pseudo_mono)
    return drs_windows(a, b, _analysis_config(manifest, a), manifest.windows, manifest.workers)


def _stereo_split(manifest: RunManifest, sigma_n2: float) -> List[RecorderSplit]:
    wav = _load_wav(manifest.stereo_input)
    if wav.channels < 2:
        raise ValidationError("录音机分离需要双声道录音", detail={"channels": wav.channels})
    left, right = wav.channel(0), wav.channel(1)
    cfg = _analysis_config(manifest, left)
    onset, spans = _plan(left, cfg, manifest.windows)

    def one(start: Optional[float]) -> RecorderSplit:
        zl, zr = align_crossings(compute_zcf(left, cfg, start), compute_zcf(right, cfg, start), onset, onset)
        return split_recorder_jitter_pi(zl, zr, sigma_n2)

    return _map(one, spans, manifest.workers)


def _split(manifest: RunManifest, out: Path) -> Outcome:
    """
    inputs为4个文件时：前两个为普通DRS（得σn2），后两个为L+R并联播放的DRS（得σn3）；
    为2个文件时：σn2取manifest.sigma_n2，两个文件为并联播放的DRS。
    """
    if len(manifest.inputs) >= 4:
        drs = _pair_budgets(manifest, manifest.inputs[0:2])
        bundled = _pair_budgets(manifest, manifest.inputs[2:4])
        sigma_n2 = [b.sigma_n for b in drs]
    else:
        drs = []
        bundled = _pair_budgets(manifest, manifest.inputs[0:2])
        sigma_n2 = [manifest.sigma_n2] * len(bundled)

    players: List[PlayerSplit] = [
        split_player_jitter_pi(n2, b.sigma_n) for n2, b in zip(sigma_n2, bundled)
    ]
    summary: Dict[str, Any] = {
        "inputs": list(manifest.inputs),
        "player": {
            "windows": [p.to_report() for p in players],
            "dev_j": summarize_windows("dev_j", [p.dev_j for p in players]).to_report(),
            "dev_npi_scaled": summarize_windows("dev_npi_scaled", [p.dev_npi_scaled for p in players]).to_report(),
            "valid": all(p.valid for p in players),
        },
    }
    if drs:
        summary["drs"] = _budget_summary(drs)
    summary["bundled"] = _budget_summary(bundled)

    if manifest.stereo_input:
        mean_n2 = float(np.mean(sigma_n2))
        recorders = _stereo_split(manifest, mean_n2)
        summary["recorder"] = {
            "input": manifest.stereo_input,
            "windows": [r.to_report() for r in recorders],
            "dev_ajitter_scaled": summarize_windows(
                "dev_ajitter_scaled", [r.dev_ajitter_scaled for r in recorders]).to_report(),
            "valid": all(r.valid for r in recorders),
        }
    return [], summary


# ---------------------------------------------------------------- baseline

def _baseline(manifest: RunManifest, out: Path) -> Outcome:
    buffer = _load_buffer(manifest.inputs[0], manifest.channel, manifest.pseudo_mono)
    cfg = _analysis_config(manifest, buffer)
    window = config.get("fda.window", "blackman")
    fda = fda_band_power(
        buffer,
        cfg.band,
        carrier_bins=int(config.get("fda.carrier_bins", 2)),
        guard_hz=float(config.get("fda.guard_hz", 50.0)),
        window=window,
    )
    freqs, density = psd(buffer.normalized(), buffer.sample_rate, window)

    _, spans = _plan(buffer, cfg, 1)
    hta = hta_extract(buffer, cfg, spans[0])
    zcf = compute_zcf(buffer, cfg, spans[0])

    artifacts = [
        reports.write_psd_csv(out / "psd.csv", freqs, density_db(density)),
        reports.write_trace_csv(out / "hta_jitter.csv", hta.times, hta.jitter),
    ]
    summary: Dict[str, Any] = {
        "input": manifest.inputs[0],
        "fda": fda.to_report(),
        "hta_rms_ps": to_ps(np.std(hta.jitter)),
        "zca_rms_ps": to_ps(zcf.rms()),
    }
    if manifest.dummy is not None:
        summary["expected_powers"] = expected_band_powers(manifest.dummy)

    validation = {}
    for path in manifest.truth:
        truth = reports.read_truth_csv(path)
        additive = truth.evaluate("n_pi", hta.times) + truth.evaluate("a_total", hta.times)
        validation[Path(path).stem] = {
            "hta_jitter_corr": round(reports.correlation(hta.jitter, truth.evaluate("j", hta.times)), 4),
            "hta_pi_corr": round(reports.correlation(hta.upconverted(zcf.amplitude), additive), 4),
            "zca": _validate_series(zcf, truth),
        }
    if validation:
        summary["validation"] = validation
    return artifacts, summary


_HANDLERS: Dict[Command, Callable[[RunManifest, Path], Outcome]] = {
    Command.simulate: _simulate,
    Command.analyze: _analyze,
    Command.decompose: _decompose,
    Command.split: _split,
    Command.baseline: _baseline,
}


def cli_run(manifest: RunManifest) -> RunResult:
    """
    执行一次运行，写出产物、manifest.json与summary.json

    领域错误不向外抛出，转换为RunResult.exit_code与机器可读的error。
    """
    out = manifest.output_path
    log.info(f"开始运行 {manifest.command.value}，输出目录: {out}")
    try:
        out.mkdir(parents=True, exist_ok=True)
        artifacts, summary = _HANDLERS[manifest.command](manifest, out)
        artifacts.append(reports.write_json(out / "manifest.json", manifest.model_dump(mode="json")))
        artifacts.append(reports.write_json(out / "summary.json", summary))
    except AppError as e:
        log.error(f"{manifest.command.value} 失败 [{e.category}]: {e.error_msg}")
        return RunResult(exit_code=e.exit_code, error=e.to_dict())
    log.info(f"{manifest.command.value} 完成，共 {len(artifacts)} 个产物")
    return RunResult(artifacts=[str(p) for p in artifacts], summary=summary)
