import json

import pytest

from app.schemas.analysis import AnalysisConfig
from app.schemas.manifest import Command, PlayerNoise, RecorderNoise, RunManifest, SimulationScenario
from app.schemas.signal import PlaybackSpec
from app.services.runner import cli_run

SHORT_PLAYBACK = PlaybackSpec(i_main=24000, fade_length=4800, main_length=48000)
SHORT_ANALYSIS = AnalysisConfig(window_n=9600)


def _summary(path) -> dict:
    with open(path / "summary.json", "r", encoding="utf-8") as f:
        return json.load(f)


def _run(**fields):
    result = cli_run(RunManifest(**fields))
    assert result.exit_code == 0, result.error
    return result


@pytest.fixture(scope="module")
def dummy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("dummy")
    _run(command=Command.simulate, scenario=SimulationScenario.dummy, output_dir=str(out))
    return out


@pytest.fixture(scope="module")
def drs_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("drs")
    _run(command=Command.simulate, scenario=SimulationScenario.drs, playback=SHORT_PLAYBACK,
         analysis=SHORT_ANALYSIS, output_dir=str(out))
    return out


def test_dummy_artifacts(dummy_dir):
    for name in ("dummy.wav", "dummy.meta.json", "dummy_truth.csv", "dummy_spec.json", "manifest.json"):
        assert (dummy_dir / name).exists()
    summary = _summary(dummy_dir)
    assert summary["injected_rms_ps"]["jitter"] == pytest.approx(40.0, rel=0.05)
    assert summary["expected_powers_db"]["carrier"] == pytest.approx(-3.93, abs=0.01)


def test_analyze_dummy_against_truth(dummy_dir, tmp_path):
    result = _run(command=Command.analyze, inputs=[str(dummy_dir / "dummy.wav")],
                  truth=[str(dummy_dir / "dummy_truth.csv")], output_dir=str(tmp_path))
    window = result.summary["windows"][0]
    assert window["zcf_rms_ps"] == pytest.approx(40.0, rel=0.05)
    assert window["validation"]["dummy_truth"]["jitter_corr"] >= 0.99
    assert result.summary["detection_limit_ps"] == pytest.approx(1.77, abs=0.01)
    assert result.summary["phase_fit"]["pi_free_dev_j_ps"] == pytest.approx(40.0, rel=0.1)
    assert (tmp_path / "zcf_00.csv").exists()
    assert (tmp_path / "histogram_00.csv").exists()


def test_identical_recordings_flag_degenerate(dummy_dir, tmp_path):
    wav = str(dummy_dir / "dummy.wav")
    result = _run(command=Command.decompose, inputs=[wav, wav], output_dir=str(tmp_path))
    assert "degenerate" in result.summary["windows"][0]["flags"]
    assert result.summary["valid"] is False


def test_missing_input_maps_to_exit_code(tmp_path):
    result = cli_run(RunManifest(command=Command.analyze, inputs=[str(tmp_path / "nope.wav")],
                                 output_dir=str(tmp_path)))
    assert result.exit_code == 3
    assert result.error["error"] == "not_found"


def test_single_block_recording_allows_one_window(dummy_dir, tmp_path):
    result = cli_run(RunManifest(command=Command.analyze, inputs=[str(dummy_dir / "dummy.wav")],
                                 windows=2, output_dir=str(tmp_path)))
    assert result.exit_code == 5
    assert result.error["error"] == "coverage"


def test_simulation_is_reproducible(dummy_dir, tmp_path):
    _run(command=Command.simulate, scenario=SimulationScenario.dummy, output_dir=str(tmp_path))
    for name in ("dummy.wav", "dummy_truth.csv", "summary.json"):
        assert (tmp_path / name).read_bytes() == (dummy_dir / name).read_bytes()


def test_seed_changes_noise(dummy_dir, tmp_path):
    _run(command=Command.simulate, scenario=SimulationScenario.dummy, seed=7, output_dir=str(tmp_path))
    assert (tmp_path / "dummy.wav").read_bytes() != (dummy_dir / "dummy.wav").read_bytes()


def test_drs_chain_recovers_injected_noise(drs_dir, tmp_path):
    summary = _summary(drs_dir)
    assert summary["injected_rms_ps"]["player_zcf"] == pytest.approx(44.7)
    result = _run(command=Command.decompose, analysis=SHORT_ANALYSIS, windows=2, workers=2,
                  inputs=[str(drs_dir / "recorder_a.wav"), str(drs_dir / "recorder_b.wav")],
                  output_dir=str(tmp_path))
    stats = result.summary["summary"]
    assert stats["sigma_n"]["mean_ps"] == pytest.approx(44.7, rel=0.15)
    assert stats["sigma_a"]["mean_ps"] == pytest.approx(35.0, rel=0.15)
    assert stats["sigma_b"]["mean_ps"] == pytest.approx(35.0, rel=0.15)
    assert result.summary["valid"]
    assert len(result.summary["windows"]) == 2


def test_baseline_on_recording(drs_dir, tmp_path):
    result = _run(command=Command.baseline, analysis=SHORT_ANALYSIS,
                  inputs=[str(drs_dir / "recorder_a.wav")], truth=[str(drs_dir / "recorder_a_truth.csv")],
                  output_dir=str(tmp_path))
    assert result.summary["fda"]["carrier_frequency_hz"] == pytest.approx(12000.0, abs=1.0)
    assert result.summary["zca_rms_ps"] == pytest.approx(result.summary["hta_rms_ps"], rel=0.5)
    assert (tmp_path / "psd.csv").exists()
    assert (tmp_path / "hta_jitter.csv").exists()


@pytest.mark.slow
def test_player_and_recorder_split(drs_dir, tmp_path_factory):
    bundled = tmp_path_factory.mktemp("bundled")
    _run(command=Command.simulate, scenario=SimulationScenario.bundled, playback=SHORT_PLAYBACK,
         analysis=SHORT_ANALYSIS, output_dir=str(bundled))
    stereo = tmp_path_factory.mktemp("stereo")
    _run(command=Command.simulate, scenario=SimulationScenario.stereo, playback=SHORT_PLAYBACK,
         analysis=SHORT_ANALYSIS, recorder_noise=RecorderNoise(pi_rms=35e-12, jitter_rms=15e-12),
         output_dir=str(stereo))

    inputs = [str(drs_dir / "recorder_a.wav"), str(drs_dir / "recorder_b.wav"),
              str(bundled / "recorder_a.wav"), str(bundled / "recorder_b.wav")]
    result = _run(command=Command.split, analysis=SHORT_ANALYSIS, windows=3, inputs=inputs,
                  stereo_input=str(stereo / "stereo.wav"), output_dir=str(tmp_path_factory.mktemp("split")))
    player = result.summary["player"]
    assert player["dev_j"]["mean_ps"] == pytest.approx(20.0, rel=0.3)
    assert player["dev_npi_scaled"]["mean_ps"] == pytest.approx(40.0, rel=0.15)
    assert result.summary["bundled"]["sigma_n"]["mean_ps"] == pytest.approx(34.6, rel=0.15)

    recorder = result.summary["recorder"]
    assert recorder["dev_ajitter_scaled"]["mean_ps"] == pytest.approx(15.0, rel=0.4)
    for window in recorder["windows"]:
        assert window["dev_api_l_scaled_ps"] == pytest.approx(35.0, rel=0.15)
        assert window["dev_api_r_scaled_ps"] == pytest.approx(35.0, rel=0.15)


@pytest.mark.slow
def test_full_length_drs(tmp_path):
    """默认播放文件（30 s主体）上的10个1秒窗口"""
    noise = dict(player_noise=PlayerNoise(), recorder_noise=RecorderNoise())
    _run(command=Command.simulate, scenario=SimulationScenario.drs, output_dir=str(tmp_path), **noise)
    result = _run(command=Command.decompose, windows=10, workers=4,
                  inputs=[str(tmp_path / "recorder_a.wav"), str(tmp_path / "recorder_b.wav")],
                  output_dir=str(tmp_path / "decompose"))
    stats = result.summary["summary"]
    assert stats["sigma_n"]["mean_ps"] == pytest.approx(44.7, rel=0.1)
    assert stats["sigma_a"]["mean_ps"] == pytest.approx(35.0, rel=0.1)
    assert stats["sigma_b"]["mean_ps"] == pytest.approx(35.0, rel=0.1)
