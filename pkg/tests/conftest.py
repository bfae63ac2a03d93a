import pytest

from app.schemas.analysis import AnalysisConfig
from app.schemas.signal import PlaybackSpec
from app.services.synthesis import validation_dummy


@pytest.fixture(scope="session")
def jitter_dummy():
    """仅抖动的假录音：J=160 ps全带宽，带限后40 ps"""
    return validation_dummy("jitter")


@pytest.fixture(scope="session")
def am_dummy():
    return validation_dummy("am")


@pytest.fixture(scope="session")
def pi_dummy():
    return validation_dummy("pi")


@pytest.fixture
def analysis():
    return AnalysisConfig()


@pytest.fixture
def short_playback():
    """2秒的短播放文件：0.4 s静音、0.1 s淡入、1 s主体"""
    return PlaybackSpec(i_main=24000, fade_length=4800, main_length=48000)


@pytest.fixture
def short_analysis():
    """N=9600（50 ms边沿、200 ms分析区间）"""
    return AnalysisConfig(window_n=9600)
