from fastapi import FastAPI

from app.core.config import config
from app.core.logger import log
from app.core.events import event_manager
from app.schemas.analysis import AnalysisConfig
from app.schemas.signal import PlaybackSpec
from app.services.decomposition import detection_limit


@event_manager.on_startup
async def startup_event(app: FastAPI):
    """
    应用启动事件
    校验配置中的分析参数与播放参数，配置无效时拒绝启动
    """
    analysis = config.section("analysis", AnalysisConfig).check()
    playback = config.section("playback", PlaybackSpec).check()
    app.state.analysis = analysis
    limit = detection_limit(playback.bit_depth, 0.9, analysis.carrier_hz)
    log.info(
        f"分析参数: N={analysis.window_n}, T={analysis.span:.3f} s, N_over={analysis.oversample}, "
        f"频带={analysis.band[0]:.0f}-{analysis.band[1]:.0f} Hz, j_LSB={limit * 1e12:.2f} ps"
    )
    log.info("Jitter service started")


@event_manager.on_shutdown
async def shutdown_event(app: FastAPI):
    """
    应用关闭事件
    """
    log.info("Jitter service stopped")
