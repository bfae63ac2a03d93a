from typing import Any, Dict, Optional

from fastapi import APIRouter, Body, Query
from pydantic import BaseModel, Field
from starlette.concurrency import run_in_threadpool

from app.api.deps import response_wrapper
from app.core.logger import log
from app.schemas.analysis import PS
from app.schemas.manifest import RunManifest
from app.schemas.response import ResponseModel
from app.services.decomposition import (
    decompose_statistics,
    detection_limit,
    split_player_jitter_pi,
    split_recorder_statistics,
)
from app.services.runner import cli_run

# 创建自动加载路由器
api_router = APIRouter(prefix="/jitter", tags=["抖动分析"])


def _seconds(value_ps: Optional[float]) -> Optional[float]:
    return None if value_ps is None else value_ps / PS


# 请求模型
class DrsRequest(BaseModel):
    """DRS统计量（ps）"""
    E1: float = Field(..., ge=0, description="dev{Δs}", examples=[56.0])
    E2: float = Field(..., ge=0, description="dev{Δr}", examples=[56.1])
    E3: float = Field(..., ge=0, description="dev{Δs-Δr}", examples=[50.6])
    E4: Optional[float] = Field(None, ge=0, description="dev{Δs+Δr}，用于一致性检查")


class PlayerSplitRequest(BaseModel):
    """普通DRS与L+R并联DRS的播放器ZCF RMS（ps）"""
    sigma_n2: float = Field(..., ge=0, examples=[43.1])
    sigma_n3: float = Field(..., ge=0, examples=[33.5])


class RecorderSplitRequest(BaseModel):
    """双声道录音机的统计量（ps）"""
    E5: float = Field(..., ge=0, description="dev{Δs_L}", examples=[63.7])
    E6: float = Field(..., ge=0, description="dev{Δs_R}", examples=[63.1])
    E7: float = Field(..., ge=0, description="dev{Δs_L-Δs_R}", examples=[61.9])
    E8: Optional[float] = Field(None, ge=0, description="dev{Δs_L+Δs_R}", examples=[110.6])
    sigma_n2: float = Field(..., ge=0, description="播放器ZCF RMS", examples=[43.1])


@api_router.post("/drs", response_model=ResponseModel[Dict[str, Any]], summary="DRS方差分解")
@response_wrapper
async def drs(request: DrsRequest = Body(..., description="E1..E4，单位ps")):
    """
    由E1..E3（可选E4）求播放器与两台录音机的ZCF RMS

    根号内为负时结果记为0，并在flags中标出。
    """
    budget = decompose_statistics(
        _seconds(request.E1), _seconds(request.E2), _seconds(request.E3), _seconds(request.E4)
    )
    log.info(f"DRS分解: σn={budget.sigma_n * PS:.1f} ps, valid={budget.valid}")
    return budget.to_report()


@api_router.post("/player-split", response_model=ResponseModel[Dict[str, Any]], summary="播放器抖动/PI分离")
@response_wrapper
async def player_split(request: PlayerSplitRequest = Body(..., description="σn2与σn3，单位ps")):
    """dev{j} = sqrt(2σn3² - σn2²)，dev{nPI}/(ωA_0) = sqrt(2(σn2² - σn3²))"""
    return split_player_jitter_pi(_seconds(request.sigma_n2), _seconds(request.sigma_n3)).to_report()


@api_router.post("/recorder-split", response_model=ResponseModel[Dict[str, Any]], summary="录音机抖动/PI分离")
@response_wrapper
async def recorder_split(request: RecorderSplitRequest = Body(..., description="E5..E8与σn2，单位ps")):
    result = split_recorder_statistics(
        _seconds(request.E5), _seconds(request.E6), _seconds(request.E7),
        _seconds(request.sigma_n2), e8=_seconds(request.E8),
    )
    return result.to_report()


@api_router.get("/detection-limit", response_model=ResponseModel[Dict[str, Any]], summary="量化检测下限")
@response_wrapper
async def get_detection_limit(
    bit_depth: int = Query(24, description="录音位深"),
    amplitude_ratio: float = Query(0.9, description="A_0/A_R"),
    carrier_hz: float = Query(12000.0, description="载波频率 Hz"),
):
    """j_LSB = 1 / (x_max · (A_0/A_R) · 2πf_C)"""
    limit = detection_limit(bit_depth, amplitude_ratio, carrier_hz)
    return {
        "bit_depth": bit_depth,
        "amplitude_ratio": amplitude_ratio,
        "carrier_hz": carrier_hz,
        "j_lsb_ps": round(limit * PS, 4),
    }


@api_router.post("/runs", response_model=ResponseModel[Dict[str, Any]], summary="执行运行清单")
@response_wrapper
async def run_manifest(manifest: RunManifest = Body(..., description="与CLI相同的运行清单")):
    """
    在线程池中执行一次运行（与CLI共用cli_run），返回退出码、产物与摘要
    """
    result = await run_in_threadpool(cli_run, manifest)
    if result.exit_code:
        return ResponseModel(code=result.error["code"], msg=result.error["message"], data=result.model_dump())
    return result.model_dump()
