"""
报告与CSV输出

所有输出不含时间戳等运行相关信息，同一清单（含种子）重复运行得到逐字节相同的文件。
"""
import json
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from app.core.errors import WavFormatError
from app.core.logger import log
from app.schemas.analysis import ZeroCrossingSeries
from app.schemas.signal import NoiseTraces

PathLike = Union[str, Path]
PS = 1e12

TRUTH_HEADER = "time_s,j_s,a_m_fs,n_pi_fs,a_total_fs"


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: PathLike, data: Dict[str, Any]) -> Path:
    path = _prepare(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2, ensure_ascii=False, sort_keys=True)
        f.write("\n")
    log.debug(f"写出报告 {path}")
    return path


def write_zcf_csv(path: PathLike, series: ZeroCrossingSeries) -> Path:
    """k, s_k, s'_k, Δs_k(ps), 方向"""
    path = _prepare(path)
    parity = np.where(series.signs() > 0, 1, -1)
    table = np.column_stack([series.indices, series.s, series.s_prime, series.delta * PS, parity])
    np.savetxt(
        path, table, delimiter=",", comments="",
        header="k,s_k_s,s_prime_k_s,delta_ps,direction",
        fmt=["%d", "%.12f", "%.12f", "%.3f", "%d"],
    )
    return path


def zcf_histogram(series: ZeroCrossingSeries, bin_ps: float = 5.0) -> Tuple[np.ndarray, np.ndarray]:
    """ZCF直方图，分箱宽度bin_ps，范围关于0对称"""
    values = series.delta * PS
    edge = bin_ps * (np.ceil(np.max(np.abs(values)) / bin_ps) + 1) if values.size else bin_ps
    edges = np.arange(-edge, edge + bin_ps / 2, bin_ps)
    counts, edges = np.histogram(values, bins=edges)
    return counts, edges


def write_histogram_csv(path: PathLike, series: ZeroCrossingSeries, bin_ps: float = 5.0) -> Path:
    path = _prepare(path)
    counts, edges = zcf_histogram(series, bin_ps)
    table = np.column_stack([edges[:-1], edges[1:], counts])
    np.savetxt(path, table, delimiter=",", comments="", header="lower_ps,upper_ps,count", fmt=["%.1f", "%.1f", "%d"])
    return path


def write_truth_csv(path: PathLike, traces: NoiseTraces) -> Path:
    """真值噪声轨迹，首行注释记录采样率与起始时刻"""
    path = _prepare(path)
    table = np.column_stack([traces.times(), traces.j, traces.a_m, traces.n_pi, traces.a_total])
    header = f"# sample_rate={traces.sample_rate!r} start_time={traces.start_time!r}\n{TRUTH_HEADER}"
    np.savetxt(path, table, delimiter=",", comments="", header=header, fmt="%.15e")
    return path


def read_truth_csv(path: PathLike) -> NoiseTraces:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        meta_line = f.readline().strip()
        header = f.readline().strip()
    if not meta_line.startswith("#") or header != TRUTH_HEADER:
        raise WavFormatError("真值CSV头部格式错误", offset=0, detail={"path": str(path)})
    meta = dict(item.split("=", 1) for item in meta_line.lstrip("# ").split())
    table = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    return NoiseTraces(
        j=table[:, 1], a_m=table[:, 2], n_pi=table[:, 3], a_total=table[:, 4],
        sample_rate=float(meta["sample_rate"]),
        start_time=float(meta["start_time"]),
    )


def write_psd_csv(path: PathLike, freqs: np.ndarray, density_db: np.ndarray) -> Path:
    path = _prepare(path)
    np.savetxt(
        path, np.column_stack([freqs, density_db]), delimiter=",", comments="",
        header="frequency_hz,psd_dbfs_per_hz", fmt=["%.4f", "%.3f"],
    )
    return path


def write_trace_csv(path: PathLike, times: np.ndarray, jitter: np.ndarray) -> Path:
    """HTA抖动轨迹（ps）"""
    path = _prepare(path)
    np.savetxt(
        path, np.column_stack([times, jitter * PS]), delimiter=",", comments="",
        header="time_s,jitter_ps", fmt=["%.12f", "%.3f"],
    )
    return path


def correlation(x: np.ndarray, y: np.ndarray) -> float:
    """皮尔逊相关系数，任一方差为0时返回0"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2 or np.std(x) == 0 or np.std(y) == 0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])
