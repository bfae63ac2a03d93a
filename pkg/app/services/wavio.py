"""
WAV（RIFF/WAVE PCM）读写

支持16/24位整数PCM与格式标签为PCM的WAVE_FORMAT_EXTENSIBLE；
未知块跳过（含奇数长度块的填充字节）。24位采样为3字节小端补码，按声道交织。
"""
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np

from app.core.errors import NotFoundError, WavFormatError
from app.core.logger import log
from app.schemas.manifest import WavFile
from app.schemas.signal import SampleBuffer

PathLike = Union[str, Path]

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_EXTENSIBLE = 0xFFFE
# KSDATAFORMAT_SUBTYPE_PCM 的GUID
PCM_SUBFORMAT = b"\x01\x00\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"

_CHUNK_HEADER = struct.Struct("<4sI")
_FMT = struct.Struct("<HHIIHH")


def _decode(payload: bytes, bit_depth: int, channels: int) -> np.ndarray:
    """小端补码字节 -> (frames, channels) 整数数组"""
    width = bit_depth // 8
    if bit_depth == 16:
        flat = np.frombuffer(payload, dtype="<i2").astype(np.int64)
    else:
        raw = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3).astype(np.int64)
        flat = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        # 符号扩展
        flat = np.where(flat & 0x800000, flat - (1 << 24), flat)
    frames = len(payload) // (width * channels)
    return flat[:frames * channels].reshape(frames, channels)


def _encode(frames: np.ndarray, bit_depth: int) -> bytes:
    """(frames, channels) 整数数组 -> 小端补码字节"""
    flat = frames.reshape(-1)
    if bit_depth == 16:
        return flat.astype("<i2").tobytes()
    unsigned = (flat & 0xFFFFFF).astype(np.uint32)
    packed = np.empty((flat.size, 3), dtype=np.uint8)
    packed[:, 0] = unsigned & 0xFF
    packed[:, 1] = (unsigned >> 8) & 0xFF
    packed[:, 2] = (unsigned >> 16) & 0xFF
    return packed.tobytes()


def _parse_fmt(body: bytes, offset: int) -> Dict[str, int]:
    if len(body) < _FMT.size:
        raise WavFormatError("fmt块过短", offset=offset, detail={"size": len(body)})
    tag, channels, rate, byte_rate, block_align, bits = _FMT.unpack_from(body)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise WavFormatError("EXTENSIBLE格式的fmt块过短", offset=offset, detail={"size": len(body)})
        if body[24:40] != PCM_SUBFORMAT:
            raise WavFormatError("EXTENSIBLE子格式不是PCM", offset=offset + 8 + 24)
    elif tag != WAVE_FORMAT_PCM:
        raise WavFormatError(f"不支持的格式标签: 0x{tag:04x}", offset=offset + 8, detail={"format_tag": tag})
    if bits not in (16, 24):
        raise WavFormatError(f"不支持的位深: {bits}", offset=offset + 8 + 14, detail={"bit_depth": bits})
    if channels < 1:
        raise WavFormatError("声道数为0", offset=offset + 8 + 2)
    if block_align != channels * bits // 8 or byte_rate != rate * block_align:
        raise WavFormatError(
            "fmt块的block_align/byte_rate与位深不一致",
            offset=offset + 8,
            detail={"block_align": block_align, "byte_rate": byte_rate},
        )
    return {"channels": channels, "sample_rate": rate, "bit_depth": bits, "block_align": block_align}


def read_wav(path: PathLike) -> WavFile:
    """
    解析WAV文件，返回按声道分开的整数采样

    错误信息中的offset为出错位置的字节偏移。
    """
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"文件不存在: {path}")
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("不是RIFF/WAVE文件", offset=0)
    riff_size = struct.unpack_from("<I", data, 4)[0]
    end = min(len(data), 8 + riff_size)

    fmt = None
    payload = None
    offset = 12
    while offset + _CHUNK_HEADER.size <= end:
        chunk_id, size = _CHUNK_HEADER.unpack_from(data, offset)
        body_start = offset + _CHUNK_HEADER.size
        if chunk_id == b"fmt ":
            fmt = _parse_fmt(data[body_start:body_start + size], offset)
        elif chunk_id == b"data":
            if fmt is None:
                raise WavFormatError("data块出现在fmt块之前", offset=offset)
            available = len(data) - body_start
            if size > available:
                raise WavFormatError(
                    f"data块被截断: 期望{size}字节，实际{available}字节",
                    offset=offset,
                    detail={"expected": size, "actual": available},
                )
            if size % fmt["block_align"]:
                raise WavFormatError(
                    "data块长度不是整帧",
                    offset=offset,
                    detail={"size": size, "block_align": fmt["block_align"]},
                )
            payload = data[body_start:body_start + size]
            break
        else:
            log.debug(f"跳过块 {chunk_id!r} ({size} 字节) @ {offset}")
        # 奇数长度的块后有1字节填充
        offset = body_start + size + (size & 1)

    if fmt is None:
        raise WavFormatError("缺少fmt块", offset=offset)
    if payload is None:
        raise WavFormatError("缺少data块", offset=offset)

    frames = _decode(payload, fmt["bit_depth"], fmt["channels"])
    log.debug(f"读取WAV {path}: {fmt['channels']}声道, {fmt['sample_rate']} Hz, {fmt['bit_depth']}位, {frames.shape[0]}帧")
    return WavFile(
        sample_rate=fmt["sample_rate"],
        bit_depth=fmt["bit_depth"],
        frames=[frames[:, c] for c in range(fmt["channels"])],
    )


def wav_bytes(wav: WavFile) -> bytes:
    """序列化为PCM WAV字节"""
    interleaved = np.column_stack(wav.frames) if wav.channels > 1 else wav.frames[0].reshape(-1, 1)
    payload = _encode(interleaved, wav.bit_depth)
    block_align = wav.channels * wav.bit_depth // 8
    fmt_body = _FMT.pack(
        WAVE_FORMAT_PCM,
        wav.channels,
        wav.sample_rate,
        wav.sample_rate * block_align,
        block_align,
        wav.bit_depth,
    )
    chunks = (
        _CHUNK_HEADER.pack(b"fmt ", len(fmt_body)) + fmt_body
        + _CHUNK_HEADER.pack(b"data", len(payload)) + payload
        + (b"\x00" if len(payload) & 1 else b"")
    )
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def write_wav(path: PathLike, wav: Union[WavFile, SampleBuffer]) -> Path:
    """写出PCM WAV，SampleBuffer按单声道写出"""
    if isinstance(wav, SampleBuffer):
        wav = WavFile.from_buffers(wav)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(wav_bytes(wav))
    log.debug(f"写出WAV {path}: {wav.channels}声道, {wav.frame_count}帧")
    return path


def pseudo_mono(wav: WavFile) -> SampleBuffer:
    """
    伪单声道录音机：L与R取平均

    以L+R保存（位深加1），不做除法。
    """
    if wav.channels < 2:
        raise WavFormatError("伪单声道需要至少2个声道", detail={"channels": wav.channels})
    summed = wav.frames[0] + wav.frames[1]
    return SampleBuffer(
        samples=summed,
        bit_depth=wav.bit_depth + 1,
        sample_rate=wav.sample_rate,
        start_time=wav.start_time,
    )
