import struct

import numpy as np
import pytest

from app.core.errors import NotFoundError, WavFormatError
from app.schemas.manifest import WavFile
from app.services.wavio import PCM_SUBFORMAT, WAVE_FORMAT_EXTENSIBLE, pseudo_mono, read_wav, wav_bytes, write_wav


def _riff(*chunks: bytes) -> bytes:
    body = b"WAVE" + b"".join(chunks)
    return b"RIFF" + struct.pack("<I", len(body)) + body


def _chunk(chunk_id: bytes, body: bytes) -> bytes:
    return chunk_id + struct.pack("<I", len(body)) + body + (b"\x00" if len(body) & 1 else b"")


def _fmt(tag=1, channels=1, rate=48000, bits=24) -> bytes:
    align = channels * bits // 8
    return struct.pack("<HHIIHH", tag, channels, rate, rate * align, align, bits)


def _pcm24(values) -> bytes:
    return b"".join(int(v).to_bytes(3, "little", signed=True) for v in values)


def test_stereo_24_bit_round_trip(tmp_path):
    left = np.array([0, 1, -1, 8388607, -8388608, 12345])
    right = -left[::-1] - 1
    path = write_wav(tmp_path / "stereo.wav", WavFile(sample_rate=192000, bit_depth=24, frames=[left, right]))
    wav = read_wav(path)
    assert wav.channels == 2
    assert wav.sample_rate == 192000
    np.testing.assert_array_equal(wav.frames[0], left)
    np.testing.assert_array_equal(wav.frames[1], right)


def test_16_bit_mono(tmp_path):
    samples = np.array([-32768, 0, 32767])
    wav = read_wav(write_wav(tmp_path / "a.wav", WavFile(sample_rate=48000, bit_depth=16, frames=[samples])))
    np.testing.assert_array_equal(wav.frames[0], samples)


def test_unknown_chunks_are_skipped(tmp_path):
    data = _riff(_chunk(b"fmt ", _fmt()), _chunk(b"LIST", b"abc"), _chunk(b"data", _pcm24([5, -5])))
    path = tmp_path / "extra.wav"
    path.write_bytes(data)
    np.testing.assert_array_equal(read_wav(path).frames[0], [5, -5])


def test_extensible_pcm(tmp_path):
    ext = _fmt(tag=WAVE_FORMAT_EXTENSIBLE) + struct.pack("<HHI", 22, 24, 4) + PCM_SUBFORMAT
    path = tmp_path / "ext.wav"
    path.write_bytes(_riff(_chunk(b"fmt ", ext), _chunk(b"data", _pcm24([7, -8, 9]))))
    np.testing.assert_array_equal(read_wav(path).frames[0], [7, -8, 9])


def test_truncated_data_reports_sizes(tmp_path):
    path = tmp_path / "short.wav"
    full = wav_bytes(WavFile(sample_rate=48000, bit_depth=24, frames=[np.arange(10)]))
    path.write_bytes(full[:-6])
    with pytest.raises(WavFormatError) as info:
        read_wav(path)
    assert info.value.error_detail["expected"] == 30
    assert info.value.error_detail["actual"] == 24
    assert info.value.offset == 36


def test_unsupported_format_tag(tmp_path):
    path = tmp_path / "float.wav"
    path.write_bytes(_riff(_chunk(b"fmt ", _fmt(tag=3)), _chunk(b"data", b"")))
    with pytest.raises(WavFormatError) as info:
        read_wav(path)
    assert info.value.error_detail["format_tag"] == 3
    assert info.value.offset == 20


def test_not_a_wav(tmp_path):
    path = tmp_path / "noise.bin"
    path.write_bytes(b"not a riff file")
    with pytest.raises(WavFormatError):
        read_wav(path)
    with pytest.raises(NotFoundError):
        read_wav(tmp_path / "missing.wav")


def test_pseudo_mono_keeps_full_precision():
    wav = WavFile(sample_rate=192000, bit_depth=24, frames=[np.array([1, 2]), np.array([3, 4])])
    mono = pseudo_mono(wav)
    np.testing.assert_array_equal(mono.samples, [4, 6])
    assert mono.bit_depth == 25
    with pytest.raises(WavFormatError):
        pseudo_mono(WavFile(sample_rate=192000, frames=[np.array([1])]))
