import struct

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def pcm_wav_bytes(frames: np.ndarray, rate: int, bits: int, fmt: int = 1) -> bytes:
    """Hand-rolled RIFF/WAVE writer, independent of any audio library."""
    frames = np.asarray(frames)
    if frames.ndim == 1:
        frames = frames[:, None]
    channels = frames.shape[1]
    if fmt == 3:
        payload = frames.astype("<f4").tobytes()
    elif bits == 8:
        payload = frames.astype(np.uint8).tobytes()
    elif bits == 16:
        payload = frames.astype("<i2").tobytes()
    elif bits == 24:
        raw = frames.astype("<i4").reshape(-1)
        payload = b"".join(struct.pack("<i", int(v))[:3] for v in raw)
    elif bits == 32:
        payload = frames.astype("<i4").tobytes()
    else:
        raise ValueError(bits)
    block = channels * bits // 8
    fmt_chunk = struct.pack("<HHIIHH", fmt, channels, rate, rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


@pytest.fixture
def write_pcm(tmp_path):
    def _write(name, frames, rate=16000, bits=16, fmt=1):
        path = tmp_path / name
        path.write_bytes(pcm_wav_bytes(frames, rate, bits, fmt))
        return path

    return _write


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(name: str, passed: bool, detail: str) -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
