"""Log-Mel spectrogram front end (512-point Hann frames, hop 400, 128 bands)."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import SAMPLE_RATE, AudioClip

N_FFT = 512
HOP = 400
N_MELS = 128
LOG_FLOOR = 1e-10


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window ``0.5 * (1 - cos(2 pi k / n))``."""
    if n < 1:
        raise ValueError(f"window length must be >= 1, got {n}")
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / n))


def frame_signal(x, win: int = N_FFT, hop: int = HOP) -> np.ndarray:
    """Hann-windowed frames (n_frames x win), no padding."""
    x = x.samples if isinstance(x, AudioClip) else np.asarray(x, dtype=np.float64)
    if len(x) < win:
        raise ValueError(f"signal of {len(x)} samples is shorter than the {win}-sample window")
    n_frames = (len(x) - win) // hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop][:n_frames]
    return frames * hann_window(win)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # n_mels x (n_fft // 2 + 1)
    band_edges_hz: np.ndarray  # n_mels + 2

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]

    @property
    def centers_hz(self) -> np.ndarray:
        return self.band_edges_hz[1:-1]

    @property
    def widths_hz(self) -> np.ndarray:
        """Half the base of each triangle, the area-normalisation divisor."""
        e = self.band_edges_hz
        return (e[2:] - e[:-2]) / 2.0


def mel_filterbank(
    n_mels: int = N_MELS, n_fft: int = N_FFT, sr: int = SAMPLE_RATE, f_min: float = 0.0, f_max: float | None = None
) -> MelFilterbank:
    """Triangular mel filters, each divided by its band width in Hz."""
    f_max = sr / 2.0 if f_max is None else f_max
    if n_mels < 1:
        raise ValueError(f"n_mels must be >= 1, got {n_mels}")
    if f_max > sr / 2.0:
        raise ValueError(f"f_max {f_max} Hz exceeds the Nyquist frequency {sr / 2.0} Hz")
    if not 0 <= f_min < f_max:
        raise ValueError(f"need 0 <= f_min < f_max, got {f_min}, {f_max}")
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    bins = np.arange(n_fft // 2 + 1) * sr / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lo) / (mid - lo)
    falling = (hi - bins[None, :]) / (hi - mid)
    tri = np.maximum(0.0, np.minimum(rising, falling))
    weights = tri / ((edges[2:] - edges[:-2]) / 2.0)[:, None]
    return MelFilterbank(weights, edges)


@dataclass(frozen=True)
class LogMelSpectrogram:
    values: np.ndarray  # n_mels x n_frames, natural-log power
    frame_rate_hz: float = SAMPLE_RATE / HOP
    floor: float = float(np.log(LOG_FLOOR))

    @property
    def n_mels(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


_DEFAULT_FB: MelFilterbank | None = None


def default_filterbank() -> MelFilterbank:
    global _DEFAULT_FB
    if _DEFAULT_FB is None:
        _DEFAULT_FB = mel_filterbank()
    return _DEFAULT_FB


def power_spectrum(frames: np.ndarray) -> np.ndarray:
    spec = np.fft.rfft(frames, axis=-1)
    return spec.real**2 + spec.imag**2


def log_mel(clip, fb: MelFilterbank | None = None) -> LogMelSpectrogram:
    """Frames -> |rFFT|^2 -> mel projection -> ln(max(., 1e-10))."""
    fb = default_filterbank() if fb is None else fb
    if isinstance(clip, AudioClip) and clip.sample_rate_hz != SAMPLE_RATE:
        raise ValueError(f"log_mel expects {SAMPLE_RATE} Hz audio, got {clip.sample_rate_hz} Hz")
    frames = frame_signal(clip, (fb.weights.shape[1] - 1) * 2, HOP)
    mel = fb.weights @ power_spectrum(frames).T
    return LogMelSpectrogram(np.log(np.maximum(mel, LOG_FLOOR)))


def write_spectrogram(path, spec: LogMelSpectrogram) -> None:
    """Binary dump: two little-endian int32 (n_mels, n_frames), then row-major float32."""
    v = np.ascontiguousarray(spec.values, dtype="<f4")
    Path(path).write_bytes(struct.pack("<ii", *v.shape) + v.tobytes())


def read_spectrogram(path) -> LogMelSpectrogram:
    buf = Path(path).read_bytes()
    n_mels, n_frames = struct.unpack_from("<ii", buf)
    expected = 8 + 4 * n_mels * n_frames
    if n_mels < 1 or n_frames < 1 or len(buf) != expected:
        raise ValueError(f"{path}: size {len(buf)} does not match header {n_mels} x {n_frames}")
    v = np.frombuffer(buf, dtype="<f4", offset=8).reshape(n_mels, n_frames)
    return LogMelSpectrogram(v.astype(np.float64))
