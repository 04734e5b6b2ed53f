"""WAV ingestion and canonicalisation to 5 s / 16 kHz mono clips."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DecodeError, UnsupportedFormatError

SAMPLE_RATE = 16000
CLIP_SECONDS = 5.0
CLIP_SAMPLES = int(SAMPLE_RATE * CLIP_SECONDS)


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with nominal amplitude range [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError(f"AudioClip must be mono (1-d), got shape {s.shape}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(s)):
            raise ValueError("AudioClip samples must be finite")
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class Segment:
    start_sample: int
    end_sample: int

    def __post_init__(self):
        if not 0 <= self.start_sample < self.end_sample:
            raise ValueError(f"invalid segment [{self.start_sample}, {self.end_sample})")

    def __len__(self) -> int:
        return self.end_sample - self.start_sample


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 2.0**15
    if data.dtype == np.int32:
        # 24-bit PCM is delivered left-justified in int32, so one scale fits both
        return data.astype(np.float64) / 2.0**31
    if data.dtype == np.float32 or data.dtype == np.float64:
        return data.astype(np.float64)
    raise UnsupportedFormatError(f"unsupported sample type {data.dtype}")


def read_wav(path) -> AudioClip:
    """Read a PCM (8/16/24/32-bit int) or float32 WAV file as a mono clip."""
    path = Path(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "bit depth" in msg.lower():
            raise UnsupportedFormatError(f"{path}: {msg}") from exc
        raise DecodeError(f"{path}: {msg}") from exc
    except Exception as exc:  # scipy raises assorted errors for truncated headers
        raise DecodeError(f"{path}: {exc}") from exc
    x = _pcm_to_float(np.asarray(data))
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioClip(np.nan_to_num(x), int(rate))


def write_wav(path, clip: AudioClip, bits: int = 16) -> None:
    """Write a clip as 16-bit PCM (or 32-bit float with ``bits=32``)."""
    x = np.clip(clip.samples, -1.0, 1.0 - 2.0**-15)
    if bits == 16:
        data = np.round(x * 2.0**15).astype(np.int16)
    elif bits == 32:
        data = clip.samples.astype(np.float32)
    else:
        raise ValueError(f"unsupported bit depth {bits}")
    wavfile.write(Path(path), clip.sample_rate_hz, data)


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Band-limited (Kaiser windowed-sinc polyphase) sample-rate conversion.

    Output length is ``round(len * target / source)``.
    """
    if target_rate_hz <= 0:
        raise ValueError(f"target rate must be positive, got {target_rate_hz}")
    src = clip.sample_rate_hz
    if target_rate_hz == src:
        return AudioClip(clip.samples.copy(), src)
    n_out = int(round(len(clip) * target_rate_hz / src))
    y = resample_ratio(clip.samples, Fraction(target_rate_hz, src), n_out)
    return AudioClip(y, target_rate_hz)


def resample_ratio(x: np.ndarray, ratio: Fraction, n_out: int) -> np.ndarray:
    """Resample ``x`` by ``ratio`` (= up/down) and fix the length to ``n_out``."""
    if len(x) == 0:
        return np.zeros(n_out)
    y = resample_poly(x, ratio.numerator, ratio.denominator)
    if len(y) >= n_out:
        return y[:n_out]
    return np.pad(y, (0, n_out - len(y)))


def frame_rms_db(x: np.ndarray, frame_len: int) -> np.ndarray:
    """RMS level (dBFS) per non-overlapping frame; the last frame is zero-padded."""
    n_frames = -(-len(x) // frame_len)
    padded = np.zeros(n_frames * frame_len)
    padded[: len(x)] = x
    rms = np.sqrt(np.mean(padded.reshape(n_frames, frame_len) ** 2, axis=1))
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(rms)


def rms_db(x: np.ndarray) -> float:
    if len(x) == 0:
        return -np.inf
    rms = float(np.sqrt(np.mean(np.square(x))))
    return 20.0 * np.log10(rms) if rms > 0 else -np.inf


def remove_silence(clip: AudioClip, frame_len: int = 400, energy_threshold_db: float = -40.0) -> list[Segment]:
    """Maximal runs of frames at or above ``energy_threshold_db``.

    Each run is trimmed to its first and last non-zero sample, so trailing
    zero padding of the clip never changes the result.
    """
    if frame_len < 1:
        raise ValueError(f"frame_len must be >= 1, got {frame_len}")
    x = clip.samples
    if len(x) == 0:
        return []
    loud = frame_rms_db(x, frame_len) >= energy_threshold_db
    segments = []
    edges = np.flatnonzero(np.diff(np.concatenate([[0], loud.astype(np.int8), [0]])))
    for f0, f1 in zip(edges[::2], edges[1::2]):
        lo, hi = f0 * frame_len, min(f1 * frame_len, len(x))
        nz = np.flatnonzero(x[lo:hi])
        segments.append(Segment(lo + int(nz[0]), lo + int(nz[-1]) + 1))
    return segments


def cut(clip: AudioClip, segment: Segment) -> AudioClip:
    return AudioClip(clip.samples[segment.start_sample : segment.end_sample], clip.sample_rate_hz)


def join(clips: list[AudioClip]) -> AudioClip:
    if not clips:
        raise ValueError("nothing to join")
    rate = clips[0].sample_rate_hz
    return AudioClip(np.concatenate([c.samples for c in clips]), rate)


def tile_to_length(x: np.ndarray, n: int) -> np.ndarray:
    if len(x) == 0:
        raise ValueError("cannot tile an empty signal")
    reps = -(-n // len(x))
    return np.tile(x, reps)[:n]


def fit_to_duration(
    segments: list[AudioClip], target_seconds: float = CLIP_SECONDS, rate: int = SAMPLE_RATE
) -> list[AudioClip]:
    """Split long inputs into consecutive chunks and tile short ones.

    A remainder of at least half the target length is tiled up to a full
    chunk; shorter remainders are dropped.
    """
    target = int(round(target_seconds * rate))
    out = []
    for seg in segments:
        x = seg.samples
        if len(x) == 0:
            raise ValueError("fit_to_duration needs non-empty inputs")
        if len(x) <= target:
            out.append(AudioClip(tile_to_length(x, target), rate))
            continue
        n_full, rem = divmod(len(x), target)
        for i in range(n_full):
            out.append(AudioClip(x[i * target : (i + 1) * target].copy(), rate))
        if rem and 2 * rem >= target:
            out.append(AudioClip(tile_to_length(x[n_full * target :], target), rate))
    return out


def canonicalize(clip: AudioClip, frame_len: int = 400, energy_threshold_db: float = -40.0) -> list[AudioClip]:
    """Resample to 16 kHz, drop silent stretches, and cut into 5 s clips."""
    clip = resample(clip, SAMPLE_RATE)
    segments = remove_silence(clip, frame_len, energy_threshold_db)
    if not segments:
        return []
    return fit_to_duration([join([cut(clip, s) for s in segments])])
