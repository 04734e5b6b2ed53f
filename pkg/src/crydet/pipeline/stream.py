"""Sliding-window cry detection gated by window energy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..audio_io import CLIP_SAMPLES, SAMPLE_RATE, AudioClip, fit_to_duration, rms_db
from ..features import log_mel
from ..model import CryDetector, model_forward

WINDOW = CLIP_SAMPLES
HOP = CLIP_SAMPLES // 2


@dataclass(frozen=True)
class Detection:
    start_sample: int
    probability: float
    invoked: bool

    @property
    def start_s(self) -> float:
        return self.start_sample / SAMPLE_RATE


def window_starts(n: int, window: int = WINDOW, hop: int = HOP) -> list[int]:
    if n <= window:
        return [0]
    return list(range(0, n - window + 1, hop))


def detect_stream(
    stream: AudioClip, model: CryDetector, energy_threshold_db: float = -40.0, window: int = WINDOW, hop: int = HOP
) -> list[Detection]:
    """Chronological probabilities for each window; quiet windows score 0 without running the model."""
    if stream.sample_rate_hz != SAMPLE_RATE:
        raise ValueError(f"stream must be {SAMPLE_RATE} Hz, got {stream.sample_rate_hz}")
    x = stream.samples
    if len(x) == 0:
        raise ValueError("empty stream")
    out = []
    for start in window_starts(len(x), window, hop):
        seg = x[start : start + window]
        if rms_db(seg) < energy_threshold_db:
            out.append(Detection(start, 0.0, False))
            continue
        if len(seg) < window:
            seg = fit_to_duration([AudioClip(seg, SAMPLE_RATE)], window / SAMPLE_RATE)[0].samples
        p = model_forward(log_mel(AudioClip(seg, SAMPLE_RATE)), model)
        out.append(Detection(start, p, True))
    return out


def invocations(detections: list[Detection]) -> int:
    return sum(d.invoked for d in detections)
