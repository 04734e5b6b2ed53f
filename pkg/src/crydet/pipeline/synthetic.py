"""Synthetic separable audio: harmonic tone stacks ("cry") versus filtered noise ("non-cry")."""

from __future__ import annotations

import numpy as np
from scipy.signal import butter, sosfilt

from ..audio_io import CLIP_SAMPLES, SAMPLE_RATE, AudioClip
from .training import LabeledClip


def _normalize(x: np.ndarray, peak: float) -> np.ndarray:
    return x * (peak / max(float(np.max(np.abs(x))), 1e-12))


def tone_stack(rng: np.random.Generator, n: int = CLIP_SAMPLES, sr: int = SAMPLE_RATE) -> AudioClip:
    """Gliding fundamental (300-600 Hz) with decaying harmonics, gated into bursts."""
    t = np.arange(n) / sr
    f0 = rng.uniform(300.0, 600.0)
    glide = 1.0 + 0.15 * np.sin(2 * np.pi * rng.uniform(0.3, 1.0) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0 * glide) / sr
    n_harm = int(rng.integers(3, 7))
    x = sum((0.7 ** k) * np.sin((k + 1) * phase + rng.uniform(0, 2 * np.pi)) for k in range(n_harm))
    rate = rng.uniform(0.6, 1.2)
    gate = 0.55 + 0.45 * np.sign(np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
    x = x * gate + 0.01 * rng.standard_normal(n)
    return AudioClip(_normalize(x, rng.uniform(0.3, 0.9)), sr)


def filtered_noise(rng: np.random.Generator, n: int = CLIP_SAMPLES, sr: int = SAMPLE_RATE) -> AudioClip:
    """White noise through a random band-pass, with slow amplitude modulation."""
    lo = rng.uniform(50.0, 3000.0)
    hi = min(lo * rng.uniform(1.5, 6.0), 0.45 * sr)
    sos = butter(4, [lo, hi], btype="bandpass", fs=sr, output="sos")
    x = sosfilt(sos, rng.standard_normal(n))
    t = np.arange(n) / sr
    x = x * (1.0 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.1, 2.0) * t))
    return AudioClip(_normalize(x, rng.uniform(0.3, 0.9)), sr)


def synthetic_dataset(n: int, seed: int = 0) -> list[LabeledClip]:
    """``n`` clips, alternating cry / non-cry."""
    rng = np.random.default_rng(seed)
    items = []
    for i in range(n):
        if i % 2 == 0:
            items.append(LabeledClip(tone_stack(rng), 1, f"tone{i}"))
        else:
            items.append(LabeledClip(filtered_noise(rng), 0, f"noise{i}"))
    return items


def noise_pool(n: int = 8, seed: int = 1, seconds: float = 8.0) -> list[AudioClip]:
    rng = np.random.default_rng(seed)
    return [filtered_noise(rng, int(seconds * SAMPLE_RATE)) for _ in range(n)]
