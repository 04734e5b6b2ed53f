"""Waveform and spectrogram augmentation.

All randomness comes from an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.signal import convolve

from .audio_io import CLIP_SAMPLES, SAMPLE_RATE, AudioClip, read_wav, resample, resample_ratio, tile_to_length
from .features import LogMelSpectrogram

SPEED_RANGE = (0.8, 1.2)


@dataclass(frozen=True)
class NoiseMixSpec:
    snr_db: float
    noise_clip: AudioClip
    insert_offset: int


@dataclass(frozen=True)
class MaskSpec:
    axis: str  # "time" or "frequency"
    start: int
    width: int

    def __post_init__(self):
        if self.axis not in ("time", "frequency"):
            raise ValueError(f"mask axis must be 'time' or 'frequency', got {self.axis!r}")
        if self.start < 0 or self.width < 0:
            raise ValueError(f"mask start/width must be non-negative: {self}")


@dataclass(frozen=True)
class ImpulseResponse:
    taps: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64).reshape(-1)
        if taps.size == 0:
            raise ValueError("impulse response must have at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ValueError("impulse response taps must be finite")
        object.__setattr__(self, "taps", taps)

    @classmethod
    def from_wav(cls, path) -> "ImpulseResponse":
        clip = resample(read_wav(path), SAMPLE_RATE)
        return cls(clip.samples, SAMPLE_RATE)


# ---------------------------------------------------------------------------
# waveform augmentations
# ---------------------------------------------------------------------------


def refit(x: np.ndarray, n: int = CLIP_SAMPLES) -> np.ndarray:
    """Truncate or tile ``x`` to exactly ``n`` samples."""
    return x[:n].copy() if len(x) >= n else tile_to_length(x, n)


def speed_perturb(
    clip: AudioClip, factor: float | None = None, rng: np.random.Generator | None = None, refit_to: int | None = CLIP_SAMPLES
) -> AudioClip:
    """Play ``clip`` ``factor`` times faster by plain resampling (pitch moves with speed).

    ``factor`` is drawn uniformly from [0.8, 1.2] when omitted.  The
    resampled signal has ``round(L / factor)`` samples and is then refit to
    ``refit_to`` samples (pass None to keep the raw length).
    """
    if factor is None:
        if rng is None:
            raise ValueError("need either a factor or a random generator")
        factor = float(rng.uniform(*SPEED_RANGE))
    if not SPEED_RANGE[0] <= factor <= SPEED_RANGE[1]:
        raise ValueError(f"speed factor {factor} outside [{SPEED_RANGE[0]}, {SPEED_RANGE[1]}]")
    n_out = int(round(len(clip) / factor))
    if factor == 1.0:
        y = clip.samples.copy()
    else:
        y = resample_ratio(clip.samples, Fraction(1.0 / factor).limit_denominator(200), n_out)
    if refit_to is not None:
        y = refit(y, refit_to)
    return AudioClip(y, clip.sample_rate_hz)


def noise_gain(signal: np.ndarray, noise: np.ndarray, snr_db: float, power_db_gain: bool = False) -> float:
    """Scale for ``noise`` so that signal-to-scaled-noise energy is ``snr_db``.

    With ``power_db_gain`` the exponent uses /10 instead of /20, which
    realises twice the requested SNR in dB.
    """
    ns = float(np.linalg.norm(noise))
    if ns == 0.0:
        raise ValueError("noise has zero energy")
    xs = float(np.linalg.norm(signal))
    if xs == 0.0:
        raise ValueError("signal has zero energy")
    return (xs / ns) * 10.0 ** (-snr_db / (10.0 if power_db_gain else 20.0))


def mix_noise(signal: AudioClip, noise: AudioClip, snr_db: float, power_db_gain: bool = False) -> AudioClip:
    """``signal + a * noise`` with ``a`` chosen for the requested SNR."""
    if len(signal) != len(noise):
        raise ValueError(f"length mismatch: signal {len(signal)} vs noise {len(noise)}")
    if signal.sample_rate_hz != noise.sample_rate_hz:
        raise ValueError("signal and noise sample rates differ")
    a = noise_gain(signal.samples, noise.samples, snr_db, power_db_gain)
    return AudioClip(signal.samples + a * noise.samples, signal.sample_rate_hz)


def realized_snr_db(signal: np.ndarray, scaled_noise: np.ndarray) -> float:
    return 10.0 * np.log10(np.sum(np.square(signal)) / np.sum(np.square(scaled_noise)))


def add_reverb(clip: AudioClip, ir: ImpulseResponse) -> AudioClip:
    """Convolve with ``ir``, keep the first len(clip) samples, renormalise peaks above 1."""
    if clip.sample_rate_hz != ir.sample_rate_hz:
        raise ValueError(f"clip at {clip.sample_rate_hz} Hz but impulse response at {ir.sample_rate_hz} Hz")
    y = convolve(clip.samples, ir.taps, mode="full")[: len(clip)]
    peak = float(np.max(np.abs(y))) if len(y) else 0.0
    if peak > 1.0:
        y = y / peak
    return AudioClip(y, clip.sample_rate_hz)


# ---------------------------------------------------------------------------
# multi-noise scenes
# ---------------------------------------------------------------------------


def place_noise(noise: AudioClip, offset: int, length: int = CLIP_SAMPLES) -> np.ndarray:
    """``length`` samples of ``noise`` starting at ``offset``, wrapping around (tiling) if short."""
    x = noise.samples
    return x[(offset + np.arange(length)) % len(x)]


def plan_noisy_scene(
    length: int,
    noise_pool: Sequence[AudioClip],
    rng: np.random.Generator,
    snr_range: tuple[float, float] = (-20.0, 0.0),
    n_noises: tuple[int, int] = (2, 3),
) -> list[NoiseMixSpec]:
    """Draw the noise count, clips, SNRs and offsets for one scene.

    Zero-energy clips in the pool are never drawn.
    """
    if not noise_pool:
        raise ValueError("noise pool is empty")
    usable = [n for n in noise_pool if len(n) and np.any(n.samples != 0.0)]
    if not usable:
        raise ValueError("noise pool contains only silent clips")
    k = int(rng.integers(n_noises[0], n_noises[1] + 1))
    specs = []
    for _ in range(k):
        noise = usable[int(rng.integers(len(usable)))]
        snr = float(rng.uniform(*snr_range))
        span = len(noise) - length
        offset = int(rng.integers(span + 1)) if span >= 0 else int(rng.integers(len(noise)))
        specs.append(NoiseMixSpec(snr, noise, offset))
    return specs


def render_noisy_scene(
    signal: AudioClip, specs: Sequence[NoiseMixSpec], power_db_gain: bool = False
) -> tuple[AudioClip, list[np.ndarray]]:
    """Mix each planned noise against the clean signal; returns the mix and the scaled noises.

    A silent signal has no SNR reference, so its noises are added at their
    native level.
    """
    x = signal.samples
    silent = not np.any(x != 0.0)
    scaled = []
    for spec in specs:
        n = place_noise(spec.noise_clip, spec.insert_offset, len(x))
        a = 1.0 if silent else noise_gain(x, n, spec.snr_db, power_db_gain)
        scaled.append(a * n)
    y = x + np.sum(scaled, axis=0) if scaled else x.copy()
    return AudioClip(y, signal.sample_rate_hz), scaled


def compose_noisy_scene(
    signal: AudioClip,
    noise_pool: Sequence[AudioClip],
    rng: np.random.Generator,
    snr_range: tuple[float, float] = (-20.0, 0.0),
    n_noises: tuple[int, int] = (2, 3),
    power_db_gain: bool = False,
) -> AudioClip:
    """Corrupt ``signal`` with 2-3 noise segments, each at its own SNR in ``snr_range``."""
    specs = plan_noisy_scene(len(signal), noise_pool, rng, snr_range, n_noises)
    return render_noisy_scene(signal, specs, power_db_gain)[0]


# ---------------------------------------------------------------------------
# spectrogram masking
# ---------------------------------------------------------------------------


def spec_mask(
    spec: LogMelSpectrogram, masks: Sequence[MaskSpec], fill: float | None = None
) -> LogMelSpectrogram:
    """Set masked bands / frames to ``fill`` (default: the log floor, i.e. zero power)."""
    fill = spec.floor if fill is None else fill
    v = spec.values.copy()
    n_mels, n_frames = v.shape
    for m in masks:
        limit = n_frames if m.axis == "time" else n_mels
        if m.start + m.width > limit:
            raise ValueError(f"mask {m} exceeds {m.axis} axis of length {limit}")
        if m.axis == "time":
            v[:, m.start : m.start + m.width] = fill
        else:
            v[m.start : m.start + m.width, :] = fill
    return LogMelSpectrogram(v, spec.frame_rate_hz, spec.floor)


def random_masks(
    shape: tuple[int, int],
    rng: np.random.Generator,
    n_time: int = 2,
    max_time_width: int = 20,
    n_freq: int = 2,
    max_freq_width: int = 16,
) -> list[MaskSpec]:
    n_mels, n_frames = shape
    masks = []
    for axis, count, max_w, limit in (("time", n_time, max_time_width, n_frames), ("frequency", n_freq, max_freq_width, n_mels)):
        for _ in range(count):
            width = int(rng.integers(0, min(max_w, limit) + 1))
            start = int(rng.integers(0, limit - width + 1))
            masks.append(MaskSpec(axis, start, width))
    return masks


# ---------------------------------------------------------------------------
# policy
# ---------------------------------------------------------------------------


@dataclass
class AugmentPolicy:
    """Per-augmentation probabilities and ranges applied during training."""

    p_speed: float = 0.0
    speed_range: tuple[float, float] = SPEED_RANGE
    p_reverb: float = 0.0
    p_noise: float = 0.0
    noise_snr_range: tuple[float, float] = (0.0, 20.0)
    p_scene: float = 0.0
    scene_snr_range: tuple[float, float] = (-20.0, 0.0)
    scene_noises: tuple[int, int] = (2, 3)
    p_mask: float = 0.0
    n_time_masks: int = 2
    max_time_width: int = 20
    n_freq_masks: int = 2
    max_freq_width: int = 16
    power_db_gain: bool = False

    @property
    def needs_waveform(self) -> bool:
        return any(p > 0 for p in (self.p_speed, self.p_reverb, self.p_noise, self.p_scene))

    @property
    def active(self) -> bool:
        return self.needs_waveform or self.p_mask > 0


@dataclass
class AugmentResources:
    noise_pool: list[AudioClip] = field(default_factory=list)
    impulse_responses: list[ImpulseResponse] = field(default_factory=list)


def augment_waveform(
    clip: AudioClip, policy: AugmentPolicy, rng: np.random.Generator, resources: AugmentResources
) -> AudioClip:
    """Speed perturbation, reverberation, then additive noise, each with its own probability."""
    length = len(clip)
    if policy.p_speed > 0 and rng.random() < policy.p_speed:
        lo, hi = policy.speed_range
        clip = speed_perturb(clip, float(rng.uniform(lo, hi)), refit_to=length)
    if policy.p_reverb > 0 and resources.impulse_responses and rng.random() < policy.p_reverb:
        ir = resources.impulse_responses[int(rng.integers(len(resources.impulse_responses)))]
        clip = add_reverb(clip, ir)
    if policy.p_noise > 0 and resources.noise_pool and rng.random() < policy.p_noise and np.any(clip.samples):
        specs = plan_noisy_scene(length, resources.noise_pool, rng, policy.noise_snr_range, (1, 1))
        clip = render_noisy_scene(clip, specs, policy.power_db_gain)[0]
    if policy.p_scene > 0 and resources.noise_pool and rng.random() < policy.p_scene:
        clip = compose_noisy_scene(
            clip, resources.noise_pool, rng, policy.scene_snr_range, policy.scene_noises, policy.power_db_gain
        )
    return clip


def augment_spectrogram(spec: LogMelSpectrogram, policy: AugmentPolicy, rng: np.random.Generator) -> LogMelSpectrogram:
    if policy.p_mask > 0 and rng.random() < policy.p_mask:
        masks = random_masks(
            spec.shape, rng, policy.n_time_masks, policy.max_time_width, policy.n_freq_masks, policy.max_freq_width
        )
        return spec_mask(spec, masks)
    return spec
