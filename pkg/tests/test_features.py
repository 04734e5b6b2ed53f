import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crydet.audio_io import AudioClip
from crydet.features import (
    LOG_FLOOR,
    LogMelSpectrogram,
    frame_signal,
    hann_window,
    hz_to_mel,
    log_mel,
    mel_filterbank,
    mel_to_hz,
    read_spectrogram,
    write_spectrogram,
)


def triangle_oracle(f, lo, mid, hi):
    if lo < f <= mid:
        return (f - lo) / (mid - lo)
    if mid < f < hi:
        return (hi - f) / (hi - mid)
    return 0.0


def log_mel_oracle(x, fb):
    """Frame-by-frame loop with an explicit DFT power spectrum."""
    n_fft, hop = 512, 400
    k = np.arange(n_fft)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * k / n_fft)
    cols = []
    for start in range(0, len(x) - n_fft + 1, hop):
        spec = np.fft.fft(x[start : start + n_fft] * w)[: n_fft // 2 + 1]
        cols.append(fb.weights @ (np.abs(spec) ** 2))
    return np.log(np.maximum(np.array(cols).T, 1e-10))


class TestHann:
    def test_small(self):
        assert hann_window(1).tolist() == [0.0]
        np.testing.assert_allclose(hann_window(4), [0, 0.5, 1.0, 0.5], atol=1e-15)

    def test_midpoint(self):
        assert hann_window(512)[256] == 1.0

    def test_zero_length(self):
        with pytest.raises(ValueError):
            hann_window(0)


class TestFraming:
    def test_counts(self):
        assert frame_signal(np.zeros(80000)).shape == (199, 512)
        assert frame_signal(np.zeros(512)).shape == (1, 512)

    def test_ones_give_window(self):
        frames = frame_signal(np.ones(2000))
        assert np.array_equal(frames, np.tile(hann_window(512), (len(frames), 1)))

    def test_short_input(self):
        with pytest.raises(ValueError):
            frame_signal(np.zeros(511))

    @given(st.integers(512, 20000))
    def test_frame_count_formula(self, n):
        assert len(frame_signal(np.zeros(n))) == (n - 512) // 400 + 1


class TestFilterbank:
    fb = mel_filterbank()

    def test_shape_and_edges(self):
        assert self.fb.weights.shape == (128, 257)
        assert len(self.fb.band_edges_hz) == 130
        assert self.fb.band_edges_hz[0] == pytest.approx(0.0, abs=1e-9)
        assert self.fb.band_edges_hz[-1] == pytest.approx(8000.0)

    def test_mel_formula(self):
        assert hz_to_mel(700.0) == pytest.approx(2595 * math.log10(2))
        assert hz_to_mel(700.0) == pytest.approx(781.17, abs=0.01)
        np.testing.assert_allclose(mel_to_hz(hz_to_mel([0, 440, 8000])), [0, 440, 8000], atol=1e-9)

    def test_edges_equally_spaced_in_mel(self):
        d = np.diff(hz_to_mel(self.fb.band_edges_hz))
        np.testing.assert_allclose(d, d[0], rtol=1e-10)

    def test_matches_pointwise_oracle(self):
        e = self.fb.band_edges_hz
        bins = np.arange(257) * 16000 / 512
        for b in (0, 1, 40, 127):
            width = (e[b + 2] - e[b]) / 2
            expected = [triangle_oracle(f, e[b], e[b + 1], e[b + 2]) / width for f in bins]
            np.testing.assert_allclose(self.fb.weights[b], expected, atol=1e-15)

    def test_nonnegative_compact_support(self):
        w = self.fb.weights
        bins = np.arange(257) * 16000 / 512
        assert np.all(w >= 0) and np.all(np.isfinite(w))
        for b in range(128):
            nz = bins[w[b] > 0]
            if len(nz):
                assert nz.min() > self.fb.band_edges_hz[b] and nz.max() < self.fb.band_edges_hz[b + 2]

    def test_partition_of_unity(self):
        # undo the width scaling; adjacent triangles then sum to one between the first and last centres
        raw = self.fb.weights * self.fb.widths_hz[:, None]
        bins = np.arange(257) * 16000 / 512
        inside = (bins >= self.fb.centers_hz[0]) & (bins <= self.fb.centers_hz[-1])
        np.testing.assert_allclose(raw.sum(axis=0)[inside], 1.0, atol=1e-12)

    def test_rejects_above_nyquist(self):
        with pytest.raises(ValueError):
            mel_filterbank(f_max=9000)


class TestLogMel:
    def test_silence_hits_floor(self):
        spec = log_mel(AudioClip(np.zeros(80000), 16000))
        assert spec.shape == (128, 199)
        np.testing.assert_array_equal(spec.values, np.log(LOG_FLOOR))
        assert spec.values[0, 0] == pytest.approx(-23.02585, abs=1e-5)

    def test_against_loop_oracle(self, rng):
        x = rng.standard_normal(6000) * 0.1
        spec = log_mel(AudioClip(x, 16000))
        np.testing.assert_allclose(spec.values, log_mel_oracle(x, mel_filterbank()), rtol=1e-9, atol=1e-9)

    def test_tone_lands_in_nearest_band(self):
        x = np.sin(2 * np.pi * 1000 * np.arange(80000) / 16000)
        spec = log_mel(AudioClip(x, 16000))
        centers = mel_filterbank().centers_hz
        assert np.argmax(spec.values.mean(axis=1)) == np.argmin(np.abs(centers - 1000))

    def test_frame_rate(self):
        assert log_mel(AudioClip(np.zeros(1000), 16000)).frame_rate_hz == 40

    @given(st.floats(1.01, 20.0))
    def test_gain_shifts_log_energy(self, g):
        x = np.random.default_rng(5).standard_normal(3000) * 0.05
        a = log_mel(AudioClip(x, 16000)).values
        b = log_mel(AudioClip(g * x, 16000)).values
        above = a > np.log(LOG_FLOOR) + 1e-6
        np.testing.assert_allclose((b - a)[above], 2 * np.log(g), atol=1e-9)

    def test_dump_roundtrip(self, tmp_path, rng):
        spec = LogMelSpectrogram(rng.standard_normal((128, 199)).astype(np.float32).astype(np.float64))
        write_spectrogram(tmp_path / "s.bin", spec)
        raw = (tmp_path / "s.bin").read_bytes()
        assert raw[:8] == (128).to_bytes(4, "little") + (199).to_bytes(4, "little")
        assert len(raw) == 8 + 4 * 128 * 199
        np.testing.assert_array_equal(read_spectrogram(tmp_path / "s.bin").values, spec.values)

    def test_dump_rejects_truncation(self, tmp_path):
        (tmp_path / "t.bin").write_bytes((2).to_bytes(4, "little") + (3).to_bytes(4, "little") + b"\0" * 8)
        with pytest.raises(ValueError):
            read_spectrogram(tmp_path / "t.bin")
