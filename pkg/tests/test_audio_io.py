import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crydet.audio_io import (
    CLIP_SAMPLES,
    AudioClip,
    Segment,
    canonicalize,
    fit_to_duration,
    read_wav,
    remove_silence,
    resample,
    write_wav,
)
from crydet.errors import DecodeError, UnsupportedFormatError


def peak_hz(clip: AudioClip) -> float:
    spec = np.abs(np.fft.rfft(clip.samples))
    return np.argmax(spec) * clip.sample_rate_hz / len(clip)


def sine(freq, rate, n, amp=0.5):
    return AudioClip(amp * np.sin(2 * np.pi * freq * np.arange(n) / rate), rate)


class TestAudioClip:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            AudioClip(np.array([0.0, np.nan]), 16000)

    def test_rejects_multichannel(self):
        with pytest.raises(ValueError):
            AudioClip(np.zeros((10, 2)), 16000)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            AudioClip(np.zeros(10), 0)

    def test_segment_bounds(self):
        with pytest.raises(ValueError):
            Segment(5, 5)
        with pytest.raises(ValueError):
            Segment(-1, 3)


class TestReadWav:
    def test_int16_full_scale(self, write_pcm):
        clip = read_wav(write_pcm("a.wav", np.array([32767, -32768, 0])))
        assert clip.samples[0] == 32767 / 32768
        assert clip.samples[1] == -1.0
        assert clip.sample_rate_hz == 16000

    def test_all_zero(self, write_pcm):
        clip = read_wav(write_pcm("z.wav", np.zeros(160, dtype=int)))
        assert len(clip) == 160 and not np.any(clip.samples)

    def test_stereo_is_averaged(self, write_pcm):
        frames = np.tile(np.array([[0.2, 0.4]], dtype=np.float32), (50, 1))
        clip = read_wav(write_pcm("s.wav", frames, bits=32, fmt=3))
        np.testing.assert_allclose(clip.samples, 0.3, rtol=1e-7)

    @pytest.mark.parametrize(
        "bits,value,expected",
        [(8, 255, 127 / 128), (8, 0, -1.0), (24, 2**23 - 1, (2**23 - 1) / 2**23), (32, -(2**31), -1.0)],
    )
    def test_integer_depths(self, write_pcm, bits, value, expected):
        clip = read_wav(write_pcm(f"d{bits}.wav", np.array([value, value]), bits=bits))
        assert clip.samples[0] == pytest.approx(expected, abs=1e-12)

    def test_malformed_header(self, tmp_path):
        p = tmp_path / "bad.wav"
        p.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(DecodeError):
            read_wav(p)

    def test_unsupported_encoding(self, write_pcm, tmp_path):
        data = bytearray(write_pcm("x.wav", np.zeros(8, dtype=int)).read_bytes())
        data[20:22] = (85).to_bytes(2, "little")  # MPEG layer 3 format tag
        p = tmp_path / "mp3.wav"
        p.write_bytes(bytes(data))
        with pytest.raises(UnsupportedFormatError):
            read_wav(p)

    def test_write_read_roundtrip(self, tmp_path, rng):
        clip = AudioClip(rng.uniform(-0.9, 0.9, 1000), 16000)
        write_wav(tmp_path / "r.wav", clip)
        back = read_wav(tmp_path / "r.wav")
        np.testing.assert_allclose(back.samples, clip.samples, atol=1 / 2**15)


class TestResample:
    def test_identity_is_bit_identical(self, rng):
        clip = AudioClip(rng.standard_normal(1000) * 0.1, 16000)
        out = resample(clip, 16000)
        assert np.array_equal(out.samples, clip.samples)

    def test_length(self):
        assert len(resample(AudioClip(np.zeros(80000), 32000), 16000)) == 40000

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(ValueError):
            resample(AudioClip(np.zeros(10), 16000), 0)

    def test_peak_frequency_preserved(self):
        src = sine(440, 32000, 32000)
        out = resample(src, 16000)
        bin_hz = 16000 / len(out)
        assert abs(peak_hz(out) - 440) <= bin_hz
        assert abs(peak_hz(src) - 440) <= 32000 / len(src)

    @given(st.integers(200, 3000), st.sampled_from([8000, 11025, 16000]))
    def test_round_trip_peak(self, freq, rate):
        freq = min(freq, rate // 2 - 200)
        clip = sine(freq, rate, rate // 2)
        back = resample(resample(clip, 2 * rate), rate)
        assert abs(peak_hz(back) - peak_hz(clip)) <= rate / len(clip)

    @given(st.integers(1, 5000), st.sampled_from([8000, 22050, 44100, 48000]))
    def test_length_formula(self, n, src):
        out = resample(AudioClip(np.zeros(n), src), 16000)
        assert len(out) == round(n * 16000 / src)


class TestRemoveSilence:
    def test_all_zero(self):
        assert remove_silence(AudioClip(np.zeros(4000), 16000)) == []

    def test_empty_clip(self):
        assert remove_silence(AudioClip(np.zeros(0), 16000)) == []

    def test_constant(self):
        assert remove_silence(AudioClip(np.ones(4000), 16000)) == [Segment(0, 4000)]

    def test_burst(self):
        x = np.concatenate([np.zeros(4000), np.full(4000, 0.5), np.zeros(4000)])
        assert remove_silence(AudioClip(x, 16000), 400, -40.0) == [Segment(4000, 8000)]

    def test_two_bursts_sorted_disjoint(self):
        x = np.zeros(16000)
        x[800:2000] = 0.3
        x[8000:9600] = -0.3
        segs = remove_silence(AudioClip(x, 16000))
        assert segs == [Segment(800, 2000), Segment(8000, 9600)]

    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=3000), st.integers(1, 2000))
    def test_trailing_zeros_change_nothing(self, values, pad):
        x = np.array(values)
        a = remove_silence(AudioClip(x, 16000))
        b = remove_silence(AudioClip(np.concatenate([x, np.zeros(pad)]), 16000))
        assert a == b


class TestFitToDuration:
    def test_identity(self, rng):
        clip = AudioClip(rng.standard_normal(CLIP_SAMPLES) * 0.1, 16000)
        (out,) = fit_to_duration([clip])
        assert np.array_equal(out.samples, clip.samples)

    def test_split_with_tail(self):
        x = np.arange(200000, dtype=float) / 200000
        outs = fit_to_duration([AudioClip(x, 16000)])
        assert len(outs) == 3
        assert np.array_equal(outs[1].samples, x[80000:160000])
        tail = x[160000:]
        assert np.array_equal(outs[2].samples, np.concatenate([tail, tail]))

    def test_short_tail_dropped(self):
        assert len(fit_to_duration([AudioClip(np.ones(80000 + 39999), 16000)])) == 1

    def test_tiling(self):
        x = np.linspace(-1, 1, 32000)
        (out,) = fit_to_duration([AudioClip(x, 16000)])
        assert np.array_equal(out.samples[32000:64000], x)
        assert np.array_equal(out.samples[64000:], x[:16000])

    def test_empty_list(self):
        assert fit_to_duration([]) == []

    @given(st.lists(st.integers(1, 300000), min_size=1, max_size=4))
    def test_every_output_is_five_seconds(self, lengths):
        outs = fit_to_duration([AudioClip(np.ones(n), 16000) for n in lengths])
        assert all(len(o) == CLIP_SAMPLES for o in outs)


def test_canonicalize_drops_silence():
    x = np.zeros(48000 * 3)
    x[48000:96000] = 0.5 * np.sin(np.arange(48000) / 5)
    outs = canonicalize(AudioClip(x, 48000))
    assert len(outs) == 1 and len(outs[0]) == CLIP_SAMPLES
    assert canonicalize(AudioClip(np.zeros(16000), 16000)) == []
