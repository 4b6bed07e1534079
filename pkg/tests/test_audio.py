import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from whistlekit.audio import (
    AudioClip, AudioFormatError, TruncatedFileError, average_channels,
    decode_wav, denoise_transients, detect_cutoffs, encode_wav,
    remove_dc_bias,
)
from whistlekit.dsp import synthesize


def make_clip(*channels, rate=96000):
    return AudioClip(np.array(channels, dtype=np.float64), rate)


class TestDecodeWav:
    def test_header_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        clip = AudioClip(rng.uniform(-0.5, 0.5, (2, 96000)), 96000)
        path = tmp_path / "x.wav"
        encode_wav(clip, path)
        back = decode_wav(path)
        assert back.n_channels == 2
        assert back.n_frames == 96000
        assert back.sample_rate == 96000
        # 16-bit quantization: within half an LSB
        assert np.abs(back.samples - clip.samples).max() <= 0.5 / 32768

    def test_full_scale_division(self, tmp_path):
        import struct
        payload = struct.pack("<100h", *([32767] * 100))
        header = struct.pack(
            "<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(payload), b"WAVE",
            b"fmt ", 16, 1, 1, 96000, 96000 * 2, 2, 16, b"data", len(payload))
        path = tmp_path / "fs.wav"
        path.write_bytes(header + payload)
        clip = decode_wav(path)
        assert np.allclose(clip.samples, 32767 / 32768)

    def test_24_bit(self, tmp_path):
        import struct
        # one frame at positive full scale, one at negative full scale
        payload = b"\xff\xff\x7f" + b"\x00\x00\x80"
        header = struct.pack(
            "<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(payload), b"WAVE",
            b"fmt ", 16, 1, 1, 96000, 96000 * 3, 3, 24, b"data", len(payload))
        path = tmp_path / "f24.wav"
        path.write_bytes(header + payload)
        clip = decode_wav(path)
        assert clip.samples[0, 0] == pytest.approx((2 ** 23 - 1) / 2 ** 23)
        assert clip.samples[0, 1] == -1.0

    def test_zero_length_payload(self, tmp_path):
        import struct
        header = struct.pack(
            "<4sI4s4sIHHIIHH4sI", b"RIFF", 36, b"WAVE",
            b"fmt ", 16, 1, 1, 96000, 96000 * 2, 2, 16, b"data", 0)
        path = tmp_path / "empty.wav"
        path.write_bytes(header)
        with pytest.raises(TruncatedFileError) as err:
            decode_wav(path)
        assert err.value.byte_offset == len(header)

    def test_unsupported_codec(self, tmp_path):
        import struct
        payload = b"\x00\x00"
        header = struct.pack(
            "<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + 2, b"WAVE",
            b"fmt ", 16, 3, 1, 96000, 96000 * 2, 2, 16, b"data", 2)
        path = tmp_path / "float.wav"
        path.write_bytes(header + payload)
        with pytest.raises(AudioFormatError):
            decode_wav(path)

    def test_truncated_file_names_offset(self, tmp_path):
        path = tmp_path / "trunc.wav"
        path.write_bytes(b"RIFF\x00\x00")
        with pytest.raises(TruncatedFileError):
            decode_wav(path)


class TestAverageChannels:
    def test_symmetric_cancellation(self):
        clip = make_clip([1, 1, 1], [-1, -1, -1])
        assert np.array_equal(average_channels(clip).samples, [[0, 0, 0]])

    def test_arithmetic_mean(self):
        clip = make_clip([0.2, 0.4], [0.6, 0.0])
        assert np.allclose(average_channels(clip).samples, [[0.4, 0.2]])

    def test_mono_identity(self):
        clip = make_clip([0.1, -0.3, 0.5])
        out = average_channels(clip)
        assert np.array_equal(out.samples, clip.samples)

    def test_idempotent_on_mono(self):
        clip = make_clip([0.1, 0.2, 0.3], [0.4, 0.2, 0.0])
        once = average_channels(clip)
        twice = average_channels(once)
        assert np.array_equal(once.samples, twice.samples)


class TestRemoveDcBias:
    def test_mean_subtraction(self):
        out = remove_dc_bias(make_clip([1.1, 0.9, 1.0]))
        assert np.allclose(out.samples, [[0.1, -0.1, 0.0]])

    def test_zero_signal(self):
        out = remove_dc_bias(make_clip([0.0, 0.0, 0.0]))
        assert np.array_equal(out.samples, [[0, 0, 0]])

    def test_sine_plus_offset(self):
        sine = synthesize("sine", 0.1, 48000, f0_hz=480, amplitude=0.5)
        shifted = sine.replace_samples(sine.samples + 0.25)
        out = remove_dc_bias(shifted)
        # a whole number of periods, so only the offset is removed
        assert np.abs(out.samples - sine.samples).max() < 1e-12
        assert abs(out.samples.mean()) < 1e-12

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        clip = make_clip(rng.uniform(-1, 1, 500) + 0.3)
        once = remove_dc_bias(clip)
        twice = remove_dc_bias(once)
        peak = np.abs(once.samples).max()
        assert np.abs(once.samples - twice.samples).max() <= 1e-12 * max(peak, 1)


def naive_cutoff_oracle(x, threshold, min_run, rate):
    """Per-sample O(N) scan for qualifying runs."""
    intervals = []
    for predicate in (lambda v: abs(v) >= threshold, lambda v: v == 0.0):
        start = None
        for i, v in enumerate(list(x) + [None]):
            hit = v is not None and predicate(v)
            if hit and start is None:
                start = i
            elif not hit and start is not None:
                if i - start >= min_run:
                    intervals.append((start / rate, i / rate))
                start = None
    return sorted(intervals)


class TestDetectCutoffs:
    def test_clean_sine(self):
        clip = synthesize("sine", 0.5, 96000, f0_hz=1000, amplitude=0.5)
        assert detect_cutoffs(clip, 0.99) == []

    def test_single_saturated_run(self):
        x = np.sin(2 * np.pi * 50 * np.arange(5000) / 96000) * 0.5
        x[1000:1500] = 1.0
        clip = make_clip(x)
        flags = detect_cutoffs(clip, 0.999, min_run=100)
        assert len(flags) == 1
        assert flags[0].start_s == pytest.approx(1000 / 96000)
        assert flags[0].end_s == pytest.approx(1500 / 96000)
        assert flags[0].kind == "cutoff"

    def test_two_runs_ordered(self):
        x = np.full(5000, 0.5)
        x[500:800] = -1.0
        x[3000:3400] = 1.0
        flags = detect_cutoffs(make_clip(x), 0.999, min_run=100)
        assert len(flags) == 2
        assert flags[0].start_s < flags[1].start_s

    @given(st.lists(st.sampled_from([0.0, 0.3, -0.5, 1.0, -1.0, 0.9995]),
                    min_size=1, max_size=300),
           st.integers(min_value=1, max_value=10))
    @settings(max_examples=100, deadline=None)
    def test_matches_naive_oracle(self, values, min_run):
        x = np.array(values)
        clip = AudioClip(x[np.newaxis, :], 1000)
        got = [(f.start_s, f.end_s) for f in detect_cutoffs(clip, 0.999, min_run)]
        assert sorted(got) == naive_cutoff_oracle(x, 0.999, min_run, 1000)


class TestDenoiseTransients:
    def test_zero_signal(self):
        clip = make_clip(np.zeros(1024))
        out = denoise_transients(clip, levels=4)
        assert np.array_equal(out.samples, clip.samples)

    def test_spike_suppressed_sine_preserved(self):
        fs = 48000
        sine = synthesize("sine", 1.0, fs, f0_hz=400, amplitude=5.0)
        x = sine.mono().copy()
        x[fs // 2] += 1.0
        out = denoise_transients(sine.replace_samples(x[np.newaxis, :]), levels=4)
        base = denoise_transients(sine, levels=4)
        spike_residual = np.abs(out.mono() - base.mono())[fs // 2 - 64:fs // 2 + 64].max()
        assert spike_residual <= 0.1  # >= 90% of the unit spike removed
        rms_in = np.sqrt((sine.mono() ** 2).mean())
        rms_out = np.sqrt((out.mono() ** 2).mean())
        assert abs(rms_out - rms_in) / rms_in <= 0.1

    def test_energy_never_increases(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(64, 400))
            x = rng.standard_normal(n)
            out = denoise_transients(make_clip(x, rate=1000), levels=3).mono()
            assert (out ** 2).sum() <= (x ** 2).sum() + 1e-9

    def test_length_preserved_odd(self):
        x = np.random.default_rng(3).standard_normal(1001)
        out = denoise_transients(make_clip(x, rate=1000), levels=4)
        assert out.n_frames == 1001

    def test_too_short_raises(self):
        with pytest.raises(ValueError):
            denoise_transients(make_clip(np.ones(7)), levels=3)
