"""Band limiting, spectral whitening, and test-signal synthesis."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .audio import AudioClip


@dataclass(frozen=True)
class FilterSpec:
    low_cut_hz: float = 5000.0
    high_cut_hz: float = 20000.0
    order: int = 4
    kind: str = "butterworth_bandpass"

    def validate(self, sample_rate: int) -> None:
        nyquist = sample_rate / 2
        if not 0 < self.low_cut_hz < self.high_cut_hz:
            raise ValueError("need 0 < low_cut_hz < high_cut_hz")
        if self.high_cut_hz >= nyquist:
            raise ValueError(
                f"high cut {self.high_cut_hz} Hz at or above Nyquist {nyquist} Hz"
            )
        if self.kind != "butterworth_bandpass":
            raise ValueError(f"unsupported filter kind: {self.kind}")
        if self.order < 1:
            raise ValueError("order must be >= 1")


@dataclass
class WhiteningCurve:
    """Per-bin multiplicative gains over frequencies 0..Nyquist."""

    gains: np.ndarray
    bin_freqs_hz: np.ndarray

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=np.float64)
        self.bin_freqs_hz = np.asarray(self.bin_freqs_hz, dtype=np.float64)
        if self.gains.shape != self.bin_freqs_hz.shape:
            raise ValueError("gains and bin_freqs_hz must have equal length")
        if not (self.gains > 0).all():
            raise ValueError("gains must be strictly positive")

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["freq_hz", "gain"])
            for f, g in zip(self.bin_freqs_hz, self.gains):
                writer.writerow([repr(float(f)), repr(float(g))])

    @classmethod
    def load_csv(cls, path) -> "WhiteningCurve":
        freqs, gains = [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                freqs.append(float(row["freq_hz"]))
                gains.append(float(row["gain"]))
        return cls(np.array(gains), np.array(freqs))


def design_bandpass(spec: FilterSpec, sample_rate: int) -> np.ndarray:
    """Butterworth bandpass as second-order sections (-3 dB at the cut-offs)."""
    spec.validate(sample_rate)
    return sps.butter(
        spec.order,
        [spec.low_cut_hz, spec.high_cut_hz],
        btype="bandpass",
        fs=sample_rate,
        output="sos",
    )


def _check_stable(sos: np.ndarray) -> None:
    sos = np.asarray(sos, dtype=np.float64)
    if sos.ndim != 2 or sos.shape[1] != 6:
        raise ValueError("coefficients must be second-order sections (n, 6)")
    for section in sos:
        poles = np.roots(section[3:6])
        if np.any(np.abs(poles) >= 1.0):
            raise ValueError("unstable filter: pole on or outside the unit circle")


def apply_filter_zero_phase(clip: AudioClip, sos: np.ndarray) -> AudioClip:
    """Forward-backward filtering; zero group delay, same length as input."""
    _check_stable(sos)
    out = np.stack([sps.sosfiltfilt(sos, ch) for ch in clip.samples])
    return clip.replace_samples(out)


def estimate_whitening(
    clip: AudioClip,
    n_bins: int = 512,
    smoothing_bins: int = 9,
    floor: float = 0.01,
) -> WhiteningCurve:
    """Estimate a flattening curve from the clip's own average spectrum.

    gains = 1 / max(smoothed mean magnitude spectrum, floor * peak), with the
    mean gain over unclamped bins normalized to 1. Stands in for the
    hydrophone calibration curve when none is available.
    """
    x = clip.mono()
    frame_len = 2 * n_bins
    n_frames = len(x) // frame_len
    if n_frames < 8:
        raise ValueError(
            f"clip too short: {n_frames} frames of {frame_len} samples, need >= 8"
        )
    frames = x[: n_frames * frame_len].reshape(n_frames, frame_len)
    mag = np.abs(np.fft.rfft(frames, axis=1)).mean(axis=0)

    if smoothing_bins > 1:
        kernel = np.ones(smoothing_bins) / smoothing_bins
        pad = smoothing_bins // 2
        padded = np.pad(mag, pad, mode="edge")
        mag = np.convolve(padded, kernel, mode="valid")[: n_bins + 1]

    clamp = floor * mag.max()
    clamped = np.maximum(mag, clamp)
    gains = 1.0 / clamped
    live = mag > clamp
    norm = gains[live].mean() if live.any() else gains.mean()
    gains = gains / norm

    freqs = np.arange(n_bins + 1) * clip.sample_rate / frame_len
    return WhiteningCurve(gains, freqs)


def apply_whitening(clip: AudioClip, curve: WhiteningCurve) -> AudioClip:
    """Apply per-bin gains by windowed overlap-add frequency multiplication."""
    nyquist = clip.sample_rate / 2
    if curve.bin_freqs_hz[0] > 0 or curve.bin_freqs_hz[-1] < nyquist - 1e-9:
        raise ValueError("whitening curve must cover 0..Nyquist")

    frame_len = 2 * (len(curve.gains) - 1)
    hop = frame_len // 2
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(frame_len) / frame_len)

    out = np.empty_like(clip.samples)
    for c, ch in enumerate(clip.samples):
        n = len(ch)
        padded = np.concatenate([np.zeros(hop), ch, np.zeros(frame_len)])
        acc = np.zeros(len(padded))
        wsum = np.zeros(len(padded))
        for start in range(0, len(padded) - frame_len + 1, hop):
            frame = padded[start:start + frame_len] * window
            spec = np.fft.rfft(frame) * curve.gains
            acc[start:start + frame_len] += np.fft.irfft(spec, frame_len)
            wsum[start:start + frame_len] += window
        valid = wsum > 1e-12
        acc[valid] /= wsum[valid]
        out[c] = acc[hop:hop + n]
    return clip.replace_samples(out)


def synthesize(
    kind: str,
    duration_s: float,
    sample_rate: int = 96000,
    f0_hz: float = 0.0,
    f1_hz: float | None = None,
    amplitude: float = 1.0,
    seed: int = 0,
) -> AudioClip:
    """Deterministic test signals: sine, linear chirp, or white noise."""
    nyquist = sample_rate / 2
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate

    if kind == "sine":
        if f0_hz >= nyquist:
            raise ValueError("sine frequency at or above Nyquist")
        x = amplitude * np.sin(2 * np.pi * f0_hz * t)
    elif kind == "linear_chirp":
        f1 = f0_hz if f1_hz is None else f1_hz
        if max(f0_hz, f1) >= nyquist:
            raise ValueError("chirp frequency at or above Nyquist")
        # phase = 2*pi * (f0*t + (f1-f0)/(2*T) * t^2) so f(t) sweeps linearly
        rate = (f1 - f0_hz) / duration_s
        phase = 2 * np.pi * (f0_hz * t + 0.5 * rate * t * t)
        x = amplitude * np.sin(phase)
    elif kind == "white_noise":
        rng = np.random.default_rng(seed)
        x = amplitude * rng.standard_normal(n)
    else:
        raise ValueError(f"unknown signal kind: {kind}")

    return AudioClip(x[np.newaxis, :], sample_rate, source_id=f"synth:{kind}")
