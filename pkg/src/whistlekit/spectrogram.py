"""Spectrogram construction and model-input image rendering.

Defaults mirror the acquisition pipeline: 2048-point periodic Blackman
window, hop = floor(0.8 * window), 3-20 kHz crop, grayscale 224x224 images.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image

from .audio import AudioClip

DEFAULT_WINDOW_LEN = 2048
DEFAULT_IMAGE_SIZE = 224


@dataclass(frozen=True)
class SpectrogramParams:
    window_len: int = DEFAULT_WINDOW_LEN
    hop: int | None = None  # default floor(0.8 * window_len)
    window_kind: str = "blackman"

    @property
    def hop_samples(self) -> int:
        return int(0.8 * self.window_len) if self.hop is None else self.hop


@dataclass
class Spectrogram:
    """Power over time frames x frequency bins, with axis metadata."""

    power: np.ndarray  # [n_frames, n_bins]
    time_axis_s: np.ndarray  # frame-center times
    freq_axis_khz: np.ndarray  # bin centers, strictly increasing
    params: SpectrogramParams
    sample_rate: int
    units: str = "linear"  # "linear" | "db"

    @property
    def n_frames(self) -> int:
        return self.power.shape[0]

    @property
    def n_bins(self) -> int:
        return self.power.shape[1]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_s\\f_khz"] + [repr(float(f)) for f in self.freq_axis_khz])
            for t, row in zip(self.time_axis_s, self.power):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])


@dataclass
class SpectroImage:
    """224x224x3 grayscale model input in [0, 1], all channels identical."""

    pixels: np.ndarray  # [H, W, 3] float32
    start_s: float = 0.0
    end_s: float = 0.0
    source_id: str = ""


def blackman_window(n: int, periodic: bool = True) -> np.ndarray:
    """Blackman taper with the classic 0.42 / 0.5 / 0.08 coefficients."""
    if n < 2:
        raise ValueError("window length must be >= 2")
    denom = n if periodic else n - 1
    k = np.arange(n)
    return (
        0.42
        - 0.5 * np.cos(2 * np.pi * k / denom)
        + 0.08 * np.cos(4 * np.pi * k / denom)
    )


def _window(params: SpectrogramParams) -> np.ndarray:
    if params.window_kind == "blackman":
        return blackman_window(params.window_len, periodic=True)
    if params.window_kind == "rectangular":
        return np.ones(params.window_len)
    raise ValueError(f"unknown window kind: {params.window_kind}")


def stft(clip: AudioClip, params: SpectrogramParams = SpectrogramParams()) -> Spectrogram:
    """Linear power spectrogram; frame f covers samples [f*hop, f*hop+window)."""
    x = clip.mono()
    win_len, hop = params.window_len, params.hop_samples
    if len(x) < win_len:
        raise ValueError(f"clip length {len(x)} shorter than window {win_len}")

    n_frames = 1 + (len(x) - win_len) // hop
    window = _window(params)
    starts = np.arange(n_frames) * hop
    frames = np.stack([x[s:s + win_len] for s in starts]) * window
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2

    time_axis = (starts + win_len / 2) / clip.sample_rate
    freq_axis_khz = np.arange(win_len // 2 + 1) * clip.sample_rate / win_len / 1000.0
    return Spectrogram(power, time_axis, freq_axis_khz, params, clip.sample_rate)


def power_to_db(spec: Spectrogram, floor_db: float = -120.0) -> Spectrogram:
    """10*log10(power), clamped below at floor_db (zero power maps to it)."""
    if spec.units != "linear":
        raise ValueError("spectrogram is already in dB")
    if (spec.power < 0).any():
        raise ValueError("power values must be non-negative")
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(spec.power)
    db = np.maximum(db, floor_db)
    return replace(spec, power=db, units="db")


def crop_frequency(spec: Spectrogram, lo_khz: float = 3.0, hi_khz: float = 20.0) -> Spectrogram:
    """Keep bins with lo <= f <= hi (kHz)."""
    if lo_khz >= hi_khz:
        raise ValueError("need lo_khz < hi_khz")
    keep = (spec.freq_axis_khz >= lo_khz) & (spec.freq_axis_khz <= hi_khz)
    if not keep.any():
        raise ValueError("frequency crop leaves no bins")
    return replace(spec, power=spec.power[:, keep], freq_axis_khz=spec.freq_axis_khz[keep])


def bilinear_resize(matrix: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with corner-aligned sample points."""
    in_h, in_w = matrix.shape
    m = np.asarray(matrix, dtype=np.float64)

    def coords(n_in, n_out):
        if n_out == 1 or n_in == 1:
            return np.zeros(n_out)
        return np.arange(n_out) * (n_in - 1) / (n_out - 1)

    ys, xs = coords(in_h, out_h), coords(in_w, out_w)
    y0 = np.clip(np.floor(ys).astype(int), 0, in_h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]

    top = m[np.ix_(y0, x0)] * (1 - wx) + m[np.ix_(y0, x1)] * wx
    bottom = m[np.ix_(y1, x0)] * (1 - wx) + m[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def render_to_image(spec: Spectrogram, size: int = DEFAULT_IMAGE_SIZE) -> SpectroImage:
    """Min-max normalize a dB spectrogram into a grayscale image tensor.

    dB values map to integer levels 0..255 (a constant matrix maps to all
    zeros), the matrix is oriented frequency-up / time-right, bilinearly
    resized, divided by 255, and replicated across 3 identical channels.
    """
    if spec.units != "db":
        raise ValueError("render_to_image expects a dB spectrogram")
    m = spec.power
    lo, hi = m.min(), m.max()
    if hi > lo:
        levels = np.round((m - lo) / (hi - lo) * 255.0)
    else:
        levels = np.zeros_like(m)

    # rows become frequency (descending top-to-bottom), columns time
    oriented = levels.T[::-1, :]
    resized = bilinear_resize(oriented, size, size) / 255.0
    pixels = np.repeat(resized[:, :, np.newaxis], 3, axis=2).astype(np.float32)
    t0 = float(spec.time_axis_s[0]) if spec.n_frames else 0.0
    t1 = float(spec.time_axis_s[-1]) if spec.n_frames else 0.0
    return SpectroImage(pixels, start_s=t0, end_s=t1)


def save_png(spec: Spectrogram, path) -> None:
    """8-bit grayscale PNG of a dB spectrogram (frequency up, time right)."""
    if spec.units != "db":
        raise ValueError("save_png expects a dB spectrogram")
    m = spec.power
    lo, hi = m.min(), m.max()
    levels = np.round((m - lo) / (hi - lo) * 255.0) if hi > lo else np.zeros_like(m)
    Image.fromarray(levels.T[::-1, :].astype(np.uint8), mode="L").save(path)


def slide_windows(
    clip: AudioClip, window_dur_s: float = 0.8, shift_s: float = 0.4
) -> list[tuple[AudioClip, float]]:
    """Fixed-length analysis segments at regular shifts, fully inside the clip."""
    win = int(round(window_dur_s * clip.sample_rate))
    shift = int(round(shift_s * clip.sample_rate))
    if shift < 1 or win < 1:
        raise ValueError("window and shift must be positive")
    if clip.n_frames < win:
        return []
    out = []
    for start in range(0, clip.n_frames - win + 1, shift):
        seg = clip.replace_samples(clip.samples[:, start:start + win])
        out.append((seg, start / clip.sample_rate))
    return out
