"""Audio decoding and recording quality assurance.

Covers WAV decoding, channel averaging, DC bias removal, saturation /
dropout flagging, and wavelet suppression of noise transients.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np


class AudioFormatError(ValueError):
    """The file is not a supported linear-PCM container."""


class TruncatedFileError(ValueError):
    """The file ended before the expected payload; carries the byte offset."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (at byte offset {byte_offset})")
        self.byte_offset = byte_offset


@dataclass
class AudioClip:
    """Timestamped multi-channel PCM audio, samples in [-1, 1]."""

    samples: np.ndarray  # shape (n_channels, n_frames), float64
    sample_rate: int
    start_time: datetime = field(
        default_factory=lambda: datetime(1970, 1, 1, tzinfo=timezone.utc)
    )
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.shape[1] < 1:
            raise ValueError("clip must contain at least one sample per channel")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_frames(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.sample_rate

    def mono(self) -> np.ndarray:
        """First channel as a 1-D array; requires a mono clip."""
        if self.n_channels != 1:
            raise ValueError("clip is not mono; call average_channels first")
        return self.samples[0]

    def replace_samples(self, samples: np.ndarray) -> "AudioClip":
        return AudioClip(samples, self.sample_rate, self.start_time, self.source_id)


@dataclass(frozen=True)
class QAFlag:
    """A flagged interval (saturation run, dropout, bias, transient)."""

    kind: str  # "cutoff" | "bias" | "transient"
    start_s: float
    end_s: float
    magnitude: float
    source_id: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "start_s": self.start_s,
                "end_s": self.end_s,
                "magnitude": self.magnitude,
                "source_id": self.source_id,
            },
            sort_keys=True,
        )


# ---------------------------------------------------------------------------
# WAV decoding / encoding
# ---------------------------------------------------------------------------

def decode_wav(path) -> AudioClip:
    """Decode a RIFF/WAVE file with 16- or 24-bit LE PCM samples.

    Samples are scaled by the full-scale integer (32768 or 8388608) so the
    result lies in [-1, 1).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise TruncatedFileError("missing RIFF header", len(data))
    if data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body_start = pos + 8
        if body_start + size > len(data):
            raise TruncatedFileError(
                f"chunk {cid.decode('ascii', 'replace')} runs past end of file",
                len(data),
            )
        if cid == b"fmt ":
            if size < 16:
                raise TruncatedFileError("fmt chunk too short", body_start + size)
            fmt = struct.unpack_from("<HHIIHH", data, body_start)
        elif cid == b"data":
            payload = data[body_start:body_start + size]
        pos = body_start + size + (size & 1)

    if fmt is None:
        raise AudioFormatError(f"{path}: no fmt chunk")
    audio_format, n_channels, sample_rate, _, block_align, bits = fmt
    if audio_format != 1:
        raise AudioFormatError(
            f"{path}: unsupported codec (format tag {audio_format}); only linear PCM"
        )
    if bits not in (16, 24):
        raise AudioFormatError(f"{path}: unsupported bit depth {bits}")
    if payload is None or len(payload) == 0:
        raise TruncatedFileError("empty or missing data chunk", len(data))

    bytes_per_sample = bits // 8
    frame_bytes = bytes_per_sample * n_channels
    if len(payload) % frame_bytes:
        raise TruncatedFileError(
            "data chunk is not a whole number of frames",
            len(data) - (len(payload) % frame_bytes),
        )

    if bits == 16:
        raw = np.frombuffer(payload, dtype="<i2").astype(np.float64)
        scale = 32768.0
    else:
        b = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3)
        raw = (
            b[:, 0].astype(np.int32)
            | (b[:, 1].astype(np.int32) << 8)
            | (b[:, 2].astype(np.int32) << 16)
        )
        raw = np.where(raw >= 1 << 23, raw - (1 << 24), raw).astype(np.float64)
        scale = float(1 << 23)

    frames = raw.reshape(-1, n_channels).T / scale
    return AudioClip(frames, sample_rate, source_id=str(path))


def encode_wav(clip: AudioClip, path, bits: int = 16) -> None:
    """Write a clip as 16-bit PCM WAV (clipping to full scale)."""
    if bits != 16:
        raise AudioFormatError("only 16-bit output is supported")
    x = np.clip(clip.samples, -1.0, 1.0 - 1.0 / 32768)
    pcm = np.round(x * 32768.0).astype("<i2").T.reshape(-1)
    payload = pcm.tobytes()
    n_ch = clip.n_channels
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, n_ch, clip.sample_rate,
        clip.sample_rate * n_ch * 2, n_ch * 2, 16,
        b"data", len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


# ---------------------------------------------------------------------------
# QA operations
# ---------------------------------------------------------------------------

def average_channels(clip: AudioClip) -> AudioClip:
    """Collapse all channels into one by the per-sample arithmetic mean."""
    if clip.n_channels == 1:
        return clip.replace_samples(clip.samples.copy())
    return clip.replace_samples(clip.samples.mean(axis=0, keepdims=True))


def remove_dc_bias(clip: AudioClip) -> AudioClip:
    """Subtract each channel's mean so it is zero-centered."""
    return clip.replace_samples(
        clip.samples - clip.samples.mean(axis=1, keepdims=True)
    )


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, end) index runs where mask is True."""
    if not mask.any():
        return []
    d = np.diff(mask.astype(np.int8))
    starts = list(np.flatnonzero(d == 1) + 1)
    ends = list(np.flatnonzero(d == -1) + 1)
    if mask[0]:
        starts.insert(0, 0)
    if mask[-1]:
        ends.append(len(mask))
    return list(zip(starts, ends))


def detect_cutoffs(
    clip: AudioClip,
    saturation_threshold: float = 0.999,
    min_run: int | None = None,
) -> list[QAFlag]:
    """Flag saturation runs (|x| >= threshold) and exact-zero dropout runs.

    Every maximal run of at least min_run samples is reported, per channel,
    sorted by start time. min_run defaults to 10 ms of audio.
    """
    if not 0 < saturation_threshold <= 1:
        raise ValueError("saturation_threshold must be in (0, 1]")
    if min_run is None:
        min_run = max(1, clip.sample_rate // 100)
    if min_run < 1:
        raise ValueError("min_run must be >= 1")

    flags = []
    for ch in clip.samples:
        for mask in (np.abs(ch) >= saturation_threshold, ch == 0.0):
            for start, end in _runs(mask):
                if end - start >= min_run:
                    flags.append(
                        QAFlag(
                            kind="cutoff",
                            start_s=start / clip.sample_rate,
                            end_s=end / clip.sample_rate,
                            magnitude=float(np.abs(ch[start:end]).mean()),
                            source_id=clip.source_id,
                        )
                    )
    flags.sort(key=lambda f: (f.start_s, f.end_s))
    return flags


# ---------------------------------------------------------------------------
# Haar wavelet transient denoising
# ---------------------------------------------------------------------------

def _haar_decompose(x: np.ndarray, levels: int):
    """Multi-level orthonormal Haar DWT.

    Odd-length inputs carry their last sample into the approximation
    untouched, keeping the transform orthonormal and length-preserving.
    """
    approx = x
    details = []
    carries = []
    for _ in range(levels):
        if len(approx) % 2:
            carries.append(approx[-1])
            approx = approx[:-1]
        else:
            carries.append(None)
        even, odd = approx[0::2], approx[1::2]
        details.append((even - odd) / math.sqrt(2.0))
        approx = (even + odd) / math.sqrt(2.0)
    return approx, details, carries


def _haar_reconstruct(approx, details, carries) -> np.ndarray:
    for detail, carry in zip(reversed(details), reversed(carries)):
        n = 2 * len(detail)
        out = np.empty(n)
        out[0::2] = (approx + detail) / math.sqrt(2.0)
        out[1::2] = (approx - detail) / math.sqrt(2.0)
        if carry is not None:
            out = np.append(out, carry)
        approx = out
    return approx


def denoise_transients(
    clip: AudioClip, levels: int = 4, threshold_rule: str = "universal"
) -> AudioClip:
    """Suppress broadband transients by Haar soft-threshold denoising.

    Detail coefficients at every level are soft-thresholded with the
    universal threshold sigma * sqrt(2 ln N). Sigma is estimated per level
    from that level's median absolute deviation / 0.6745 (the
    level-dependent variant), so narrowband content with large coarse-scale
    coefficients does not shield broadband transients from thresholding.
    """
    if threshold_rule != "universal":
        raise ValueError(f"unknown threshold rule: {threshold_rule}")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if clip.n_frames < 2 ** levels:
        raise ValueError(
            f"clip length {clip.n_frames} shorter than 2^levels = {2 ** levels}"
        )

    out = np.empty_like(clip.samples)
    n = clip.n_frames
    for c, ch in enumerate(clip.samples):
        approx, details, carries = _haar_decompose(ch, levels)
        thresholded = []
        for d in details:
            mad = np.median(np.abs(d - np.median(d)))
            thr = mad / 0.6745 * math.sqrt(2.0 * math.log(n))
            thresholded.append(np.sign(d) * np.maximum(np.abs(d) - thr, 0.0))
        details = thresholded
        out[c] = _haar_reconstruct(approx, details, carries)
    return clip.replace_samples(out)


def export_flags_jsonl(flags: list[QAFlag], path) -> None:
    with open(path, "w") as fh:
        for flag in flags:
            fh.write(flag.to_json() + "\n")
