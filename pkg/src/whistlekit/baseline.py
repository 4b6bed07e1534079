"""Algorithmic whistle detector: noise removal, thresholding, region linking.

A configurable stand-in for the classic connected-region whistle detectors:
a noise-removal chain flattens the spectrogram, cells above a dB threshold
are grouped into connected regions, and nearby regions are linked into
detection events.
"""
from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .spectrogram import Spectrogram

DEFAULT_NOISE_CHAIN = (
    "median_subtract_per_bin",
    "moving_average_smooth",
    "spectral_mean_normalize",
)


@dataclass(frozen=True)
class DetectorParams:
    noise_removal: tuple = DEFAULT_NOISE_CHAIN
    threshold_db: float = 8.0
    connectivity: int = 8
    min_region_cells: int = 20
    max_gap_frames: int = 2
    max_gap_bins: int = 3
    min_duration_s: float = 0.14
    max_duration_s: float = 0.78
    median_window_frames: int = 31

    def __post_init__(self):
        if self.threshold_db <= 0:
            raise ValueError("threshold_db must be > 0")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.max_gap_frames < 0 or self.max_gap_bins < 0:
            raise ValueError("gaps must be >= 0")


@dataclass(frozen=True)
class DetectionEvent:
    start_s: float
    end_s: float
    f_lo_khz: float
    f_hi_khz: float
    score: float  # mean above-threshold dB over region cells
    n_cells: int
    source_id: str = ""

    def to_dict(self) -> dict:
        return {
            "start_s": self.start_s, "end_s": self.end_s,
            "f_lo_khz": self.f_lo_khz, "f_hi_khz": self.f_hi_khz,
            "score": self.score, "n_cells": self.n_cells,
            "source_id": self.source_id,
        }


# ---------------------------------------------------------------------------
# Noise removal chain
# ---------------------------------------------------------------------------

def _median_subtract_per_bin(power: np.ndarray, window_frames: int) -> np.ndarray:
    """Subtract, per frequency bin, a running median over trailing frames."""
    n_frames = power.shape[0]
    out = np.empty_like(power)
    for f in range(n_frames):
        lo = max(0, f - window_frames + 1)
        out[f] = power[f] - np.median(power[lo:f + 1], axis=0)
    return out


def _moving_average_smooth(power: np.ndarray) -> np.ndarray:
    """3x3 box smoothing with zero padding outside the matrix."""
    padded = np.pad(power, 1, mode="constant")
    out = np.zeros_like(power)
    for di in range(3):
        for dj in range(3):
            out += padded[di:di + power.shape[0], dj:dj + power.shape[1]]
    return out / 9.0


def _spectral_mean_normalize(power: np.ndarray) -> np.ndarray:
    return power - power.mean(axis=1, keepdims=True)


def remove_noise(spec: Spectrogram, noise_removal=DEFAULT_NOISE_CHAIN,
                 median_window_frames: int = 31) -> Spectrogram:
    """Apply the configured noise-removal chain to a dB spectrogram."""
    if spec.units != "db":
        raise ValueError("remove_noise expects a dB spectrogram")
    power = spec.power
    for step in noise_removal:
        if step == "median_subtract_per_bin":
            power = _median_subtract_per_bin(power, median_window_frames)
        elif step == "moving_average_smooth":
            power = _moving_average_smooth(power)
        elif step == "spectral_mean_normalize":
            power = _spectral_mean_normalize(power)
        else:
            raise ValueError(f"unknown noise-removal step: {step}")
    return dc_replace(spec, power=power)


# ---------------------------------------------------------------------------
# Connected regions
# ---------------------------------------------------------------------------

def connected_regions(mask: np.ndarray, connectivity: int = 8) -> list[list[tuple[int, int]]]:
    """Connected components of a binary grid as sorted cell lists.

    Regions are returned sorted by their first cell in row-major order, and
    cells within a region are sorted, so the labeling has a canonical order
    regardless of traversal.
    """
    if connectivity == 4:
        neighbors = ((-1, 0), (1, 0), (0, -1), (0, 1))
    elif connectivity == 8:
        neighbors = tuple(
            (di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)
        )
    else:
        raise ValueError("connectivity must be 4 or 8")

    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    regions = []
    for i in range(h):
        for j in range(w):
            if not mask[i, j] or seen[i, j]:
                continue
            cells = []
            queue = deque([(i, j)])
            seen[i, j] = True
            while queue:
                ci, cj = queue.popleft()
                cells.append((ci, cj))
                for di, dj in neighbors:
                    ni, nj = ci + di, cj + dj
                    if 0 <= ni < h and 0 <= nj < w and mask[ni, nj] and not seen[ni, nj]:
                        seen[ni, nj] = True
                        queue.append((ni, nj))
            regions.append(sorted(cells))
    regions.sort(key=lambda cells: cells[0])
    return regions


def _bbox(cells) -> tuple[int, int, int, int]:
    rows = [c[0] for c in cells]
    cols = [c[1] for c in cells]
    return min(rows), max(rows), min(cols), max(cols)


def _merge_regions(regions, max_gap_frames: int, max_gap_bins: int):
    """Union regions whose bounding boxes are within the configured gaps.

    Computed as the transitive closure over all pairs, so the result does not
    depend on region discovery order.
    """
    n = len(regions)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    boxes = [_bbox(cells) for cells in regions]
    for a in range(n):
        for b in range(a + 1, n):
            r0a, r1a, c0a, c1a = boxes[a]
            r0b, r1b, c0b, c1b = boxes[b]
            gap_frames = max(r0a, r0b) - min(r1a, r1b)
            gap_bins = max(c0a, c0b) - min(c1a, c1b)
            if gap_frames <= max_gap_frames and gap_bins <= max_gap_bins:
                parent[find(a)] = find(b)

    merged: dict = {}
    for idx, cells in enumerate(regions):
        merged.setdefault(find(idx), []).extend(cells)
    groups = [sorted(cells) for cells in merged.values()]
    groups.sort(key=lambda cells: cells[0])
    return groups


def detect(spec: Spectrogram, params: DetectorParams = DetectorParams(),
           denoise: bool = True) -> list[DetectionEvent]:
    """Threshold, group, link, and filter regions into detection events.

    The spectrogram rows are time frames and columns frequency bins; gap
    linking compares bounding boxes in frames/bins.
    """
    working = remove_noise(spec, params.noise_removal,
                           params.median_window_frames) if denoise else spec
    mask = working.power >= params.threshold_db
    regions = connected_regions(mask, params.connectivity)
    regions = _merge_regions(regions, params.max_gap_frames, params.max_gap_bins)
    regions = [r for r in regions if len(r) >= params.min_region_cells]

    hop = spec.params.hop_samples
    win = spec.params.window_len
    fs = spec.sample_rate
    freqs = spec.freq_axis_khz
    dfreq = (freqs[1] - freqs[0]) if len(freqs) > 1 else 0.001

    events = []
    for cells in regions:
        r0, r1, c0, c1 = _bbox(cells)
        start_s = r0 * hop / fs
        end_s = (r1 * hop + win) / fs
        dur = end_s - start_s
        if not params.min_duration_s <= dur <= params.max_duration_s:
            continue
        vals = np.array([working.power[i, j] for i, j in cells])
        events.append(DetectionEvent(
            start_s=start_s,
            end_s=end_s,
            f_lo_khz=max(0.0, float(freqs[c0] - dfreq / 2)),
            f_hi_khz=float(freqs[c1] + dfreq / 2),
            score=float((vals - params.threshold_db).mean()),
            n_cells=len(cells),
        ))
    events.sort(key=lambda e: e.start_s)
    return events


def export_events_jsonl(events: list[DetectionEvent], path) -> None:
    with open(path, "w") as fh:
        for e in events:
            fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")


def load_events_jsonl(path) -> list[DetectionEvent]:
    events = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(DetectionEvent(**json.loads(line)))
    return events


def export_events_csv(events: list[DetectionEvent], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file_id", "start_s", "end_s", "f_lo_khz", "f_hi_khz", "score"])
        for e in events:
            writer.writerow([e.source_id, repr(e.start_s), repr(e.end_s),
                             repr(e.f_lo_khz), repr(e.f_hi_khz), repr(e.score)])
