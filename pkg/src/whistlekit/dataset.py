"""Annotations, manifests, splits, and labeled example-set building."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from . import audio as audiomod
from . import spectrogram as specmod

WHISTLE = "whistle"
NOISE = "noise"


@dataclass
class Annotation:
    file_id: str
    start_s: float
    end_s: float
    label: str  # "whistle" | "noise"
    contour: list[tuple[float, float, float]] | None = None  # (t_s, f_khz, intensity_db)

    def __post_init__(self):
        if self.start_s >= self.end_s:
            raise ValueError("annotation must have start_s < end_s")
        if self.label not in (WHISTLE, NOISE):
            raise ValueError(f"unknown label: {self.label}")
        if self.contour is not None:
            ts = [p[0] for p in self.contour]
            if ts != sorted(ts):
                raise ValueError("contour points must be time-sorted")
            if ts and (ts[0] < self.start_s or ts[-1] > self.end_s):
                raise ValueError("contour points must lie within the annotation")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def to_dict(self) -> dict:
        d = {"start_s": self.start_s, "end_s": self.end_s, "label": self.label}
        if self.contour is not None:
            d["contour"] = [list(p) for p in self.contour]
        return d


@dataclass
class ManifestEntry:
    file_id: str
    path: str
    record_date: date
    annotations: list[Annotation] = field(default_factory=list)


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.file_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("file_ids must be unique in a manifest")

    def save_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps({
                    "file_id": e.file_id,
                    "path": e.path,
                    "record_date": e.record_date.isoformat(),
                    "annotations": [a.to_dict() for a in e.annotations],
                }, sort_keys=True) + "\n")

    @classmethod
    def load_jsonl(cls, path) -> "Manifest":
        entries = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                anns = [
                    Annotation(
                        file_id=d["file_id"],
                        start_s=a["start_s"],
                        end_s=a["end_s"],
                        label=a["label"],
                        contour=[tuple(p) for p in a["contour"]] if a.get("contour") else None,
                    )
                    for a in d.get("annotations", [])
                ]
                entries.append(ManifestEntry(
                    file_id=d["file_id"],
                    path=d["path"],
                    record_date=date.fromisoformat(d["record_date"]),
                    annotations=anns,
                ))
        return cls(entries)


@dataclass
class FoldAssignment:
    k: int
    assignment: dict  # item id -> fold index

    def fold_items(self, fold: int) -> list:
        return [i for i, f in self.assignment.items() if f == fold]


# ---------------------------------------------------------------------------
# Duration outlier filtering (Tukey fences)
# ---------------------------------------------------------------------------

def _quantile_linear(sorted_values: np.ndarray, q: float) -> float:
    """Linear interpolation between order statistics (numpy default method)."""
    n = len(sorted_values)
    pos = q * (n - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return float(sorted_values[lo] * (1 - frac) + sorted_values[hi] * frac)


def tukey_duration_filter(annotations: list[Annotation]) -> dict:
    """Drop whistle annotations whose duration falls outside the Tukey fences.

    Fences are [Q1 - 1.5*IQR, Q3 + 1.5*IQR] over whistle durations; noise
    annotations pass through untouched.
    """
    whistles = [a for a in annotations if a.label == WHISTLE]
    if len(whistles) < 4:
        raise ValueError("need >= 4 whistle annotations for stable quartiles")
    durations = np.sort(np.array([a.duration_s for a in whistles]))
    q1 = _quantile_linear(durations, 0.25)
    q3 = _quantile_linear(durations, 0.75)
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr

    kept, discarded = [], []
    for a in annotations:
        if a.label == WHISTLE and not (lo <= a.duration_s <= hi):
            discarded.append(a)
        else:
            kept.append(a)
    return {"kept": kept, "discarded": discarded, "fences": (lo, hi)}


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def split_by_date(
    manifest: Manifest,
    train_range: tuple[date, date],
    test_range: tuple[date, date],
) -> dict:
    """Partition entries by inclusive record-date ranges; the rest is reported."""
    (t0, t1), (s0, s1) = train_range, test_range
    if t0 > t1 or s0 > s1:
        raise ValueError("date range must be ordered")
    if t0 <= s1 and s0 <= t1:
        raise ValueError("train and test date ranges overlap")

    train, test, excluded = [], [], []
    for e in manifest.entries:
        if t0 <= e.record_date <= t1:
            train.append(e)
        elif s0 <= e.record_date <= s1:
            test.append(e)
        else:
            excluded.append(e)
    return {"train": Manifest(train), "test": Manifest(test), "excluded": excluded}


def stratified_kfold(items: list[tuple], k: int = 5, seed: int = 0) -> FoldAssignment:
    """Per-class shuffle then round-robin fold assignment, deterministic by seed."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(items) < k:
        raise ValueError(f"{len(items)} items cannot fill k={k} folds")
    by_class: dict = {}
    for item_id, label in items:
        by_class.setdefault(label, []).append(item_id)

    rng = np.random.default_rng(seed)
    assignment = {}
    slot = 0  # carried across classes so fold sizes stay even overall
    for label in sorted(by_class):
        ids = by_class[label]
        for idx in rng.permutation(len(ids)):
            assignment[ids[idx]] = slot % k
            slot += 1
    return FoldAssignment(k=k, assignment=assignment)


# ---------------------------------------------------------------------------
# Contour quality checks
# ---------------------------------------------------------------------------

def contour_qa(
    annotation: Annotation,
    band_khz: tuple[float, float] = (3.0, 20.0),
    intensity_var_max_db2: float = 25.0,
) -> dict:
    """Check a whistle contour's bandwidth and intensity stability."""
    if not annotation.contour or len(annotation.contour) < 2:
        raise ValueError("annotation has no contour with >= 2 points")
    freqs = np.array([p[1] for p in annotation.contour])
    intens = np.array([p[2] for p in annotation.contour])
    f_lo, f_hi = freqs.min(), freqs.max()
    var = float(intens.var())  # population variance
    return {
        "bandwidth_ok": bool(band_khz[0] <= f_lo and f_hi <= band_khz[1]),
        "intensity_ok": bool(var <= intensity_var_max_db2),
        "bandwidth_khz": float(f_hi - f_lo),
        "intensity_var_db2": var,
    }


# ---------------------------------------------------------------------------
# Example-set cache
# ---------------------------------------------------------------------------

def _write_array(path, arr: np.ndarray) -> None:
    """Fixed-layout binary: u32 ndim, u32 dims..., then LE float32 payload."""
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def _read_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        (ndim,) = struct.unpack("<I", fh.read(4))
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        payload = fh.read()
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape)


def window_label(
    start_s: float,
    end_s: float,
    annotations: list[Annotation],
    min_overlap_fraction: float = 0.0,
) -> str:
    """Whistle if the window overlaps any whistle annotation enough.

    min_overlap_fraction is relative to the window length; 0 means any
    positive overlap marks the window positive.
    """
    need = min_overlap_fraction * (end_s - start_s)
    for a in annotations:
        if a.label != WHISTLE:
            continue
        overlap = min(end_s, a.end_s) - max(start_s, a.start_s)
        if overlap > 0 and overlap >= need:
            return WHISTLE
    return NOISE


def build_example_set(
    manifest: Manifest,
    out_dir,
    spectrogram_params: specmod.SpectrogramParams = specmod.SpectrogramParams(),
    window_dur_s: float = 0.8,
    shift_s: float = 0.4,
    crop_khz: tuple[float, float] = (3.0, 20.0),
    image_size: int = specmod.DEFAULT_IMAGE_SIZE,
    min_overlap_fraction: float = 0.0,
) -> dict:
    """Materialize labeled SpectroImage arrays plus an index file.

    Per-file I/O failures are collected and reported; processing continues.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = []
    errors = []
    for entry in manifest.entries:
        try:
            clip = audiomod.decode_wav(entry.path)
        except (OSError, ValueError) as exc:
            errors.append({"file_id": entry.file_id, "error": str(exc)})
            continue
        clip = audiomod.average_channels(clip)
        for i, (segment, start_s) in enumerate(
            specmod.slide_windows(clip, window_dur_s, shift_s)
        ):
            spec = specmod.stft(segment, spectrogram_params)
            spec = specmod.power_to_db(spec)
            spec = specmod.crop_frequency(spec, *crop_khz)
            image = specmod.render_to_image(spec, size=image_size)
            label = window_label(
                start_s, start_s + window_dur_s, entry.annotations,
                min_overlap_fraction,
            )
            name = f"{entry.file_id}_{i:05d}.f32"
            _write_array(out_dir / name, image.pixels)
            index.append({
                "id": f"{entry.file_id}_{i:05d}",
                "file": name,
                "label": label,
                "source_file_id": entry.file_id,
                "start_s": start_s,
                "end_s": start_s + window_dur_s,
                "shape": list(image.pixels.shape),
            })
    with open(out_dir / "index.json", "w") as fh:
        json.dump({"images": index, "errors": errors}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return {"index": index, "errors": errors}


def load_example_set(cache_dir) -> tuple[np.ndarray, np.ndarray, list[dict]]:
    """Load a cache directory into (images, labels) arrays; 1 = whistle."""
    cache_dir = Path(cache_dir)
    with open(cache_dir / "index.json") as fh:
        index = json.load(fh)["images"]
    images = np.stack([_read_array(cache_dir / rec["file"]) for rec in index])
    labels = np.array([1 if rec["label"] == WHISTLE else 0 for rec in index])
    return images, labels, index
