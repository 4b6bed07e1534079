"""Pipeline configuration: one structured file, flag overrides, run records."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

DEFAULTS = {
    "audio": {
        "saturation_threshold": 0.999,
        "min_run_ms": 10.0,
        "denoise_levels": 4,
        "remove_bias": True,
        "denoise": False,
    },
    "filter": {
        "enabled": True,
        "low_cut_hz": 5000.0,
        "high_cut_hz": 20000.0,
        "order": 4,
    },
    "whitening": {
        "enabled": False,
        "n_bins": 512,
        "smoothing_bins": 9,
        "floor": 0.01,
        "curve_csv": None,
    },
    "spectrogram": {
        "window_len": 2048,
        "hop": None,
        "window_kind": "blackman",
        "crop_lo_khz": 3.0,
        "crop_hi_khz": 20.0,
        "floor_db": -120.0,
        "image_size": 224,
    },
    "windows": {
        "window_dur_s": 0.8,
        "shift_s": 0.4,
        "min_overlap_fraction": 0.0,
    },
    "dataset": {
        "intensity_var_max_db2": 25.0,
        "folds": 5,
    },
    "detector": {
        "threshold_db": 8.0,
        "connectivity": 8,
        "min_region_cells": 20,
        "max_gap_frames": 2,
        "max_gap_bins": 3,
        "min_duration_s": 0.14,
        "max_duration_s": 0.78,
        "median_window_frames": 31,
    },
    "train": {
        "lr": 1e-4,
        "batch_size": 32,
        "max_epochs": 200,
        "patience": 15,
    },
    "evaluate": {
        "min_overlap_fraction": 0.05,
        "decision_threshold": 0.5,
    },
    "seed": 0,
    "threads": 1,
}


class ConfigError(ValueError):
    pass


def _merge(defaults: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(defaults[key], dict) and not isinstance(value, dict):
            raise ConfigError(f"config key {where} must be a section")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides: list[str] = ()) -> dict:
    """Load JSON config, reject unknown keys, apply dotted-key overrides.

    Overrides look like "detector.threshold_db=6"; flag values win over the
    file, and the file wins over defaults. The result is fully concrete.
    """
    file_cfg = {}
    if path is not None:
        with open(path) as fh:
            file_cfg = json.load(fh)
    cfg = _merge(DEFAULTS, file_cfg)

    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        keys = dotted.split(".")
        node = cfg
        ref = DEFAULTS
        for k in keys[:-1]:
            if k not in ref or not isinstance(ref[k], dict):
                raise ConfigError(f"unknown config key: {dotted}")
            node = node[k]
            ref = ref[k]
        if keys[-1] not in ref:
            raise ConfigError(f"unknown config key: {dotted}")
        node[keys[-1]] = _parse_value(raw)
    return cfg


def config_fingerprint(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]


def digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run_record(path, cfg: dict, inputs: list, outputs: list) -> None:
    """Replayable record: resolved config, input digests, tool version."""
    from . import __version__

    record = {
        "tool": "whistlekit",
        "version": __version__,
        "config": cfg,
        "config_fingerprint": config_fingerprint(cfg),
        "inputs": [
            {"path": str(p), "sha256": digest_file(p)}
            for p in inputs if Path(p).is_file()
        ],
        "outputs": [str(p) for p in outputs],
    }
    with open(path, "w") as fh:
        json.dump(record, fh, sort_keys=True, indent=2)
        fh.write("\n")
