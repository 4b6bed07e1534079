"""Binary checkpoint format: magic, version, JSON header, raw f32 payloads.

Layout:
  bytes 0..5   magic  b"WKCKPT"
  bytes 6..7   format version, u16 LE
  bytes 8..15  header length, u64 LE
  header       UTF-8 JSON: named arrays (name, dtype, shape, offset, nbytes),
               optimizer scalars, and free-form metadata
  payload      concatenated little-endian float32 arrays

Round trips are bit-exact: arrays are ordered by name and the header is
dumped with sorted keys.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .model import Model, ModelConfig
from .optim import AdamState

MAGIC = b"WKCKPT"
FORMAT_VERSION = 1

WEIGHT_PREFIX = "weights/"
ADAM_M_PREFIX = "adam_m/"
ADAM_V_PREFIX = "adam_v/"


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    weights: dict  # name -> float32 array
    optimizer: AdamState | None = None
    metadata: dict = field(default_factory=dict)


def save_checkpoint(path, model: Model, optimizer: AdamState | None = None,
                    metadata: dict | None = None) -> None:
    arrays = {WEIGHT_PREFIX + k: np.asarray(v, dtype="<f4")
              for k, v in model.named_params().items()}
    opt_header = None
    if optimizer is not None:
        for k, v in optimizer.m.items():
            arrays[ADAM_M_PREFIX + k] = np.asarray(v, dtype="<f4")
        for k, v in optimizer.v.items():
            arrays[ADAM_V_PREFIX + k] = np.asarray(v, dtype="<f4")
        opt_header = {"t": optimizer.t, "lr": optimizer.lr,
                      "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                      "eps": optimizer.eps}

    entries = []
    offset = 0
    names = sorted(arrays)
    for name in names:
        arr = arrays[name]
        nbytes = arr.size * 4
        entries.append({"name": name, "dtype": "<f4",
                        "shape": list(arr.shape), "offset": offset,
                        "nbytes": nbytes})
        offset += nbytes

    header = {
        "arrays": entries,
        "model_config": json.loads(model.config.to_json()),
        "optimizer": opt_header,
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for name in names:
            fh.write(arrays[name].tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise CheckpointCorruptError(f"{path}: file too short for a header")
    if data[:6] != MAGIC:
        raise CheckpointCorruptError(f"{path}: bad magic bytes")
    (version,) = struct.unpack_from("<H", data, 6)
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}"
        )
    (header_len,) = struct.unpack_from("<Q", data, 8)
    if 16 + header_len > len(data):
        raise CheckpointCorruptError(f"{path}: truncated header")
    try:
        header = json.loads(data[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"{path}: unreadable header: {exc}") from exc

    payload = data[16 + header_len:]
    arrays = {}
    for entry in header["arrays"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise CheckpointCorruptError(
                f"{path}: array {entry['name']} truncated "
                f"(need {start + nbytes} payload bytes, have {len(payload)})"
            )
        arrays[entry["name"]] = np.frombuffer(
            payload[start:start + nbytes], dtype="<f4"
        ).reshape(entry["shape"])

    weights = {k[len(WEIGHT_PREFIX):]: v for k, v in arrays.items()
               if k.startswith(WEIGHT_PREFIX)}
    optimizer = None
    if header.get("optimizer"):
        opt = header["optimizer"]
        optimizer = AdamState(
            lr=opt["lr"], beta1=opt["beta1"], beta2=opt["beta2"],
            eps=opt["eps"], t=opt["t"],
            m={k[len(ADAM_M_PREFIX):]: v.copy() for k, v in arrays.items()
               if k.startswith(ADAM_M_PREFIX)},
            v={k[len(ADAM_V_PREFIX):]: v.copy() for k, v in arrays.items()
               if k.startswith(ADAM_V_PREFIX)},
        )
    config = ModelConfig.from_json(json.dumps(header["model_config"]))
    return Checkpoint(config=config, weights=weights, optimizer=optimizer,
                      metadata=header.get("metadata", {}))


def restore_model(checkpoint: Checkpoint, seed: int = 0, dtype=np.float32) -> Model:
    model = Model(checkpoint.config, seed=seed, dtype=dtype)
    load_into(model, checkpoint)
    return model


def load_into(model: Model, checkpoint: Checkpoint) -> None:
    params = model.named_params()
    for name, arr in checkpoint.weights.items():
        if name not in params:
            raise CheckpointShapeError(f"unexpected weight array: {name}")
        if params[name].shape != tuple(arr.shape):
            raise CheckpointShapeError(
                f"{name}: model expects {params[name].shape}, checkpoint has {tuple(arr.shape)}"
            )
    missing = set(params) - set(checkpoint.weights)
    if missing:
        raise CheckpointShapeError(f"missing weight arrays: {sorted(missing)}")
    model.set_named_params(checkpoint.weights)
