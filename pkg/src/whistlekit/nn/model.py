"""Layer-sequence model description, shape checking, and the model object."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .layers import (
    Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, ReLU, ShapeError, Softmax,
)


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv2d | maxpool | dropout | flatten | dense | relu | softmax
    args: tuple = ()
    trainable: bool = True

    def to_dict(self) -> dict:
        return {"kind": self.kind, "args": list(self.args), "trainable": self.trainable}


def conv2d(out_channels, kh, kw, stride=1, trainable=True):
    return LayerSpec("conv2d", (out_channels, kh, kw, stride), trainable)


def maxpool(size=2):
    return LayerSpec("maxpool", (size,))


def dropout(rate):
    return LayerSpec("dropout", (rate,))


def flatten():
    return LayerSpec("flatten")


def dense(units, trainable=True):
    return LayerSpec("dense", (units,), trainable)


def relu():
    return LayerSpec("relu")


def softmax():
    return LayerSpec("softmax")


@dataclass(frozen=True)
class ModelConfig:
    input_shape: tuple  # (H, W, C)
    layers: tuple = ()

    def shape_chain(self) -> list[tuple]:
        """Static shape check through the layer sequence; raises on conflict."""
        shapes = [tuple(self.input_shape)]
        cur = tuple(self.input_shape)
        for i, spec in enumerate(self.layers):
            try:
                cur = _probe_layer(spec, cur).output_shape(cur)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({spec.kind}): {exc}") from exc
            shapes.append(cur)
        return shapes

    def output_shape(self) -> tuple:
        return self.shape_chain()[-1]

    def to_json(self) -> str:
        return json.dumps({
            "input_shape": list(self.input_shape),
            "layers": [spec.to_dict() for spec in self.layers],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        d = json.loads(text)
        return cls(
            input_shape=tuple(d["input_shape"]),
            layers=tuple(
                LayerSpec(s["kind"], tuple(s["args"]), s.get("trainable", True))
                for s in d["layers"]
            ),
        )


def _make_layer(spec: LayerSpec, input_shape, rng, dtype) -> Layer:
    if spec.kind == "conv2d":
        out_ch, kh, kw, stride = spec.args
        if len(input_shape) != 3:
            raise ShapeError(f"conv2d needs an image input, got {input_shape}")
        layer = Conv2D(input_shape[2], out_ch, kh, kw, stride, rng=rng,
                       dtype=dtype, trainable=spec.trainable)
    elif spec.kind == "maxpool":
        layer = MaxPool2D(*spec.args)
    elif spec.kind == "dropout":
        layer = Dropout(*spec.args)
    elif spec.kind == "flatten":
        layer = Flatten()
    elif spec.kind == "dense":
        if len(input_shape) != 1:
            raise ShapeError(f"dense needs a flat input, got {input_shape}")
        layer = Dense(input_shape[0], spec.args[0], rng=rng, dtype=dtype,
                      trainable=spec.trainable)
    elif spec.kind == "relu":
        layer = ReLU()
    elif spec.kind == "softmax":
        layer = Softmax()
    else:
        raise ValueError(f"unknown layer kind: {spec.kind}")
    return layer


def _probe_layer(spec: LayerSpec, input_shape) -> Layer:
    # cheap throwaway instance just for shape propagation
    return _make_layer(spec, input_shape, np.random.default_rng(0), np.float32)


@dataclass
class ForwardCache:
    model: "Model"
    mode: str
    layer_caches: list = field(default_factory=list)


class Model:
    """A built layer sequence with named weights and reverse-mode gradients."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        config.shape_chain()  # validate before allocating
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.layers: list[Layer] = []
        cur = tuple(config.input_shape)
        for spec in config.layers:
            layer = _make_layer(spec, cur, rng, dtype)
            cur = layer.output_shape(cur)
            self.layers.append(layer)

    def named_params(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                out[f"layer{i:02d}_{self.config.layers[i].kind}.{name}"] = arr
        return out

    def set_named_params(self, values: dict) -> None:
        params = self.named_params()
        for name, arr in values.items():
            if name not in params:
                raise ShapeError(f"unknown weight array: {name}")
            if params[name].shape != tuple(arr.shape):
                raise ShapeError(
                    f"{name}: expected shape {params[name].shape}, got {tuple(arr.shape)}"
                )
            params[name][...] = arr

    def astype(self, dtype) -> "Model":
        """Copy of the model with weights cast to another float dtype."""
        clone = Model(self.config, seed=0, dtype=dtype)
        for layer, src in zip(clone.layers, self.layers):
            for name, arr in src.params().items():
                layer.params()[name][...] = arr.astype(dtype)
        return clone

    def forward(self, x, mode: str = "eval", rng_seed: int = 0):
        if mode not in ("train", "eval"):
            raise ValueError("mode must be 'train' or 'eval'")
        x = np.asarray(x, dtype=self.dtype)
        expected = tuple(self.config.input_shape)
        if tuple(x.shape[1:]) != expected:
            raise ShapeError(f"model expects input {expected}, got {tuple(x.shape[1:])}")
        rng = np.random.default_rng(rng_seed)
        cache = ForwardCache(model=self, mode=mode)
        for layer in self.layers:
            x, layer_cache = layer.forward(x, mode == "train", rng)
            cache.layer_caches.append(layer_cache)
        return x, cache

    def backward(self, cache: ForwardCache, dlogits, from_logits: bool = True) -> dict:
        """Gradients for every trainable weight.

        With from_logits=True the incoming gradient is taken with respect to
        the pre-softmax logits (the combined softmax + cross-entropy
        gradient) and the final softmax layer is skipped.
        """
        if cache.model is not self:
            raise ValueError("stale cache: produced by a different model")
        if len(cache.layer_caches) != len(self.layers):
            raise ValueError("stale cache: layer count mismatch")

        layers = list(enumerate(self.layers))
        if from_logits:
            if self.config.layers[-1].kind != "softmax":
                raise ValueError("from_logits requires a trailing softmax layer")
            layers = layers[:-1]

        grads = {}
        dy = dlogits
        for i, layer in reversed(layers):
            dy, layer_grads = layer.backward(cache.layer_caches[i], dy)
            for name, g in layer_grads.items():
                grads[f"layer{i:02d}_{self.config.layers[i].kind}.{name}"] = g
        return grads


def build_vanilla_cnn(input_hw: tuple[int, int] = (224, 224), channels: int = 3) -> ModelConfig:
    """Two-conv CNN: 16 then 32 kernels, (7,7)/(5,5), stride 2, pool 2,
    dropout 0.2, dense 32 -> 16 -> 2 with softmax output."""
    return ModelConfig(
        input_shape=(input_hw[0], input_hw[1], channels),
        layers=(
            conv2d(16, 7, 7, stride=2), relu(), maxpool(2), dropout(0.2),
            conv2d(32, 5, 5, stride=2), relu(), maxpool(2), dropout(0.2),
            flatten(),
            dense(32), relu(),
            dense(16), relu(),
            dense(2), softmax(),
        ),
    )


def build_transfer_model(backbone: ModelConfig, head_units=(50, 20)) -> ModelConfig:
    """Append a fully connected head to a backbone; every layer trainable."""
    backbone_out = backbone.output_shape()
    layers = [LayerSpec(s.kind, s.args, trainable=True) for s in backbone.layers]
    if len(backbone_out) != 1:
        layers.append(flatten())
    for units in head_units:
        layers.append(dense(units))
        layers.append(relu())
    layers.append(dense(2))
    layers.append(softmax())
    config = ModelConfig(input_shape=backbone.input_shape, layers=tuple(layers))
    config.shape_chain()
    return config
