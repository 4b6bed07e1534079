from .layers import ShapeError
from .losses import loss_bce, one_hot
from .model import (
    Model, ModelConfig, LayerSpec, build_transfer_model, build_vanilla_cnn,
    conv2d, dense, dropout, flatten, maxpool, relu, softmax,
)
from .optim import AdamState, adam_step
from .checkpoint import (
    Checkpoint, CheckpointCorruptError, CheckpointError, CheckpointShapeError,
    CheckpointVersionError, load_checkpoint, load_into, restore_model,
    save_checkpoint,
)

__all__ = [
    "ShapeError", "loss_bce", "one_hot",
    "Model", "ModelConfig", "LayerSpec",
    "build_transfer_model", "build_vanilla_cnn",
    "conv2d", "dense", "dropout", "flatten", "maxpool", "relu", "softmax",
    "AdamState", "adam_step",
    "Checkpoint", "CheckpointError", "CheckpointVersionError",
    "CheckpointCorruptError", "CheckpointShapeError",
    "save_checkpoint", "load_checkpoint", "load_into", "restore_model",
]
