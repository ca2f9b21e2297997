from .network import (
    AdamState,
    Checkpoint,
    ModelConfig,
    adam_update,
    backward,
    batch_loss_and_grads,
    forward,
    init_model,
    param_shapes,
    train_step,
)
from .checkpoint_io import (
    checkpoint_bytes,
    checkpoint_from_bytes,
    load_checkpoint,
    save_checkpoint,
)
from .gradcheck import GradCheckReport, gradient_check, tiny_config

__all__ = [
    "AdamState",
    "Checkpoint",
    "GradCheckReport",
    "ModelConfig",
    "adam_update",
    "backward",
    "batch_loss_and_grads",
    "checkpoint_bytes",
    "checkpoint_from_bytes",
    "forward",
    "gradient_check",
    "init_model",
    "load_checkpoint",
    "param_shapes",
    "save_checkpoint",
    "tiny_config",
    "train_step",
]
