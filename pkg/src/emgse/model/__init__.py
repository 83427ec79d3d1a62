"""Network, optimizer, training loop, checkpointing, and inference."""

from .adam import AdamState, adam_init, adam_step, clip_gradients
from .checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from .infer import enhance, export_latents
from .layers import (
    AffineParams,
    BLSTMParams,
    LSTMDirParams,
    blstm_forward,
    l1_loss,
    l1_loss_grad,
    lstm_cell_forward,
)
from .network import (
    VARIANT_AUDIO_ONLY,
    VARIANT_MULTIMODAL,
    EMGSEParams,
    NetDims,
    backward,
    build_params,
    forward,
    loss_and_grads,
)
from .training import EarlyStopper, TrainConfig, train, validation_loss

__all__ = [
    "AdamState",
    "adam_init",
    "adam_step",
    "clip_gradients",
    "ModelCheckpoint",
    "load_checkpoint",
    "save_checkpoint",
    "enhance",
    "export_latents",
    "AffineParams",
    "BLSTMParams",
    "LSTMDirParams",
    "blstm_forward",
    "l1_loss",
    "l1_loss_grad",
    "lstm_cell_forward",
    "VARIANT_AUDIO_ONLY",
    "VARIANT_MULTIMODAL",
    "EMGSEParams",
    "NetDims",
    "backward",
    "build_params",
    "forward",
    "loss_and_grads",
    "EarlyStopper",
    "TrainConfig",
    "train",
    "validation_loss",
]
