"""Training loop: per-utterance sequences, L1 loss, Adam, early stopping on
validation loss."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from ..dataset import DatasetIndex, derive_seed
from ..loader import DataSource, fit_feature_normalizers
from .adam import adam_init, adam_step, clip_gradients
from .checkpoint import ModelCheckpoint
from .layers import l1_loss
from .network import (
    VARIANT_AUDIO_ONLY,
    VARIANT_MULTIMODAL,
    VARIANTS,
    NetDims,
    build_params,
    forward,
    loss_and_grads,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    patience_epochs: int = 15
    max_epochs: int = 300
    dropout_p: float = 0.5
    seed: int = 0
    variant: str = VARIANT_MULTIMODAL
    channel_set: str = "full"
    grad_clip_norm: float = 0.0  # 0 disables clipping

    def __post_init__(self):
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.patience_epochs < 1:
            raise ValueError("patience_epochs must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.channel_set not in ("full", "cheek"):
            raise ValueError("channel_set must be 'full' or 'cheek'")


class EarlyStopper:
    """Keeps the best validation loss; stops after `patience` epochs without
    strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = float("inf")
        self.best_epoch = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            return True
        return False

    def should_stop(self, epoch: int) -> bool:
        return epoch - self.best_epoch >= self.patience


def train(
    config: TrainConfig, index: DatasetIndex, normalizers: tuple | None = None
) -> ModelCheckpoint:
    """Train on the index's train split, early-stop on the val split, and
    return the checkpoint with the lowest validation loss.

    `normalizers` optionally supplies precomputed (emg, audio) statistics;
    otherwise they are fitted on the training split first.
    """
    train_mixes = index.split_mixes("train")
    val_mixes = index.split_mixes("val")
    if not train_mixes:
        raise ValueError("dataset has no training mixtures")
    if not val_mixes:
        raise ValueError("dataset has no validation mixtures")

    multimodal = config.variant == VARIANT_MULTIMODAL
    source = DataSource(index, channel_set=config.channel_set)
    if normalizers is not None:
        emg_norm, audio_norm = normalizers
    else:
        emg_norm, audio_norm = fit_feature_normalizers(source, train_mixes)
    aux_in = emg_norm.dim if multimodal else 257
    dims = NetDims(aux_in=aux_in)
    params = build_params(
        config.variant, config.channel_set, dims, np.random.default_rng(config.seed)
    )
    state = adam_init(params.named_params())
    stopper = EarlyStopper(config.patience_epochs)
    best_params = params.copy()

    def step_inputs(mix, need_emg):
        got = source.network_inputs(
            mix, emg_norm if need_emg else None, audio_norm, need_emg=need_emg
        )
        return got["x_emg"], got["noisy_feats"].log_mag_norm, got["target"]

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.monotonic()
        order = np.random.default_rng(derive_seed(config.seed, "shuffle", epoch)).permutation(
            len(train_mixes)
        )
        total = 0.0
        for step, mix_idx in enumerate(order):
            x_emg, x_audio, target = step_inputs(train_mixes[mix_idx], multimodal)
            drop_rng = np.random.default_rng(derive_seed(config.seed, "dropout", epoch, step))
            loss, grads = loss_and_grads(
                params, x_emg, x_audio, target, config.dropout_p, drop_rng
            )
            total += loss
            if config.grad_clip_norm > 0:
                clip_gradients(grads, config.grad_clip_norm)
            adam_step(
                params.named_params(),
                grads,
                state,
                lr=config.learning_rate,
                beta1=config.beta1,
                beta2=config.beta2,
                eps=config.adam_epsilon,
            )

        val_loss = validation_loss(params, source, val_mixes, emg_norm, audio_norm)
        if stopper.update(epoch, val_loss):
            best_params = params.copy()
        log.info(
            "epoch %d: train L1 %.6f, val L1 %.6f (best %.6f @ %d) [%.1f s]",
            epoch,
            total / len(train_mixes),
            val_loss,
            stopper.best_loss,
            stopper.best_epoch,
            time.monotonic() - t0,
        )
        if stopper.should_stop(epoch):
            log.info("stopping: no improvement for %d epochs", config.patience_epochs)
            break

    return ModelCheckpoint(
        params=best_params,
        emg_normalizer=emg_norm if multimodal else None,
        audio_normalizer=audio_norm,
        epoch=stopper.best_epoch,
        best_val_loss=stopper.best_loss,
        master_seed=config.seed,
    )


def validation_loss(params, source, mixes, emg_norm, audio_norm) -> float:
    multimodal = params.variant != VARIANT_AUDIO_ONLY
    losses = []
    for mix in mixes:
        got = source.network_inputs(
            mix, emg_norm if multimodal else None, audio_norm, need_emg=multimodal
        )
        z, _, _ = forward(params, got["x_emg"], got["noisy_feats"].log_mag_norm, train=False)
        losses.append(l1_loss(z, got["target"]))
    return float(np.mean(losses))
