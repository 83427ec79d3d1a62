"""Enhancement inference and latent-space export from a trained checkpoint."""
from __future__ import annotations

import numpy as np

from ..audio import extract_audio_features, reconstruct_waveform
from ..dsp import Waveform
from ..emg import EMGRecording, extract_emg_features
from .checkpoint import ModelCheckpoint
from .network import VARIANT_MULTIMODAL, forward

LATENT_CONDITIONS = ("clean_only", "noisy_only", "noisy_plus_emg")


def enhance(ckpt: ModelCheckpoint, noisy: Waveform, emg_rec: EMGRecording | None = None) -> Waveform:
    """Enhance a noisy waveform; EMG is required iff the model is multimodal.

    The output reuses the noisy phase and has the input's exact length.
    """
    multimodal = ckpt.params.variant == VARIANT_MULTIMODAL
    if multimodal and emg_rec is None:
        raise ValueError("this checkpoint is multimodal: EMG input is required")
    if not multimodal and emg_rec is not None:
        raise ValueError("audio-only checkpoint does not accept EMG input")

    feats = extract_audio_features(noisy, ckpt.audio_normalizer)
    x_emg = None
    if multimodal:
        x_emg = extract_emg_features(
            emg_rec, ckpt.params.channel_set, ckpt.emg_normalizer
        ).data
        if x_emg.shape[0] != feats.num_frames:
            raise ValueError(
                f"EMG frames {x_emg.shape[0]} != audio frames {feats.num_frames}; "
                "EMG and audio must cover the same duration"
            )
    z, _, _ = forward(ckpt.params, x_emg, feats.log_mag_norm, train=False)
    return reconstruct_waveform(z, feats.phase, ckpt.audio_normalizer, feats.frame_clock)


def export_latents(
    ckpt: ModelCheckpoint,
    clean: Waveform,
    noisy: Waveform,
    emg_rec: EMGRecording,
) -> dict:
    """Fusion-layer latents under three input conditions plus pairwise
    absolute-difference matrices.

    For the audio-only probes (clean_only, noisy_only) the EMG encoder input
    is the zero vector, so the conditions isolate what EMG adds.
    """
    if ckpt.params.variant != VARIANT_MULTIMODAL:
        raise ValueError("latent export requires a multimodal checkpoint")
    if len(clean.samples) != len(noisy.samples):
        raise ValueError("clean and noisy versions must have equal length")

    clean_feats = extract_audio_features(clean, ckpt.audio_normalizer)
    noisy_feats = extract_audio_features(noisy, ckpt.audio_normalizer)
    x_emg = extract_emg_features(emg_rec, ckpt.params.channel_set, ckpt.emg_normalizer).data
    zero_emg = np.zeros_like(x_emg)

    latents = {}
    for name, audio, aux in (
        ("clean_only", clean_feats, zero_emg),
        ("noisy_only", noisy_feats, zero_emg),
        ("noisy_plus_emg", noisy_feats, x_emg),
    ):
        _, latent, _ = forward(ckpt.params, aux, audio.log_mag_norm, train=False)
        latents[name] = latent

    diffs = {}
    for i, a in enumerate(LATENT_CONDITIONS):
        for b in LATENT_CONDITIONS[i + 1 :]:
            diffs[f"{a}_vs_{b}"] = np.abs(latents[a] - latents[b])
    return {"latents": latents, "diffs": diffs}
