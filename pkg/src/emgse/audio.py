"""Spectral audio features for the network and waveform reconstruction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import ComplexSpectrogram, FrameClock, Waveform, istft, stft
from .normalize import Normalizer


@dataclass(frozen=True)
class SpectralFeatures:
    """Network-side view of a waveform: normalized log1p magnitudes plus the
    phase needed to reconstruct audio from an enhanced magnitude estimate."""

    log_mag_norm: np.ndarray
    phase: np.ndarray
    frame_clock: FrameClock
    normalizer: Normalizer | None

    @property
    def num_frames(self) -> int:
        return self.log_mag_norm.shape[0]


def extract_audio_features(x: Waveform, normalizer: Normalizer | None = None) -> SpectralFeatures:
    """STFT magnitude -> log1p -> per-bin min-max normalization; phase kept."""
    spec = stft(x)
    log_mag = np.log1p(spec.magnitude)
    if normalizer is not None:
        log_mag = normalizer.apply(log_mag)
    return SpectralFeatures(
        log_mag_norm=log_mag,
        phase=spec.phase,
        frame_clock=spec.frame_clock,
        normalizer=normalizer,
    )


def reconstruct_waveform(
    enhanced_norm: np.ndarray,
    phase: np.ndarray,
    normalizer: Normalizer,
    frame_clock: FrameClock,
) -> Waveform:
    """Invert the feature pipeline: denormalize, expm1, clamp, then iSTFT
    against the supplied (noisy) phase."""
    enhanced_norm = np.asarray(enhanced_norm, dtype=np.float64)
    if enhanced_norm.shape != phase.shape:
        raise ValueError(
            f"magnitude shape {enhanced_norm.shape} does not match phase shape {phase.shape}"
        )
    if not np.all(np.isfinite(enhanced_norm)):
        raise ValueError("enhanced magnitudes contain non-finite values")
    log_mag = normalizer.invert(enhanced_norm)
    mag = np.maximum(np.expm1(log_mag), 0.0)
    spec = ComplexSpectrogram(data=mag * np.exp(1j * phase), frame_clock=frame_clock)
    return istft(spec)
