"""Realizes dataset-index entries into waveforms and network features.

A DataSource caches decoded audio, EMG recordings, and per-frame EMG features
in memory; mixtures themselves are synthesized on demand from their seeds, so
nothing about a build depends on what was realized before.
"""
from __future__ import annotations

import numpy as np

from .audio import SpectralFeatures, extract_audio_features
from .dataset import DatasetIndex, MixSpec, mix_at_snr, prepare_noise
from .dsp import AUDIO_RATE, EMG_RATE, Waveform
from .emg import CONTEXT_FRAMES, EMGRecording, per_frame_features, stack_context
from .fileio import emgc_read, wav_read
from .normalize import Normalizer, fit_normalizer


class DataSource:
    def __init__(self, index: DatasetIndex, channel_set: str = "full"):
        self.index = index
        self.channel_set = channel_set
        self._clean: dict[str, Waveform] = {}
        self._noise: dict[str, Waveform] = {}
        self._emg: dict[str, EMGRecording] = {}
        self._emg_frames: dict[str, np.ndarray] = {}

    def clean(self, utt_id: str) -> Waveform:
        if utt_id not in self._clean:
            samples, rate = wav_read(self.index.audio_paths[utt_id])
            if rate != AUDIO_RATE:
                raise ValueError(f"{utt_id}: expected {AUDIO_RATE} Hz audio, got {rate}")
            self._clean[utt_id] = Waveform(samples=samples, sample_rate_hz=rate)
        return self._clean[utt_id]

    def noise(self, noise_id: str) -> Waveform:
        if noise_id not in self._noise:
            samples, rate = wav_read(self.index.noise_paths[noise_id])
            self._noise[noise_id] = Waveform(samples=samples, sample_rate_hz=rate)
        return self._noise[noise_id]

    def emg(self, utt_id: str) -> EMGRecording:
        if utt_id not in self._emg:
            channels, rate, labels = emgc_read(self.index.emg_paths[utt_id])
            if rate != EMG_RATE:
                raise ValueError(f"{utt_id}: expected {EMG_RATE} Hz EMG, got {rate}")
            self._emg[utt_id] = EMGRecording(channels=channels, sample_rate_hz=rate, channel_ids=labels)
        return self._emg[utt_id]

    def emg_frame_features(self, utt_id: str) -> np.ndarray:
        """Per-frame TD features (pre-stacking); cached, they are noise-independent."""
        if utt_id not in self._emg_frames:
            self._emg_frames[utt_id] = per_frame_features(self.emg(utt_id), self.channel_set)
        return self._emg_frames[utt_id]

    def emg_features(self, utt_id: str, normalizer: Normalizer | None) -> np.ndarray:
        data = stack_context(self.emg_frame_features(utt_id), context=CONTEXT_FRAMES)
        return normalizer.apply(data) if normalizer is not None else data

    def realize(self, mix: MixSpec) -> tuple[Waveform, Waveform]:
        """Returns (clean, noisy) for a mixture, deterministic in the mix seed."""
        clean = self.clean(mix.clean_id)
        rng = np.random.default_rng(mix.rng_seed)
        noise = prepare_noise(self.noise(mix.noise_id), len(clean.samples), rng)
        return clean, mix_at_snr(clean, noise, mix.snr_db)

    def network_inputs(
        self,
        mix: MixSpec,
        emg_norm: Normalizer | None,
        audio_norm: Normalizer,
        need_emg: bool,
    ) -> dict:
        """Everything one training/inference step needs for a mixture."""
        clean, noisy = self.realize(mix)
        noisy_feats = extract_audio_features(noisy, audio_norm)
        target = extract_audio_features(clean, audio_norm).log_mag_norm
        x_emg = self.emg_features(mix.clean_id, emg_norm) if need_emg else None
        if x_emg is not None and x_emg.shape[0] != noisy_feats.num_frames:
            raise ValueError(
                f"{mix.clean_id}: EMG frames {x_emg.shape[0]} != audio frames {noisy_feats.num_frames}"
            )
        return {
            "clean": clean,
            "noisy": noisy,
            "x_emg": x_emg,
            "noisy_feats": noisy_feats,
            "target": target,
        }


def fit_feature_normalizers(
    source: DataSource, train_mixes: list[MixSpec]
) -> tuple[Normalizer, Normalizer]:
    """Fit the EMG and audio normalizers on the training split only.

    EMG statistics pool over training utterances (EMG does not depend on the
    noise draw); audio statistics pool over the log1p magnitudes of every
    training mixture. The same audio normalizer is reused for network targets.
    """
    utt_ids = sorted({m.clean_id for m in train_mixes})
    if not utt_ids:
        raise ValueError("training split is empty")
    emg_norm = fit_normalizer(
        [stack_context(source.emg_frame_features(u), CONTEXT_FRAMES) for u in utt_ids]
    )
    audio_mats = []
    for mix in train_mixes:
        _, noisy = source.realize(mix)
        audio_mats.append(extract_audio_features(noisy).log_mag_norm)
    audio_norm = fit_normalizer(audio_mats)
    return emg_norm, audio_norm
