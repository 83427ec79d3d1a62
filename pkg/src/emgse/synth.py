"""Synthetic desk-scale corpus: speech-like audio, envelope-correlated
multichannel EMG, and disjoint train/test noise banks.

The generator makes no claim of physiological fidelity; it exists so the full
pipeline (features, training, enhancement, evaluation) runs end to end with
EMG that genuinely carries clean-speech envelope information.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .dataset import ManifestRow, derive_seed
from .dsp import AUDIO_RATE, EMG_RATE, design_butterworth, filter_apply

# Durations snap to this grid so audio and EMG sample counts are both integral
# and the shared frame clock sees exactly equal durations.
DURATION_GRID_HZ = 64


@dataclass(frozen=True)
class SynthConfig:
    num_speakers: int = 4
    utterances_per_speaker: int = 40
    split_counts: tuple[int, int, int] = (28, 4, 8)  # train/val/test per speaker
    duration_range_sec: tuple[float, float] = (1.2, 2.0)
    num_train_noises: int = 8
    num_test_noises: int = 4
    noise_duration_sec: float = 5.0
    num_emg_channels: int = 35
    num_cheek_channels: int = 28
    emg_lead_max_sec: float = 0.04

    def __post_init__(self):
        if sum(self.split_counts) > self.utterances_per_speaker:
            raise ValueError("split counts exceed utterances per speaker")
        if not 0 < self.num_cheek_channels <= self.num_emg_channels:
            raise ValueError("cheek channel count out of range")


def _snap_duration(dur_sec: float) -> float:
    return max(1, round(dur_sec * DURATION_GRID_HZ)) / DURATION_GRID_HZ


def _syllabic_envelope(t, rate_hz, phase, power, duration, bursts):
    """Closed-form articulation envelope, evaluable at any time grid."""
    base = (0.5 * (1.0 - np.cos(2.0 * np.pi * rate_hz * t + phase))) ** power
    edge = 0.04
    ramp = np.clip(t / edge, 0.0, 1.0) * np.clip((duration - t) / edge, 0.0, 1.0)
    env = base * ramp
    for t0, width, amp in bursts:
        inside = (t >= t0) & (t < t0 + width)
        env = env + np.where(
            inside, amp * 0.5 * (1.0 - np.cos(2.0 * np.pi * (t - t0) / width)), 0.0
        )
    return env


def _draw_utterance_params(rng, duration, f0_base):
    n_bursts = int(rng.integers(1, max(2, int(2 * duration)) + 1))
    bursts = []
    for _ in range(n_bursts):
        width = float(rng.uniform(0.05, 0.11))
        t0 = float(rng.uniform(0.05, max(0.06, duration - width - 0.05)))
        bursts.append((t0, width, float(rng.uniform(0.3, 0.6))))
    return {
        "syl_rate": float(rng.uniform(3.0, 6.0)),
        "syl_phase": float(rng.uniform(0, 2 * np.pi)),
        "syl_power": float(rng.uniform(1.2, 1.8)),
        "f0_base": f0_base,
        "f0_mod_hz": float(rng.uniform(0.5, 2.0)),
        "f0_mod_phase": float(rng.uniform(0, 2 * np.pi)),
        "bursts": bursts,
    }


def _speech_like(rng, duration, params, fs=AUDIO_RATE):
    """Harmonic stack with pitch contour, syllabic AM, and fricative bursts."""
    n = round(duration * fs)
    t = np.arange(n) / fs
    env = _syllabic_envelope(
        t, params["syl_rate"], params["syl_phase"], params["syl_power"], duration, params["bursts"]
    )
    f0 = params["f0_base"] * (
        1.0 + 0.15 * np.sin(2 * np.pi * params["f0_mod_hz"] * t + params["f0_mod_phase"])
    )
    phase = 2.0 * np.pi * np.cumsum(f0) / fs
    n_harm = min(12, int(4500 / np.max(f0)))
    voiced = np.zeros(n)
    for k in range(1, n_harm + 1):
        voiced += (1.0 / k) * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    audio = env * voiced
    # Fricative-like bursts: first-differenced white noise under each burst window.
    fric = np.zeros(n)
    for t0, width, amp in params["bursts"]:
        win = (t >= t0) & (t < t0 + width)
        noise = rng.standard_normal(n)
        hp = np.concatenate([[0.0], np.diff(noise)])
        fric += np.where(win, amp * 0.5 * (1 - np.cos(2 * np.pi * (t - t0) / width)) * hp, 0.0)
    return audio + 0.5 * fric, env


def _emg_channels(rng, duration, params, cfg: SynthConfig):
    """Band-limited noise carriers modulated by shifted mixes of the speech
    envelope and its rectified derivative, plus independent sensor noise."""
    n = round(duration * EMG_RATE)
    t = np.arange(n) / EMG_RATE
    lp = design_butterworth(3, 600.0, EMG_RATE, "lowpass")
    channels = np.empty((cfg.num_emg_channels, n))
    for c in range(cfg.num_emg_channels):
        lead = rng.uniform(0.0, cfg.emg_lead_max_sec)
        env = _syllabic_envelope(
            t + lead,
            params["syl_rate"],
            params["syl_phase"],
            params["syl_power"],
            duration + lead,
            params["bursts"],
        )
        denv = np.gradient(env, 1.0 / EMG_RATE)
        denv = denv / max(np.max(np.abs(denv)), 1e-12)
        activation = np.maximum(
            rng.uniform(0.6, 1.0) * env + rng.uniform(0.0, 0.25) * denv, 0.0
        )
        carrier = filter_apply(lp, rng.standard_normal(n))
        sensor = 0.03 * rng.standard_normal(n)
        gain = rng.uniform(20.0, 60.0)
        channels[c] = gain * (activation * carrier + sensor)
    labels = [
        f"cheek{c + 1:02d}" if c < cfg.num_cheek_channels else f"chin{c + 1 - cfg.num_cheek_channels:02d}"
        for c in range(cfg.num_emg_channels)
    ]
    return channels, labels


def _pink_noise(rng, n):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n)
    f[0] = f[1]
    return np.fft.irfft(spec / np.sqrt(f), n=n)


def _train_noise(rng, kind, n, fs=AUDIO_RATE):
    t = np.arange(n) / fs
    if kind == "hum":
        base = float(rng.uniform(45, 60))
        x = sum((1.0 / k) * np.sin(2 * np.pi * base * k * t + rng.uniform(0, 2 * np.pi)) for k in range(1, 9))
        return x + 0.2 * rng.standard_normal(n)
    if kind == "band":
        lo = float(rng.uniform(200, 1200))
        hi = lo * float(rng.uniform(1.8, 3.5))
        x = rng.standard_normal(n)
        x = filter_apply(design_butterworth(3, hi, fs, "lowpass"), x)
        return filter_apply(design_butterworth(3, lo, fs, "highpass"), x)
    if kind == "am":
        rate = float(rng.uniform(1.0, 8.0))
        return rng.standard_normal(n) * (0.6 + 0.4 * np.sin(2 * np.pi * rate * t))
    if kind == "brown":
        x = np.cumsum(rng.standard_normal(n))
        return filter_apply(design_butterworth(3, 20.0, fs, "highpass"), x)
    if kind == "clicks":
        x = 0.1 * rng.standard_normal(n)
        period = int(fs / rng.uniform(4, 15))
        decay = np.exp(-np.arange(200) / 30.0)
        for start in range(0, n - 200, period):
            x[start : start + 200] += float(rng.uniform(3, 6)) * decay * rng.standard_normal(200)
        return x
    raise ValueError(kind)


def _babble(rng, n_voices, duration, fs=AUDIO_RATE):
    n = round(duration * fs)
    total = np.zeros(n)
    for _ in range(n_voices):
        f0 = float(rng.uniform(100, 230))
        params = _draw_utterance_params(rng, duration, f0)
        voice, _ = _speech_like(rng, duration, params)
        total += voice
    return total


TRAIN_NOISE_KINDS = ("hum", "band", "am", "brown", "clicks")
TEST_NOISE_KINDS = ("white", "pink", "babble4", "babble6")


def _test_noise(rng, kind, n, duration):
    if kind == "white":
        return rng.standard_normal(n)
    if kind == "pink":
        return _pink_noise(rng, n)
    if kind == "babble4":
        return _babble(rng, 4, duration)
    if kind == "babble6":
        return _babble(rng, 6, duration)
    raise ValueError(kind)


def synth_corpus(cfg: SynthConfig, seed: int, out_dir) -> tuple[list[ManifestRow], dict[str, str], dict[str, str]]:
    """Generate the corpus on disk; returns (manifest rows, train noises, test noises).

    Identical seeds produce byte-identical trees.
    """
    out = Path(out_dir)
    for sub in ("audio", "emg", "noise/train", "noise/test"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    n_train, n_val, n_test = cfg.split_counts
    rows: list[ManifestRow] = []
    for sp in range(cfg.num_speakers):
        f0_base = float(
            np.random.default_rng(derive_seed(seed, "speaker", sp)).uniform(110, 220)
        )
        for ui in range(cfg.utterances_per_speaker):
            utt_id = f"sp{sp:02d}u{ui:03d}"
            rng = np.random.default_rng(derive_seed(seed, "utt", sp, ui))
            duration = _snap_duration(rng.uniform(*cfg.duration_range_sec))
            params = _draw_utterance_params(rng, duration, f0_base)
            audio, _ = _speech_like(rng, duration, params)
            target_rms = rng.uniform(0.05, 0.15)
            audio = audio * (target_rms / max(np.sqrt(np.mean(audio**2)), 1e-12))
            channels, labels = _emg_channels(rng, duration, params, cfg)

            audio_path = out / "audio" / f"{utt_id}.wav"
            emg_path = out / "emg" / f"{utt_id}.emgc"
            fileio.wav_write(audio_path, audio, AUDIO_RATE)
            fileio.emgc_write(emg_path, channels, EMG_RATE, labels)

            if ui < n_train:
                split = "train"
            elif ui < n_train + n_val:
                split = "val"
            elif ui < n_train + n_val + n_test:
                split = "test"
            else:
                continue  # spare utterances stay on disk but out of the manifest
            rows.append(
                ManifestRow(utt_id=utt_id, split=split, audio_path=str(audio_path), emg_path=str(emg_path))
            )

    n_noise_samples = round(cfg.noise_duration_sec * AUDIO_RATE)
    train_noises: dict[str, str] = {}
    for i in range(cfg.num_train_noises):
        kind = TRAIN_NOISE_KINDS[i % len(TRAIN_NOISE_KINDS)]
        name = f"train_{kind}_{i:02d}"
        rng = np.random.default_rng(derive_seed(seed, "noise-train", i))
        x = _train_noise(rng, kind, n_noise_samples)
        x = x * (0.1 / max(np.sqrt(np.mean(x**2)), 1e-12))
        path = out / "noise" / "train" / f"{name}.wav"
        fileio.wav_write(path, x, AUDIO_RATE)
        train_noises[name] = str(path)

    test_noises: dict[str, str] = {}
    for i in range(cfg.num_test_noises):
        kind = TEST_NOISE_KINDS[i % len(TEST_NOISE_KINDS)]
        name = f"test_{kind}_{i:02d}"
        rng = np.random.default_rng(derive_seed(seed, "noise-test", i))
        x = _test_noise(rng, kind, n_noise_samples, cfg.noise_duration_sec)
        x = x * (0.1 / max(np.sqrt(np.mean(x**2)), 1e-12))
        path = out / "noise" / "test" / f"{name}.wav"
        fileio.wav_write(path, x, AUDIO_RATE)
        test_noises[name] = str(path)

    fileio.manifest_write(out / "manifest.tsv", rows)
    return rows, train_noises, test_noises
